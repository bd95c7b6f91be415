//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and exits non-zero when any criterion fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use common::*;
use gdil_core::backbone::{forward, BackboneParams};
use gdil_core::disentangle::{
    dbscan, inter_loss, intra_loss, median_knn_distance, total_loss, LossWeights, Prototype, PrototypeSet,
};
use gdil_core::graph::{align_features, augment, synth_domain_suite, Propagation, Split};
use gdil_core::harness::{
    load_checkpoint, metrics, run_sequence, save_checkpoint, split_accuracy, Ablation, AccuracyMatrix, Learner,
    RunConfig, RunOptions, RunOutcome,
};
use gdil_core::keeper::{one_hot, ClassBlock, RidgeState};
use gdil_core::numerics::{rng, Matrix};
use gdil_core::peft::{objective_and_gradients, train_labels, LoraAdapter, LoraLayer};

type Check = Result<String, String>;
type Criterion<'a> = Box<dyn Fn() -> Check + 'a>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: gdil_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1. Recursive ridge equals the batch solution over random sequences.
fn recursive_vs_batch() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seq in 0..50u64 {
        let mut r = rng::stream(seq, "acceptance/ridge");
        let h = [4, 8, 16][r.random_range(0..3)];
        let lambda = [0.1, 1.0, 10.0][r.random_range(0..3)];
        let domains = r.random_range(2..=6);
        let mut parts = Vec::new();
        let mut state: Option<RidgeState> = None;
        let mut offset = 0;
        for d in 0..domains {
            let rows = r.random_range(5..=40);
            let classes = r.random_range(1..=3);
            let x = rng::gaussian_matrix(rows, h, 1.0, &mut r);
            let labels: Vec<usize> = (0..rows).map(|_| r.random_range(0..classes)).collect();
            let y = ok(one_hot(&labels, classes))?;
            let block = ClassBlock::new(d, offset..offset + classes);
            offset += classes;
            match state.as_mut() {
                None => state = Some(ok(RidgeState::init(&x, &y, lambda, block))?),
                Some(s) => ok(s.update(&x, &y, block))?,
            }
            parts.push((x, y));
        }
        let oracle = stacked_ridge(&parts, lambda);
        let err = state.unwrap().w().max_abs_diff(&oracle);
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("sequence {seq} (h={h}, λ={lambda}): max error {err:e}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("50 sequences, max elementwise error {worst:.1e}, {secs:.2} s"))
}

// 2. The hand-derived two-domain Woodbury step.
fn worked_woodbury() -> Check {
    let mut s = ok(RidgeState::init(
        &Matrix::identity(2),
        &Matrix::identity(2),
        1.0,
        ClassBlock::new(0, 0..2),
    ))?;
    let x2 = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
    let y2 = Matrix::from_rows(&[[1.0]]).unwrap();
    ok(s.update(&x2, &y2, ClassBlock::new(1, 2..3)))?;
    let m2 = Matrix::from_rows(&[[0.375, -0.125], [-0.125, 0.375]]).unwrap();
    let w2 = Matrix::from_rows(&[[0.375, -0.125, 0.25], [-0.125, 0.375, 0.25]]).unwrap();
    let (em, ew) = (s.m().max_abs_diff(&m2), s.w().max_abs_diff(&w2));
    ensure(em <= 1e-12 && ew <= 1e-12, || format!("M error {em:e}, W error {ew:e}"))?;
    Ok(format!("M error {em:.1e}, W error {ew:.1e}"))
}

// 3. Analytic gradients against central finite differences.
fn gradients() -> Check {
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let mut report = Vec::new();
    let mut check = |name: &str, analytic: &Matrix, numeric: &Matrix| -> Result<(), String> {
        let e = max_relative_error(analytic, numeric, FLOOR);
        report.push(format!("{name} {e:.1e}"));
        ensure(e <= FD_TOL, || format!("{name}: relative error {e:e}"))
    };

    let mut r = rng::stream(3, "acceptance/grad");
    let x = rng::gaussian_matrix(8, 4, 1.0, &mut r);
    let xa = rng::gaussian_matrix(8, 4, 1.0, &mut r);
    let labels = [Some(0), Some(1), Some(0), None, Some(2), Some(1), Some(0), Some(2)];
    let (_, gx, ga) = ok(intra_loss(&x, &xa, &labels))?;
    check("intra/x", &gx, &fd_gradient(&x, |p| intra_loss(p, &xa, &labels).unwrap().0))?;
    check("intra/x_aug", &ga, &fd_gradient(&xa, |p| intra_loss(&x, p, &labels).unwrap().0))?;

    let protos: Vec<Vec<f64>> = (0..3).map(|_| rng::gaussian_matrix(1, 4, 1.0, &mut r).into_vec()).collect();
    let views = || protos.iter().map(|p| p.as_slice());
    let (_, ge) = ok(inter_loss(&x, views(), 1e-8))?;
    check("inter/x", &ge, &fd_gradient(&x, |p| inter_loss(p, views(), 1e-8).unwrap().0))?;

    let mut set = PrototypeSet::new();
    ok(set.extend(protos.iter().enumerate().map(|(i, v)| Prototype {
        domain_id: 0,
        cluster_id: i,
        vector: v.clone(),
    })))?;
    let w = LossWeights::default();
    let t = ok(total_loss(&x, &xa, &labels, &set, &w))?;
    check("total/x", &t.grad_x, &fd_gradient(&x, |p| total_loss(p, &xa, &labels, &set, &w).unwrap().total))?;
    check("total/x_aug", &t.grad_x_aug, &fd_gradient(&xa, |p| total_loss(&x, p, &labels, &set, &w).unwrap().total))?;

    // Backbone and adapter under a random linear functional of the embeddings.
    let g = small_graph(8, 6, 3, 5);
    let prop = Propagation::new(&g);
    let base = ok(BackboneParams::init(6, 5, 2))?;
    let probe = rng::gaussian_matrix(8, 5, 1.0, &mut r);
    let objective = |b: &BackboneParams, a: Option<&LoraAdapter>| {
        let (x, _) = forward(&prop, g.features(), b, a).unwrap();
        x.as_slice().iter().zip(probe.as_slice()).map(|(u, v)| u * v).sum::<f64>()
    };
    let (_, tape) = ok(forward(&prop, g.features(), &base, None))?;
    let bg = ok(tape.backward(&probe))?;
    let (w1, w2) = (base.w1().clone(), base.w2().clone());
    check("backbone/w1", &bg.w1, &fd_gradient(&w1, |p| {
        objective(&BackboneParams::from_weights(p.clone(), w2.clone(), false).unwrap(), None)
    }))?;
    check("backbone/w2", &bg.w2, &fd_gradient(&w2, |p| {
        objective(&BackboneParams::from_weights(w1.clone(), p.clone(), false).unwrap(), None)
    }))?;

    let layers: Vec<LoraLayer> = [(6, 5), (5, 5)]
        .iter()
        .map(|&(din, dout)| LoraLayer {
            down: rng::gaussian_matrix(din, 2, 0.5, &mut r),
            up: rng::gaussian_matrix(2, dout, 0.3, &mut r),
        })
        .collect();
    let adapter = ok(LoraAdapter::from_layers(0, layers.clone(), false))?;
    let (_, tape) = ok(forward(&prop, g.features(), &base, Some(&adapter)))?;
    let ag = ok(tape.backward(&probe))?.adapter.expect("adapter gradients");
    let with_layer = |l: usize, down: Option<&Matrix>, up: Option<&Matrix>| {
        let mut ls = layers.clone();
        if let Some(d) = down {
            ls[l].down = d.clone();
        }
        if let Some(u) = up {
            ls[l].up = u.clone();
        }
        LoraAdapter::from_layers(0, ls, false).unwrap()
    };
    for l in 0..2 {
        check(&format!("adapter/layer{l}/down"), &ag[l].down, &fd_gradient(&layers[l].down, |p| {
            objective(&base, Some(&with_layer(l, Some(p), None)))
        }))?;
        check(&format!("adapter/layer{l}/up"), &ag[l].up, &fd_gradient(&layers[l].up, |p| {
            objective(&base, Some(&with_layer(l, None, Some(p))))
        }))?;
    }

    // The full training objective, differentiated through both views.
    let view = ok(augment(&g, 0.2, 0.2, 11))?;
    let train = train_labels(&g);
    let frozen = ok(BackboneParams::from_weights(w1.clone(), w2.clone(), true))?;
    let objective_at = |a: &LoraAdapter| {
        objective_and_gradients(&g, &view, &frozen, Some(a), &train, &gradient_prototypes(), &w).unwrap().0.total
    };
    let (_, og) = ok(objective_and_gradients(&g, &view, &frozen, Some(&adapter), &train, &gradient_prototypes(), &w))?;
    let og = og.adapter.expect("adapter gradients");
    for l in 0..2 {
        check(&format!("objective/layer{l}/down"), &og[l].down, &fd_gradient(&layers[l].down, |p| {
            objective_at(&with_layer(l, Some(p), None))
        }))?;
        check(&format!("objective/layer{l}/up"), &og[l].up, &fd_gradient(&layers[l].up, |p| {
            objective_at(&with_layer(l, None, Some(p)))
        }))?;
    }

    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} blocks, worst: {} ({secs:.2} s)", report.len(), worst_of(&report)))
}

/// Prototypes in the embedding width of the gradient test backbone.
fn gradient_prototypes() -> PrototypeSet {
    let m = rng::gaussian_matrix(2, 5, 1.0, &mut rng::stream(9, "acceptance/protos"));
    let mut set = PrototypeSet::new();
    set.extend((0..2).map(|i| Prototype {
        domain_id: 0,
        cluster_id: i,
        vector: m.row(i).to_vec(),
    }))
    .unwrap();
    set
}

fn worst_of(report: &[String]) -> String {
    report
        .iter()
        .max_by(|a, b| {
            let v = |s: &str| s.rsplit(' ').next().unwrap().parse::<f64>().unwrap();
            v(a).total_cmp(&v(b))
        })
        .cloned()
        .unwrap_or_default()
}

/// The default run, driven step by step so intermediate embeddings can be kept.
struct DefaultRun {
    outcome: RunOutcome,
    seconds: f64,
    /// Domain 0 embeddings right after learning it, and after every later domain.
    domain0_embeddings: Vec<Matrix>,
}

fn default_run() -> gdil_core::Result<DefaultRun> {
    let start = Instant::now();
    let config = RunConfig::default();
    let tasks = config.load_tasks()?;
    let mut learner = Learner::new(config, RunOptions::default())?;
    let mut domain0_embeddings = Vec::new();
    for task in &tasks {
        learner.learn(task)?;
        learner.evaluate()?;
        domain0_embeddings.push(learner.model().expect("learned").embed(&tasks[0].graph, 0)?);
    }
    let outcome = learner.finish()?;
    Ok(DefaultRun {
        outcome,
        seconds: start.elapsed().as_secs_f64(),
        domain0_embeddings,
    })
}

fn bits(m: &Matrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

// 4. Embeddings of the first domain never move.
fn freeze_no_shift(run: &DefaultRun) -> Check {
    let first = bits(&run.domain0_embeddings[0]);
    for (k, later) in run.domain0_embeddings.iter().enumerate().skip(1) {
        ensure(bits(later) == first, || format!("domain 0 embeddings changed after domain {k}"))?;
    }
    Ok(format!(
        "{} re-embeddings of domain 0 bit-identical",
        run.domain0_embeddings.len() - 1
    ))
}

// 5. Negligible forgetting on the default suite.
fn forgetting(run: &DefaultRun) -> Check {
    let r = &run.outcome.report;
    let (aa, af, disc) = (r.average_accuracy, r.average_forgetting, r.discrimination_accuracy);
    ensure(af >= -0.01, || format!("AF {af:.4} < -0.01"))?;
    ensure(aa >= 0.90, || format!("AA {aa:.4} < 0.90"))?;
    ensure(disc == 1.0, || format!("discrimination accuracy {disc:.4} != 1"))?;
    ensure(run.seconds < 300.0, || format!("took {:.1} s", run.seconds))?;

    // Fresh graphs from the same domain distributions.
    let mut cfg = RunConfig::default();
    cfg.synth_seed += 1000;
    let held_out = ok(synth_domain_suite(&cfg.synth_spec()))?;
    let model = &run.outcome.model;
    let mut accs = Vec::new();
    for task in &held_out {
        let inf = ok(model.infer(&task.graph, None))?;
        ensure(inf.domain_id == task.domain_id, || {
            format!("held-out domain {} attributed to {}", task.domain_id, inf.domain_id)
        })?;
        accs.push(split_accuracy(&task.graph, &inf.classes, task.class_block.start, Split::Test).unwrap());
    }
    let held = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(format!(
        "AA {aa:.4}, AF {af:.4}, discrimination {disc:.2}, held-out graphs: discrimination 1.00, accuracy {held:.4} ({:.1} s)",
        run.seconds
    ))
}

// 6. Each ablation costs at least 0.15 AA.
fn ablations(run: &DefaultRun) -> Check {
    let full = run.outcome.report.average_accuracy;
    let mut parts = Vec::new();
    for ablation in [Ablation::NoPreservation, Ablation::NoAdapters] {
        let config = RunConfig { ablation, ..RunConfig::default() };
        let tasks = ok(config.load_tasks())?;
        let aa = ok(run_sequence(&config, &tasks, RunOptions::default()))?.report.average_accuracy;
        ensure(full - aa >= 0.15, || format!("{ablation:?}: AA {aa:.4} vs full {full:.4}"))?;
        parts.push(format!("{ablation:?} AA {aa:.4} (drop {:.4})", full - aa));
    }
    Ok(format!("full AA {full:.4}; {}", parts.join("; ")))
}

// 7. Density clustering against the brute-force reference.
fn dbscan_oracle() -> Check {
    let mut clusters = 0;
    for inst in 0..25u64 {
        let mut r = rng::stream(inst, "acceptance/dbscan");
        let n = r.random_range(10..=200);
        let dim = r.random_range(1..=3);
        let blobs = r.random_range(1..=4);
        let centers = rng::gaussian_matrix(blobs, dim, 4.0, &mut r);
        let noise = rng::gaussian_matrix(n, dim, 1.0, &mut r);
        let outliers = rng::uniform_matrix(n, dim, 8.0, &mut r);
        // Blobs, with every seventh point scattered uniformly.
        let points = Matrix::from_fn(n, dim, |i, j| {
            if i % 7 == 6 {
                outliers[(i, j)]
            } else {
                centers[(i % blobs, j)] + noise[(i, j)]
            }
        });
        let eps = median_knn_distance(&points, 4) * r.random_range(0.5..1.5);
        let min_pts = r.random_range(2..=6);
        let got = ok(dbscan(&points, eps, min_pts))?;
        let want = brute_dbscan(&points, eps, min_pts);
        ensure(got == want, || format!("instance {inst} (n={n}, eps={eps:.3}, min_pts={min_pts}) differs"))?;
        clusters += want.iter().copied().max().map_or(0, |m| m + 1);
    }
    Ok(format!("25 instances match exactly ({clusters} clusters in total)"))
}

// 8. Alignment keeps exactly the top singular energy.
fn svd_energy() -> Check {
    let mut worst = 0.0f64;
    for (case, &(n, d, target)) in [(30, 40, 8), (12, 50, 16), (40, 20, 8), (6, 9, 64), (25, 64, 64)]
        .iter()
        .enumerate()
    {
        let f = rng::gaussian_matrix(n, d, 1.0, &mut rng::stream(case as u64, "acceptance/svd"));
        let aligned = ok(align_features(&f, target))?;
        let energy: f64 = aligned.as_slice().iter().map(|v| v * v).sum();
        let gram = if n <= d { f.matmul_t(&f) } else { f.t_matmul(&f) };
        let expected: f64 = symmetric_eigenvalues(&gram).iter().take(target).map(|v| v.max(0.0)).sum();
        let err = (energy - expected).abs();
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("{n}x{d} -> {target}: |{energy} - {expected}| = {err:e}"))?;
    }
    Ok(format!("5 matrices, max energy error {worst:.1e}"))
}

// 9. The worked accuracy-matrix example.
fn metrics_example() -> Check {
    let m = ok(AccuracyMatrix::from_rows(vec![
        vec![0.9],
        vec![0.8, 0.7],
        vec![0.7, 0.6, 0.8],
    ]))?;
    let (aa, af) = ok(metrics(&m))?;
    ensure((aa - 0.7).abs() <= 1e-15 && (af + 0.15).abs() <= 1e-15, || format!("AA {aa}, AF {af}"))?;
    Ok(format!("AA {aa}, AF {af}"))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

// 10. Determinism and persistence.
fn determinism(run: &DefaultRun) -> Check {
    let config = RunConfig::default();
    let tasks = ok(config.load_tasks())?;
    let again = ok(run_sequence(&config, &tasks, RunOptions::default()))?;
    ensure(again.report.to_json() == run.outcome.report.to_json(), || {
        "reports of two identical runs differ".into()
    })?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(save_checkpoint(&run.outcome.model, &a))?;
    let loaded = ok(load_checkpoint(&a))?;
    ok(save_checkpoint(&loaded, &b))?;
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    ensure(fa == fb, || "checkpoint save -> load -> save is not byte-identical".into())?;

    for task in &tasks {
        let mem = ok(run.outcome.model.infer(&task.graph, None))?;
        let disk = ok(loaded.infer(&task.graph, None))?;
        ensure(
            mem.domain_id == disk.domain_id
                && mem.classes == disk.classes
                && bits(&mem.probabilities) == bits(&disk.probabilities),
            || format!("inference on domain {} differs after reload", task.domain_id),
        )?;
    }
    Ok(format!(
        "reports identical, {} checkpoint files byte-identical, reloaded inference exact",
        fa.len()
    ))
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let guard = |f: &dyn Fn() -> Check| -> Check {
        panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        })
    };

    let run = default_run();
    let with_run = |f: fn(&DefaultRun) -> Check| -> Criterion<'_> {
        match &run {
            Ok(r) => Box::new(move || f(r)),
            Err(e) => {
                let msg = format!("default run failed: {e}");
                Box::new(move || Err(msg.clone()))
            }
        }
    };

    let criteria: Vec<(&str, Criterion)> = vec![
        ("recursive-vs-batch exactness", Box::new(recursive_vs_batch)),
        ("worked Woodbury step", Box::new(worked_woodbury)),
        ("gradient correctness", Box::new(gradients)),
        ("freeze/no-shift invariant", with_run(freeze_no_shift)),
        ("desk-scale forgetting", with_run(forgetting)),
        ("ablation direction", with_run(ablations)),
        ("DBSCAN oracle", Box::new(dbscan_oracle)),
        ("SVD alignment energy", Box::new(svd_energy)),
        ("metrics formulas", Box::new(metrics_example)),
        ("determinism and persistence", with_run(determinism)),
    ];

    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match guard(f.as_ref()) {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
