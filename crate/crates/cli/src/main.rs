use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gdil_core::graph::{load_dataset, Split};
use gdil_core::harness::{
    load_checkpoint, metrics, pretrain_to_dir, run_to_dir, split_accuracy, RunConfig, RunOptions,
    RunReport,
};
use gdil_core::{Error, Result};

#[derive(Parser)]
#[command(name = "gdil", version, about = "Domain-incremental graph learning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the backbone on the first configured domain.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn every configured domain in order and write artifacts and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate with true domain ids instead of discriminating.
        #[arg(long)]
        oracle_domains: bool,
    },
    /// Classify a dataset with a finished run and report test accuracy.
    Eval {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Skip discrimination and use this domain's adapter.
        #[arg(long)]
        domain: Option<usize>,
    },
    /// Report which learned domain a dataset is attributed to.
    Discriminate {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a learned domain's node embeddings as CSV.
    ExportEmbeddings {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        domain: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print AA, AF and the accuracy matrix of a finished run.
    Report {
        #[arg(long)]
        artifacts: PathBuf,
    },
}

fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    RunReport::from_json(&text).map_err(|msg| Error::Checkpoint { file: path, msg })
}

fn format_report(report: &RunReport) -> Result<String> {
    let (aa, af) = metrics(&report.accuracy_matrix)?;
    let mut s = String::new();
    let _ = writeln!(s, "AA {aa:.4}");
    let _ = writeln!(s, "AF {af:.4}");
    let _ = writeln!(s, "domain discrimination accuracy {:.4}", report.discrimination_accuracy);
    let _ = writeln!(s, "accuracy matrix (row = after learning domain, column = evaluated domain):");
    for row in report.accuracy_matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "  {}", cells.join("  "));
    }
    Ok(s)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let log = pretrain_to_dir(&cfg, &out)?;
            if let (Some(first), Some(last)) = (log.losses.first(), log.losses.last()) {
                println!("pretrained {} epochs: loss {first:.4} -> {last:.4}", log.losses.len());
            }
            println!("backbone written to {}", out.join("backbone").display());
        }
        Command::Run { config, out, oracle_domains } => {
            let cfg = RunConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
            let outcome = run_to_dir(&cfg, &out, RunOptions { oracle_domains })?;
            print!("{}", format_report(&outcome.report)?);
            println!("artifacts written to {}", out.display());
        }
        Command::Eval { artifacts, dataset, domain } => {
            let model = load_checkpoint(&artifacts)?;
            let graph = load_dataset(&dataset)?;
            let inf = model.infer(&graph, domain)?;
            let rec = model.record(inf.domain_id)?;
            println!("domain {}", inf.domain_id);
            match split_accuracy(&graph, &inf.classes, rec.class_block.start, Split::Test) {
                Some(acc) => println!("test accuracy {acc:.4}"),
                None => println!("test accuracy n/a (no labeled test nodes)"),
            }
        }
        Command::Discriminate { artifacts, dataset } => {
            let model = load_checkpoint(&artifacts)?;
            let graph = load_dataset(&dataset)?;
            let inf = model.infer(&graph, None)?;
            println!("domain {}", inf.domain_id);
            for (d, dist) in &inf.distances {
                println!("  distance to domain {d}: {dist:.6}");
            }
        }
        Command::ExportEmbeddings { artifacts, domain, out } => {
            let model = load_checkpoint(&artifacts)?;
            let graph = load_dataset(artifacts.join("data").join(format!("domain_{domain}")))?;
            let x = model.embed(&graph, domain)?;
            let mut csv = String::from("node,label,split");
            for j in 0..x.cols() {
                let _ = write!(csv, ",x{j}");
            }
            csv.push('\n');
            for i in 0..x.rows() {
                let label = graph.labels()[i].map_or(String::new(), |l| l.to_string());
                let _ = write!(csv, "{i},{label},{}", graph.split()[i].as_str());
                for v in x.row(i) {
                    let _ = write!(csv, ",{v}");
                }
                csv.push('\n');
            }
            fs::write(&out, csv).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            println!("wrote {} embeddings to {}", x.rows(), out.display());
        }
        Command::Report { artifacts } => {
            print!("{}", format_report(&read_report(&artifacts)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
