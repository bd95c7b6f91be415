//! Checkpoint directory: `manifest.json` plus one matrix container per array.
//!
//! ```text
//! manifest.json
//! backbone/w1.gkmx, backbone/w2.gkmx
//! alignment/domain_<k>.gkmx          (projection bases only)
//! adapters/domain_<k>/layer_<l>_{down,up}.gkmx
//! ridge/w.gkmx, ridge/m.gkmx
//! prototypes.gkmx                    (one row per embedding prototype)
//! domain_prototypes.gkmx             (one row per domain)
//! ```

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneParams;
use crate::disentangle::{Prototype, PrototypeSet};
use crate::domain_id::ProjectionParams;
use crate::error::{Error, Result};
use crate::graph::FeatureAlignment;
use crate::keeper::{ClassBlock, RidgeState};
use crate::numerics::Matrix;
use crate::peft::{AdapterRegistry, LoraAdapter, LoraLayer};

use super::config::RunConfig;
use super::container::{read_matrix, write_matrix, FORMAT_VERSION};
use super::model::{DomainRecord, Model};
use super::runner::write_text;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u16,
    config: RunConfig,
    backbone_frozen: bool,
    projection: ProjectionManifest,
    domains: Vec<DomainManifest>,
    adapters: Vec<AdapterManifest>,
    ridge: RidgeManifest,
    prototypes: Vec<PrototypeTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionManifest {
    seed: u64,
    input_dim: usize,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainManifest {
    domain_id: usize,
    class_block: Range<usize>,
    alignment: AlignmentManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum AlignmentManifest {
    Project,
    Pad { input_dim: usize, output_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterManifest {
    domain_id: usize,
    layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RidgeManifest {
    lambda: f64,
    blocks: Vec<ClassBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrototypeTag {
    domain_id: usize,
    cluster_id: usize,
}

fn adapter_file(dir: &Path, domain: usize, layer: usize, part: &str) -> std::path::PathBuf {
    dir.join("adapters")
        .join(format!("domain_{domain}"))
        .join(format!("layer_{layer}_{part}.gkmx"))
}

fn alignment_file(dir: &Path, domain: usize) -> std::path::PathBuf {
    dir.join("alignment").join(format!("domain_{domain}.gkmx"))
}

fn rows_matrix<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Matrix {
    let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / width.max(1);
    Matrix::from_vec(n, width, data).expect("rows share one width")
}

pub fn save_backbone(params: &BackboneParams, dir: &Path) -> Result<()> {
    write_matrix(dir.join("backbone/w1.gkmx"), params.w1())?;
    write_matrix(dir.join("backbone/w2.gkmx"), params.w2())
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_backbone(&model.backbone, dir)?;

    let mut domains = Vec::with_capacity(model.domains.len());
    for d in &model.domains {
        let alignment = match &d.alignment {
            FeatureAlignment::Project { basis } => {
                write_matrix(alignment_file(dir, d.domain_id), basis)?;
                AlignmentManifest::Project
            }
            FeatureAlignment::Pad { input_dim, output_dim } => AlignmentManifest::Pad {
                input_dim: *input_dim,
                output_dim: *output_dim,
            },
        };
        domains.push(DomainManifest {
            domain_id: d.domain_id,
            class_block: d.class_block.clone(),
            alignment,
        });
    }

    let mut adapters = Vec::new();
    for a in model.adapters.iter() {
        for (l, layer) in a.layers().iter().enumerate() {
            write_matrix(adapter_file(dir, a.domain_id(), l, "down"), &layer.down)?;
            write_matrix(adapter_file(dir, a.domain_id(), l, "up"), &layer.up)?;
        }
        adapters.push(AdapterManifest {
            domain_id: a.domain_id(),
            layers: a.layers().len(),
        });
    }

    write_matrix(dir.join("ridge/w.gkmx"), model.ridge.w())?;
    write_matrix(dir.join("ridge/m.gkmx"), model.ridge.m())?;
    let h = model.backbone.hidden_dim();
    write_matrix(dir.join("prototypes.gkmx"), &rows_matrix(model.prototypes.vectors(), h))?;
    write_matrix(
        dir.join("domain_prototypes.gkmx"),
        &rows_matrix(model.domains.iter().map(|d| d.prototype.as_slice()), model.projection.dim()),
    )?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        backbone_frozen: model.backbone.is_frozen(),
        projection: ProjectionManifest {
            seed: model.projection.seed(),
            input_dim: model.projection.input_dim(),
            dim: model.projection.dim(),
        },
        domains,
        adapters,
        ridge: RidgeManifest {
            lambda: model.ridge.lambda(),
            blocks: model.ridge.blocks().to_vec(),
        },
        prototypes: model
            .prototypes
            .entries()
            .iter()
            .map(|p| PrototypeTag {
                domain_id: p.domain_id,
                cluster_id: p.cluster_id,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_text(&dir.join(MANIFEST), &json)
}

fn expect_rows(m: &Matrix, rows: usize, file: &Path) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::Checkpoint {
            file: file.to_path_buf(),
            msg: format!("expected {rows} rows, found {}", m.rows()),
        });
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        file: path.clone(),
        msg: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint {
            file: path,
            msg: format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        });
    }
    let in_file = |file: &Path| {
        let file = file.to_path_buf();
        move |e: Error| match e {
            e @ (Error::Checkpoint { .. } | Error::Io { .. }) => e,
            other => Error::Checkpoint {
                file: file.clone(),
                msg: other.to_string(),
            },
        }
    };

    let backbone = BackboneParams::from_weights(
        read_matrix(dir.join("backbone/w1.gkmx"))?,
        read_matrix(dir.join("backbone/w2.gkmx"))?,
        manifest.backbone_frozen,
    )
    .map_err(in_file(&dir.join("backbone")))?;

    let mut adapters = AdapterRegistry::new();
    for a in &manifest.adapters {
        let layers = (0..a.layers)
            .map(|l| {
                Ok(LoraLayer {
                    down: read_matrix(adapter_file(dir, a.domain_id, l, "down"))?,
                    up: read_matrix(adapter_file(dir, a.domain_id, l, "up"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let adapter_dir = dir.join("adapters").join(format!("domain_{}", a.domain_id));
        let adapter = LoraAdapter::from_layers(a.domain_id, layers, true).map_err(in_file(&adapter_dir))?;
        adapter.check_dims(backbone.layer_dims()).map_err(in_file(&adapter_dir))?;
        adapters.insert_frozen(adapter).map_err(in_file(&path))?;
    }

    let ridge = RidgeState::from_parts(
        read_matrix(dir.join("ridge/w.gkmx"))?,
        read_matrix(dir.join("ridge/m.gkmx"))?,
        manifest.ridge.lambda,
        manifest.ridge.blocks.clone(),
    )
    .map_err(in_file(&dir.join("ridge")))?;

    let proto_path = dir.join("prototypes.gkmx");
    let proto_rows = read_matrix(&proto_path)?;
    expect_rows(&proto_rows, manifest.prototypes.len(), &proto_path)?;
    let mut prototypes = PrototypeSet::new();
    prototypes
        .extend(manifest.prototypes.iter().enumerate().map(|(i, t)| Prototype {
            domain_id: t.domain_id,
            cluster_id: t.cluster_id,
            vector: proto_rows.row(i).to_vec(),
        }))
        .map_err(in_file(&proto_path))?;

    let p = &manifest.projection;
    let projection = ProjectionParams::new(p.input_dim, p.dim, p.seed).map_err(in_file(&path))?;

    let dp_path = dir.join("domain_prototypes.gkmx");
    let domain_rows = read_matrix(&dp_path)?;
    expect_rows(&domain_rows, manifest.domains.len(), &dp_path)?;
    let mut domains = Vec::with_capacity(manifest.domains.len());
    for (i, d) in manifest.domains.iter().enumerate() {
        let alignment = match d.alignment {
            AlignmentManifest::Project => FeatureAlignment::Project {
                basis: read_matrix(alignment_file(dir, d.domain_id))?,
            },
            AlignmentManifest::Pad { input_dim, output_dim } => FeatureAlignment::Pad { input_dim, output_dim },
        };
        domains.push(DomainRecord {
            domain_id: d.domain_id,
            class_block: d.class_block.clone(),
            alignment,
            prototype: domain_rows.row(i).to_vec(),
        });
    }

    Ok(Model {
        config: manifest.config,
        backbone,
        adapters,
        ridge,
        prototypes,
        projection,
        domains,
    })
}
