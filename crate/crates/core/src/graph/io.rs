//! Text dataset directories: `meta.json`, `nodes.tsv`, `edges.tsv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub name: String,
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;

    let nodes_path = dir.join("nodes.tsv");
    let text = read(&nodes_path)?;
    let d = meta.feature_dim;
    let mut data = Vec::with_capacity(meta.num_nodes * d);
    let mut labels = Vec::with_capacity(meta.num_nodes);
    let mut split = Vec::with_capacity(meta.num_nodes);
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| parse_err(&nodes_path, lineno, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + d {
            return Err(err(format!("expected {} fields, found {}", 3 + d, fields.len())));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad node id {:?}", fields[0])))?;
        if id != labels.len() {
            return Err(err(format!("node id {id} out of order, expected {}", labels.len())));
        }
        if id >= meta.num_nodes {
            return Err(err(format!("node id {id} >= num_nodes {}", meta.num_nodes)));
        }
        let label = match fields[1] {
            "-" => None,
            s => {
                let l: usize = s.parse().map_err(|_| err(format!("bad label {s:?}")))?;
                if l >= meta.num_classes {
                    return Err(err(format!(
                        "label {l} outside declared range 0..{}",
                        meta.num_classes
                    )));
                }
                Some(l)
            }
        };
        let tag = Split::parse(fields[2])
            .ok_or_else(|| err(format!("bad split {:?}", fields[2])))?;
        for f in &fields[3..] {
            let v: f64 = f.parse().map_err(|_| err(format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite feature value {f:?}")));
            }
            data.push(v);
        }
        labels.push(label);
        split.push(tag);
    }
    if labels.len() != meta.num_nodes {
        return Err(parse_err(
            &nodes_path,
            text.lines().count(),
            format!("found {} nodes, meta declares {}", labels.len(), meta.num_nodes),
        ));
    }

    let edges_path = dir.join("edges.tsv");
    let text = read(&edges_path)?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| parse_err(&edges_path, lineno, msg);
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected src<TAB>dst".into()));
        };
        let src: usize = a.parse().map_err(|_| err(format!("bad node index {a:?}")))?;
        let dst: usize = b.parse().map_err(|_| err(format!("bad node index {b:?}")))?;
        if src >= meta.num_nodes || dst >= meta.num_nodes {
            return Err(err(format!(
                "edge ({src}, {dst}) references a node >= num_nodes {}",
                meta.num_nodes
            )));
        }
        if src >= dst {
            return Err(err(format!("edge ({src}, {dst}) must satisfy src < dst")));
        }
        edges.push((src, dst));
    }

    let features = Matrix::from_vec(meta.num_nodes, d, data)?;
    Graph::new(meta.name, features, edges, labels, split, meta.num_classes)
}

pub fn save_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        num_nodes: g.num_nodes(),
        feature_dim: g.feature_dim(),
        num_classes: g.num_classes(),
        name: g.name.clone(),
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    json.push('\n');
    write(dir.join("meta.json"), &json)?;

    let mut nodes = String::new();
    for i in 0..g.num_nodes() {
        let label = g.labels()[i].map_or_else(|| "-".to_string(), |l| l.to_string());
        let _ = write!(nodes, "{i}\t{label}\t{}", g.split()[i].as_str());
        for v in g.features().row(i) {
            // `Display` for f64 emits the shortest representation that round-trips.
            let _ = write!(nodes, "\t{v}");
        }
        nodes.push('\n');
    }
    write(dir.join("nodes.tsv"), &nodes)?;

    let mut edges = String::new();
    for (u, v) in g.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    write(dir.join("edges.tsv"), &edges)
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}
