//! JSON model files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::{Model, Objective};
use crate::error::{Error, Result};
use crate::tree::{Node, Tree};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Split { feature: usize, threshold: f64, left: Box<NodeRepr>, right: Box<NodeRepr> },
    Leaf { value: f64 },
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    seed: u64,
    num_trees: usize,
    bin_counts: Vec<usize>,
    bin_boundaries: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    format_version: u64,
    objective: String,
    base_score: f64,
    learning_rate: f64,
    feature_names: Vec<String>,
    trees: Vec<NodeRepr>,
    metadata: Metadata,
}

fn encode(tree: &Tree, idx: usize) -> NodeRepr {
    match tree.nodes()[idx] {
        Node::Leaf { value } => NodeRepr::Leaf { value },
        Node::Split { feature, threshold, left, right } => NodeRepr::Split {
            feature,
            threshold,
            left: Box::new(encode(tree, left)),
            right: Box::new(encode(tree, right)),
        },
    }
}

fn decode(repr: NodeRepr, n_features: usize, nodes: &mut Vec<Node>) -> Result<usize> {
    let idx = nodes.len();
    match repr {
        NodeRepr::Leaf { value } => {
            if !value.is_finite() {
                return Err(Error::ParseError(format!("non-finite leaf value {value}")));
            }
            nodes.push(Node::Leaf { value });
        }
        NodeRepr::Split { feature, threshold, left, right } => {
            if feature >= n_features {
                return Err(Error::ParseError(format!("split on feature {feature} of {n_features}")));
            }
            if !threshold.is_finite() {
                return Err(Error::ParseError(format!("non-finite threshold {threshold}")));
            }
            nodes.push(Node::Leaf { value: 0.0 });
            let l = decode(*left, n_features, nodes)?;
            let r = decode(*right, n_features, nodes)?;
            nodes[idx] = Node::Split { feature, threshold, left: l, right: r };
        }
    }
    Ok(idx)
}

/// Canonical JSON text for a model. Identical models give identical bytes.
pub fn to_json(model: &Model) -> String {
    let repr = ModelRepr {
        format_version: FORMAT_VERSION,
        objective: model.objective.name().to_string(),
        base_score: model.base_score,
        learning_rate: model.learning_rate,
        feature_names: model.feature_names.clone(),
        trees: model.trees.iter().map(|t| encode(t, 0)).collect(),
        metadata: Metadata {
            seed: model.seed,
            num_trees: model.num_trees_requested,
            bin_counts: model.bin_counts.clone(),
            bin_boundaries: model.bin_boundaries.clone(),
        },
    };
    serde_json::to_string(&repr).expect("model serialization")
}

pub fn from_json(text: &str) -> Result<Model> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = serde_json::Value::deserialize(&mut de).map_err(|e| Error::ParseError(e.to_string()))?;
    de.end().map_err(|e| Error::ParseError(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ParseError("missing format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionError(version));
    }
    let repr = ModelRepr::deserialize(value).map_err(|e| Error::ParseError(e.to_string()))?;
    let objective = Objective::from_name(&repr.objective).map_err(|_| Error::ParseError(format!("unknown objective `{}`", repr.objective)))?;
    if !repr.base_score.is_finite() || !(repr.learning_rate > 0.0 && repr.learning_rate <= 1.0) {
        return Err(Error::ParseError("invalid base_score or learning_rate".into()));
    }
    let n_features = repr.feature_names.len();
    if repr.metadata.bin_boundaries.len() != n_features || repr.metadata.bin_counts.len() != n_features {
        return Err(Error::ParseError("bin metadata does not match feature count".into()));
    }
    let mut trees = Vec::with_capacity(repr.trees.len());
    for t in repr.trees {
        let mut nodes = Vec::new();
        decode(t, n_features, &mut nodes)?;
        trees.push(Tree::from_nodes(nodes));
    }
    Ok(Model {
        objective,
        base_score: repr.base_score,
        learning_rate: repr.learning_rate,
        feature_names: repr.feature_names,
        trees,
        bin_boundaries: repr.metadata.bin_boundaries,
        bin_counts: repr.metadata.bin_counts,
        seed: repr.metadata.seed,
        num_trees_requested: repr.metadata.num_trees,
        history: Vec::new(),
    })
}

/// Write via a temporary sibling file and rename, so readers never see a partial model.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let text = to_json(model);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::from(e)
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path)?;
    from_json(&text)
}
