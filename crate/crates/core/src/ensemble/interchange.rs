//! Versioned interchange JSON for tree ensembles.
//!
//! ```json
//! {"format_version": 1, "task": "binary_classification", "n_classes": 1,
//!  "n_features": 2, "reduction": "sum",
//!  "trees": [{"tree_id": 0, "class_id": 0, "nodes": [
//!     {"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2, "value": null, "is_leaf": false},
//!     {"id": 1, "feature": null, "threshold": null, "left": null, "right": null, "value": 1.0, "is_leaf": true},
//!     {"id": 2, "feature": null, "threshold": null, "left": null, "right": null, "value": -1.0, "is_leaf": true}]}]}
//! ```
//!
//! Leaf nodes may carry `-1` instead of `null` in the split fields. Under
//! `"reduction": "majority"` a leaf value is the voted class index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::model::{Ensemble, NodeKind, Reduction, Task, Tree, TreeNode};
use super::EnsembleError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub format_version: u32,
    pub task: Task,
    pub n_classes: usize,
    pub n_features: usize,
    pub reduction: Reduction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_threshold: Option<f64>,
    pub trees: Vec<TreeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub tree_id: usize,
    pub class_id: usize,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: i64,
    #[serde(default)]
    pub feature: Option<i64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub left: Option<i64>,
    #[serde(default)]
    pub right: Option<i64>,
    #[serde(default)]
    pub value: Option<f64>,
    pub is_leaf: bool,
}

/// Parses and validates an interchange document.
pub fn parse_ensemble(bytes: &[u8]) -> Result<Ensemble, EnsembleError> {
    let doc: Document =
        serde_json::from_slice(bytes).map_err(|e| EnsembleError::Schema(e.to_string()))?;
    from_document(&doc)
}

pub fn from_document(doc: &Document) -> Result<Ensemble, EnsembleError> {
    if doc.format_version != FORMAT_VERSION {
        return Err(EnsembleError::Schema(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    if doc.n_features == 0 {
        return Err(EnsembleError::Schema("n_features must be at least 1".into()));
    }
    if doc.trees.is_empty() {
        return Err(EnsembleError::Schema("model has no trees".into()));
    }
    match doc.task {
        Task::Regression | Task::BinaryClassification if doc.n_classes != 1 => {
            return Err(EnsembleError::Range(format!(
                "{:?} models must declare n_classes = 1, got {}",
                doc.task, doc.n_classes
            )))
        }
        Task::MulticlassClassification if doc.n_classes < 2 => {
            return Err(EnsembleError::Range(format!(
                "multiclass models need n_classes >= 2, got {}",
                doc.n_classes
            )))
        }
        _ => {}
    }
    if doc.reduction == Reduction::Majority && doc.task == Task::Regression {
        return Err(EnsembleError::Schema(
            "majority reduction is only defined for classification".into(),
        ));
    }
    let threshold = doc.decision_threshold.unwrap_or(0.0);
    if !threshold.is_finite() {
        return Err(EnsembleError::Schema("decision_threshold must be finite".into()));
    }

    let mut seen_ids = HashMap::new();
    let mut trees = Vec::with_capacity(doc.trees.len());
    for t in &doc.trees {
        if seen_ids.insert(t.tree_id, ()).is_some() {
            return Err(EnsembleError::Structure(format!(
                "duplicate tree_id {}",
                t.tree_id
            )));
        }
        trees.push(convert_tree(doc, t)?);
    }

    Ok(Ensemble {
        task: doc.task,
        n_classes: doc.n_classes,
        n_features: doc.n_features,
        reduction: doc.reduction,
        decision_threshold: threshold,
        trees,
    })
}

fn convert_tree(doc: &Document, t: &TreeDoc) -> Result<Tree<f64, f64>, EnsembleError> {
    let tid = t.tree_id;
    if t.class_id >= doc.n_classes {
        return Err(EnsembleError::Range(format!(
            "tree {tid}: class_id {} out of range [0, {})",
            t.class_id, doc.n_classes
        )));
    }
    if doc.reduction == Reduction::Majority && t.class_id != 0 {
        return Err(EnsembleError::Range(format!(
            "tree {tid}: majority-vote trees carry their class in the leaves; class_id must be 0"
        )));
    }
    if t.nodes.is_empty() {
        return Err(EnsembleError::Structure(format!("tree {tid}: no nodes")));
    }

    let mut index_of = HashMap::with_capacity(t.nodes.len());
    for (i, n) in t.nodes.iter().enumerate() {
        if n.id < 0 || n.id > u32::MAX as i64 {
            return Err(EnsembleError::Schema(format!(
                "tree {tid}: node id {} is not a valid index",
                n.id
            )));
        }
        if index_of.insert(n.id, i).is_some() {
            return Err(EnsembleError::Structure(format!(
                "tree {tid}: duplicate node id {}",
                n.id
            )));
        }
    }

    let mut nodes = Vec::with_capacity(t.nodes.len());
    let mut indegree = vec![0usize; t.nodes.len()];
    for n in &t.nodes {
        let kind = if n.is_leaf {
            let value = n.value.ok_or_else(|| {
                EnsembleError::Schema(format!("tree {tid}: leaf {} has no value", n.id))
            })?;
            if !value.is_finite() {
                return Err(EnsembleError::Schema(format!(
                    "tree {tid}: leaf {} value is not finite",
                    n.id
                )));
            }
            leaf_kind(doc, t, n.id, value)?
        } else {
            let feature = n.feature.ok_or_else(|| missing(tid, n.id, "feature"))?;
            let threshold = n.threshold.ok_or_else(|| missing(tid, n.id, "threshold"))?;
            let left = n.left.ok_or_else(|| missing(tid, n.id, "left"))?;
            let right = n.right.ok_or_else(|| missing(tid, n.id, "right"))?;
            if feature < 0 || feature as usize >= doc.n_features {
                return Err(EnsembleError::Range(format!(
                    "tree {tid}: node {} splits on feature {feature}, model has {} features",
                    n.id, doc.n_features
                )));
            }
            if !threshold.is_finite() {
                return Err(EnsembleError::Schema(format!(
                    "tree {tid}: node {} threshold is not finite",
                    n.id
                )));
            }
            let child = |c: i64| {
                index_of.get(&c).copied().ok_or_else(|| {
                    EnsembleError::Structure(format!(
                        "tree {tid}: node {} references missing child {c}",
                        n.id
                    ))
                })
            };
            let (l, r) = (child(left)?, child(right)?);
            indegree[l] += 1;
            indegree[r] += 1;
            NodeKind::Split {
                feature: feature as usize,
                threshold,
                left: l,
                right: r,
            }
        };
        nodes.push(TreeNode {
            id: n.id as u32,
            kind,
        });
    }

    let roots: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    if roots.len() != 1 {
        return Err(EnsembleError::Structure(format!(
            "tree {tid}: expected exactly one root, found {}",
            roots.len()
        )));
    }
    if let Some(i) = (0..nodes.len()).find(|&i| indegree[i] > 1) {
        return Err(EnsembleError::Structure(format!(
            "tree {tid}: node {} has more than one parent",
            nodes[i].id
        )));
    }
    // A single root plus in-degree <= 1 still admits a detached cycle; reachability
    // rules it out.
    let root = roots[0];
    let mut visited = vec![false; nodes.len()];
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut visited[i], true) {
            return Err(EnsembleError::Structure(format!(
                "tree {tid}: cycle through node {}",
                nodes[i].id
            )));
        }
        if let NodeKind::Split { left, right, .. } = nodes[i].kind {
            stack.push(left);
            stack.push(right);
        }
    }
    if let Some(i) = visited.iter().position(|v| !v) {
        return Err(EnsembleError::Structure(format!(
            "tree {tid}: node {} is not reachable from the root",
            nodes[i].id
        )));
    }

    Ok(Tree {
        tree_id: tid,
        class_id: t.class_id,
        root,
        nodes,
    })
}

fn missing(tree: usize, node: i64, field: &str) -> EnsembleError {
    EnsembleError::Schema(format!(
        "tree {tree}: internal node {node} is missing `{field}`"
    ))
}

fn leaf_kind(
    doc: &Document,
    t: &TreeDoc,
    id: i64,
    value: f64,
) -> Result<NodeKind<f64, f64>, EnsembleError> {
    if doc.reduction == Reduction::Sum {
        return Ok(NodeKind::Leaf {
            value,
            class_id: t.class_id,
        });
    }
    let n_vote_classes = if doc.task == Task::BinaryClassification {
        2
    } else {
        doc.n_classes
    };
    if value.fract() != 0.0 || value < 0.0 || value as usize >= n_vote_classes {
        return Err(EnsembleError::Range(format!(
            "tree {}: leaf {id} votes for class {value}, expected an integer in [0, {n_vote_classes})",
            t.tree_id
        )));
    }
    let class = value as usize;
    Ok(if doc.task == Task::BinaryClassification {
        // votes become +1 / -1 so that "sum >= 0" is the majority rule
        NodeKind::Leaf {
            value: if class == 1 { 1.0 } else { -1.0 },
            class_id: 0,
        }
    } else {
        NodeKind::Leaf {
            value: 1.0,
            class_id: class,
        }
    })
}

/// Serializes a model back into the interchange form.
pub fn to_document(model: &Ensemble) -> Document {
    let trees = model
        .trees
        .iter()
        .map(|t| TreeDoc {
            tree_id: t.tree_id,
            class_id: t.class_id,
            nodes: t
                .nodes
                .iter()
                .map(|n| match &n.kind {
                    NodeKind::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeDoc {
                        id: n.id as i64,
                        feature: Some(*feature as i64),
                        threshold: Some(*threshold),
                        left: Some(t.nodes[*left].id as i64),
                        right: Some(t.nodes[*right].id as i64),
                        value: None,
                        is_leaf: false,
                    },
                    NodeKind::Leaf { value, class_id } => {
                        let value = match (model.reduction, model.task) {
                            (Reduction::Sum, _) => *value,
                            (Reduction::Majority, Task::BinaryClassification) => {
                                if *value > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            (Reduction::Majority, _) => *class_id as f64,
                        };
                        NodeDoc {
                            id: n.id as i64,
                            feature: None,
                            threshold: None,
                            left: None,
                            right: None,
                            value: Some(value),
                            is_leaf: true,
                        }
                    }
                })
                .collect(),
        })
        .collect();
    Document {
        format_version: FORMAT_VERSION,
        task: model.task,
        n_classes: model.n_classes,
        n_features: model.n_features,
        reduction: model.reduction,
        decision_threshold: (model.decision_threshold != 0.0).then_some(model.decision_threshold),
        trees,
    }
}

pub fn to_json(model: &Ensemble) -> String {
    serde_json::to_string_pretty(&to_document(model)).expect("interchange document serializes")
}
