//! Seeded synthetic ensembles and inputs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Code, Ensemble, NodeKind, QuantizedEnsemble, Reduction, Task, Tree, TreeEnsemble, TreeNode};

/// Thresholds are multiples of `1 / GRID` strictly inside `(0, 1)`, so a feature
/// never has more than `GRID - 1` distinct thresholds and 8-bit grids are exact.
const GRID: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_trees: usize,
    pub depth: usize,
    pub n_features: usize,
    pub task: Task,
    /// 1 unless multiclass.
    pub n_classes: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_trees: 64,
            depth: 6,
            n_features: 16,
            task: Task::BinaryClassification,
            n_classes: 1,
        }
    }
}

/// Balanced random trees of the given depth. Tree `t` of a multiclass model
/// votes for class `t mod n_classes`. A node ends early as a leaf only when no
/// feature interval on its path can be split further.
pub fn random_ensemble(spec: &SynthSpec, seed: u64) -> Ensemble {
    assert!(spec.n_trees >= 1 && spec.n_features >= 1, "empty synthetic model");
    let n_classes = if spec.task == Task::MulticlassClassification {
        spec.n_classes.max(2)
    } else {
        1
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..spec.n_trees)
        .map(|t| {
            let class_id = t % n_classes;
            let mut nodes = Vec::new();
            let mut bounds = vec![(0u32, GRID); spec.n_features];
            grow(&mut rng, spec.depth, class_id, &mut bounds, &mut nodes);
            Tree {
                tree_id: t,
                class_id,
                root: 0,
                nodes,
            }
        })
        .collect();
    TreeEnsemble {
        task: spec.task,
        n_classes,
        n_features: spec.n_features,
        reduction: Reduction::Sum,
        decision_threshold: 0.0,
        trees,
    }
}

fn grow(
    rng: &mut ChaCha8Rng,
    depth: usize,
    class_id: usize,
    bounds: &mut [(u32, u32)],
    nodes: &mut Vec<TreeNode<f64, f64>>,
) -> usize {
    let me = nodes.len();
    let open: Vec<usize> = (0..bounds.len())
        .filter(|&f| bounds[f].1 - bounds[f].0 >= 2)
        .collect();
    if depth == 0 || open.is_empty() {
        nodes.push(TreeNode {
            id: me as u32,
            kind: NodeKind::Leaf {
                value: rng.gen_range(-1.0..1.0),
                class_id,
            },
        });
        return me;
    }
    let feature = open[rng.gen_range(0..open.len())];
    let (lo, hi) = bounds[feature];
    let cut = rng.gen_range(lo + 1..hi);
    nodes.push(TreeNode {
        id: me as u32,
        kind: NodeKind::Split {
            feature,
            threshold: cut as f64 / GRID as f64,
            left: 0,
            right: 0,
        },
    });
    bounds[feature] = (lo, cut);
    let left = grow(rng, depth - 1, class_id, bounds, nodes);
    bounds[feature] = (cut, hi);
    let right = grow(rng, depth - 1, class_id, bounds, nodes);
    bounds[feature] = (lo, hi);
    if let NodeKind::Split { left: l, right: r, .. } = &mut nodes[me].kind {
        *l = left;
        *r = right;
    }
    me
}

/// Uniform samples in `[0, 1)`.
pub fn random_samples(n_features: usize, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..n_features).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Uniform samples quantized on the model's grid.
pub fn random_codes(model: &QuantizedEnsemble, n: usize, rng: &mut impl Rng) -> Vec<Vec<Code>> {
    random_samples(model.n_features(), n, rng)
        .iter()
        .map(|x| model.quantize_input(x).expect("dimension matches"))
        .collect()
}
