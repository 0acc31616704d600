//! Threshold-anchored input quantization.
//!
//! Each feature gets a sorted list of cut points; the code of a value is the number
//! of cuts `<= value`. When a feature's distinct thresholds fit in `2^n_bits - 1`
//! cuts the cuts are exactly those thresholds, which makes the quantized model
//! take the same branch as the float model for every input. Otherwise the cuts are
//! evenly spaced quantiles of the threshold multiset.

use serde::{Deserialize, Serialize};

use super::model::{Ensemble, NodeKind, Tree, TreeEnsemble, TreeNode};
use super::EnsembleError;
use crate::fixed::LogitFormat;

/// Integer feature code / threshold code.
pub type Code = u16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationGrid {
    pub n_bits: u8,
    pub cuts: Vec<Vec<f64>>,
}

impl QuantizationGrid {
    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    /// Number of representable codes, `2^n_bits`.
    pub fn levels(&self) -> u32 {
        1u32 << self.n_bits
    }

    pub fn max_cuts(&self) -> usize {
        self.levels() as usize - 1
    }

    pub fn code(&self, feature: usize, x: f64) -> Code {
        self.cuts[feature].partition_point(|&c| c <= x) as Code
    }

    /// True when every feature's cuts are exactly its distinct thresholds.
    pub fn is_exact_for(&self, model: &Ensemble) -> bool {
        let mut per_feature = thresholds_by_feature(model);
        per_feature.iter_mut().enumerate().all(|(f, t)| {
            t.sort_by(f64::total_cmp);
            t.dedup();
            t.len() <= self.max_cuts() && t == &self.cuts[f]
        })
    }
}

fn thresholds_by_feature(model: &Ensemble) -> Vec<Vec<f64>> {
    let mut per_feature = vec![Vec::new(); model.n_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let NodeKind::Split {
                feature, threshold, ..
            } = node.kind
            {
                per_feature[feature].push(threshold);
            }
        }
    }
    per_feature
}

/// Builds the per-feature cut lists for `n_bits` codes.
///
/// # Panics
/// If `n_bits` is not in `1..=15`.
pub fn build_quant_grid(model: &Ensemble, n_bits: u8) -> QuantizationGrid {
    assert!((1..=15).contains(&n_bits), "n_bits must be in 1..=15");
    let max_cuts = (1usize << n_bits) - 1;
    let cuts = thresholds_by_feature(model)
        .into_iter()
        .map(|mut t| {
            t.sort_by(f64::total_cmp);
            let mut distinct = t.clone();
            distinct.dedup();
            if distinct.len() <= max_cuts {
                distinct
            } else {
                quantile_cuts(&t, max_cuts)
            }
        })
        .collect();
    QuantizationGrid { n_bits, cuts }
}

/// `k` evenly spaced quantiles of a sorted multiset: the element of rank
/// `floor(i * n / (k + 1))` for `i = 1..=k`, deduplicated.
fn quantile_cuts(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..=k).map(|i| sorted[i * n / (k + 1)]).collect();
    cuts.dedup();
    cuts
}

/// Quantizes a raw feature vector.
pub fn quantize_input(x: &[f64], grid: &QuantizationGrid) -> Result<Vec<Code>, EnsembleError> {
    if x.len() != grid.n_features() {
        return Err(EnsembleError::Dimension {
            expected: grid.n_features(),
            got: x.len(),
        });
    }
    Ok(x.iter().enumerate().map(|(f, &v)| grid.code(f, v)).collect())
}

/// Ensemble with integer threshold codes and fixed-point leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedEnsemble {
    pub model: TreeEnsemble<Code, i32>,
    pub grid: QuantizationGrid,
    pub logit_format: LogitFormat,
}

impl QuantizedEnsemble {
    /// Quantizes thresholds onto `grid` and leaves onto a model-fitted fixed-point
    /// format. Splits that the coarser grid makes one-sided are replaced by their
    /// reachable child.
    pub fn from_ensemble(model: &Ensemble, grid: QuantizationGrid) -> Self {
        assert_eq!(grid.n_features(), model.n_features, "grid/model feature count");
        let leaves_per_class: Vec<(usize, Vec<f64>)> = model
            .trees
            .iter()
            .flat_map(|t| {
                let mut by_class: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
                for n in &t.nodes {
                    if let NodeKind::Leaf { value, class_id } = n.kind {
                        by_class.entry(class_id).or_default().push(value);
                    }
                }
                by_class.into_iter()
            })
            .collect();
        let logit_format =
            LogitFormat::fit(leaves_per_class.iter().map(|(c, v)| (*c, v.as_slice())));
        let levels = grid.levels();

        let trees = model
            .trees
            .iter()
            .map(|t| quantize_tree(t, &grid, logit_format, model.n_features, levels))
            .collect();
        QuantizedEnsemble {
            model: TreeEnsemble {
                task: model.task,
                n_classes: model.n_classes,
                n_features: model.n_features,
                reduction: model.reduction,
                decision_threshold: model.decision_threshold,
                trees,
            },
            grid,
            logit_format,
        }
    }

    pub fn n_features(&self) -> usize {
        self.model.n_features
    }

    pub fn n_bits(&self) -> u8 {
        self.grid.n_bits
    }

    pub fn threshold_raw(&self) -> i64 {
        self.logit_format.to_raw(self.model.decision_threshold)
    }

    pub fn quantize_input(&self, x: &[f64]) -> Result<Vec<Code>, EnsembleError> {
        quantize_input(x, &self.grid)
    }
}

fn quantize_tree(
    tree: &Tree<f64, f64>,
    grid: &QuantizationGrid,
    fmt: LogitFormat,
    n_features: usize,
    levels: u32,
) -> Tree<Code, i32> {
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    let mut bounds = vec![(0u32, levels); n_features];
    let root = copy_reachable(tree, tree.root, grid, fmt, &mut bounds, &mut nodes);
    Tree {
        tree_id: tree.tree_id,
        class_id: tree.class_id,
        root,
        nodes,
    }
}

fn copy_reachable(
    tree: &Tree<f64, f64>,
    idx: usize,
    grid: &QuantizationGrid,
    fmt: LogitFormat,
    bounds: &mut [(u32, u32)],
    out: &mut Vec<TreeNode<Code, i32>>,
) -> usize {
    let node = &tree.nodes[idx];
    match node.kind {
        NodeKind::Leaf { value, class_id } => {
            out.push(TreeNode {
                id: node.id,
                kind: NodeKind::Leaf {
                    value: fmt.to_raw(value) as i32,
                    class_id,
                },
            });
            out.len() - 1
        }
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let code = grid.code(feature, threshold) as u32;
            let (lo, hi) = bounds[feature];
            // left needs some code < threshold inside [lo, hi)
            if code <= lo {
                return copy_reachable(tree, right, grid, fmt, bounds, out);
            }
            if code >= hi {
                return copy_reachable(tree, left, grid, fmt, bounds, out);
            }
            let me = out.len();
            out.push(TreeNode {
                id: node.id,
                kind: NodeKind::Split {
                    feature,
                    threshold: code as Code,
                    left: 0,
                    right: 0,
                },
            });
            bounds[feature] = (lo, code);
            let l = copy_reachable(tree, left, grid, fmt, bounds, out);
            bounds[feature] = (code, hi);
            let r = copy_reachable(tree, right, grid, fmt, bounds, out);
            bounds[feature] = (lo, hi);
            if let NodeKind::Split { left, right, .. } = &mut out[me].kind {
                *left = l;
                *right = r;
            }
            me
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::model::{Reduction, Task};

    fn one_feature_model(thresholds: &[f64]) -> Ensemble {
        // a right-leaning chain over feature 0
        let mut nodes = Vec::new();
        for (i, &t) in thresholds.iter().enumerate() {
            let me = nodes.len();
            nodes.push(TreeNode {
                id: me as u32,
                kind: NodeKind::Split {
                    feature: 0,
                    threshold: t,
                    left: me + 1,
                    right: me + 2,
                },
            });
            nodes.push(TreeNode {
                id: (me + 1) as u32,
                kind: NodeKind::Leaf {
                    value: i as f64,
                    class_id: 0,
                },
            });
        }
        let last = nodes.len();
        nodes.push(TreeNode {
            id: last as u32,
            kind: NodeKind::Leaf {
                value: -1.0,
                class_id: 0,
            },
        });
        Ensemble {
            task: Task::Regression,
            n_classes: 1,
            n_features: 2,
            reduction: Reduction::Sum,
            decision_threshold: 0.0,
            trees: vec![Tree {
                tree_id: 0,
                class_id: 0,
                root: 0,
                nodes,
            }],
        }
    }

    #[test]
    fn dedupe_and_sort() {
        let grid = build_quant_grid(&one_feature_model(&[0.5, 0.2, 0.5]), 8);
        assert_eq!(grid.cuts[0], vec![0.2, 0.5]);
    }

    #[test]
    fn unused_feature_has_single_bin() {
        let grid = build_quant_grid(&one_feature_model(&[0.5]), 8);
        assert!(grid.cuts[1].is_empty());
        for x in [-1e9, 0.0, 3.5, 1e9] {
            assert_eq!(grid.code(1, x), 0);
        }
    }

    #[test]
    fn code_counts_cuts_at_or_below() {
        let grid = QuantizationGrid {
            n_bits: 8,
            cuts: vec![vec![0.2, 0.5]],
        };
        assert_eq!(quantize_input(&[0.3], &grid).unwrap(), vec![1]);
        assert_eq!(quantize_input(&[0.2], &grid).unwrap(), vec![1]);
        assert_eq!(quantize_input(&[0.1], &grid).unwrap(), vec![0]);
        assert_eq!(quantize_input(&[0.9], &grid).unwrap(), vec![2]);
    }

    #[test]
    fn dimension_mismatch() {
        let grid = QuantizationGrid {
            n_bits: 8,
            cuts: vec![vec![], vec![]],
        };
        assert!(matches!(
            quantize_input(&[0.0], &grid),
            Err(EnsembleError::Dimension { expected: 2, got: 1 })
        ));
    }

    /// Independent rank oracle: the cut of index `i` is the value `v` for which the
    /// rank `r = floor(i*n/(k+1))` satisfies `#{t < v} <= r < #{t <= v}`.
    fn brute_quantiles(values: &[f64], k: usize) -> Vec<f64> {
        let n = values.len();
        let mut out = Vec::new();
        for i in 1..=k {
            let r = i * n / (k + 1);
            let v = values
                .iter()
                .copied()
                .find(|&v| {
                    let below = values.iter().filter(|&&t| t < v).count();
                    let at_or_below = values.iter().filter(|&&t| t <= v).count();
                    below <= r && r < at_or_below
                })
                .unwrap();
            if out.last() != Some(&v) {
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn quantile_fallback_matches_rank_oracle() {
        // 300 distinct thresholds in scrambled order
        let thresholds: Vec<f64> = (0..300).map(|i| ((i * 7919) % 300) as f64 / 300.0).collect();
        let grid = build_quant_grid(&one_feature_model(&thresholds), 8);
        let cuts = &grid.cuts[0];
        assert_eq!(cuts.len(), 255);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cuts, &brute_quantiles(&thresholds, 255));
    }

    #[test]
    fn quantile_fallback_with_duplicates_stays_strict() {
        let thresholds: Vec<f64> = (0..600).map(|i| (i % 20) as f64 + (i / 300) as f64 * 0.5).collect();
        let grid = build_quant_grid(&one_feature_model(&thresholds), 4);
        let cuts = &grid.cuts[0];
        assert!(cuts.len() <= 15);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cuts, &brute_quantiles(&thresholds, 15));
    }

    #[test]
    fn one_sided_splits_are_pruned() {
        // two thresholds that collapse onto one code under a 1-bit grid
        let model = one_feature_model(&[0.3, 0.31, 0.32]);
        let grid = QuantizationGrid {
            n_bits: 1,
            cuts: vec![vec![0.31], vec![]],
        };
        let q = QuantizedEnsemble::from_ensemble(&model, grid);
        let tree = &q.model.trees[0];
        // every remaining split has both sides reachable
        assert!(tree.n_leaves() < model.trees[0].n_leaves());
        for code in 0..2u16 {
            let leaf = tree.leaf_index(&[code, 0]);
            assert!(tree.nodes[leaf].is_leaf());
        }
    }
}
