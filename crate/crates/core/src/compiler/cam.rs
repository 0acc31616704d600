use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CompileError;
use crate::ensemble::{Code, NodeKind, QuantizedEnsemble, Tree};

/// Constraint `lo <= code < hi` on one feature. `hi` may equal `2^N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RangeCell {
    pub feature: u16,
    pub lo: u16,
    pub hi: u16,
}

/// One root-to-leaf path. Features without a cell are don't-care `[0, 2^N)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CamRow {
    pub tree_id: usize,
    pub class_id: usize,
    /// Node id of the leaf in the source model.
    pub leaf_id: u32,
    /// Fixed-point leaf value.
    pub leaf_value: i32,
    /// Non-trivial ranges, sorted by feature.
    pub cells: Vec<RangeCell>,
}

impl CamRow {
    pub fn range(&self, feature: usize, n_bits: u8) -> (u32, u32) {
        match self.cells.binary_search_by_key(&(feature as u16), |c| c.feature) {
            Ok(i) => (self.cells[i].lo as u32, self.cells[i].hi as u32),
            Err(_) => (0, 1 << n_bits),
        }
    }

    pub fn matches(&self, codes: &[Code]) -> bool {
        self.cells
            .iter()
            .all(|c| c.lo <= codes[c.feature as usize] && codes[c.feature as usize] < c.hi)
    }

    /// Per-feature `(lo, hi)` for all `n_features` columns.
    pub fn dense(&self, n_features: usize, n_bits: u8) -> Vec<(u32, u32)> {
        (0..n_features).map(|f| self.range(f, n_bits)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpan {
    pub tree_id: usize,
    pub class_id: usize,
    pub start: usize,
    pub len: usize,
}

/// All paths of an ensemble, grouped by tree in ascending `tree_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamTable {
    pub n_features: usize,
    pub n_bits: u8,
    pub n_classes: usize,
    pub rows: Vec<CamRow>,
    pub trees: Vec<TreeSpan>,
}

impl CamTable {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    /// Lower and upper bound per feature, plus leaf value, class id and tree id.
    pub fn logical_columns(&self) -> usize {
        2 * self.n_features + 3
    }

    pub fn tree_rows(&self, span: &TreeSpan) -> &[CamRow] {
        &self.rows[span.start..span.start + span.len]
    }
}

pub fn extract_paths(
    tree: &Tree<Code, i32>,
    n_features: usize,
    n_bits: u8,
) -> Result<Vec<CamRow>, CompileError> {
    let top = 1u32 << n_bits;
    let mut bounds = vec![(0u32, top); n_features];
    let mut rows = Vec::new();
    walk(tree, tree.root, top, &mut bounds, &mut rows)?;
    Ok(rows)
}

fn walk(
    tree: &Tree<Code, i32>,
    idx: usize,
    top: u32,
    bounds: &mut [(u32, u32)],
    rows: &mut Vec<CamRow>,
) -> Result<(), CompileError> {
    let node = &tree.nodes[idx];
    match node.kind {
        NodeKind::Leaf { value, class_id } => {
            let cells = bounds
                .iter()
                .enumerate()
                .filter(|(_, &(lo, hi))| (lo, hi) != (0, top))
                .map(|(f, &(lo, hi))| RangeCell {
                    feature: f as u16,
                    lo: lo as u16,
                    hi: hi as u16,
                })
                .collect();
            rows.push(CamRow {
                tree_id: tree.tree_id,
                class_id,
                leaf_id: node.id,
                leaf_value: value,
                cells,
            });
            Ok(())
        }
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let t = threshold as u32;
            let saved = bounds[feature];
            let (lo, hi) = saved;
            for (child, range) in [(left, (lo, hi.min(t))), (right, (lo.max(t), hi))] {
                if range.0 >= range.1 {
                    return Err(CompileError::EmptyRange {
                        tree_id: tree.tree_id,
                        feature,
                    });
                }
                bounds[feature] = range;
                walk(tree, child, top, bounds, rows)?;
            }
            bounds[feature] = saved;
            Ok(())
        }
    }
}

pub fn build_cam_table(model: &QuantizedEnsemble) -> Result<CamTable, CompileError> {
    let mut order: Vec<&Tree<Code, i32>> = model.model.trees.iter().collect();
    order.sort_by_key(|t| t.tree_id);
    let per_tree: Vec<Vec<CamRow>> = order
        .par_iter()
        .map(|t| extract_paths(t, model.n_features(), model.n_bits()))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(per_tree.iter().map(Vec::len).sum());
    let mut trees = Vec::with_capacity(order.len());
    for (t, r) in order.iter().zip(per_tree) {
        trees.push(TreeSpan {
            tree_id: t.tree_id,
            class_id: t.class_id,
            start: rows.len(),
            len: r.len(),
        });
        rows.extend(r);
    }
    Ok(CamTable {
        n_features: model.n_features(),
        n_bits: model.n_bits(),
        n_classes: model.model.n_classes,
        rows,
        trees,
    })
}
