use serde::{Deserialize, Serialize};

use super::cam::{CamRow, CamTable};
use super::chip::ChipConfig;
use super::CompileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSlot {
    pub tree_id: usize,
    pub class_id: usize,
    pub row_offset: usize,
    pub row_count: usize,
}

/// Contents of one core. `rows[i]` is CAM word `i` and also SRAM word `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorePlacement {
    pub core: usize,
    /// Replication (batch) group.
    pub group: usize,
    pub trees: Vec<TreeSlot>,
    pub rows: Vec<CamRow>,
}

impl CorePlacement {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn rows_used(&self) -> usize {
        self.rows.len()
    }

    /// Distinct classes held, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.trees.iter().map(|t| t.class_id).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceOptions {
    /// Upper bound on trees per core. Bounds the MMR serialization and therefore
    /// the core initiation interval.
    pub max_trees_per_core: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub chip: ChipConfig,
    pub n_features: usize,
    pub n_bits: u8,
    pub n_classes: usize,
    /// Occupied cores in ascending core id.
    pub cores: Vec<CorePlacement>,
    /// Cores spanned by one model replica (group 0 occupies `0..cores_per_replica`).
    pub cores_per_replica: usize,
    /// Core id distance between consecutive replicas.
    pub replica_stride: usize,
    /// Core ids of each replication group.
    pub replication_groups: Vec<Vec<usize>>,
    /// Largest tree, in leaves.
    pub n_leaves_max: usize,
}

impl PlacementPlan {
    pub fn batch_factor(&self) -> usize {
        self.replication_groups.len()
    }

    pub fn n_trees_core_max(&self) -> usize {
        self.cores.iter().map(CorePlacement::n_trees).max().unwrap_or(0)
    }

    pub fn rows_used(&self) -> usize {
        self.cores.iter().map(CorePlacement::rows_used).sum()
    }

    pub fn core(&self, id: usize) -> Option<&CorePlacement> {
        self.cores
            .binary_search_by_key(&id, |c| c.core)
            .ok()
            .map(|i| &self.cores[i])
    }

    pub fn group_cores(&self, group: usize) -> impl Iterator<Item = &CorePlacement> {
        self.cores.iter().filter(move |c| c.group == group)
    }
}

pub fn place(table: &CamTable, chip: &ChipConfig) -> Result<PlacementPlan, CompileError> {
    place_with(table, chip, &PlaceOptions::default())
}

/// First-fit round-robin: a cursor stays on the current core while the next tree
/// fits, then moves on, wrapping around the chip. Multiclass models keep one class
/// per core.
pub fn place_with(
    table: &CamTable,
    chip: &ChipConfig,
    opts: &PlaceOptions,
) -> Result<PlacementPlan, CompileError> {
    chip.validate()?;
    if table.n_bits != chip.n_bits {
        return Err(CompileError::Config(format!(
            "model quantized to {} bits, chip searches {} bits",
            table.n_bits, chip.n_bits
        )));
    }
    if table.n_features > chip.feature_capacity() {
        return Err(CompileError::FeaturesExceedCapacity {
            n_features: table.n_features,
            capacity: chip.feature_capacity(),
        });
    }
    let n_words = chip.n_words();
    if let Some(span) = table.trees.iter().find(|s| s.len > n_words) {
        return Err(CompileError::TreeTooTall {
            tree_id: span.tree_id,
            leaves: span.len,
            n_words,
        });
    }
    if table.height() > chip.total_rows() {
        return Err(CompileError::TotalRows {
            rows: table.height(),
            capacity: chip.total_rows(),
        });
    }
    let cap = opts.max_trees_per_core.unwrap_or(usize::MAX).max(1);
    let class_exclusive = table.n_classes > 1;

    let mut order: Vec<_> = table.trees.iter().collect();
    if class_exclusive {
        order.sort_by_key(|s| (s.class_id, s.tree_id));
    } else {
        order.sort_by_key(|s| s.tree_id);
    }

    let mut cores: Vec<CorePlacement> = Vec::new();
    let mut cursor = 0usize;
    for span in order {
        let fits = |c: &CorePlacement| {
            c.rows.len() + span.len <= n_words
                && c.trees.len() < cap
                && (!class_exclusive || c.trees.iter().all(|t| t.class_id == span.class_id))
        };
        let mut chosen = None;
        for step in 0..chip.n_cores {
            let id = (cursor + step) % chip.n_cores;
            if id >= cores.len() {
                // untouched cores are empty and accept any tree
                debug_assert_eq!(id, cores.len());
                cores.push(CorePlacement {
                    core: id,
                    group: 0,
                    trees: Vec::new(),
                    rows: Vec::new(),
                });
                chosen = Some(id);
                break;
            }
            if fits(&cores[id]) {
                chosen = Some(id);
                break;
            }
        }
        let id = chosen.ok_or(CompileError::NoFit {
            tree_id: span.tree_id,
        })?;
        cursor = id;
        let core = &mut cores[id];
        core.trees.push(TreeSlot {
            tree_id: span.tree_id,
            class_id: span.class_id,
            row_offset: core.rows.len(),
            row_count: span.len,
        });
        core.rows.extend_from_slice(table.tree_rows(span));
    }

    let ids: Vec<usize> = cores.iter().map(|c| c.core).collect();
    Ok(PlacementPlan {
        chip: chip.clone(),
        n_features: table.n_features,
        n_bits: table.n_bits,
        n_classes: table.n_classes,
        cores_per_replica: cores.len(),
        replica_stride: cores.len(),
        replication_groups: vec![ids],
        n_leaves_max: table.trees.iter().map(|s| s.len).max().unwrap_or(0),
        cores,
    })
}
