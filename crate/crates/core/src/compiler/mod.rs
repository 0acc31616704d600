//! Tree-to-CAM compilation: path extraction, core placement and NoC programming.

mod artifact;
mod cam;
mod chip;
mod noc_program;
mod place;

use thiserror::Error;

pub use artifact::{compile, compile_quantized, CompileOptions, PlanArtifact, PLAN_VERSION};
pub use cam::{build_cam_table, extract_paths, CamRow, CamTable, RangeCell, TreeSpan};
pub use chip::{ChipConfig, NocConfig};
pub use noc_program::{configure_noc, CpOp, NocProgram};
pub use place::{place, place_with, CorePlacement, PlaceOptions, PlacementPlan, TreeSlot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("tree {tree_id}: empty range on feature {feature} (corrupt model)")]
    EmptyRange { tree_id: usize, feature: usize },
    #[error("tree {tree_id} has {leaves} leaves, a core holds {n_words} words")]
    TreeTooTall {
        tree_id: usize,
        leaves: usize,
        n_words: usize,
    },
    #[error("{n_features} features exceed capacity {capacity}")]
    FeaturesExceedCapacity { n_features: usize, capacity: usize },
    #[error("{rows} rows exceed chip capacity {capacity}")]
    TotalRows { rows: usize, capacity: usize },
    #[error("tree {tree_id} does not fit on any core")]
    NoFit { tree_id: usize },
    #[error("batch factor {batch} needs {needed} cores, chip has {available}")]
    Replication {
        batch: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("artifact: {0}")]
    Artifact(String),
}
