//! One accelerator core: PE-CAM, match buffer, MMR, SRAM and accumulator.

mod cycle;
mod schedule;
mod state;

use thiserror::Error;

use crate::acam::AcamError;

pub use cycle::{CycleCore, CycleRun, SampleTiming};
pub use schedule::{core_schedule, CorePipeline, CoreSchedule, CoreTiming, Stage, StageSpan};
pub use state::{core_infer, mmr_resolve, pad_query, CoreOutput, CoreState, MatchPolicy, SramWord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("query has {got} codes, core expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("core {core}: {got} matches, expected {expected}")]
    MatchCount {
        core: usize,
        expected: usize,
        got: usize,
    },
    #[error("core {core}: stage {stage} busy at cycle {cycle}")]
    Hazard {
        core: usize,
        stage: String,
        cycle: u64,
    },
    #[error("core {core}: {msg}")]
    Placement { core: usize, msg: String },
    #[error(transparent)]
    Acam(#[from] AcamError),
}
