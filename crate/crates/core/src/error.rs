use thiserror::Error;

use crate::acam::AcamError;
use crate::compiler::CompileError;
use crate::core_unit::CoreError;
use crate::ensemble::EnsembleError;
use crate::noc::NocError;
use crate::sim::SimError;

/// Umbrella error for callers that drive the whole flow.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Acam(#[from] AcamError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Noc(#[from] NocError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
