//! Chip simulation: the functional and cycle-level engine, analytic models,
//! sweeps, defect studies and the cost model.

pub mod analytic;
pub mod cost;
pub mod defects;
pub mod engine;
pub mod metrics;
pub mod sweep;
pub mod synth;

use thiserror::Error;

use crate::acam::AcamError;
use crate::compiler::CompileError;
use crate::core_unit::CoreError;
use crate::noc::NocError;

pub use analytic::{analytic_throughput, chip_interval, ThroughputTable};
pub use cost::{estimate_cost, ComponentCost, CostModel, CostReport, COMPONENTS};
pub use defects::{defect_experiment, DefectPoint};
pub use engine::{run_functional, run_inference, write_trace, SimOptions, SimResult, TraceEvent};
pub use metrics::{Activity, EnergyStats, FlowStats, LatencyStats, SimMetrics, Utilization};
pub use sweep::{sweep, write_sweep_csv, SweepParam, SweepPoint, SweepSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Noc(#[from] NocError),
    #[error(transparent)]
    Acam(#[from] AcamError),
    #[error("inconsistent run: {0}")]
    Consistency(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}
