//! H-tree network: feature broadcast, in-network logit reduction and the
//! co-processor.

mod coprocessor;
mod flit;
mod router;
mod topology;

use thiserror::Error;

pub use coprocessor::coprocessor_reduce;
pub use flit::{FeatureFlit, Flit, LogitFlit};
pub use router::{router_step, RouterState, RouterStats, StepOutput};
pub use topology::{build_htree, HTreeTopology, Upstream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NocError {
    #[error("{n_cores} cores is not a power of arity {arity}")]
    Shape { n_cores: usize, arity: usize },
    #[error("router {router}: sum {sum} for class {class} overflows the 32-bit logit format")]
    Overflow { router: usize, class: usize, sum: i64 },
    #[error("router {router}: input buffer of port {port} is full")]
    BufferFull { router: usize, port: usize },
    #[error("router {router}: no accumulator for class {class}, batch {batch}")]
    UnexpectedFlit { router: usize, class: usize, batch: usize },
    #[error("sum for class {class} never arrived")]
    Incomplete { class: usize },
}
