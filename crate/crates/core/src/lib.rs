//! Compiler and simulator for X-TIME style analog-CAM tree-ensemble accelerators.
//!
//! The crate is organised bottom-up:
//!
//! - [`ensemble`]: tree ensembles, threshold quantization and the software oracle.
//! - [`compiler`]: root-to-leaf path extraction, core placement and NoC programming.
//! - [`acam`]: functional model of the analog CAM macro-cells and arrays, including
//!   the two-cycle precision doubling search and defect injection.
//! - [`core_unit`]: one accelerator core (PE-CAM, buffer, MMR, SRAM, accumulator) and
//!   its pipeline schedule.
//! - [`noc`]: the H-tree network, its routers and the co-processor reduction.
//! - [`sim`]: the chip-level cycle simulator, analytic models, sweeps, defect studies
//!   and the cost model.

pub mod acam;
pub mod compiler;
pub mod core_unit;
pub mod ensemble;
pub mod error;
pub mod fixed;
pub mod noc;
pub mod sim;

pub use error::{Error, Result};
