//! Functional model of the analog CAM.

mod array;
mod cell;
mod defects;

use thiserror::Error;

use crate::ensemble::Code;

pub use array::AcamArray;
pub use cell::{
    lower_bound_conjunctive, lower_bound_disjunctive, match_cycle, match_direct, match_single,
    match_two_cycle, match_wires, CellGeometry, CycleWires, Level, MacroCell, QueryLevels, Wire,
    GND, SENTINEL, VDD,
};
pub use defects::{apply_defects, apply_defects_all, defect_population, DefectSpec, DefectSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcamError {
    #[error("query has {got} codes, array has {expected} columns")]
    Dimension { expected: usize, got: usize },
    #[error("code {code} outside [0, {levels})")]
    CodeRange { code: Code, levels: u32 },
    #[error("range [{lo}, {hi}) is empty or exceeds {levels} levels")]
    InvalidRange { lo: u32, hi: u32, levels: u32 },
    #[error("cell ({row}, {col}) outside the array")]
    OutOfBounds { row: usize, col: usize },
    #[error("defect rate {0} outside [0, 1]")]
    DefectRate(f64),
}
