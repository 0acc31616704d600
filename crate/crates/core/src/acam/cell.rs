//! Macro-cells and the two-cycle precision doubling search.
//!
//! A macro-cell stores a half-open range `[T_L, T_H)` of `N`-bit codes in two
//! `M`-bit sub-cells (`N = 2M`). Each bound is split into MSB/LSB levels, and the
//! comparison is carried out in two search cycles whose results AND on the match
//! line. Within a cycle the LSB and MSB sub-cells are OR-ed per bound.

use serde::{Deserialize, Serialize};

use super::AcamError;
use crate::ensemble::Code;

/// Conductance / DAC level of a sub-cell, in `[0, 2^M)`.
pub type Level = u8;

/// Value driven on one data-line wire. Levels are non-negative; the constants
/// below are the out-of-band values.
pub type Wire = i16;

/// `q_MSB - 1` when `q_MSB = 0`: below every stored level.
pub const SENTINEL: Wire = -1;
/// Supply rail on a lower-bound wire: the `wire >= T` comparison never holds.
pub const VDD: Wire = Wire::MIN;
/// Ground rail on an upper-bound wire: the `wire < T` comparison never holds.
pub const GND: Wire = Wire::MAX;

/// Bit layout shared by every cell in an array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGeometry {
    /// Sub-cell (memristor) precision `M`.
    pub m_bits: u8,
    /// Two sub-cells per macro-cell, searched in two cycles.
    pub doubled: bool,
}

impl CellGeometry {
    pub fn doubled(m_bits: u8) -> Self {
        CellGeometry {
            m_bits,
            doubled: true,
        }
    }

    pub fn single(m_bits: u8) -> Self {
        CellGeometry {
            m_bits,
            doubled: false,
        }
    }

    /// Code precision `N`.
    pub fn n_bits(&self) -> u8 {
        if self.doubled {
            2 * self.m_bits
        } else {
            self.m_bits
        }
    }

    pub fn levels(&self) -> u32 {
        1 << self.n_bits()
    }

    pub fn sub_levels(&self) -> u32 {
        1 << self.m_bits
    }

    /// Stored levels per cell that a defect can hit.
    pub fn levels_per_cell(&self) -> usize {
        if self.doubled {
            4
        } else {
            2
        }
    }

    pub fn split(&self, code: u32) -> (Level, Level) {
        if self.doubled {
            ((code >> self.m_bits) as Level, (code & (self.sub_levels() - 1)) as Level)
        } else {
            (0, code as Level)
        }
    }

    pub fn join(&self, msb: Level, lsb: Level) -> u32 {
        if self.doubled {
            ((msb as u32) << self.m_bits) | lsb as u32
        } else {
            lsb as u32
        }
    }
}

impl Default for CellGeometry {
    fn default() -> Self {
        CellGeometry::doubled(4)
    }
}

/// Sub-cell levels of one macro-cell. In single precision only the LSB fields
/// are used. `hi_open` encodes `T_H = 2^N`, which no sub-cell can store; it forces
/// every upper-bound comparison to pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacroCell {
    pub lo_msb: Level,
    pub lo_lsb: Level,
    pub hi_msb: Level,
    pub hi_lsb: Level,
    pub hi_open: bool,
}

impl MacroCell {
    pub const DONT_CARE: MacroCell = MacroCell {
        lo_msb: 0,
        lo_lsb: 0,
        hi_msb: 0,
        hi_lsb: 0,
        hi_open: true,
    };

    /// Programs `[lo, hi)`, `0 <= lo < hi <= 2^N`.
    pub fn from_range(lo: u32, hi: u32, geom: CellGeometry) -> Result<Self, AcamError> {
        if lo >= hi || hi > geom.levels() {
            return Err(AcamError::InvalidRange {
                lo,
                hi,
                levels: geom.levels(),
            });
        }
        let (lo_msb, lo_lsb) = geom.split(lo);
        let hi_open = hi == geom.levels();
        let (hi_msb, hi_lsb) = if hi_open { (0, 0) } else { geom.split(hi) };
        Ok(MacroCell {
            lo_msb,
            lo_lsb,
            hi_msb,
            hi_lsb,
            hi_open,
        })
    }

    pub fn t_l(&self, geom: CellGeometry) -> u32 {
        geom.join(self.lo_msb, self.lo_lsb)
    }

    pub fn t_h(&self, geom: CellGeometry) -> u32 {
        if self.hi_open {
            geom.levels()
        } else {
            geom.join(self.hi_msb, self.hi_lsb)
        }
    }

    pub fn is_dont_care(&self) -> bool {
        self.lo_msb == 0 && self.lo_lsb == 0 && self.hi_open
    }
}

/// Reference semantics: `T_L <= q < T_H`.
pub fn match_direct(cell: &MacroCell, q: u32, geom: CellGeometry) -> bool {
    cell.t_l(geom) <= q && q < cell.t_h(geom)
}

/// Inputs on the four data-line wires of a macro-cell during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleWires {
    pub h_lsb: Wire,
    pub l_lsb: Wire,
    pub h_msb: Wire,
    pub l_msb: Wire,
}

/// A query code split into MSB/LSB levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryLevels {
    pub q: u32,
    pub msb: Level,
    pub lsb: Level,
}

impl QueryLevels {
    pub fn new(q: Code, geom: CellGeometry) -> Self {
        let (msb, lsb) = geom.split(q as u32);
        QueryLevels {
            q: q as u32,
            msb,
            lsb,
        }
    }

    /// Wire inputs for both search cycles, with every level passed through `dac`.
    ///
    /// | wire   | cycle 1     | cycle 2     |
    /// |--------|-------------|-------------|
    /// | q_HLSB | q_LSB       | GND         |
    /// | q_LLSB | q_LSB       | VDD         |
    /// | q_HMSB | q_MSB       | q_MSB - 1   |
    /// | q_LMSB | q_MSB - 1   | q_MSB       |
    pub fn cycles_through(&self, dac: impl Fn(Level) -> Level) -> [CycleWires; 2] {
        let lsb = dac(self.lsb) as Wire;
        let msb = dac(self.msb) as Wire;
        let msb_minus = if self.msb == 0 {
            SENTINEL
        } else {
            dac(self.msb - 1) as Wire
        };
        [
            CycleWires {
                h_lsb: lsb,
                l_lsb: lsb,
                h_msb: msb,
                l_msb: msb_minus,
            },
            CycleWires {
                h_lsb: GND,
                l_lsb: VDD,
                h_msb: msb_minus,
                l_msb: msb,
            },
        ]
    }

    pub fn cycles(&self) -> [CycleWires; 2] {
        self.cycles_through(|l| l)
    }
}

#[inline]
fn lower_sub(wire: Wire, t: Level) -> bool {
    wire >= t as Wire
}

#[inline]
fn upper_sub(wire: Wire, t: Level) -> bool {
    wire < t as Wire
}

/// Match-line contribution of one cycle: per bound, the LSB sub-cell OR the MSB
/// sub-cell holds; both bounds must hold.
#[inline]
pub fn match_cycle(cell: &MacroCell, w: &CycleWires) -> bool {
    let lower = lower_sub(w.l_lsb, cell.lo_lsb) || lower_sub(w.l_msb, cell.lo_msb);
    let upper = cell.hi_open || upper_sub(w.h_lsb, cell.hi_lsb) || upper_sub(w.h_msb, cell.hi_msb);
    lower && upper
}

/// Two-cycle search; the match line stays high only if both cycles match.
#[inline]
pub fn match_wires(cell: &MacroCell, cycles: &[CycleWires; 2]) -> bool {
    match_cycle(cell, &cycles[0]) && match_cycle(cell, &cycles[1])
}

pub fn match_two_cycle(cell: &MacroCell, query: &QueryLevels) -> bool {
    match_wires(cell, &query.cycles())
}

/// Single-precision cell driven by one wire.
#[inline]
pub fn match_single(cell: &MacroCell, wire: Wire) -> bool {
    lower_sub(wire, cell.lo_lsb) && (cell.hi_open || upper_sub(wire, cell.hi_lsb))
}

/// Lower bound as a disjunction: `(q_M >= T_M AND q_L >= T_L) OR q_M >= T_M + 1`.
pub fn lower_bound_disjunctive(q_msb: u32, q_lsb: u32, t_msb: u32, t_lsb: u32) -> bool {
    (q_msb >= t_msb && q_lsb >= t_lsb) || q_msb > t_msb
}

/// Lower bound as a conjunction, the form a match line can evaluate:
/// `(q_M >= T_M + 1 OR q_L >= T_L) AND q_M >= T_M`.
pub fn lower_bound_conjunctive(q_msb: u32, q_lsb: u32, t_msb: u32, t_lsb: u32) -> bool {
    (q_msb > t_msb || q_lsb >= t_lsb) && q_msb >= t_msb
}
