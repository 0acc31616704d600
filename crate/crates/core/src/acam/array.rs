use fixedbitset::FixedBitSet;

use super::cell::{match_single, match_wires, CellGeometry, CycleWires, Level, MacroCell, QueryLevels};
use super::AcamError;
use crate::ensemble::Code;

/// One analog CAM array of `height` rows by `width` macro-cell columns.
///
/// Only cells that differ from don't-care are stored. Rows that were never
/// programmed cannot be precharged and so never match. Each column is driven
/// through its own DAC, a lookup from digital level to output level that is the
/// identity unless defects were injected.
#[derive(Debug, Clone, PartialEq)]
pub struct AcamArray {
    geom: CellGeometry,
    height: usize,
    width: usize,
    rows: Vec<Vec<(u16, MacroCell)>>,
    programmed: FixedBitSet,
    active_cols: usize,
    dac: Vec<Vec<Level>>,
}

impl AcamArray {
    /// An array with no programmed rows.
    pub fn new(height: usize, width: usize, geom: CellGeometry) -> Self {
        let identity: Vec<Level> = (0..geom.sub_levels()).map(|l| l as Level).collect();
        AcamArray {
            geom,
            height,
            width,
            rows: vec![Vec::new(); height],
            programmed: FixedBitSet::with_capacity(height),
            active_cols: width,
            dac: vec![identity; width],
        }
    }

    /// Every row programmed with don't-care cells.
    pub fn dont_care(height: usize, width: usize, geom: CellGeometry) -> Self {
        let mut a = Self::new(height, width, geom);
        a.programmed.insert_range(..);
        a
    }

    pub fn geometry(&self) -> CellGeometry {
        self.geom
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn programmed(&self) -> &FixedBitSet {
        &self.programmed
    }

    /// Columns wired to a feature. Defects only land on these.
    pub fn active_cols(&self) -> usize {
        self.active_cols
    }

    pub fn set_active_cols(&mut self, n: usize) {
        self.active_cols = n.min(self.width);
    }

    /// Programs row `r`; columns not listed are don't-care.
    pub fn program_row(&mut self, r: usize, cells: &[(usize, MacroCell)]) -> Result<(), AcamError> {
        self.check_row(r)?;
        let mut stored = Vec::with_capacity(cells.len());
        for &(c, cell) in cells {
            self.check_col(r, c)?;
            if !cell.is_dont_care() {
                stored.push((c as u16, cell));
            }
        }
        stored.sort_by_key(|&(c, _)| c);
        stored.dedup_by_key(|&mut (c, _)| c);
        self.rows[r] = stored;
        self.programmed.insert(r);
        Ok(())
    }

    pub fn cell(&self, r: usize, c: usize) -> MacroCell {
        match self.rows[r].binary_search_by_key(&(c as u16), |&(col, _)| col) {
            Ok(i) => self.rows[r][i].1,
            Err(_) => MacroCell::DONT_CARE,
        }
    }

    pub fn set_cell(&mut self, r: usize, c: usize, cell: MacroCell) -> Result<(), AcamError> {
        self.check_row(r)?;
        self.check_col(r, c)?;
        let row = &mut self.rows[r];
        match row.binary_search_by_key(&(c as u16), |&(col, _)| col) {
            Ok(i) if cell.is_dont_care() => {
                row.remove(i);
            }
            Ok(i) => row[i].1 = cell,
            Err(_) if cell.is_dont_care() => {}
            Err(i) => row.insert(i, (c as u16, cell)),
        }
        Ok(())
    }

    /// Non-don't-care cells of row `r`, ordered by column.
    pub fn row_cells(&self, r: usize) -> &[(u16, MacroCell)] {
        &self.rows[r]
    }

    pub fn dac(&self, c: usize) -> &[Level] {
        &self.dac[c]
    }

    pub fn dac_mut(&mut self, c: usize) -> &mut [Level] {
        &mut self.dac[c]
    }

    /// Searches `query` (one code per column) on the rows in `precharge`.
    pub fn search(&self, query: &[Code], precharge: &FixedBitSet) -> Result<FixedBitSet, AcamError> {
        if query.len() != self.width {
            return Err(AcamError::Dimension {
                expected: self.width,
                got: query.len(),
            });
        }
        let levels = self.geom.levels();
        if let Some(&q) = query.iter().find(|&&q| q as u32 >= levels) {
            return Err(AcamError::CodeRange { code: q, levels });
        }
        let mut out = FixedBitSet::with_capacity(self.height);
        let live = self.programmed.ones().filter(|&r| precharge.contains(r));
        if self.geom.doubled {
            let wires: Vec<[CycleWires; 2]> = query
                .iter()
                .enumerate()
                .map(|(c, &q)| {
                    let dac = &self.dac[c];
                    QueryLevels::new(q, self.geom).cycles_through(|l| dac[l as usize])
                })
                .collect();
            for r in live {
                if self.rows[r]
                    .iter()
                    .all(|(c, cell)| match_wires(cell, &wires[*c as usize]))
                {
                    out.insert(r);
                }
            }
        } else {
            let wires: Vec<i16> = query
                .iter()
                .enumerate()
                .map(|(c, &q)| self.dac[c][q as usize] as i16)
                .collect();
            for r in live {
                if self.rows[r]
                    .iter()
                    .all(|(c, cell)| match_single(cell, wires[*c as usize]))
                {
                    out.insert(r);
                }
            }
        }
        Ok(out)
    }

    /// Search with every programmed row precharged.
    pub fn search_all(&self, query: &[Code]) -> Result<FixedBitSet, AcamError> {
        let programmed = self.programmed.clone();
        self.search(query, &programmed)
    }

    fn check_row(&self, r: usize) -> Result<(), AcamError> {
        if r >= self.height {
            return Err(AcamError::OutOfBounds { row: r, col: 0 });
        }
        Ok(())
    }

    fn check_col(&self, r: usize, c: usize) -> Result<(), AcamError> {
        if c >= self.width {
            return Err(AcamError::OutOfBounds { row: r, col: c });
        }
        Ok(())
    }
}
