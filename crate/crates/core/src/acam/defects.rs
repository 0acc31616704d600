//! One-level conductance and DAC flips.
//!
//! The defect population of an array is every stored sub-cell level of its
//! programmed rows on active columns, plus every DAC output of its active columns.
//! A run draws `floor(rate * population)` distinct targets; the first half of the
//! draw moves up one level, the rest down, clamped to `[0, 2^M - 1]`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::array::AcamArray;
use super::cell::{Level, MacroCell};
use super::AcamError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectSummary {
    pub population: usize,
    pub flips_up: usize,
    pub flips_down: usize,
}

pub fn defect_population(array: &AcamArray) -> usize {
    let geom = array.geometry();
    let cols = array.active_cols();
    array.programmed().count_ones(..) * cols * geom.levels_per_cell()
        + cols * geom.sub_levels() as usize
}

/// Perturbs a copy of `array`.
pub fn apply_defects(array: &AcamArray, spec: DefectSpec) -> Result<AcamArray, AcamError> {
    let (mut out, _) = apply_defects_all(std::slice::from_ref(array), spec)?;
    Ok(out.pop().expect("one array in, one out"))
}

/// Perturbs copies of a set of arrays, drawing targets over their joint
/// population so that the flip count is `floor(rate * total)`.
pub fn apply_defects_all(
    arrays: &[AcamArray],
    spec: DefectSpec,
) -> Result<(Vec<AcamArray>, DefectSummary), AcamError> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(AcamError::DefectRate(spec.rate));
    }
    let sizes: Vec<usize> = arrays.iter().map(defect_population).collect();
    let mut starts = Vec::with_capacity(arrays.len());
    let mut total = 0usize;
    for s in &sizes {
        starts.push(total);
        total += s;
    }
    let k = (spec.rate * total as f64).floor() as usize;
    let mut out = arrays.to_vec();
    let mut summary = DefectSummary {
        population: total,
        ..Default::default()
    };
    if k == 0 {
        return Ok((out, summary));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let targets = index::sample(&mut rng, total, k).into_vec();
    let n_up = k / 2;
    // Programmed-row lists are looked up lazily per touched array.
    let mut row_lists: Vec<Option<Vec<usize>>> = vec![None; arrays.len()];
    for (i, &t) in targets.iter().enumerate() {
        let a = starts.partition_point(|&s| s <= t) - 1;
        let local = t - starts[a];
        let up = i < n_up;
        let rows = row_lists[a].get_or_insert_with(|| arrays[a].programmed().ones().collect());
        flip(&mut out[a], rows, local, up)?;
        if up {
            summary.flips_up += 1;
        } else {
            summary.flips_down += 1;
        }
    }
    Ok((out, summary))
}

fn step(level: Level, up: bool, max: Level) -> Level {
    if up {
        level.saturating_add(1).min(max)
    } else {
        level.saturating_sub(1)
    }
}

fn flip(array: &mut AcamArray, rows: &[usize], local: usize, up: bool) -> Result<(), AcamError> {
    let geom = array.geometry();
    let cols = array.active_cols();
    let per_cell = geom.levels_per_cell();
    let max = (geom.sub_levels() - 1) as Level;
    let cell_part = rows.len() * cols * per_cell;
    if local < cell_part {
        let r = rows[local / (cols * per_cell)];
        let c = (local / per_cell) % cols;
        let field = local % per_cell;
        let mut cell: MacroCell = array.cell(r, c);
        // single precision cells only carry the LSB fields
        let field = if geom.doubled { field } else { field * 2 + 1 };
        match field {
            0 => cell.lo_msb = step(cell.lo_msb, up, max),
            1 => cell.lo_lsb = step(cell.lo_lsb, up, max),
            2 if !cell.hi_open => cell.hi_msb = step(cell.hi_msb, up, max),
            3 if !cell.hi_open => cell.hi_lsb = step(cell.hi_lsb, up, max),
            _ => {}
        }
        array.set_cell(r, c, cell)
    } else {
        let d = local - cell_part;
        let levels = geom.sub_levels() as usize;
        let (c, l) = (d / levels, d % levels);
        let dac = array.dac_mut(c);
        dac[l] = step(dac[l], up, max);
        Ok(())
    }
}
