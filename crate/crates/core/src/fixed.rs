//! Fixed-point logit format shared by the SRAM, the router accumulators and the
//! co-processor.
//!
//! Leaf values are stored as signed integers scaled by `2^frac_bits`. The scale is
//! derived from the model so that the worst-case per-class sum of any subset of
//! leaves fits in an `i32` flit payload; integer addition is associative, so every
//! reduction order (core, router levels, co-processor) yields the same bits.

use serde::{Deserialize, Serialize};

/// Largest fractional precision ever selected.
pub const MAX_FRAC_BITS: u8 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogitFormat {
    pub frac_bits: u8,
}

impl Default for LogitFormat {
    fn default() -> Self {
        Self { frac_bits: 16 }
    }
}

impl LogitFormat {
    pub fn new(frac_bits: u8) -> Self {
        Self {
            frac_bits: frac_bits.min(MAX_FRAC_BITS),
        }
    }

    /// Picks the finest scale for which the worst-case sum still fits `i32`.
    ///
    /// `per_class_leaves` yields, for every (tree, class) pair, the leaf values the
    /// tree can contribute to that class.
    pub fn fit<'a, I>(per_class_leaves: I) -> Self
    where
        I: IntoIterator<Item = (usize, &'a [f64])> + Clone,
    {
        for frac in (0..=MAX_FRAC_BITS).rev() {
            let fmt = Self { frac_bits: frac };
            let mut worst: std::collections::BTreeMap<usize, i128> = Default::default();
            let mut representable = true;
            for (class, leaves) in per_class_leaves.clone() {
                let mut tree_max = 0i128;
                for &v in leaves {
                    let scaled = v * fmt.scale();
                    if !scaled.is_finite() || scaled.abs() >= i32::MAX as f64 {
                        representable = false;
                        break;
                    }
                    tree_max = tree_max.max((scaled.round() as i128).abs());
                }
                if !representable {
                    break;
                }
                *worst.entry(class).or_default() += tree_max;
            }
            if representable && worst.values().all(|&w| w <= i32::MAX as i128) {
                return fmt;
            }
        }
        Self { frac_bits: 0 }
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Round-to-nearest conversion into the raw fixed-point domain.
    pub fn to_raw(&self, value: f64) -> i64 {
        (value * self.scale()).round() as i64
    }

    /// Exact conversion back to `f64` (sums stay far below 2^53).
    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 / self.scale()
    }

    /// Resolution of one raw unit.
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_keeps_worst_case_sum_in_i32() {
        let leaves = vec![vec![1.5, -2.0], vec![0.25, 3.0], vec![-7.0, 1.0]];
        let fmt = LogitFormat::fit(leaves.iter().map(|l| (0usize, l.as_slice())));
        let worst: i64 = leaves
            .iter()
            .map(|l| l.iter().map(|&v| fmt.to_raw(v).abs()).max().unwrap())
            .sum();
        assert!(worst <= i32::MAX as i64);
        // one more fractional bit would overflow
        let finer = LogitFormat::new(fmt.frac_bits + 1);
        let worst_finer: i64 = leaves
            .iter()
            .map(|l| l.iter().map(|&v| finer.to_raw(v).abs()).max().unwrap())
            .sum();
        assert!(fmt.frac_bits == MAX_FRAC_BITS || worst_finer > i32::MAX as i64);
    }

    #[test]
    fn classes_are_budgeted_independently() {
        let a = [1.0];
        let items = vec![(0usize, &a[..]), (1usize, &a[..])];
        let fmt = LogitFormat::fit(items.iter().copied());
        assert_eq!(fmt.frac_bits, MAX_FRAC_BITS);
    }

    #[test]
    fn round_trip_is_exact_on_grid() {
        let fmt = LogitFormat::new(8);
        for raw in [-1000i64, -1, 0, 1, 255, 123456] {
            assert_eq!(fmt.to_raw(fmt.to_f64(raw)), raw);
        }
    }
}
