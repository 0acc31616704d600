use serde::{Deserialize, Serialize};

use crate::compiler::ChipConfig;
use crate::core_unit::{core_schedule, CoreTiming};

/// Closed-form throughputs in samples per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTable {
    /// One core, `N_s·f / (λ_C + II·(N_s - 1))`, or `f / II` in steady state.
    pub xtime_core: f64,
    /// Core throughput under the multiclass ceiling `f / N_classes`.
    pub xtime: f64,
    /// Depth-limited baseline, `f / (4·D)`.
    pub booster: f64,
}

pub fn analytic_throughput(
    chip: &ChipConfig,
    n_trees_core: usize,
    n_classes: usize,
    depth: usize,
    n_samples: Option<u64>,
) -> ThroughputTable {
    let timing = CoreTiming::from_chip(chip);
    let f = chip.clock_hz;
    let core = match n_samples {
        Some(n) => core_schedule(n_trees_core, n.max(1), timing, f).throughput,
        None => f / timing.ii(n_trees_core) as f64,
    };
    let ceiling = if n_classes > 2 { f / n_classes as f64 } else { f64::INFINITY };
    ThroughputTable {
        xtime_core: core,
        xtime: core.min(ceiling),
        booster: f / (4 * depth.max(1)) as f64,
    }
}

/// Steady-state cycles between samples entering the chip: feature streaming,
/// co-processor pacing and the initiation interval shared by `batch_factor`
/// replicas.
pub fn chip_interval(
    chip: &ChipConfig,
    n_features: usize,
    n_trees_core: usize,
    n_classes: usize,
    batch_factor: usize,
) -> f64 {
    let noc = &chip.noc;
    let stream = noc
        .feature_flits(n_features, chip.n_bits)
        .div_ceil(noc.injection_ports.max(1)) as f64;
    let ii = CoreTiming::from_chip(chip).ii(n_trees_core) as f64 / batch_factor.max(1) as f64;
    let cp = if n_classes > 2 { n_classes as f64 } else { 1.0 };
    stream.max(ii).max(cp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let chip = ChipConfig::default();
        let t = analytic_throughput(&chip, 1, 1, 8, None);
        assert_eq!(t.xtime_core, 250e6);
        assert_eq!(t.booster, 31.25e6);
        assert_eq!(analytic_throughput(&chip, 5, 1, 4, None).xtime, 200e6);
        let seven = analytic_throughput(&chip, 1, 7, 4, None);
        assert!((seven.xtime - 1e9 / 7.0).abs() < 1e-3);
        let finite = analytic_throughput(&chip, 1, 1, 4, Some(10_000)).xtime_core;
        assert!(finite < 250e6 && finite > 0.99 * 250e6);
    }

    #[test]
    fn booster_is_one_over_4d() {
        let chip = ChipConfig::default();
        for d in 1..=12 {
            let b = analytic_throughput(&chip, 1, 1, d, None).booster;
            assert_eq!(b, chip.clock_hz / (4 * d) as f64);
        }
    }

    #[test]
    fn interval_terms() {
        let chip = ChipConfig::default();
        assert_eq!(chip_interval(&chip, 8, 1, 1, 1), 4.0);
        assert_eq!(chip_interval(&chip, 8, 1, 1, 4), 1.0);
        assert_eq!(chip_interval(&chip, 130, 1, 1, 4), 17.0);
        assert_eq!(chip_interval(&chip, 8, 1, 7, 4), 7.0);
    }
}
