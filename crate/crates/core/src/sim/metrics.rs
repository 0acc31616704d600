use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min_cycles: u64,
    pub mean_cycles: f64,
    pub max_cycles: u64,
    pub mean_ns: f64,
}

impl LatencyStats {
    pub fn from_cycles(cycles: &[u64], clock_hz: f64) -> Self {
        if cycles.is_empty() {
            return Self::default();
        }
        let mean = cycles.iter().sum::<u64>() as f64 / cycles.len() as f64;
        LatencyStats {
            min_cycles: *cycles.iter().min().expect("nonempty"),
            mean_cycles: mean,
            max_cycles: *cycles.iter().max().expect("nonempty"),
            mean_ns: mean * 1e9 / clock_hz,
        }
    }
}

/// Logit flit accounting. `from_cores + emitted = absorbed + delivered` holds
/// at the end of every run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStats {
    pub from_cores: u64,
    pub absorbed: u64,
    pub emitted: u64,
    pub forwarded: u64,
    pub delivered: u64,
}

impl FlowStats {
    pub fn conserved(&self) -> bool {
        self.from_cores + self.emitted == self.absorbed + self.delivered
    }
}

/// Component-cycles of activity, the basis of the energy estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    /// Array-cycles of search on arrays holding content (DAC, sense amplifiers and
    /// prechargers are active for the same cycles).
    pub array_cycles: u64,
    pub register_cycles: u64,
    pub sram_reads: u64,
    pub router_cycles: u64,
    pub coprocessor_cycles: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyStats {
    pub total_j: f64,
    pub per_decision_j: f64,
    pub by_component_j: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub cores_used: usize,
    pub routers_used: usize,
    /// Fraction of cycles the first search stage of a used core was busy.
    pub core_busy: f64,
    pub router_active_cycles: u64,
}

/// Run metrics. Cycle-derived fields are zero when only the functional phase ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub n_samples: usize,
    pub clock_hz: f64,
    pub total_cycles: u64,
    pub latency: LatencyStats,
    pub throughput_sps: f64,
    pub feature_flits_per_sample: usize,
    pub activity: Activity,
    pub energy: EnergyStats,
    pub flow: FlowStats,
    pub utilization: Utilization,
    /// Core searches whose match count differed from the core's tree count.
    pub match_anomalies: u64,
    pub relative_accuracy: Option<f64>,
}
