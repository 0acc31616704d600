//! Linear area, peak power and energy model.
//!
//! Every entry is per component instance. The defaults are free parameters split
//! from a 19 W chip budget (aCAM arrays dominate) and calibrated so that a large
//! batched binary run lands near 0.3 nJ per decision; individual entries are not
//! measured values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{Activity, EnergyStats};
use super::SimError;
use crate::compiler::{ChipConfig, PlacementPlan};
use crate::noc::build_htree;

pub const COST_VERSION: u32 = 1;

/// Component names, in report order.
pub const COMPONENTS: [&str; 8] = [
    "acam_array",
    "dac",
    "sense_amp",
    "precharger",
    "registers_logic",
    "sram",
    "router",
    "coprocessor",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentCost {
    pub area_mm2: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub cost_version: u32,
    pub components: BTreeMap<String, ComponentCost>,
}

impl Default for CostModel {
    fn default() -> Self {
        // (name, chip-level area mm^2, chip-level power W, default instance count)
        let budget: [(&str, f64, f64, f64); 8] = [
            ("acam_array", 40.96, 15.2, 16384.0),
            ("dac", 3.28, 1.0, 16384.0),
            ("sense_amp", 1.64, 0.8, 16384.0),
            ("precharger", 0.82, 0.4, 16384.0),
            ("registers_logic", 1.64, 0.8, 4096.0),
            ("sram", 1.23, 0.4, 4096.0),
            ("router", 1.365, 0.395, 1365.0),
            ("coprocessor", 0.05, 0.005, 1.0),
        ];
        CostModel {
            cost_version: COST_VERSION,
            components: budget
                .iter()
                .map(|&(name, area, power, n)| {
                    (
                        name.to_string(),
                        ComponentCost {
                            area_mm2: area / n,
                            power_w: power / n,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl CostModel {
    pub fn zeroed() -> Self {
        CostModel {
            cost_version: COST_VERSION,
            components: COMPONENTS
                .iter()
                .map(|n| (n.to_string(), ComponentCost::default()))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let model: CostModel = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if model.cost_version != COST_VERSION {
            return Err(SimError::Config(format!(
                "cost_version {} unsupported",
                model.cost_version
            )));
        }
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost model serializes")
    }

    pub fn check(&self) -> Result<(), SimError> {
        for name in COMPONENTS {
            self.get(name)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<ComponentCost, SimError> {
        self.components
            .get(name)
            .copied()
            .ok_or_else(|| SimError::Config(format!("cost model has no entry for {name}")))
    }

    /// Energy from activity counts: each active component-cycle costs its peak
    /// power for one clock period.
    pub fn energy(&self, activity: &Activity, clock_hz: f64, n_decisions: usize) -> Result<EnergyStats, SimError> {
        let period = 1.0 / clock_hz;
        let mut by = BTreeMap::new();
        for n in ["acam_array", "dac", "sense_amp", "precharger"] {
            by.insert(n.to_string(), self.get(n)?.power_w * period * activity.array_cycles as f64);
        }
        by.insert(
            "registers_logic".into(),
            self.get("registers_logic")?.power_w * period * activity.register_cycles as f64,
        );
        by.insert("sram".into(), self.get("sram")?.power_w * period * activity.sram_reads as f64);
        by.insert(
            "router".into(),
            self.get("router")?.power_w * period * activity.router_cycles as f64,
        );
        by.insert(
            "coprocessor".into(),
            self.get("coprocessor")?.power_w * period * activity.coprocessor_cycles as f64,
        );
        let total: f64 = by.values().sum();
        Ok(EnergyStats {
            total_j: total,
            per_decision_j: if n_decisions == 0 { 0.0 } else { total / n_decisions as f64 },
            by_component_j: by,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub name: String,
    pub instances: usize,
    pub area_mm2: f64,
    pub peak_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub components: Vec<ComponentReport>,
    pub total_area_mm2: f64,
    pub peak_power_w: f64,
    pub cores_used: usize,
    /// Peak power of the used cores' arrays and logic plus the whole network.
    pub used_peak_power_w: f64,
}

pub fn instance_counts(chip: &ChipConfig) -> Result<BTreeMap<&'static str, usize>, SimError> {
    let arrays = chip.n_cores * chip.stacked_arrays * chip.queued_arrays;
    let routers = build_htree(chip.n_cores, chip.noc.arity)?.n_routers();
    Ok(BTreeMap::from([
        ("acam_array", arrays),
        ("dac", arrays),
        ("sense_amp", arrays),
        ("precharger", arrays),
        ("registers_logic", chip.n_cores),
        ("sram", chip.n_cores),
        ("router", routers),
        ("coprocessor", 1),
    ]))
}

/// Chip area and peak power by linear composition of per-instance costs.
pub fn estimate_cost(model: &CostModel, chip: &ChipConfig, plan: Option<&PlacementPlan>) -> Result<CostReport, SimError> {
    let counts = instance_counts(chip)?;
    let mut components = Vec::new();
    for name in COMPONENTS {
        let c = model.get(name)?;
        let n = counts[name];
        components.push(ComponentReport {
            name: name.to_string(),
            instances: n,
            area_mm2: c.area_mm2 * n as f64,
            peak_power_w: c.power_w * n as f64,
        });
    }
    let peak: f64 = components.iter().map(|c| c.peak_power_w).sum();
    let cores_used = plan.map_or(chip.n_cores, |p| p.cores.len());
    let core_share = cores_used as f64 / chip.n_cores as f64;
    let used: f64 = components
        .iter()
        .map(|c| match c.name.as_str() {
            "router" | "coprocessor" => c.peak_power_w,
            _ => c.peak_power_w * core_share,
        })
        .sum();
    Ok(CostReport {
        total_area_mm2: components.iter().map(|c| c.area_mm2).sum(),
        peak_power_w: peak,
        components,
        cores_used,
        used_peak_power_w: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chip_is_19_watts() {
        let r = estimate_cost(&CostModel::default(), &ChipConfig::default(), None).unwrap();
        assert!((r.peak_power_w - 19.0).abs() < 1e-9, "{}", r.peak_power_w);
        let acam = &r.components[0];
        assert_eq!(acam.instances, 16384);
        assert!(acam.peak_power_w / r.peak_power_w > 0.5);
        assert!(acam.area_mm2 / r.total_area_mm2 > 0.5);
    }

    #[test]
    fn zeroed_model_reports_zero() {
        let r = estimate_cost(&CostModel::zeroed(), &ChipConfig::default(), None).unwrap();
        assert_eq!(r.peak_power_w, 0.0);
        assert_eq!(r.total_area_mm2, 0.0);
        let e = CostModel::zeroed()
            .energy(
                &Activity {
                    array_cycles: 100,
                    ..Activity::default()
                },
                1e9,
                10,
            )
            .unwrap();
        assert_eq!(e.total_j, 0.0);
    }

    #[test]
    fn missing_entry_is_config_error() {
        let mut m = CostModel::default();
        m.components.remove("sram");
        let err = CostModel::from_json(&m.to_json()).unwrap_err();
        assert!(matches!(err, SimError::Config(msg) if msg.contains("sram")));
        assert!(estimate_cost(&m, &ChipConfig::default(), None).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = CostModel::default();
        assert_eq!(CostModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn energy_is_linear_in_activity() {
        let m = CostModel::default();
        let a = Activity {
            array_cycles: 256,
            ..Activity::default()
        };
        let e = m.energy(&a, 1e9, 1).unwrap();
        let per_array_w = (15.2 + 1.0 + 0.8 + 0.4) / 16384.0;
        assert!((e.total_j - 256.0 * per_array_w * 1e-9).abs() < 1e-18);
    }
}
