use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analytic::chip_interval;
use super::engine::{run_inference, SimOptions};
use super::synth::{random_codes, random_ensemble, SynthSpec};
use super::SimError;
use crate::compiler::{compile_quantized, ChipConfig, CompileOptions};
use crate::ensemble::{build_quant_grid, QuantizedEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NTrees,
    Depth,
    NFeat,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NTrees => "n_trees",
            SweepParam::Depth => "depth",
            SweepParam::NFeat => "n_feat",
        }
    }

    fn apply(self, base: &SynthSpec, value: usize) -> SynthSpec {
        let mut s = base.clone();
        match self {
            SweepParam::NTrees => s.n_trees = value,
            SweepParam::Depth => s.depth = value,
            SweepParam::NFeat => s.n_features = value,
        }
        s
    }
}

impl FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "n_trees" => Ok(SweepParam::NTrees),
            "depth" | "d" => Ok(SweepParam::Depth),
            "n_feat" | "n_features" => Ok(SweepParam::NFeat),
            other => Err(SimError::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// Parses `name=start:stop:step` (inclusive) or `name=v1,v2,...`.
pub fn parse_sweep_arg(arg: &str) -> Result<(SweepParam, Vec<usize>), SimError> {
    let bad = || SimError::Config(format!("bad sweep {arg:?}, expected name=start:stop:step or name=a,b,c"));
    let (name, range) = arg.split_once('=').ok_or_else(bad)?;
    let param: SweepParam = name.trim().parse()?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let values = if range.contains(':') {
        let parts: Vec<&str> = range.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(bad());
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step == 0 || b < a {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        range.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok((param, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub base: SynthSpec,
    pub chip: ChipConfig,
    pub n_samples: usize,
    pub batch_factor: usize,
    pub max_trees_per_core: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl SweepSpec {
    /// Binary depth-6 model over 16 features, four trees per core and four
    /// replicas.
    pub fn new(param: SweepParam, values: Vec<usize>) -> Self {
        SweepSpec {
            param,
            values,
            base: SynthSpec {
                n_trees: 64,
                depth: 6,
                n_features: 16,
                ..SynthSpec::default()
            },
            chip: ChipConfig::default(),
            n_samples: 512,
            batch_factor: 4,
            max_trees_per_core: Some(4),
            seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: usize,
    pub n_trees: usize,
    pub depth: usize,
    pub n_features: usize,
    pub feasible: bool,
    pub cores_used: usize,
    pub n_trees_core_max: usize,
    pub throughput_sps: f64,
    pub analytic_sps: f64,
    pub mean_latency_cycles: f64,
    pub energy_per_decision_j: f64,
    pub note: String,
}

/// Simulates one synthetic model per value. Points that do not compile are
/// marked infeasible and carry the error.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>, SimError> {
    if spec.values.is_empty() {
        return Err(SimError::Config("sweep has no values".into()));
    }
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let s = spec.param.apply(&spec.base, value);
        let mut point = SweepPoint {
            param: spec.param.name().to_string(),
            value,
            n_trees: s.n_trees,
            depth: s.depth,
            n_features: s.n_features,
            feasible: false,
            cores_used: 0,
            n_trees_core_max: 0,
            throughput_sps: 0.0,
            analytic_sps: 0.0,
            mean_latency_cycles: 0.0,
            energy_per_decision_j: 0.0,
            note: String::new(),
        };
        let model = random_ensemble(&s, spec.seed);
        let q = QuantizedEnsemble::from_ensemble(&model, build_quant_grid(&model, spec.chip.n_bits));
        let opts = CompileOptions {
            batch_factor: spec.batch_factor,
            max_trees_per_core: spec.max_trees_per_core,
        };
        let art = match compile_quantized(q, &spec.chip, &opts) {
            Ok(a) => a,
            Err(e) => {
                point.note = e.to_string();
                points.push(point);
                continue;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let samples = random_codes(&art.model, spec.n_samples, &mut rng);
        let res = run_inference(
            &art.placement,
            &art.noc,
            &samples,
            &SimOptions {
                workers: spec.workers,
                ..SimOptions::default()
            },
        )?;
        let k = art.placement.n_trees_core_max();
        point.feasible = true;
        point.cores_used = art.placement.cores.len();
        point.n_trees_core_max = k;
        point.throughput_sps = res.metrics.throughput_sps;
        point.analytic_sps = spec.chip.clock_hz
            / chip_interval(&spec.chip, s.n_features, k, art.model.model.n_classes, spec.batch_factor);
        point.mean_latency_cycles = res.metrics.latency.mean_cycles;
        point.energy_per_decision_j = res.metrics.energy.per_decision_j;
        points.push(point);
    }
    Ok(points)
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p).map_err(|e| SimError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}
