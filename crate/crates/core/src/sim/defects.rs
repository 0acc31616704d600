use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{functional, load_cores, with_defects};
use super::SimError;
use crate::acam::DefectSpec;
use crate::compiler::{NocProgram, PlacementPlan};
use crate::core_unit::MatchPolicy;
use crate::ensemble::{Code, Decision, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectPoint {
    pub rate: f64,
    pub trials: usize,
    /// Mean relative accuracy, defective over defect-free.
    pub mean: f64,
    pub std: f64,
    /// Half-width of the normal 95% interval of the mean.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
    pub clean_accuracy: f64,
    pub mean_flips: f64,
}

fn accuracy(preds: &[Prediction], labels: &[usize]) -> f64 {
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, &l)| p.decision == Decision::Class(l))
        .count();
    hits as f64 / labels.len() as f64
}

/// Relative accuracy under conductance and DAC flips. Trial `t` of every rate
/// uses seed `seed + t`; cores run the lenient match policy so that missing or
/// extra matches change sums instead of aborting.
#[allow(clippy::too_many_arguments)]
pub fn defect_experiment(
    plan: &PlacementPlan,
    program: &NocProgram,
    samples: &[Vec<Code>],
    labels: &[usize],
    rates: &[f64],
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<DefectPoint>, SimError> {
    if !program.task.is_classification() {
        return Err(SimError::Config("defect experiments need a classifier".into()));
    }
    if labels.len() != samples.len() || samples.is_empty() {
        return Err(SimError::Config(format!(
            "{} labels for {} samples",
            labels.len(),
            samples.len()
        )));
    }
    if trials == 0 {
        return Err(SimError::Config("at least one trial".into()));
    }
    let mut groups = vec![Vec::new(); program.batch_factor];
    for (i, c) in plan.cores.iter().enumerate() {
        groups[c.group].push(i);
    }
    let clean = load_cores(plan)?;
    let base = functional(&clean, &groups, program, samples, MatchPolicy::Strict, 1)?;
    let clean_acc = accuracy(&base.predictions, labels);
    if clean_acc == 0.0 {
        return Err(SimError::Config("defect-free accuracy is zero".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let mut points = Vec::with_capacity(rates.len());
    for &rate in rates {
        let runs: Vec<(f64, usize)> = pool.install(|| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let spec = DefectSpec {
                        rate,
                        seed: seed + t as u64,
                    };
                    let (cores, summary) = with_defects(&clean, spec)?;
                    let f = functional(&cores, &groups, program, samples, MatchPolicy::Lenient, 1)?;
                    Ok((
                        accuracy(&f.predictions, labels) / clean_acc,
                        summary.flips_up + summary.flips_down,
                    ))
                })
                .collect::<Result<_, SimError>>()
        })?;
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.0).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std = var.sqrt();
        points.push(DefectPoint {
            rate,
            trials,
            mean,
            std,
            ci95: 1.96 * std / n.sqrt(),
            min: runs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
            max: runs.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
            clean_accuracy: clean_acc,
            mean_flips: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        });
    }
    Ok(points)
}
