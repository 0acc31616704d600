use std::fmt;

use serde::{Deserialize, Serialize};

use super::CoreError;
use crate::compiler::ChipConfig;

/// Pipeline stages of a core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Search in queued array `i`, all stacked arrays in parallel.
    Acam(usize),
    Buffer,
    Mmr,
    Sram,
    Acc,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Acam(i) => write!(f, "acam{i}"),
            Stage::Buffer => f.write_str("buffer"),
            Stage::Mmr => f.write_str("mmr"),
            Stage::Sram => f.write_str("sram"),
            Stage::Acc => f.write_str("acc"),
        }
    }
}

/// Half-open cycle interval `[start, end)` during which a stage serves a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpan {
    pub stage: Stage,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreTiming {
    pub lambda_cam: u64,
    pub queued: usize,
}

impl Default for CoreTiming {
    fn default() -> Self {
        CoreTiming {
            lambda_cam: 4,
            queued: 2,
        }
    }
}

impl CoreTiming {
    pub fn from_chip(chip: &ChipConfig) -> Self {
        CoreTiming {
            lambda_cam: chip.lambda_cam,
            queued: chip.queued_arrays,
        }
    }

    /// `λ_C`: queued searches, then one cycle each for buffer, MMR, SRAM and ACC.
    pub fn lambda_c(&self) -> u64 {
        self.queued as u64 * self.lambda_cam + 4
    }

    /// Initiation interval `max(λ_CAM, N_trees,core)`.
    pub fn ii(&self, n_trees_core: usize) -> u64 {
        self.lambda_cam.max(n_trees_core.max(1) as u64)
    }

    /// Cycles from issue to the accumulated result. The MMR, SRAM and ACC stages
    /// take one cycle per match, so this is `λ_C + k - 1`.
    pub fn latency(&self, n_trees_core: usize) -> u64 {
        self.lambda_c() + n_trees_core.max(1) as u64 - 1
    }

    /// Stage occupancy of a sample issued at `start`.
    pub fn timeline(&self, start: u64, n_trees_core: usize) -> Vec<StageSpan> {
        let k = n_trees_core.max(1) as u64;
        let lam = self.lambda_cam;
        let mut spans: Vec<StageSpan> = (0..self.queued)
            .map(|q| StageSpan {
                stage: Stage::Acam(q),
                start: start + q as u64 * lam,
                end: start + (q as u64 + 1) * lam,
            })
            .collect();
        let b = start + self.queued as u64 * lam;
        spans.push(StageSpan {
            stage: Stage::Buffer,
            start: b,
            end: b + 1,
        });
        for (i, stage) in [Stage::Mmr, Stage::Sram, Stage::Acc].into_iter().enumerate() {
            let s = b + 1 + i as u64;
            spans.push(StageSpan {
                stage,
                start: s,
                end: s + k,
            });
        }
        spans
    }
}

/// Closed-form core schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSchedule {
    pub lambda_cam: u64,
    pub lambda_c: u64,
    pub n_trees_core: usize,
    pub n_samples: u64,
    /// Initiation interval.
    pub ii: u64,
    /// Bubbles between samples, `N_B`.
    pub n_bubbles: u64,
    pub total_cycles: u64,
    /// Samples per second, `τ_C`.
    pub throughput: f64,
    /// Stage layout of the first sample.
    pub stages: Vec<StageSpan>,
}

/// `total = λ_C + II·(N_s - 1)`, `τ_C = N_s·f / total`.
pub fn core_schedule(n_trees_core: usize, n_samples: u64, timing: CoreTiming, clock_hz: f64) -> CoreSchedule {
    assert!(n_samples >= 1, "at least one sample");
    let ii = timing.ii(n_trees_core);
    let total = timing.lambda_c() + ii * (n_samples - 1);
    CoreSchedule {
        lambda_cam: timing.lambda_cam,
        lambda_c: timing.lambda_c(),
        n_trees_core,
        n_samples,
        ii,
        n_bubbles: ii,
        total_cycles: total,
        throughput: n_samples as f64 * clock_hz / total as f64,
        stages: timing.timeline(0, n_trees_core),
    }
}

/// Issue logic of one core with per-stage busy-until hazard checks.
#[derive(Debug, Clone)]
pub struct CorePipeline {
    pub core: usize,
    timing: CoreTiming,
    n_trees_core: usize,
    last_issue: Option<u64>,
    busy_until: Vec<(Stage, u64)>,
}

impl CorePipeline {
    pub fn new(core: usize, timing: CoreTiming, n_trees_core: usize) -> Self {
        CorePipeline {
            core,
            timing,
            n_trees_core,
            last_issue: None,
            busy_until: Vec::new(),
        }
    }

    /// Earliest cycle a sample available at `ready` can enter.
    pub fn next_issue(&self, ready: u64) -> u64 {
        match self.last_issue {
            Some(t) => ready.max(t + self.timing.ii(self.n_trees_core)),
            None => ready,
        }
    }

    /// Issues a sample at `start`, returning its completion cycle.
    pub fn issue_at(&mut self, start: u64) -> Result<u64, CoreError> {
        let spans = self.timing.timeline(start, self.n_trees_core);
        for span in &spans {
            if let Some(&(_, until)) = self.busy_until.iter().find(|(s, _)| *s == span.stage) {
                if span.start < until {
                    return Err(CoreError::Hazard {
                        core: self.core,
                        stage: span.stage.to_string(),
                        cycle: span.start,
                    });
                }
            }
        }
        for span in &spans {
            match self.busy_until.iter_mut().find(|(s, _)| *s == span.stage) {
                Some(slot) => slot.1 = span.end,
                None => self.busy_until.push((span.stage, span.end)),
            }
        }
        self.last_issue = Some(start);
        Ok(start + self.timing.latency(self.n_trees_core))
    }

    /// Issues at the earliest legal cycle.
    pub fn issue(&mut self, ready: u64) -> Result<(u64, u64), CoreError> {
        let start = self.next_issue(ready);
        let done = self.issue_at(start)?;
        Ok((start, done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_c_is_twelve() {
        let t = CoreTiming::default();
        assert_eq!(t.lambda_c(), 12);
        assert_eq!(core_schedule(1, 1, t, 1e9).total_cycles, 12);
    }

    #[test]
    fn throughput_limits() {
        let t = CoreTiming::default();
        let one = core_schedule(1, 1_000_000, t, 1e9).throughput;
        assert!((one / 250e6 - 1.0).abs() < 1e-4);
        let five = core_schedule(5, 1_000_000, t, 1e9).throughput;
        assert!((five / 200e6 - 1.0).abs() < 1e-4);
        for k in 1..=4 {
            assert_eq!(core_schedule(k, 10, t, 1e9).ii, 4);
        }
    }

    #[test]
    fn stages_cover_lambda_c() {
        let t = CoreTiming::default();
        let spans = t.timeline(0, 1);
        assert_eq!(spans.last().unwrap().end, 12);
        let names: Vec<String> = spans.iter().map(|s| s.stage.to_string()).collect();
        assert_eq!(names, ["acam0", "acam1", "buffer", "mmr", "sram", "acc"]);
    }

    #[test]
    fn back_to_back_issue_is_hazard_free() {
        let t = CoreTiming::default();
        for k in 1..=8 {
            let mut p = CorePipeline::new(0, t, k);
            let mut done = 0;
            for _ in 0..100 {
                done = p.issue(0).unwrap().1;
            }
            assert_eq!(done, t.latency(k) + 99 * t.ii(k));
        }
    }

    #[test]
    fn early_issue_is_a_hazard() {
        let mut p = CorePipeline::new(3, CoreTiming::default(), 5);
        p.issue_at(0).unwrap();
        let err = p.issue_at(4).unwrap_err();
        assert!(matches!(err, CoreError::Hazard { core: 3, .. }));
    }
}
