use std::collections::VecDeque;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::schedule::{CoreTiming, Stage};
use super::state::{CoreOutput, CoreState};
use super::CoreError;
use crate::ensemble::Code;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTiming {
    pub issue: u64,
    /// First cycle after the ACC stage.
    pub done: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRun {
    pub outputs: Vec<CoreOutput>,
    pub timing: Vec<SampleTiming>,
    /// Cycles until the last sample left the ACC stage.
    pub total_cycles: u64,
}

struct InFlight {
    sample: usize,
    start: u64,
    query: Vec<Code>,
    /// Match lines per stacked array after the latest queued search.
    lines: Vec<FixedBitSet>,
    buffer: FixedBitSet,
    to_sram: VecDeque<usize>,
    to_acc: VecDeque<(usize, i32)>,
    acc: Vec<i64>,
    matches: usize,
}

/// Cycle-stepped core. Every stage does its work in the cycle the timeline
/// assigns it, and every cycle checks that no stage serves two samples.
pub struct CycleCore<'a> {
    state: &'a CoreState,
    timing: CoreTiming,
}

impl<'a> CycleCore<'a> {
    pub fn new(state: &'a CoreState, timing: CoreTiming) -> Self {
        CycleCore { state, timing }
    }

    /// Runs `queries`, sample `i` becoming available at `arrivals[i]` (all at 0
    /// when `None`). Samples issue in order at the initiation interval.
    pub fn run(&self, queries: &[Vec<Code>], arrivals: Option<&[u64]>) -> Result<CycleRun, CoreError> {
        let st = self.state;
        let k = st.n_trees().max(1) as u64;
        let ii = self.timing.ii(st.n_trees());
        let lam = self.timing.lambda_cam;
        let n_q = self.timing.queued as u64;
        let buf_at = n_q * lam;
        let end_at = buf_at + 3 + k;

        let mut padded = Vec::with_capacity(queries.len());
        for q in queries {
            padded.push(st.prepare_query(q)?);
        }
        let mut outputs: Vec<Option<CoreOutput>> = vec![None; queries.len()];
        let mut timing = vec![SampleTiming { issue: 0, done: 0 }; queries.len()];
        let mut flight: Vec<InFlight> = Vec::new();
        let mut next = 0usize;
        let mut last_issue: Option<u64> = None;
        let mut now = 0u64;
        let mut finished = 0usize;

        while finished < queries.len() {
            if next < queries.len() {
                let ready = arrivals.map_or(0, |a| a[next]);
                let earliest = last_issue.map_or(ready, |t| ready.max(t + ii));
                if now >= earliest {
                    flight.push(InFlight {
                        sample: next,
                        start: now,
                        query: std::mem::take(&mut padded[next]),
                        lines: (0..st.stacked())
                            .map(|s| st.array(s, 0).programmed().clone())
                            .collect(),
                        buffer: FixedBitSet::with_capacity(st.n_words()),
                        to_sram: VecDeque::new(),
                        to_acc: VecDeque::new(),
                        acc: vec![0; st.classes().len()],
                        matches: 0,
                    });
                    timing[next].issue = now;
                    last_issue = Some(now);
                    next += 1;
                }
            }

            let mut occupied: Vec<(Stage, usize)> = Vec::new();
            for f in &mut flight {
                let off = now - f.start;
                let stage = if off < buf_at {
                    let q = (off / lam) as usize;
                    if off % lam == lam - 1 {
                        for s in 0..st.stacked() {
                            f.lines[s] = st.search_chain(s, q, &f.query, &f.lines[s])?;
                        }
                    }
                    Some(Stage::Acam(q))
                } else if off == buf_at {
                    for (s, lines) in f.lines.iter().enumerate() {
                        for r in lines.ones() {
                            f.buffer.insert(s * st.n_words() / st.stacked() + r);
                        }
                    }
                    f.matches = f.buffer.count_ones(..);
                    if f.matches != st.n_trees() {
                        return Err(CoreError::MatchCount {
                            core: st.core,
                            expected: st.n_trees(),
                            got: f.matches,
                        });
                    }
                    Some(Stage::Buffer)
                } else {
                    None
                };
                // MMR, SRAM and ACC overlap once the buffer is latched.
                let mut tail = Vec::new();
                if off > buf_at && off <= buf_at + k {
                    if let Some(r) = f.buffer.ones().next() {
                        f.buffer.set(r, false);
                        f.to_sram.push_back(r);
                    }
                    tail.push(Stage::Mmr);
                }
                if off > buf_at + 1 && off <= buf_at + 1 + k {
                    if let Some(r) = f.to_sram.pop_front() {
                        let w = st.sram()[r];
                        f.to_acc.push_back((w.class_id, w.value));
                    }
                    tail.push(Stage::Sram);
                }
                if off > buf_at + 2 && off <= buf_at + 2 + k {
                    if let Some((class, v)) = f.to_acc.pop_front() {
                        f.acc[st.class_slot(class)] += v as i64;
                    }
                    tail.push(Stage::Acc);
                }
                for s in stage.into_iter().chain(tail) {
                    if let Some(&(_, other)) = occupied.iter().find(|(o, _)| *o == s) {
                        debug_assert_ne!(other, f.sample);
                        return Err(CoreError::Hazard {
                            core: st.core,
                            stage: s.to_string(),
                            cycle: now,
                        });
                    }
                    occupied.push((s, f.sample));
                }
            }

            now += 1;
            flight.retain(|f| {
                if now - f.start < end_at {
                    return true;
                }
                outputs[f.sample] = Some(CoreOutput {
                    logits: st.classes().iter().copied().zip(f.acc.iter().copied()).collect(),
                    matches: f.matches,
                });
                timing[f.sample].done = now;
                finished += 1;
                false
            });
        }
        Ok(CycleRun {
            outputs: outputs.into_iter().map(|o| o.expect("every sample finished")).collect(),
            total_cycles: timing.iter().map(|t| t.done).max().unwrap_or(0),
            timing,
        })
    }
}
