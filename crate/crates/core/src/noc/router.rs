use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::flit::{FeatureFlit, Flit, LogitFlit};
use super::NocError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterStats {
    /// Logit flits folded into an accumulator.
    pub absorbed: u64,
    /// Summed flits produced by the accumulator.
    pub emitted: u64,
    /// Logit flits passed through unchanged.
    pub forwarded: u64,
    /// Cycles in which at least one flit was serviced.
    pub active_cycles: u64,
}

/// One router of the reduction tree.
///
/// With `accumulate` set, flits sharing `(class, batch, tag)` are summed and one
/// flit leaves once every expected contribution arrived. Otherwise flits are
/// forwarded unchanged.
#[derive(Debug, Clone)]
pub struct RouterState {
    pub id: usize,
    pub accumulate: bool,
    capacity: usize,
    ports: Vec<VecDeque<LogitFlit>>,
    /// Contributions per `(class, batch)` before a sum is complete.
    expected: BTreeMap<(u8, u8), u32>,
    partial: BTreeMap<(u8, u8, u16), (i64, u32)>,
    /// Outgoing flits with the cycle they become ready.
    out: VecDeque<(u64, LogitFlit)>,
    pub stats: RouterStats,
}

impl RouterState {
    pub fn new(
        id: usize,
        accumulate: bool,
        n_ports: usize,
        capacity: usize,
        expected: BTreeMap<(u8, u8), u32>,
    ) -> Self {
        RouterState {
            id,
            accumulate,
            capacity,
            ports: vec![VecDeque::with_capacity(capacity); n_ports],
            expected,
            partial: BTreeMap::new(),
            out: VecDeque::new(),
            stats: RouterStats::default(),
        }
    }

    pub fn space(&self, port: usize) -> usize {
        self.capacity - self.ports[port].len()
    }

    pub fn push(&mut self, port: usize, flit: LogitFlit) -> Result<(), NocError> {
        if self.ports[port].len() >= self.capacity {
            return Err(NocError::BufferFull {
                router: self.id,
                port,
            });
        }
        self.ports[port].push_back(flit);
        Ok(())
    }

    /// Takes at most one flit from each input port. Forwarded flits are ready at
    /// `now`; sums are ready at `now + accumulate_delay`.
    pub fn service(&mut self, now: u64, accumulate_delay: u64) -> Result<(), NocError> {
        let mut any = false;
        for p in 0..self.ports.len() {
            let Some(flit) = self.ports[p].pop_front() else {
                continue;
            };
            any = true;
            if self.accumulate {
                if let Some(sum) = self.fold(flit)? {
                    self.out.push_back((now + accumulate_delay, sum));
                }
            } else {
                self.stats.forwarded += 1;
                self.out.push_back((now, flit));
            }
        }
        if any {
            self.stats.active_cycles += 1;
        }
        Ok(())
    }

    fn fold(&mut self, flit: LogitFlit) -> Result<Option<LogitFlit>, NocError> {
        let expected = *self
            .expected
            .get(&(flit.class, flit.batch))
            .ok_or(NocError::UnexpectedFlit {
                router: self.id,
                class: flit.class as usize,
                batch: flit.batch as usize,
            })?;
        self.stats.absorbed += 1;
        let key = (flit.class, flit.batch, flit.tag);
        let entry = self.partial.entry(key).or_insert((0, 0));
        entry.0 += flit.value as i64;
        entry.1 += 1;
        let (sum, count) = *entry;
        if count < expected {
            return Ok(None);
        }
        self.partial.remove(&key);
        let value = i32::try_from(sum).map_err(|_| NocError::Overflow {
            router: self.id,
            class: flit.class as usize,
            sum,
        })?;
        self.stats.emitted += 1;
        Ok(Some(LogitFlit { value, ..flit }))
    }

    pub fn peek_ready(&self, now: u64) -> Option<LogitFlit> {
        self.out.front().filter(|(t, _)| *t <= now).map(|(_, f)| *f)
    }

    pub fn pop_ready(&mut self, now: u64) -> Option<LogitFlit> {
        self.peek_ready(now)?;
        self.out.pop_front().map(|(_, f)| f)
    }

    pub fn is_idle(&self) -> bool {
        self.out.is_empty() && self.ports.iter().all(VecDeque::is_empty)
    }

    /// Open partial sums; nonzero only while a sample is in flight.
    pub fn pending_sums(&self) -> usize {
        self.partial.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub up: Vec<LogitFlit>,
    /// Feature flits copied to each child port.
    pub down: Vec<(usize, FeatureFlit)>,
}

/// Processes `incoming` `(port, flit)` pairs in order without timing.
pub fn router_step(state: &mut RouterState, incoming: &[(usize, Flit)]) -> Result<StepOutput, NocError> {
    let mut out = StepOutput::default();
    for &(port, flit) in incoming {
        match flit {
            Flit::Feature(f) => out.down.extend((0..state.ports.len()).map(|c| (c, f))),
            Flit::Logit(l) => {
                state.push(port, l)?;
                state.service(0, 0)?;
                while let Some(f) = state.pop_ready(0) {
                    out.up.push(f);
                }
            }
        }
    }
    Ok(out)
}
