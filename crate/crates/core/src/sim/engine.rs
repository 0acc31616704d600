use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostModel;
use super::metrics::{Activity, FlowStats, LatencyStats, SimMetrics, Utilization};
use super::SimError;
use crate::acam::{apply_defects_all, DefectSpec, DefectSummary};
use crate::compiler::{NocProgram, PlacementPlan};
use crate::core_unit::{core_infer, CoreOutput, CorePipeline, CoreState, CoreTiming, MatchPolicy};
use crate::ensemble::{Code, Prediction, Task};
use crate::noc::{coprocessor_reduce, HTreeTopology, LogitFlit, RouterState, Upstream};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub workers: usize,
    /// Run the cycle-level network phase after the functional phase.
    pub timing: bool,
    pub trace: bool,
    pub defects: Option<DefectSpec>,
    pub policy: MatchPolicy,
    pub cost: Option<CostModel>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            workers: 1,
            timing: true,
            trace: false,
            defects: None,
            policy: MatchPolicy::Strict,
            cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Inject {
        cycle: u64,
        sample: usize,
        group: usize,
        last_flit: u64,
    },
    CoreIssue {
        cycle: u64,
        core: usize,
        sample: usize,
        done: u64,
    },
    CoreSend {
        cycle: u64,
        core: usize,
        router: usize,
        class: u8,
        tag: u16,
    },
    RouterSend {
        cycle: u64,
        router: usize,
        /// `None` when the flit goes to the co-processor.
        to: Option<usize>,
        class: u8,
        batch: u8,
        tag: u16,
        value: i32,
    },
    SampleDone {
        cycle: u64,
        sample: usize,
        latency: u64,
    },
}

impl TraceEvent {
    pub fn cycle(&self) -> u64 {
        match *self {
            TraceEvent::Inject { cycle, .. }
            | TraceEvent::CoreIssue { cycle, .. }
            | TraceEvent::CoreSend { cycle, .. }
            | TraceEvent::RouterSend { cycle, .. }
            | TraceEvent::SampleDone { cycle, .. } => cycle,
        }
    }
}

/// Writes a header line and one JSON object per event.
pub fn write_trace<W: Write>(mut out: W, events: &[TraceEvent]) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::json!({ "trace_version": TRACE_VERSION }))?;
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub predictions: Vec<Prediction>,
    pub raw_sums: Vec<Vec<i64>>,
    pub metrics: SimMetrics,
    pub trace: Vec<TraceEvent>,
    pub defect_summary: Option<DefectSummary>,
}

/// Programmed cores of a plan, indexed like `plan.cores`.
pub(crate) fn load_cores(plan: &PlacementPlan) -> Result<Vec<CoreState>, SimError> {
    plan.cores
        .iter()
        .map(|c| Ok(CoreState::from_placement(c, &plan.chip, plan.n_features)?))
        .collect()
}

/// Applies one joint defect draw over every array of every core.
pub(crate) fn with_defects(cores: &[CoreState], spec: DefectSpec) -> Result<(Vec<CoreState>, DefectSummary), SimError> {
    let flat: Vec<_> = cores.iter().flat_map(CoreState::arrays_flat).collect();
    let (mut perturbed, summary) = apply_defects_all(&flat, spec)?;
    let mut out = cores.to_vec();
    for core in out.iter_mut().rev() {
        let n = core.stacked() * core.queued();
        let tail = perturbed.split_off(perturbed.len() - n);
        core.set_arrays_flat(tail);
    }
    Ok((out, summary))
}

fn check_program(plan: &PlacementPlan, program: &NocProgram) -> Result<HTreeTopology, SimError> {
    let topo = program.topology();
    if topo.n_cores != plan.chip.n_cores || topo.arity != plan.chip.noc.arity {
        return Err(SimError::Config("NoC program does not match the chip".into()));
    }
    let groups: Vec<(usize, usize)> = plan.cores.iter().map(|c| (c.core, c.group)).collect();
    if groups != program.core_groups {
        return Err(SimError::Config("NoC program does not match the placement".into()));
    }
    if program.batch_factor == 0 || plan.cores.iter().any(|c| c.group >= program.batch_factor) {
        return Err(SimError::Config("batch groups out of range".into()));
    }
    Ok(topo)
}

/// Core indices per batch group.
fn group_members(plan: &PlacementPlan, batch_factor: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); batch_factor];
    for (i, c) in plan.cores.iter().enumerate() {
        groups[c.group].push(i);
    }
    groups
}

pub(crate) struct Functional {
    /// Per sample, the outputs of the cores of its group in group order.
    pub outputs: Vec<Vec<CoreOutput>>,
    pub sums: Vec<Vec<i64>>,
    pub predictions: Vec<Prediction>,
    pub anomalies: u64,
}

pub(crate) fn functional(
    cores: &[CoreState],
    groups: &[Vec<usize>],
    program: &NocProgram,
    samples: &[Vec<Code>],
    policy: MatchPolicy,
    workers: usize,
) -> Result<Functional, SimError> {
    let n_classes = program.n_classes.max(1);
    let one = |i: usize, codes: &Vec<Code>| -> Result<(Vec<CoreOutput>, Vec<i64>, Prediction, u64), SimError> {
        let members = &groups[i % groups.len()];
        let mut sums = vec![0i64; n_classes];
        let mut outs = Vec::with_capacity(members.len());
        let mut anomalies = 0;
        for &c in members {
            let out = core_infer(&cores[c], codes, policy)?;
            if out.matches != cores[c].n_trees() {
                anomalies += 1;
            }
            for &(class, v) in &out.logits {
                sums[class] += v;
            }
            outs.push(out);
        }
        let as_opt: Vec<Option<i64>> = sums.iter().copied().map(Some).collect();
        let pred = coprocessor_reduce(&as_opt, program.task, program.threshold_raw, program.logit_format)?;
        Ok((outs, sums, pred, anomalies))
    };
    let rows: Vec<_> = if workers <= 1 {
        samples
            .iter()
            .enumerate()
            .map(|(i, codes)| one(i, codes))
            .collect::<Result<Vec<_>, SimError>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SimError::Config(e.to_string()))?;
        pool.install(|| {
            samples
                .par_iter()
                .enumerate()
                .map(|(i, codes)| one(i, codes))
                .collect::<Result<Vec<_>, SimError>>()
        })?
    };
    let mut f = Functional {
        outputs: Vec::with_capacity(rows.len()),
        sums: Vec::with_capacity(rows.len()),
        predictions: Vec::with_capacity(rows.len()),
        anomalies: 0,
    };
    for (outs, sums, pred, an) in rows {
        f.outputs.push(outs);
        f.sums.push(sums);
        f.predictions.push(pred);
        f.anomalies += an;
    }
    Ok(f)
}

type KeyMap = BTreeMap<(u8, u8), u32>;

/// Flits per `(class, batch)` leaving every router for one sample, and the
/// contributions each accumulating router waits for.
fn key_maps(topo: &HTreeTopology, program: &NocProgram, plan: &PlacementPlan, cores: &[CoreState]) -> (Vec<KeyMap>, Vec<KeyMap>) {
    let mut per_core: HashMap<usize, KeyMap> = HashMap::new();
    for (p, c) in plan.cores.iter().zip(cores) {
        let m = c.classes().iter().map(|&k| ((k as u8, p.group as u8), 1)).collect();
        per_core.insert(p.core, m);
    }
    let n = topo.n_routers();
    let mut out = vec![KeyMap::new(); n];
    let mut expected = vec![KeyMap::new(); n];
    for r in (0..n).rev() {
        let kids = topo.child_routers(r);
        let children: Vec<&KeyMap> = if kids.is_empty() {
            topo.core_range(r).filter_map(|c| per_core.get(&c)).collect()
        } else {
            kids.map(|k| &out[k]).collect()
        };
        let mut input = KeyMap::new();
        let mut present = KeyMap::new();
        for m in children {
            for (&key, &n) in m {
                *input.entry(key).or_insert(0) += n;
                *present.entry(key).or_insert(0) += 1;
            }
        }
        if program.accumulates(r) {
            out[r] = present.keys().map(|&k| (k, 1)).collect();
            expected[r] = present;
        } else {
            out[r] = input;
        }
    }
    (out, expected)
}

struct Timing {
    total_cycles: u64,
    latencies: Vec<u64>,
    flow: FlowStats,
    router_active: u64,
    routers_used: usize,
    trace: Vec<TraceEvent>,
}

fn timing_phase(
    plan: &PlacementPlan,
    program: &NocProgram,
    topo: &HTreeTopology,
    cores: &[CoreState],
    groups: &[Vec<usize>],
    func: &Functional,
    trace_on: bool,
) -> Result<Timing, SimError> {
    let chip = &plan.chip;
    let noc = &chip.noc;
    let hop = noc.hop_cycles.max(1);
    let n = func.outputs.len();
    let b = groups.len();
    let ct = CoreTiming::from_chip(chip);
    let stream = (noc.feature_flits(plan.n_features, plan.n_bits) as u64).div_ceil(noc.injection_ports.max(1) as u64);
    let down = topo.depth as u64 * hop;
    let (maps, expected) = key_maps(topo, program, plan, cores);
    let cp_flits: Vec<u32> = (0..b)
        .map(|g| maps[0].iter().filter(|((_, bg), _)| *bg as usize == g).map(|(_, &c)| c).sum())
        .collect();
    let ii_g: Vec<u64> = groups
        .iter()
        .map(|m| m.iter().map(|&c| ct.ii(cores[c].n_trees())).max().unwrap_or(1))
        .collect();
    let mut trace = Vec::new();

    // Injection schedule and core issue.
    let mut inject = vec![0u64; n];
    let mut pipes: Vec<CorePipeline> = cores.iter().map(|c| CorePipeline::new(c.core, ct, c.n_trees())).collect();
    let mut core_q: Vec<VecDeque<(u64, LogitFlit)>> = vec![VecDeque::new(); cores.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut last_flit: Option<u64> = None;
    let mut prev: Option<(u64, u64)> = None;
    let mut last_in_group: Vec<Option<u64>> = vec![None; b];
    for i in 0..n {
        let g = i % b;
        let mut t = 0;
        if let Some(l) = last_flit {
            t = t.max(l + 1);
        }
        if let Some((pi, gap)) = prev {
            t = t.max(pi + gap);
        }
        if let Some(t0) = last_in_group[g] {
            t = t.max(t0 + ii_g[g]);
        }
        let last = t + stream - 1;
        inject[i] = t;
        last_flit = Some(last);
        let mut gap = cp_flits[g] as u64;
        if program.task == Task::MulticlassClassification {
            gap = gap.max(program.n_classes as u64);
        }
        prev = Some((t, gap.max(1)));
        last_in_group[g] = Some(t);
        if trace_on {
            trace.push(TraceEvent::Inject {
                cycle: t,
                sample: i,
                group: g,
                last_flit: last,
            });
        }
        let arrival = last + down;
        for (&c, out) in groups[g].iter().zip(&func.outputs[i]) {
            let (start, done) = pipes[c].issue(arrival)?;
            if trace_on {
                trace.push(TraceEvent::CoreIssue {
                    cycle: start,
                    core: cores[c].core,
                    sample: i,
                    done,
                });
            }
            for &(class, v) in &out.logits {
                let value = i32::try_from(v).map_err(|_| {
                    SimError::Consistency(format!("core {} sum {v} exceeds the logit flit", cores[c].core))
                })?;
                core_q[c].push_back((
                    done,
                    LogitFlit {
                        value,
                        class: class as u8,
                        batch: g as u8,
                        tag: i as u16,
                    },
                ));
                heap.push(Reverse((done, c)));
            }
        }
    }

    let mut routers: Vec<RouterState> = (0..topo.n_routers())
        .map(|r| {
            RouterState::new(
                r,
                program.accumulates(r),
                topo.arity,
                noc.buffer_flits,
                expected[r].clone(),
            )
        })
        .collect();
    let mut waiting: HashMap<(u8, u16), VecDeque<usize>> = HashMap::new();
    for i in 0..n {
        waiting.entry(((i % b) as u8, i as u16)).or_default().push_back(i);
    }
    let n_classes = program.n_classes.max(1);
    let mut got = vec![0u32; n];
    let mut sums = vec![vec![0i64; n_classes]; n];
    let mut done = vec![None::<u64>; n];
    let mut flow = FlowStats::default();
    let mut active_r: BTreeSet<usize> = BTreeSet::new();
    let mut active_c: BTreeSet<usize> = BTreeSet::new();
    let mut now = 0u64;

    loop {
        while let Some(&Reverse((t, c))) = heap.peek() {
            if t > now {
                break;
            }
            heap.pop();
            active_c.insert(c);
        }
        if active_r.is_empty() && active_c.is_empty() {
            match heap.peek() {
                Some(&Reverse((t, _))) => {
                    now = t;
                    continue;
                }
                None => break,
            }
        }
        let ids: Vec<usize> = active_r.iter().copied().collect();
        for r in ids {
            routers[r].service(now + hop - 1, noc.accumulate_cycles)?;
            if let Some(fl) = routers[r].peek_ready(now) {
                match topo.parent(r) {
                    Upstream::Coprocessor => {
                        routers[r].pop_ready(now);
                        flow.delivered += 1;
                        let key = (fl.batch, fl.tag);
                        let i = *waiting
                            .get(&key)
                            .and_then(VecDeque::front)
                            .ok_or_else(|| SimError::Consistency(format!("stray flit {fl:?}")))?;
                        got[i] += 1;
                        sums[i][fl.class as usize] += fl.value as i64;
                        if got[i] == cp_flits[i % b] {
                            waiting.get_mut(&key).expect("present").pop_front();
                            let t = now + noc.coprocessor_cycles;
                            done[i] = Some(t);
                            if sums[i] != func.sums[i] {
                                return Err(SimError::Consistency(format!(
                                    "sample {i}: network sums {:?} differ from core sums {:?}",
                                    sums[i], func.sums[i]
                                )));
                            }
                            if trace_on {
                                trace.push(TraceEvent::SampleDone {
                                    cycle: t,
                                    sample: i,
                                    latency: t - inject[i],
                                });
                            }
                        }
                        if trace_on {
                            trace.push(router_send(now, r, None, fl));
                        }
                    }
                    Upstream::Router { id, port } => {
                        if routers[id].space(port) > 0 {
                            routers[r].pop_ready(now);
                            routers[id].push(port, fl)?;
                            active_r.insert(id);
                            if trace_on {
                                trace.push(router_send(now, r, Some(id), fl));
                            }
                        }
                    }
                }
            }
            if routers[r].is_idle() {
                active_r.remove(&r);
            }
        }
        let cids: Vec<usize> = active_c.iter().copied().collect();
        for c in cids {
            if let Some(&(t, fl)) = core_q[c].front() {
                if t <= now {
                    let (r, port) = topo.core_parent(cores[c].core);
                    if routers[r].space(port) > 0 {
                        core_q[c].pop_front();
                        routers[r].push(port, fl)?;
                        active_r.insert(r);
                        flow.from_cores += 1;
                        if trace_on {
                            trace.push(TraceEvent::CoreSend {
                                cycle: now,
                                core: cores[c].core,
                                router: r,
                                class: fl.class,
                                tag: fl.tag,
                            });
                        }
                    }
                }
            }
            if core_q[c].front().is_none_or(|&(t, _)| t > now) {
                active_c.remove(&c);
            }
        }
        now += 1;
    }

    let mut latencies = Vec::with_capacity(n);
    let mut total = 0;
    for i in 0..n {
        let d = done[i].ok_or_else(|| SimError::Consistency(format!("sample {i} never completed")))?;
        latencies.push(d - inject[i]);
        total = total.max(d);
    }
    for r in &routers {
        flow.absorbed += r.stats.absorbed;
        flow.emitted += r.stats.emitted;
        flow.forwarded += r.stats.forwarded;
        if r.pending_sums() != 0 {
            return Err(SimError::Consistency(format!("router {} holds open sums", r.id)));
        }
    }
    if !flow.conserved() {
        return Err(SimError::Consistency(format!("flit flow not conserved: {flow:?}")));
    }
    if trace_on {
        trace.sort_by_key(TraceEvent::cycle);
    }
    Ok(Timing {
        total_cycles: total,
        latencies,
        flow,
        router_active: routers.iter().map(|r| r.stats.active_cycles).sum(),
        routers_used: maps.iter().filter(|m| !m.is_empty()).count(),
        trace,
    })
}

fn router_send(cycle: u64, router: usize, to: Option<usize>, fl: LogitFlit) -> TraceEvent {
    TraceEvent::RouterSend {
        cycle,
        router,
        to,
        class: fl.class,
        batch: fl.batch,
        tag: fl.tag,
        value: fl.value,
    }
}

/// Runs `samples` through the chip: the cores functionally, then (with
/// `opts.timing`) the injection, core pipelines and reduction network cycle by
/// cycle. Predictions always come from the co-processor reduction.
pub fn run_inference(
    plan: &PlacementPlan,
    program: &NocProgram,
    samples: &[Vec<Code>],
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let topo = check_program(plan, program)?;
    let clean = load_cores(plan)?;
    let (cores, defect_summary) = match opts.defects {
        Some(spec) => {
            let (c, s) = with_defects(&clean, spec)?;
            (c, Some(s))
        }
        None => (clean, None),
    };
    let groups = group_members(plan, program.batch_factor);
    let func = functional(&cores, &groups, program, samples, opts.policy, opts.workers)?;
    let chip = &plan.chip;
    let ct = CoreTiming::from_chip(chip);
    let n = samples.len();
    let b = groups.len();

    let mut activity = Activity::default();
    let mut core_search_cycles = Vec::with_capacity(cores.len());
    for (g, members) in groups.iter().enumerate() {
        let per_group = if n > g { (n - g).div_ceil(b) as u64 } else { 0 };
        for &c in members {
            let k = cores[c].n_trees();
            activity.array_cycles += cores[c].active_arrays() as u64 * per_group * ct.lambda_cam;
            activity.register_cycles += per_group * ct.latency(k);
            core_search_cycles.push(per_group * ct.lambda_cam);
        }
    }
    activity.sram_reads = func.outputs.iter().flatten().map(|o| o.matches as u64).sum();

    let mut metrics = SimMetrics {
        n_samples: n,
        clock_hz: chip.clock_hz,
        feature_flits_per_sample: chip.noc.feature_flits(plan.n_features, plan.n_bits),
        match_anomalies: func.anomalies,
        ..SimMetrics::default()
    };
    let mut trace = Vec::new();
    if opts.timing && n > 0 {
        let t = timing_phase(plan, program, &topo, &cores, &groups, &func, opts.trace)?;
        activity.router_cycles = t.router_active;
        activity.coprocessor_cycles = t.flow.delivered + n as u64;
        metrics.total_cycles = t.total_cycles;
        metrics.latency = LatencyStats::from_cycles(&t.latencies, chip.clock_hz);
        metrics.throughput_sps = n as f64 * chip.clock_hz / t.total_cycles as f64;
        metrics.flow = t.flow;
        let busy: f64 = core_search_cycles.iter().map(|&c| c as f64 / t.total_cycles as f64).sum();
        metrics.utilization = Utilization {
            cores_used: cores.len(),
            routers_used: t.routers_used,
            core_busy: if cores.is_empty() { 0.0 } else { busy / cores.len() as f64 },
            router_active_cycles: t.router_active,
        };
        trace = t.trace;
    } else {
        let (maps, _) = key_maps(&topo, program, plan, &cores);
        let mut per_group_routers = vec![0u64; b];
        let mut per_group_cp = vec![0u64; b];
        for m in &maps {
            for g in 0..b {
                if m.keys().any(|&(_, bg)| bg as usize == g) {
                    per_group_routers[g] += 1;
                }
            }
        }
        for (&(_, bg), &c) in &maps[0] {
            per_group_cp[bg as usize] += c as u64;
        }
        for i in 0..n {
            activity.router_cycles += per_group_routers[i % b];
            activity.coprocessor_cycles += per_group_cp[i % b] + 1;
        }
        metrics.utilization = Utilization {
            cores_used: cores.len(),
            routers_used: maps.iter().filter(|m| !m.is_empty()).count(),
            ..Utilization::default()
        };
    }
    let cost = opts.cost.clone().unwrap_or_default();
    metrics.energy = cost.energy(&activity, chip.clock_hz, n)?;
    metrics.activity = activity;

    Ok(SimResult {
        predictions: func.predictions,
        raw_sums: func.sums,
        metrics,
        trace,
        defect_summary,
    })
}

/// [`run_inference`] without the cycle-level phase.
pub fn run_functional(
    plan: &PlacementPlan,
    program: &NocProgram,
    samples: &[Vec<Code>],
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let opts = SimOptions {
        timing: false,
        trace: false,
        ..opts.clone()
    };
    run_inference(plan, program, samples, &opts)
}
