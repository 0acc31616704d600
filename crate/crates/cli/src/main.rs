use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use xtime::compiler::{compile, ChipConfig, CompileOptions, PlanArtifact};
use xtime::ensemble::{oracle_predict, parse_ensemble, Code, Decision, Ensemble, Prediction};
use xtime::sim::sweep::parse_sweep_arg;
use xtime::sim::{
    defect_experiment, estimate_cost, run_inference, sweep, write_sweep_csv, write_trace, CostModel, DefectPoint,
    SimOptions, SweepSpec,
};

const MANIFEST_VERSION: u32 = 1;
const METRICS_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "xtime", version, about = "Analog-CAM tree-ensemble accelerator compiler and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile an interchange model into a plan artifact.
    Compile(CompileArgs),
    /// Simulate a compiled plan on input rows.
    Run(RunArgs),
    /// Throughput sweep over synthetic models.
    Sweep(SweepArgs),
    /// Relative accuracy under injected defects.
    Defects(DefectArgs),
    /// Check a model or plan file and print a summary.
    Validate(ValidateArgs),
    /// Chip area and peak power from a cost model.
    Cost(CostArgs),
}

#[derive(Args)]
struct OutDir {
    /// Directory for every output file and the manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    model: PathBuf,
    /// Chip configuration JSON; defaults to the 4096-core chip.
    #[arg(long)]
    chip: Option<PathBuf>,
    /// Model replicas serving interleaved samples.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long)]
    max_trees_per_core: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct InputArgs {
    /// CSV of feature rows; an optional non-numeric header row is skipped.
    #[arg(long)]
    inputs: PathBuf,
    /// Inputs are already quantized codes.
    #[arg(long)]
    codes: bool,
    /// CSV with one class label per row.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "sweep")]
    plan: Option<PathBuf>,
    #[arg(long, required_unless_present = "sweep")]
    inputs: Option<PathBuf>,
    #[arg(long)]
    codes: bool,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Compare every prediction with the software oracle; exit 4 on mismatch.
    #[arg(long)]
    check_oracle: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Skip the cycle-level network phase.
    #[arg(long)]
    functional: bool,
    /// Write a JSON-lines event trace.
    #[arg(long)]
    trace: bool,
    /// Also run a defect study at this rate.
    #[arg(long)]
    defect_rate: Option<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run a synthetic sweep instead, e.g. `n_feat=10:130:10`.
    #[arg(long)]
    sweep: Option<String>,
    /// Cost model JSON for the energy estimate.
    #[arg(long)]
    cost: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SweepArgs {
    /// `name=start:stop:step` or `name=a,b,c` with name one of n_trees, depth, n_feat.
    #[arg(long)]
    param: String,
    #[arg(long, default_value_t = 64)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 4)]
    max_trees_per_core: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct DefectArgs {
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.001,0.005,0.01,0.05")]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    model: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    cost: Option<PathBuf>,
    #[arg(long)]
    chip: Option<PathBuf>,
    /// Report the used-core share of this plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Write the default cost model to this path and exit.
    #[arg(long)]
    write_default: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

type Outcome = Result<(), Failure>;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |err| Failure { code, err }
}

const EXIT_OTHER: u8 = 1;
const EXIT_COMPILE: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_ORACLE: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Defects(a) => cmd_defects(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Cost(a) => cmd_cost(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Ensemble> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_ensemble(&bytes)?)
}

fn load_chip(path: Option<&Path>) -> anyhow::Result<ChipConfig> {
    match path {
        Some(p) => {
            let chip: ChipConfig = serde_json::from_str(&read_text(p)?).context("parsing chip configuration")?;
            chip.validate()?;
            Ok(chip)
        }
        None => Ok(ChipConfig::default()),
    }
}

fn load_plan(path: &Path) -> anyhow::Result<PlanArtifact> {
    Ok(PlanArtifact::from_json(&read_text(path)?)?)
}

fn load_cost(path: Option<&Path>) -> anyhow::Result<Option<CostModel>> {
    path.map(|p| Ok(CostModel::from_json(&read_text(p)?)?)).transpose()
}

/// Rows of numbers; a first row that does not parse is taken as a header.
fn read_rows(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(rows)
}

fn read_samples(art: &PlanArtifact, path: &Path, codes: bool) -> anyhow::Result<Vec<Vec<Code>>> {
    let rows = read_rows(path)?;
    let levels = 1u32 << art.model.n_bits();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if codes {
                r.iter()
                    .map(|&v| {
                        if v.fract() != 0.0 || v < 0.0 || v >= levels as f64 {
                            bail!("row {i}: {v} is not a code below {levels}");
                        }
                        Ok(v as Code)
                    })
                    .collect()
            } else {
                art.model.quantize_input(r).with_context(|| format!("row {i}"))
            }
        })
        .collect()
}

fn read_labels(path: &Path) -> anyhow::Result<Vec<usize>> {
    read_rows(path)?
        .iter()
        .map(|r| match r.as_slice() {
            [v] if v.fract() == 0.0 && *v >= 0.0 => Ok(*v as usize),
            _ => bail!("labels need one non-negative integer per row"),
        })
        .collect()
}

fn decided_labels(preds: &[Prediction]) -> anyhow::Result<Vec<usize>> {
    preds
        .iter()
        .map(|p| match p.decision {
            Decision::Class(c) => Ok(c),
            Decision::Value(_) => bail!("defect studies need a classifier"),
        })
        .collect()
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(dir: &Path, command: &str, inputs: serde_json::Value, outputs: &[&str]) -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "manifest_version": MANIFEST_VERSION,
            "tool": "xtime",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "args": args,
            "inputs": inputs,
            "outputs": outputs,
        }),
    )
}

fn write_predictions(path: &Path, preds: &[Prediction]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n_logits = preds.first().map_or(0, |p| p.logits.len());
    let mut header = vec!["sample".to_string(), "decision".to_string()];
    header.extend((0..n_logits).map(|c| format!("logit_{c}")));
    w.write_record(&header)?;
    for (i, p) in preds.iter().enumerate() {
        let mut rec = vec![i.to_string(), p.decision.as_f64().to_string()];
        rec.extend(p.logits.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_defects(path: &Path, points: &[DefectPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_compile(a: CompileArgs) -> Outcome {
    let model = load_model(&a.model).map_err(fail(EXIT_COMPILE))?;
    let chip = load_chip(a.chip.as_deref()).map_err(fail(EXIT_COMPILE))?;
    let opts = CompileOptions {
        batch_factor: a.batch,
        max_trees_per_core: a.max_trees_per_core,
    };
    let art = compile(&model, &chip, &opts)
        .map_err(|e| anyhow!(e))
        .map_err(fail(EXIT_COMPILE))?;
    let dir = &a.out.out_dir;
    let io = |r: anyhow::Result<()>| r.map_err(fail(EXIT_OTHER));
    io(prepare_out(dir))?;
    io(fs::write(dir.join("plan.json"), art.to_json()).map_err(Into::into))?;
    io(write_manifest(
        dir,
        "compile",
        json!({ "model": a.model, "chip": a.chip }),
        &["plan.json"],
    ))?;
    println!(
        "compiled {} trees onto {} cores ({} per replica, {} replicas), {} rows, {} routers accumulating",
        model.trees.len(),
        art.placement.cores.len(),
        art.placement.cores_per_replica,
        art.placement.batch_factor(),
        art.placement.rows_used(),
        art.noc.router_bits.iter().filter(|&&b| b).count(),
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Outcome {
    let dir = a.out.out_dir.clone();
    prepare_out(&dir).map_err(fail(EXIT_OTHER))?;
    if let Some(arg) = &a.sweep {
        let (param, values) = parse_sweep_arg(arg).map_err(|e| anyhow!(e)).map_err(fail(EXIT_OTHER))?;
        let mut spec = SweepSpec::new(param, values);
        spec.workers = a.workers;
        spec.seed = a.seed;
        return run_sweep(&spec, &dir, "run", json!({ "sweep": arg }));
    }
    let plan_path = a.plan.clone().expect("clap requires --plan");
    let input_path = a.inputs.clone().expect("clap requires --inputs");
    let run_err = fail(EXIT_RUN);
    let art = load_plan(&plan_path).map_err(fail(EXIT_RUN))?;
    let samples = read_samples(&art, &input_path, a.codes).map_err(fail(EXIT_RUN))?;
    let cost = load_cost(a.cost.as_deref()).map_err(fail(EXIT_RUN))?;
    let opts = SimOptions {
        workers: a.workers,
        timing: !a.functional,
        trace: a.trace,
        cost,
        ..SimOptions::default()
    };
    let res = run_inference(&art.placement, &art.noc, &samples, &opts)
        .map_err(|e| anyhow!(e))
        .map_err(run_err)?;

    let mut outputs = vec!["predictions.csv", "metrics.json"];
    let mismatches = if a.check_oracle {
        let mut n = 0usize;
        for (s, p) in samples.iter().zip(&res.predictions) {
            let want = oracle_predict(&art.model, s).map_err(|e| anyhow!(e)).map_err(fail(EXIT_RUN))?;
            if &want != p {
                n += 1;
            }
        }
        Some(n)
    } else {
        None
    };

    let other = |r: anyhow::Result<()>| r.map_err(fail(EXIT_OTHER));
    other(write_predictions(&dir.join("predictions.csv"), &res.predictions))?;
    other(write_json(
        &dir.join("metrics.json"),
        &json!({
            "metrics_version": METRICS_VERSION,
            "metrics": res.metrics,
            "oracle_mismatches": mismatches,
        }),
    ))?;
    if a.trace {
        let f = fs::File::create(dir.join("trace.jsonl")).map_err(|e| fail(EXIT_OTHER)(e.into()))?;
        other(write_trace(std::io::BufWriter::new(f), &res.trace).map_err(Into::into))?;
        outputs.push("trace.jsonl");
    }
    if let Some(rate) = a.defect_rate {
        let labels = match &a.labels {
            Some(p) => read_labels(p).map_err(fail(EXIT_RUN))?,
            None => decided_labels(&res.predictions).map_err(fail(EXIT_RUN))?,
        };
        let mut rates = vec![0.0];
        if rate > 0.0 {
            rates.push(rate);
        }
        let points = defect_experiment(&art.placement, &art.noc, &samples, &labels, &rates, a.trials, a.seed, a.workers)
            .map_err(|e| anyhow!(e))
            .map_err(fail(EXIT_RUN))?;
        other(write_defects(&dir.join("defects.csv"), &points))?;
        outputs.push("defects.csv");
    }
    other(write_manifest(
        &dir,
        "run",
        json!({ "plan": plan_path, "inputs": input_path, "labels": a.labels, "cost": a.cost }),
        &outputs,
    ))?;

    let m = &res.metrics;
    println!(
        "{} samples, {} cycles, {:.2} MS/s, mean latency {:.1} cycles, {:.3} nJ/decision",
        m.n_samples,
        m.total_cycles,
        m.throughput_sps / 1e6,
        m.latency.mean_cycles,
        m.energy.per_decision_j * 1e9
    );
    if let Some(n) = mismatches {
        println!("oracle mismatches: {n}");
        if n > 0 {
            return Err(Failure {
                code: EXIT_ORACLE,
                err: anyhow!("{n} predictions differ from the oracle"),
            });
        }
    }
    Ok(())
}

fn run_sweep(spec: &SweepSpec, dir: &Path, command: &str, inputs: serde_json::Value) -> Outcome {
    let points = sweep(spec).map_err(|e| anyhow!(e)).map_err(fail(EXIT_RUN))?;
    let other = |r: anyhow::Result<()>| r.map_err(fail(EXIT_OTHER));
    let f = fs::File::create(dir.join("sweep.csv")).map_err(|e| fail(EXIT_OTHER)(e.into()))?;
    other(write_sweep_csv(f, &points).map_err(|e| anyhow!(e)))?;
    other(write_manifest(dir, command, inputs, &["sweep.csv"]))?;
    for p in &points {
        if p.feasible {
            println!("{}={}: {:.2} MS/s", p.param, p.value, p.throughput_sps / 1e6);
        } else {
            println!("{}={}: infeasible ({})", p.param, p.value, p.note);
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Outcome {
    let (param, values) = parse_sweep_arg(&a.param).map_err(|e| anyhow!(e)).map_err(fail(EXIT_OTHER))?;
    let mut spec = SweepSpec::new(param, values);
    spec.base.n_trees = a.trees;
    spec.base.depth = a.depth;
    spec.base.n_features = a.features;
    spec.n_samples = a.samples;
    spec.batch_factor = a.batch;
    spec.max_trees_per_core = Some(a.max_trees_per_core);
    spec.seed = a.seed;
    spec.workers = a.workers;
    prepare_out(&a.out.out_dir).map_err(fail(EXIT_OTHER))?;
    run_sweep(&spec, &a.out.out_dir, "sweep", json!({ "param": a.param }))
}

fn cmd_defects(a: DefectArgs) -> Outcome {
    let art = load_plan(&a.plan).map_err(fail(EXIT_RUN))?;
    let samples = read_samples(&art, &a.input.inputs, a.input.codes).map_err(fail(EXIT_RUN))?;
    let labels = match &a.input.labels {
        Some(p) => read_labels(p).map_err(fail(EXIT_RUN))?,
        None => {
            let clean = run_inference(
                &art.placement,
                &art.noc,
                &samples,
                &SimOptions {
                    timing: false,
                    workers: a.workers,
                    ..SimOptions::default()
                },
            )
            .map_err(|e| anyhow!(e))
            .map_err(fail(EXIT_RUN))?;
            decided_labels(&clean.predictions).map_err(fail(EXIT_RUN))?
        }
    };
    let points = defect_experiment(&art.placement, &art.noc, &samples, &labels, &a.rates, a.trials, a.seed, a.workers)
        .map_err(|e| anyhow!(e))
        .map_err(fail(EXIT_RUN))?;
    let dir = &a.out.out_dir;
    let other = |r: anyhow::Result<()>| r.map_err(fail(EXIT_OTHER));
    other(prepare_out(dir))?;
    other(write_defects(&dir.join("defects.csv"), &points))?;
    other(write_manifest(
        dir,
        "defects",
        json!({ "plan": a.plan, "inputs": a.input.inputs, "labels": a.input.labels }),
        &["defects.csv"],
    ))?;
    for p in &points {
        println!("rate {}: relative accuracy {:.4} ± {:.4}", p.rate, p.mean, p.ci95);
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    if let Some(path) = a.model {
        let m = load_model(&path).map_err(fail(EXIT_COMPILE))?;
        println!(
            "ok: {:?}, {} trees, {} classes, {} features, max depth {}, max leaves {}",
            m.task,
            m.trees.len(),
            m.n_classes,
            m.n_features,
            m.max_depth(),
            m.max_leaves()
        );
    } else if let Some(path) = a.plan {
        let art = load_plan(&path).map_err(fail(EXIT_COMPILE))?;
        println!(
            "ok: plan_version {}, {} cores, batch {}, {} features at {} bits",
            art.plan_version,
            art.placement.cores.len(),
            art.noc.batch_factor,
            art.placement.n_features,
            art.placement.n_bits
        );
    }
    Ok(())
}

fn cmd_cost(a: CostArgs) -> Outcome {
    let other = |r: anyhow::Result<()>| r.map_err(fail(EXIT_OTHER));
    if let Some(path) = a.write_default {
        return other(fs::write(&path, CostModel::default().to_json() + "\n").map_err(Into::into));
    }
    let model = load_cost(a.cost.as_deref()).map_err(fail(EXIT_OTHER))?.unwrap_or_default();
    let plan = a.plan.as_deref().map(load_plan).transpose().map_err(fail(EXIT_OTHER))?;
    let chip = match &plan {
        Some(p) => p.chip().clone(),
        None => load_chip(a.chip.as_deref()).map_err(fail(EXIT_OTHER))?,
    };
    let report = estimate_cost(&model, &chip, plan.as_ref().map(|p| &p.placement))
        .map_err(|e| anyhow!(e))
        .map_err(fail(EXIT_OTHER))?;
    let dir = &a.out.out_dir;
    other(prepare_out(dir))?;
    other(write_json(&dir.join("cost_report.json"), &json!({ "cost_version": model.cost_version, "report": report })))?;
    other(write_manifest(
        dir,
        "cost",
        json!({ "cost": a.cost, "chip": a.chip, "plan": a.plan }),
        &["cost_report.json"],
    ))?;
    for c in &report.components {
        println!(
            "{:<16} {:>6} x  {:>9.3} mm2  {:>8.4} W",
            c.name, c.instances, c.area_mm2, c.peak_power_w
        );
    }
    println!("total {:.3} mm2, peak {:.3} W", report.total_area_mm2, report.peak_power_w);
    Ok(())
}
