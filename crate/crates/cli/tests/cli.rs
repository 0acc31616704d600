use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn xtime(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xtime"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn xtime")
}

fn compile(dir: &Path, model: &str, extra: &[&str]) {
    let model = fixture(model);
    let mut args = vec!["compile", "--model", model.to_str().unwrap(), "--out-dir", "c"];
    args.extend_from_slice(extra);
    let out = xtime(dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compile_then_run_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    compile(d, "fig1a.json", &[]);
    fs::write(d.join("x.csv"), "f0,f1\n0.1,0.1\n0.5,0.9\n0.9,0.2\n0.3,0.4\n").unwrap();
    let out = xtime(
        d,
        &["run", "--plan", "c/plan.json", "--inputs", "x.csv", "--check-oracle", "--trace", "--out-dir", "r"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let preds = fs::read_to_string(d.join("r/predictions.csv")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "sample,decision,logit_0");
    assert_eq!(lines.len(), 5);
    let first: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((first - 0.9).abs() < 1e-6);

    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics_version"], 1);
    assert_eq!(metrics["oracle_mismatches"], 0);
    assert_eq!(metrics["metrics"]["n_samples"], 4);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["manifest_version"], 1);
    assert_eq!(manifest["command"], "run");
    assert!(manifest.get("timestamp").is_none());

    let trace = fs::read_to_string(d.join("r/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().next(), Some(r#"{"trace_version":1}"#));
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    compile(d, "binary_small.json", &["--batch", "2"]);
    let rows: String = (0..30).map(|i| format!("{},{}\n", (i * 7 % 30) as f64 / 30.0, (i * 11 % 30) as f64 / 30.0)).collect();
    fs::write(d.join("x.csv"), rows).unwrap();
    for out_dir in ["a", "b"] {
        let out = xtime(d, &["run", "--plan", "c/plan.json", "--inputs", "x.csv", "--workers", "2", "--out-dir", out_dir]);
        assert!(out.status.success());
    }
    for f in ["predictions.csv", "metrics.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn codes_input_and_bad_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    compile(d, "fig1a.json", &[]);
    fs::write(d.join("codes.csv"), "0,0\n3,1\n").unwrap();
    let ok = xtime(d, &["run", "--plan", "c/plan.json", "--inputs", "codes.csv", "--codes", "--check-oracle", "--out-dir", "r"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    fs::write(d.join("bad.csv"), "0.1,0.2\n0.3,oops\n").unwrap();
    let bad = xtime(d, &["run", "--plan", "c/plan.json", "--inputs", "bad.csv", "--out-dir", "r2"]);
    assert_eq!(bad.status.code(), Some(3));

    fs::write(d.join("narrow.csv"), "0.1\n").unwrap();
    let narrow = xtime(d, &["run", "--plan", "c/plan.json", "--inputs", "narrow.csv", "--out-dir", "r3"]);
    assert_eq!(narrow.status.code(), Some(3));
}

#[test]
fn compile_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("broken.json"), r#"{"format_version":99}"#).unwrap();
    let out = xtime(d, &["compile", "--model", "broken.json", "--out-dir", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("c/plan.json").exists());
}

#[test]
fn sweep_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = xtime(d, &["sweep", "--param", "n_feat=10:30:10", "--samples", "64", "--out-dir", "s"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(d.join("s/sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "param");
    let tp = headers.iter().position(|h| h == "throughput_sps").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let values: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(values, ["10", "20", "30"]);
    let sps: Vec<f64> = rows.iter().map(|r| r[tp].parse().unwrap()).collect();
    assert!(sps.windows(2).all(|w| w[1] <= w[0] * 1.001), "{sps:?}");

    let via_run = xtime(d, &["run", "--sweep", "depth=2,4", "--out-dir", "s2"]);
    assert!(via_run.status.success());
    assert!(d.join("s2/sweep.csv").exists());
}

#[test]
fn defects_start_at_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    compile(d, "binary_small.json", &[]);
    let rows: String = (0..40).map(|i| format!("{},{}\n", (i * 13 % 40) as f64 / 40.0, (i * 7 % 40) as f64 / 40.0)).collect();
    fs::write(d.join("x.csv"), rows).unwrap();
    let out = xtime(
        d,
        &["defects", "--plan", "c/plan.json", "--inputs", "x.csv", "--rates", "0,0.1", "--trials", "5", "--out-dir", "f"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(d.join("f/defects.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);

    compile(d, "fig1a.json", &[]);
    let reg = xtime(d, &["defects", "--plan", "c/plan.json", "--inputs", "x.csv", "--out-dir", "g"]);
    assert_eq!(reg.status.code(), Some(3));
}

#[test]
fn cost_defaults_to_19_watts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let w = xtime(d, &["cost", "--write-default", "cost.json"]);
    assert!(w.status.success());
    let out = xtime(d, &["cost", "--cost", "cost.json", "--out-dir", "k"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("k/cost_report.json")).unwrap()).unwrap();
    let peak = v["report"]["peak_power_w"].as_f64().unwrap();
    assert!((peak - 19.0).abs() < 1e-9);

    fs::write(d.join("bad.json"), r#"{"cost_version":1,"components":{}}"#).unwrap();
    let bad = xtime(d, &["cost", "--cost", "bad.json", "--out-dir", "k2"]);
    assert!(!bad.status.success());
}

#[test]
fn validate_reports_model_summary() {
    let tmp = TempDir::new().unwrap();
    let fig = fixture("fig1a.json");
    let out = xtime(tmp.path(), &["validate", "--model", fig.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1 trees") && text.contains("max leaves 4"), "{text}");
}
