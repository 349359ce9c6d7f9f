use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvtrack_bench::experiment::{best_exponent, parse_grid_csv};
use cvtrack_bench::output::{parse_merged, read_trace};

const RIDGE: &str = "ridge,400,10,20";

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().expect("bench runs")
}

fn ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(out.status.success(), "bench {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_reports_mushrooms_size() {
    let text = ok(&["stats", "--data", s(&data("mushrooms"))]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["stats"]["n"], 8124);
    assert_eq!(v["stats"]["d"], 117);
}

#[test]
fn stats_on_synthetic_and_missing_file() {
    let text = ok(&["stats", "--synth", RIDGE, "--lambda", "0.5"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["stats"]["n"], 400);
    assert_eq!(v["lambda"], 0.5);
    let out = bench(&["stats", "--data", "/nonexistent/file"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

#[test]
fn svrg_run_on_ridge_converges() {
    let dir = tempfile::tempdir().unwrap();
    // 2^-2 / L_max is 1/(4R²) up to the λ term.
    ok(&["run", "--synth", RIDGE, "--method", "svrg", "--gamma-exp", "-2", "--epochs", "30", "--out", s(dir.path())]);
    let (trace, meta) = read_trace(&dir.path().join("trace-svrg.csv")).unwrap();
    assert_eq!(trace.len(), 31);
    assert!(trace.final_subopt() <= 1e-6, "final {}", trace.final_subopt());
    let s = &trace.records;
    assert!(s[10].subopt < s[0].subopt && s[20].subopt < s[10].subopt);
    assert!(meta.contains(&("status".into(), "ok".into())));
}

#[test]
fn huge_stepsize_is_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["run", "--synth", "ridge,400,10,1000", "--method", "svrg", "--gamma-exp", "10", "--out", s(dir.path())]);
    assert!(text.contains("diverged"));
    let (_, meta) = read_trace(&dir.path().join("trace-svrg.csv")).unwrap();
    assert!(meta.contains(&("status".into(), "diverged".into())));
}

#[test]
fn same_seed_gives_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        ok(&["run", "--synth", RIDGE, "--method", "cmgauss", "--gamma-exp", "-1", "--epochs", "5", "--out", s(&out)]);
        traces.push(read_trace(&out.join("trace-cmgauss.csv")).unwrap());
    }
    // Everything but the wall-clock column is reproducible.
    let strip = |t: &cvtrack::vropt::Trace| t.records.iter().map(|r| (r.epoch, r.datapasses, r.fval, r.subopt)).collect::<Vec<_>>();
    assert_eq!(strip(&traces[0].0), strip(&traces[1].0));
    assert_eq!(traces[0].1, traces[1].1);
}

#[test]
fn single_cell_grid_and_recomputable_best() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["grid", "--synth", RIDGE, "--method", "svrg", "--gamma-exp", "0", "--budget", "5", "--out", s(dir.path())]);
    let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(parse_grid_csv(&text).unwrap().len(), 1);

    let table = ok(&["grid", "--synth", RIDGE, "--method", "svrg,2d", "--gamma-exp", "3,1,-1,-3", "--budget", "6", "--out", s(dir.path())]);
    assert!(table.contains("best"));
    let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let cells = parse_grid_csv(&text).unwrap();
    assert_eq!(cells.len(), 8);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let recomputed = best_exponent(&cells, f[0]) == Some(f[1].parse().unwrap());
        assert_eq!(f[5] == "true", recomputed, "{line}");
    }
}

#[test]
fn sparse_grid_flag_uses_fixed_list() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["grid", "--synth", RIDGE, "--sparse-grid", "--budget", "3", "--out", s(dir.path())]);
    let cells = parse_grid_csv(&std::fs::read_to_string(dir.path().join("grid.csv")).unwrap()).unwrap();
    let exps: Vec<i32> = cells.iter().map(|c| c.exponent).collect();
    assert_eq!(exps, cvtrack_bench::config::SPARSE_EXPONENTS.to_vec());
}

#[test]
fn suite_on_ridge_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&[
        "suite", "--synth", "ridge,1000,20,100", "--method", "svrg,svrg2", "--gamma-exp", "6,4,2,0,-2,-4", "--out",
        s(dir.path()),
    ]);
    assert!(text.contains("svrg2"));
    let (svrg, _) = read_trace(&dir.path().join("suite-svrg.csv")).unwrap();
    let (svrg2, _) = read_trace(&dir.path().join("suite-svrg2.csv")).unwrap();
    let reach = |t: &cvtrack::vropt::Trace| t.passes_to_reach(1e-4).unwrap_or(f64::INFINITY);
    assert!(reach(&svrg2) <= reach(&svrg), "svrg2 {} vs svrg {}", reach(&svrg2), reach(&svrg));

    let merged = parse_merged(&std::fs::read_to_string(dir.path().join("suite-merged.csv")).unwrap()).unwrap();
    assert_eq!(merged.len(), svrg.len() + svrg2.len());
    for m in ["svrg", "svrg2"] {
        let walls: Vec<f64> = merged.iter().filter(|r| r.0 == m).map(|r| r.2).collect();
        assert!(walls.windows(2).all(|w| w[1] > w[0]), "{m} wall times {walls:?}");
    }
    // The merged rows are the per-method traces verbatim.
    let first: Vec<(f64, f64)> = merged.iter().filter(|r| r.0 == "svrg").map(|r| (r.1, r.3)).collect();
    let direct: Vec<(f64, f64)> = svrg.records.iter().map(|r| (r.datapasses, r.subopt)).collect();
    assert_eq!(first, direct);
}

#[test]
fn empty_method_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!(r#"{{"synth": {{"kind": "ridge", "n": 50, "d": 3, "condition": 2.0}}, "methods": [], "out": "{}"}}"#, s(dir.path()))).unwrap();
    let out = bench(&["suite", "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("method list is empty"));
}

#[test]
fn json_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"synth": {"kind": "ridge", "n": 200, "d": 4, "condition": 3.0}, "methods": ["2d"], "gamma_exps": [0], "epochs": 4}"#).unwrap();
    ok(&["run", "--config", s(&cfg), "--epochs", "2", "--out", s(dir.path())]);
    let (trace, _) = read_trace(&dir.path().join("trace-2d.csv")).unwrap();
    assert_eq!(trace.len(), 3);
}

#[test]
fn sigma_sweep_defaults_and_single_value() {
    assert!(cvtrack_bench::config::DEFAULT_SIGMAS.contains(&0.1));
    let dir = tempfile::tempdir().unwrap();
    ok(&["sigma-sweep", "--synth", "logistic,300,6,5", "--gamma-exp", "0", "--sigmas", "0.5", "--budget", "8", "--out", s(dir.path())]);
    let summary = std::fs::read_to_string(dir.path().join("sigma-summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    let traces = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("sigma-5"))
        .count();
    assert_eq!(traces, 1);
}

#[test]
fn reference_is_cached_in_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--synth", RIDGE, "--method", "svrg", "--gamma-exp", "-1", "--epochs", "1", "--out", s(dir.path())];
    ok(&args);
    let cache: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("reference-"))
        .collect();
    assert_eq!(cache.len(), 1);
    // Tamper with the cached optimum; the next run must pick it up.
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cache[0]).unwrap()).unwrap();
    v["solution"]["f_star"] = serde_json::json!(-123.0);
    std::fs::write(&cache[0], v.to_string()).unwrap();
    ok(&args);
    let (_, meta) = read_trace(&dir.path().join("trace-svrg.csv")).unwrap();
    assert!(meta.contains(&("f_star".into(), "-1.23e2".into())), "{meta:?}");
    // No temporary files are left behind.
    assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn verify_fast_passes_and_detects_injected_fault() {
    let text = ok(&["verify"]);
    assert!(!text.contains("FAIL"));
    let out = bench(&["verify", "--inject-fault"]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("unbiased/svrg ") && l.ends_with("FAIL")));
}

#[test]
fn invalid_worker_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["stats", "--synth", RIDGE])
        .env(cvtrack_bench::WORKERS_ENV, "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["stats", "--synth", RIDGE])
        .env(cvtrack_bench::WORKERS_ENV, "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn run_rejects_ambiguous_stepsize() {
    let out = bench(&["run", "--synth", RIDGE, "--method", "svrg"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gamma-exp"));
}
