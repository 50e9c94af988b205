use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ebinfer::distributions::normal_quantile;
use serde_json::Value;
use tempfile::TempDir;

fn ebinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebinfer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Value {
    let out = ebinfer(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = args.iter().position(|a| *a == "--out").map(|k| args[k + 1]).unwrap();
    serde_json::from_str(&fs::read_to_string(Path::new(dir).join("summary.json")).unwrap()).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("stderr has an error line");
    serde_json::from_str::<Value>(last).unwrap()["error"].clone()
}

/// 6033 z-values with exactly 49 at or above 3.0, the smallest being 3.0.
fn prostate_like(dir: &Path) -> String {
    let mut s = String::new();
    let n_null = 6033 - 49;
    for i in 0..n_null {
        let p = (i as f64 + 0.5) / n_null as f64;
        s += &format!("n{i}\t{}\n", 0.75 * normal_quantile(p).unwrap());
    }
    for j in 0..49 {
        s += &format!("a{j}\t{}\n", 3.0 + 0.05 * j as f64);
    }
    let path = dir.join("z.tsv");
    fs::write(&path, s).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn fdr_reproduces_prostate_threshold() {
    let tmp = TempDir::new().unwrap();
    let input = prostate_like(tmp.path());
    let out = tmp.path().join("out");
    let s = run_ok(&["fdr", "--input", &input, "--q", "1/6", "--side", "right", "--out", out.to_str().unwrap()]);
    let o = &s["outputs"];
    assert_eq!(o["threshold"].as_f64(), Some(3.0));
    assert_eq!(o["n_discoveries"].as_u64(), Some(49));
    assert!((o["fdr_at_threshold"].as_f64().unwrap() - 0.1662).abs() < 5e-4);
    let warnings = s["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("p0")));
    let disc = fs::read_to_string(out.join("discoveries.tsv")).unwrap();
    assert_eq!(disc.lines().count(), 50);
}

#[test]
fn explicit_p0_silences_warning() {
    let tmp = TempDir::new().unwrap();
    let input = prostate_like(tmp.path());
    let out = tmp.path().join("out");
    let s = run_ok(&["fdr", "--input", &input, "--p0", "1", "--out", out.to_str().unwrap()]);
    assert!(s["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn empty_input_is_a_parse_error() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("empty.tsv");
    fs::write(&input, "").unwrap();
    let out = ebinfer(&[
        "fdr",
        "--input",
        input.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let e = stderr_error(&out);
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["line"], 1);
}

#[test]
fn malformed_value_names_line_and_column() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.tsv");
    fs::write(&input, "# z-values\ng1\t0.5\ng2\toops\n").unwrap();
    let out = ebinfer(&["effects", "--input", input.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let e = stderr_error(&out);
    assert_eq!((e["line"].as_u64(), e["column"].as_u64()), (Some(3), Some(4)));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    let out = ebinfer(&["fdr", "--input", "x", "--side", "up", "--out", "y"]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["kind"], "usage");
}

#[test]
fn module_errors_pass_through() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("x.txt");
    fs::write(&input, "1\n2\n3\n").unwrap();
    let out = ebinfer(&[
        "js",
        "--input",
        input.to_str().unwrap(),
        "--sigma0-sq",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["kind"], "too_few");
}

#[test]
fn effects_rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let input = prostate_like(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let sa = run_ok(&["effects", "--input", &input, "--out", a.to_str().unwrap()]);
    run_ok(&["effects", "--input", &input, "--out", b.to_str().unwrap()]);
    let files = sa["files"].as_array().unwrap();
    assert!(files.len() >= 3);
    for f in files {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zvals_output_reads_back_exactly() {
    let tmp = TempDir::new().unwrap();
    let matrix = tmp.path().join("m.tsv");
    let groups = tmp.path().join("g.tsv");
    let mut m = String::from("gene\tc1\tc2\tc3\tt1\tt2\tt3\n");
    for i in 0..40 {
        let x = i as f64;
        m += &format!(
            "gene{i}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            (x * 0.7).sin(),
            (x * 1.3).cos(),
            0.1 * x,
            (x * 0.7).sin() + 0.05 * x,
            (x * 0.9).cos() + 1.0,
            0.12 * x + 0.3
        );
    }
    fs::write(&matrix, m).unwrap();
    fs::write(&groups, "c1\tcontrol\nc2\tcontrol\nc3\tcontrol\nt1\ttreatment\nt2\ttreatment\nt3\ttreatment\n").unwrap();
    let out = tmp.path().join("out");
    let s = run_ok(&[
        "zvals",
        "--matrix",
        matrix.to_str().unwrap(),
        "--groups",
        groups.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(s["outputs"]["df"], 4);

    let direct = ebinfer::zpipeline::matrix_to_z(&ebinfer::io::read_matrix_files(&matrix, &groups).unwrap()).unwrap();
    let back = ebinfer::io::read_zvector_file(&out.join("zvalues.tsv")).unwrap();
    assert_eq!(back, direct.z);
}

#[test]
fn strata_reports_all_three_analyses() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("z.tsv");
    let mut s = String::new();
    for i in 0..3000 {
        let p = ((i * 7919) % 3000) as f64 / 3000.0 + 1.0 / 6000.0;
        let mut z = normal_quantile(p).unwrap();
        let x = (i % 100) as f64;
        if x >= 50.0 && i % 25 == 0 {
            z += 4.0;
        }
        s += &format!("v{i}\t{z}\t{x}\n");
    }
    fs::write(&input, s).unwrap();
    let out = tmp.path().join("out");
    let summary = run_ok(&[
        "strata",
        "--input",
        input.to_str().unwrap(),
        "--split-at",
        "50",
        "--window",
        "101",
        "--p0",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let o = &summary["outputs"];
    assert_eq!(o["strata"].as_array().unwrap().len(), 2);
    assert!(o["pooled"]["n_discoveries"].as_u64().is_some());
    assert_eq!(o["detrended"]["window"], 101);
    for f in ["strata.json", "strata.tsv", "detrend.tsv", "detrended_curve.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let front = o["strata"][1]["report"]["n_discoveries"].as_u64().unwrap();
    let back = o["strata"][0]["report"]["n_discoveries"].as_u64().unwrap();
    assert!(front > back);
}

#[test]
fn strata_needs_a_rule() {
    let out = ebinfer(&["strata", "--input", "x", "--out", "y"]);
    assert!(!out.status.success());
    assert_eq!(stderr_error(&out)["kind"], "usage");
}

#[test]
fn simulate_emits_metrics_and_rng_identity() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let s = run_ok(&[
        "simulate",
        "--scenario",
        "dominance",
        "--reps",
        "200",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    let o = &s["outputs"];
    assert_eq!(o["seed"], 42);
    assert!(o["rng"].as_str().unwrap().starts_with("chacha20"));
    assert!(o["metrics"]["risk_ratio"]["mean"].as_f64().unwrap() < 1.0);
    assert!(out.join("simulation.json").exists());
}

#[test]
fn js_writes_estimates() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("x.txt");
    fs::write(&input, "0.1\n0.4\n-0.2\n0.3\n0.0\n0.25\n").unwrap();
    let out = tmp.path().join("o");
    let s = run_ok(&[
        "js",
        "--input",
        input.to_str().unwrap(),
        "--sigma0-sq",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    let b = s["outputs"]["b_hat"].as_f64().unwrap();
    assert!(b > 0.0 && b < 1.0);
    let table = fs::read_to_string(out.join("estimates.tsv")).unwrap();
    assert_eq!(table.lines().count(), 7);
}
