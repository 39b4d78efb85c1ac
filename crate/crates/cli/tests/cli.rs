use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tyler_gof::samplers::{random_spd, sample_elliptical};
use tyler_gof::{DataMatrix, RadialLaw, SeedSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tyler-gof"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_csv(dir: &Path, name: &str, data: &DataMatrix, header: bool) -> PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    if header {
        let names: Vec<String> = (0..data.ncols()).map(|j| format!("x{j}")).collect();
        writeln!(f, "{}", names.join(",")).unwrap();
    }
    for r in data.rows() {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(",")).unwrap();
    }
    path
}

fn gaussian(p: usize, n: usize, seed: u64) -> DataMatrix {
    let omega = random_spd(p, 5.0, SeedSpec::new(seed, 1)).unwrap();
    sample_elliptical(&vec![0.0; p], &omega, &RadialLaw::ChiP, n, SeedSpec::new(seed, 2)).unwrap()
}

#[test]
fn coeffs_prints_first_gine_term() {
    let o = run(&["coeffs", "--kind", "gine", "--p", "3", "--terms", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "1,0.0625,5"), "{out}");
}

#[test]
fn coeffs_json_and_variants() {
    let o = run(&["coeffs", "--kind", "ajne", "--p", "5", "--terms", "200", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ajne_variant"], "factorial");
    assert_eq!(v["terms"].as_array().unwrap().len(), 200);
    let o = run(&["coeffs", "--kind", "ajne", "--p", "5", "--terms", "5", "--ajne-variant", "literal"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# ajne_variant=Literal"));
    let o = run(&["coeffs", "--kind", "bogus", "--p", "5", "--terms", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn test_subcommand_emits_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "g.csv", &gaussian(4, 80, 3), true);
    let json_out = dir.path().join("report.json");
    let o = run(&[
        "test",
        "--input",
        path.to_str().unwrap(),
        "--alpha",
        "0.05",
        "--seed",
        "42",
        "--reps",
        "200",
        "--json-out",
        json_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["verdict"].is_string());
    let p = report["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(report["config"]["seed"]["master_seed"], 42);
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(&json_out).unwrap()).unwrap();
    assert_eq!(saved, report);
    // identical invocation, identical output
    let again = run(&["test", "--input", path.to_str().unwrap(), "--seed", "42", "--reps", "200"]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn strict_mode_exit_code_on_rejection() {
    let dir = tempfile::tempdir().unwrap();
    // a far-off-centre cloud is not elliptical about the origin
    let g = gaussian(3, 150, 8);
    let shifted: Vec<f64> = g.values().iter().map(|v| v + 4.0).collect();
    let data = DataMatrix::new(150, 3, shifted).unwrap();
    let path = write_csv(dir.path(), "s.csv", &data, false);
    let args = ["test", "--input", path.to_str().unwrap(), "--reps", "200", "--seed", "1"];
    let o = run(&args);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdict"], "rejected");
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict).status.code(), Some(1));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "1,2,3\n4,NaN,6\n").unwrap();
    assert_eq!(run(&["test", "--input", nan.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["test", "--input", "/no/such/file.csv"]).status.code(), Some(2));
    let good = write_csv(dir.path(), "g.csv", &gaussian(3, 20, 1), false);
    let g = good.to_str().unwrap();
    assert_eq!(run(&["test", "--input", g, "--weights", "1"]).status.code(), Some(2));
    assert_eq!(run(&["test", "--input", g, "--alpha", "2"]).status.code(), Some(2));
    assert_eq!(run(&["test"]).status.code(), Some(2));
    let small = write_csv(dir.path(), "small.csv", &gaussian(3, 3, 1), false);
    assert_eq!(run(&["test", "--input", small.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // every row lies in the plane z = 0: no scatter estimate exists
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let t = i as f64 * 0.7;
            vec![t.cos(), t.sin(), 0.0]
        })
        .collect();
    let data = DataMatrix::from_rows(&rows).unwrap();
    let path = write_csv(dir.path(), "flat.csv", &data, false);
    let o = run(&["fit", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fit_reports_trace_normalized_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "g.csv", &gaussian(3, 60, 4), true);
    let o = run(&["fit", "--input", path.to_str().unwrap(), "--tol", "1e-12"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let eig: f64 = v["eigenvalues"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).sum();
    assert!((eig - 3.0).abs() < 1e-9);
    assert!((v["trace_s2_whitened"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn fig1_smoke_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&[
            "fig1", "--p", "4", "--n", "40", "--reps", "2", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(data_rows, 4);
    assert!(text.contains("\"master_seed\":7"));
}

#[test]
fn fig2_with_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig2.conf");
    let out = dir.path().join("bands.csv");
    std::fs::write(
        &cfg,
        format!(
            "# small run\np = 3\nn-grid = 8,12\nreps = 150\nseed = 5\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = run(&["fig2", "--config", cfg.to_str().unwrap(), "--reps", "120"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"reps\":120"), "flag must win over the file");
    assert!(text.contains("\"n_grid\":[8,12]"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);
    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(run(&["fig2", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn calibrate_then_test_uses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let c = cache.to_str().unwrap();
    let o = run(&["calibrate", "--p", "3", "--n", "40", "--reps", "150", "--seed", "9", "--cache-dir", c]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let table = PathBuf::from(v["path"].as_str().unwrap());
    assert!(table.exists());
    let data = write_csv(dir.path(), "g.csv", &gaussian(3, 40, 2), false);
    let d = data.to_str().unwrap();
    let cached = run(&["test", "--input", d, "--reps", "150", "--seed", "9", "--cache-dir", c]);
    let fresh = run(&["test", "--input", d, "--reps", "150", "--seed", "9"]);
    assert!(cached.status.success());
    assert_eq!(cached.stdout, fresh.stdout);
}
