//! Command-line front end: run the ellipticity test on a CSV file, fit Tyler's
//! estimator, print null-model coefficients, reproduce the two simulation
//! studies and precompute null tables.
//!
//! Every option can also come from a flat `key=value` file given with
//! `--config`; keys are the long flag names without dashes, and flags on the
//! command line win over the file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tyler_gof::engine::{cache_path, load_or_calibrate, run_test_with_table, NullKey};
use tyler_gof::experiments::{
    run_fig1, run_fig2, write_fig1_csv, write_fig2_csv, write_file, Fig1Spec, Fig2Spec, OmegaSource,
};
use tyler_gof::io::read_data_file;
use tyler_gof::null_model::{build_null, build_null_with, mixture_mean, AjneVariant, NullModel};
use tyler_gof::tyler::tyler_fit;
use tyler_gof::{run_test, Calibration, Error, SeedSpec, StatKind, TestConfig, TylerConfig, UnitSample, Verdict};

const EXIT_REJECTED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tyler-gof", version, about = "Ellipticity goodness-of-fit testing via Tyler whitening")]
struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether the rows of a CSV file are elliptically distributed.
    Test(TestArgs),
    /// Fit Tyler's scatter estimator only.
    Fit(FitArgs),
    /// Print the chi-square mixture terms of a null model.
    Coeffs(CoeffsArgs),
    /// Null distributions of the statistics, i.i.d. vs whitened directions.
    Fig1(Fig1Args),
    /// Confidence bands under the null and an offset alternative.
    Fig2(Fig2Args),
    /// Precompute and cache a Monte-Carlo null table.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// mc_null or series.
    #[arg(long)]
    calibration: Option<String>,
    /// Null replicates for mc_null calibration.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subtract column means first.
    #[arg(long)]
    center: bool,
    /// Weights of the Ajne and Gine statistics, e.g. "1,1".
    #[arg(long)]
    weights: Option<String>,
    #[arg(long = "json-out")]
    json_out: Option<PathBuf>,
    /// Exit with status 1 when the hypothesis is rejected.
    #[arg(long)]
    strict: bool,
    /// Directory for cached null tables.
    #[arg(long = "cache-dir")]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    center: bool,
}

#[derive(Args)]
struct CoeffsArgs {
    /// ajne or gine.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    /// Number of series terms.
    #[arg(long)]
    terms: Option<usize>,
    /// auto, literal or factorial.
    #[arg(long = "ajne-variant")]
    ajne_variant: Option<String>,
    /// Print the model as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Fig1Args {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Condition number of a random true scatter (identity when absent).
    #[arg(long = "omega-cond")]
    omega_cond: Option<f64>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path (stderr when absent).
    #[arg(long = "summary-out")]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct Fig2Args {
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long = "offset-scale")]
    offset_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long = "omega-cond")]
    omega_cond: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "summary-out")]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long = "cache-dir")]
    cache_dir: Option<PathBuf>,
}

/// Values from the `--config` file.
struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        let Some(path) = path else {
            return Ok(FileConfig { values });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            values.insert(key, v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// Flag value if given, else the file's value, else `None`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Input(format!("config key '{key}': cannot parse '{raw}'")).into()),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> anyhow::Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }

    /// Rejects keys no flag of the subcommand understands.
    fn check_keys(&self, allowed: &[&str]) -> anyhow::Result<()> {
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Input(format!("unknown config key '{key}'")).into());
            }
        }
        Ok(())
    }
}

fn parse_weights(raw: &str) -> anyhow::Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let bad = || Error::Input(format!("weights must look like '1,1', got '{raw}'"));
    if parts.len() != 2 {
        return Err(bad().into());
    }
    let a = parts[0].parse().map_err(|_| bad())?;
    let b = parts[1].parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn parse_grid(raw: &str) -> anyhow::Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad n-grid entry '{s}'")).into())
        })
        .collect()
}

fn require<T>(v: Option<T>, name: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| Error::Input(format!("missing required option --{name}")).into())
}

fn omega_source(cond: Option<f64>) -> OmegaSource {
    match cond {
        Some(cond) => OmegaSource::RandomSpd { cond },
        None => OmegaSource::Identity,
    }
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>, to_stderr: bool) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => write_file(p, format!("{text}\n").as_bytes())?,
        None if to_stderr => eprintln!("{text}"),
        None => write_stdout(format!("{text}\n").as_bytes())?,
    }
    Ok(())
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".tyler-gof-cache")
}

fn cmd_test(a: TestArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&[
        "input", "alpha", "calibration", "reps", "seed", "center", "weights", "json-out", "strict",
        "cache-dir", "tol", "max-iters",
    ])?;
    let input: PathBuf = require(file.pick(a.input, "input")?, "input")?;
    let mut cfg = TestConfig::default();
    if let Some(alpha) = file.pick(a.alpha, "alpha")? {
        cfg.significance = alpha;
    }
    if let Some(c) = file.pick::<String>(a.calibration, "calibration")? {
        cfg.calibration = c.parse::<Calibration>()?;
    }
    if let Some(reps) = file.pick(a.reps, "reps")? {
        cfg.mc_null_reps = reps;
    }
    if let Some(seed) = file.pick(a.seed, "seed")? {
        cfg.seed = SeedSpec::new(seed, 0);
    }
    cfg.center = file.flag(a.center, "center")?;
    if let Some(w) = file.pick::<String>(a.weights, "weights")? {
        (cfg.w_ajne, cfg.w_gine) = parse_weights(&w)?;
    }
    if let Some(tol) = file.pick(a.tol, "tol")? {
        cfg.tyler.tol = tol;
    }
    if let Some(m) = file.pick(a.max_iters, "max-iters")? {
        cfg.tyler.max_iters = m;
    }
    let strict = file.flag(a.strict, "strict")?;
    let json_out: Option<PathBuf> = file.pick(a.json_out, "json-out")?;
    let cache_dir: Option<PathBuf> = file.pick(a.cache_dir, "cache-dir")?;

    let data = read_data_file(&input)?;
    let report = match (cfg.calibration, cache_dir) {
        (Calibration::McNull, Some(dir)) => {
            cfg.validate()?;
            let table = load_or_calibrate(&dir, data.ncols(), data.nrows(), &cfg)?;
            run_test_with_table(&data, &cfg, &table)?
        }
        _ => run_test(&data, &cfg)?,
    };
    emit_json(&report, None, false)?;
    if let Some(path) = json_out {
        emit_json(&report, Some(&path), false)?;
    }
    if strict && report.verdict == Verdict::Rejected {
        return Ok(ExitCode::from(EXIT_REJECTED));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(a: FitArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&["input", "tol", "max-iters", "center"])?;
    let input: PathBuf = require(file.pick(a.input, "input")?, "input")?;
    let mut cfg = TylerConfig::default();
    if let Some(tol) = file.pick(a.tol, "tol")? {
        cfg.tol = tol;
    }
    if let Some(m) = file.pick(a.max_iters, "max-iters")? {
        cfg.max_iters = m;
    }
    let data = read_data_file(&input)?;
    let data = if file.flag(a.center, "center")? { data.centered() } else { data };
    let fit = tyler_fit(&UnitSample::from_data(&data)?, &cfg)?;
    let out = serde_json::json!({
        "p": data.ncols(),
        "n": data.nrows(),
        "estimate": fit.estimate,
        "eigenvalues": fit.estimate.eigenvalues(),
        "iterations": fit.iterations,
        "final_residual": fit.final_residual,
        "trace_s2_whitened": fit.whitened.trace_s2(),
    });
    emit_json(&out, None, false)?;
    Ok(ExitCode::SUCCESS)
}

/// Rounds to 12 significant digits so log-space round-off does not show.
fn significant(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn write_stdout(bytes: &[u8]) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn format_dof(dof: f64) -> String {
    if dof.fract() == 0.0 && dof < 9.007_199_254_740_992e15 {
        format!("{}", dof as u64)
    } else {
        format!("{dof:e}")
    }
}

fn cmd_coeffs(a: CoeffsArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&["kind", "p", "terms", "ajne-variant", "json"])?;
    let kind: StatKind = require(file.pick::<String>(a.kind, "kind")?, "kind")?.parse()?;
    let p: usize = require(file.pick(a.p, "p")?, "p")?;
    let terms: usize = require(file.pick(a.terms, "terms")?, "terms")?;
    let variant = file
        .pick::<String>(a.ajne_variant, "ajne-variant")?
        .unwrap_or_else(|| "auto".into());
    let model: NullModel = match variant.to_ascii_lowercase().as_str() {
        "auto" => match build_null(kind, p, terms) {
            Err(Error::TruncationTooSmall { tail, mean }) => {
                log::warn!("dropped tail {tail:.3e} exceeds 1% of the kept mean {mean:.4}");
                let v = if kind == StatKind::Ajne {
                    tyler_gof::null_model::select_ajne_variant(p, terms)?.0
                } else {
                    AjneVariant::Factorial
                };
                build_null_with(kind, p, terms, v)?
            }
            other => other?,
        },
        v => build_null_with(kind, p, terms, v.parse()?)?,
    };
    if file.flag(a.json, "json")? {
        emit_json(&model, None, false)?;
        return Ok(ExitCode::SUCCESS);
    }
    let mut text = format!(
        "# kind={:?} p={} truncation_q={}\n",
        model.kind, model.p, model.truncation_q
    );
    if let Some(v) = model.ajne_variant {
        text += &format!("# ajne_variant={v:?}\n");
    }
    text += &format!(
        "# mixture_mean={} tail_mass_bound={}\n",
        significant(mixture_mean(&model)),
        significant(model.tail_mass_bound)
    );
    text += "q,weight,dof\n";
    for t in &model.terms {
        text += &format!("{},{},{}\n", t.q, significant(t.weight), format_dof(t.dof));
    }
    write_stdout(text.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_fig1(a: Fig1Args, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&["p", "n", "reps", "seed", "omega-cond", "out", "summary-out"])?;
    let mut spec = Fig1Spec::default();
    if let Some(p) = file.pick(a.p, "p")? {
        spec.p = p;
    }
    if let Some(n) = file.pick(a.n, "n")? {
        spec.n = n;
    }
    if let Some(r) = file.pick(a.reps, "reps")? {
        spec.reps = r;
    }
    if let Some(s) = file.pick(a.seed, "seed")? {
        spec.seed = SeedSpec::new(s, 0);
    }
    spec.omega = omega_source(file.pick(a.omega_cond, "omega-cond")?);
    let out: Option<PathBuf> = file.pick(a.out, "out")?;
    let summary_out: Option<PathBuf> = file.pick(a.summary_out, "summary-out")?;
    let result = run_fig1(&spec)?;
    let mut buf = Vec::new();
    write_fig1_csv(&result, &mut buf)?;
    match out {
        Some(path) => write_file(&path, &buf)?,
        None => write_stdout(&buf)?,
    }
    let summary = serde_json::json!({ "spec": result.spec, "summary": result.summary });
    emit_json(&summary, summary_out.as_deref(), true)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_fig2(a: Fig2Args, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&[
        "p", "n-grid", "reps", "offset-scale", "seed", "weights", "omega-cond", "out", "summary-out",
    ])?;
    let mut spec = Fig2Spec::default();
    if let Some(p) = file.pick(a.p, "p")? {
        spec.p = p;
    }
    if let Some(g) = file.pick::<String>(a.n_grid, "n-grid")? {
        spec.n_grid = parse_grid(&g)?;
    }
    if let Some(r) = file.pick(a.reps, "reps")? {
        spec.reps = r;
    }
    if let Some(o) = file.pick(a.offset_scale, "offset-scale")? {
        spec.offset_scale = o;
    }
    if let Some(s) = file.pick(a.seed, "seed")? {
        spec.seed = SeedSpec::new(s, 0);
    }
    if let Some(w) = file.pick::<String>(a.weights, "weights")? {
        (spec.w_ajne, spec.w_gine) = parse_weights(&w)?;
    }
    spec.omega = omega_source(file.pick(a.omega_cond, "omega-cond")?);
    let out: Option<PathBuf> = file.pick(a.out, "out")?;
    let summary_out: Option<PathBuf> = file.pick(a.summary_out, "summary-out")?;
    let result = run_fig2(&spec)?;
    let mut buf = Vec::new();
    write_fig2_csv(&result, &mut buf)?;
    match out {
        Some(path) => write_file(&path, &buf)?,
        None => write_stdout(&buf)?,
    }
    let summary = serde_json::json!({ "spec": result.spec, "separation": result.separation });
    emit_json(&summary, summary_out.as_deref(), true)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(a: CalibrateArgs, file: &FileConfig) -> anyhow::Result<ExitCode> {
    file.check_keys(&["p", "n", "reps", "seed", "weights", "cache-dir"])?;
    let p: usize = require(file.pick(a.p, "p")?, "p")?;
    let n: usize = require(file.pick(a.n, "n")?, "n")?;
    let mut cfg = TestConfig::default();
    if let Some(r) = file.pick(a.reps, "reps")? {
        cfg.mc_null_reps = r;
    }
    if let Some(s) = file.pick(a.seed, "seed")? {
        cfg.seed = SeedSpec::new(s, 0);
    }
    if let Some(w) = file.pick::<String>(a.weights, "weights")? {
        (cfg.w_ajne, cfg.w_gine) = parse_weights(&w)?;
    }
    cfg.validate()?;
    let dir = file.pick(a.cache_dir, "cache-dir")?.unwrap_or_else(default_cache_dir);
    let table = load_or_calibrate(&dir, p, n, &cfg)?;
    let path = cache_path(&dir, &NullKey::new(p, n, &cfg));
    let out = serde_json::json!({
        "path": path,
        "key": table.key,
        "critical_value_0.05": table.critical_value(0.05),
    });
    emit_json(&out, None, false)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Test(a) => cmd_test(a, &file),
        Command::Fit(a) => cmd_fit(a, &file),
        Command::Coeffs(a) => cmd_coeffs(a, &file),
        Command::Fig1(a) => cmd_fig1(a, &file),
        Command::Fig2(a) => cmd_fig2(a, &file),
        Command::Calibrate(a) => cmd_calibrate(a, &file),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if !e.is_input_error() => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::from(exit_code_for(&err))
        }
    }
}
