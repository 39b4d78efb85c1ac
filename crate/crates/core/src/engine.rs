//! The end-to-end ellipticity test: project the rows onto the sphere, fit
//! Tyler's estimator, whiten, compute the uniformity statistics and calibrate
//! them.
//!
//! The default calibration simulates the whole pipeline on uniform samples of
//! the same size. Because the fit is affine-equivariant, the whitened sample's
//! law under ellipticity does not depend on the unknown scatter matrix, so one
//! table per `(p, n)` serves every data set of that shape. Whitening makes the
//! Gine statistic markedly smaller than it is for i.i.d. uniform directions, so
//! an i.i.d. reference would be badly miscalibrated.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gof::quantile_sorted;
use crate::matrix::SpdMatrix;
use crate::null_model::{
    build_null, mixture_samples, upper_tail_pvalue, StatKind, DEFAULT_TRUNCATION_Q, MIN_MIXTURE_DRAWS,
};
use crate::sample::{DataMatrix, UnitSample};
use crate::samplers::{sample_acg, sample_uniform_sphere, SeedSpec};
use crate::statistics::{combined, StatPair};
use crate::tyler::{tyler_fit, TylerConfig};

const NULL_TAG: u64 = 0x6e75_6c6c;
const SERIES_TAG: u64 = 0x7365_7269;

/// How the observed statistic is turned into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Monte-Carlo null of the full fit-and-whiten pipeline.
    McNull,
    /// Asymptotic chi-square mixtures, combined conservatively.
    Series,
}

impl std::str::FromStr for Calibration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mc_null" | "mc" => Ok(Calibration::McNull),
            "series" => Ok(Calibration::Series),
            other => Err(Error::Input(format!(
                "unknown calibration '{other}' (mc_null|series)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub significance: f64,
    pub calibration: Calibration,
    pub mc_null_reps: usize,
    pub w_ajne: f64,
    pub w_gine: f64,
    /// Subtract column means before projecting onto the sphere. The test's
    /// guarantees assume centred data; this is a convenience only.
    pub center: bool,
    pub seed: SeedSpec,
    pub tyler: TylerConfig,
    /// Series terms kept in `series` mode.
    pub series_truncation_q: usize,
    /// Mixture draws per statistic in `series` mode.
    pub series_draws: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            significance: 0.05,
            calibration: Calibration::McNull,
            mc_null_reps: 2000,
            w_ajne: 1.0,
            w_gine: 1.0,
            center: false,
            seed: SeedSpec::new(0, 0),
            tyler: TylerConfig::default(),
            series_truncation_q: DEFAULT_TRUNCATION_Q,
            series_draws: 200_000,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "significance must lie in (0, 1), got {}",
                self.significance
            )));
        }
        if self.calibration == Calibration::McNull && self.mc_null_reps < 100 {
            return Err(Error::InvalidConfig(format!(
                "mc_null calibration needs at least 100 replicates, got {}",
                self.mc_null_reps
            )));
        }
        if self.calibration == Calibration::Series && self.series_draws < MIN_MIXTURE_DRAWS {
            return Err(Error::InvalidConfig(format!(
                "series calibration needs at least {MIN_MIXTURE_DRAWS} draws, got {}",
                self.series_draws
            )));
        }
        let w_ok = |w: f64| w.is_finite() && w >= 0.0;
        if !w_ok(self.w_ajne) || !w_ok(self.w_gine) || self.w_ajne + self.w_gine == 0.0 {
            return Err(Error::InvalidWeights {
                w_ajne: self.w_ajne,
                w_gine: self.w_gine,
            });
        }
        self.tyler.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConsistentWithEllipticity,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDetail {
    pub mode: Calibration,
    /// Null replicates (`mc_null`) or mixture draws per statistic (`series`).
    pub reps: usize,
    /// Series terms (`series` mode only).
    pub terms: Option<usize>,
    /// Upper `1 - significance` quantile of the null table (`mc_null` only).
    pub critical_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trace_s2: f64,
    pub tyler_iterations: usize,
    pub tyler_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub verdict: Verdict,
    pub p_value: f64,
    pub statistic: StatPair,
    pub scatter_estimate: SpdMatrix,
    pub calibration: CalibrationDetail,
    pub diagnostics: Diagnostics,
    pub config: TestConfig,
}

/// Sorted null draws of the combined statistic for one `(p, n)` and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTable {
    pub key: NullKey,
    pub values: Vec<f64>,
}

/// Everything that determines a null table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullKey {
    pub p: usize,
    pub n: usize,
    pub w_ajne: f64,
    pub w_gine: f64,
    pub reps: usize,
    pub seed: SeedSpec,
    pub tyler: TylerConfig,
}

impl NullKey {
    pub fn new(p: usize, n: usize, cfg: &TestConfig) -> Self {
        NullKey {
            p,
            n,
            w_ajne: cfg.w_ajne,
            w_gine: cfg.w_gine,
            reps: cfg.mc_null_reps,
            seed: cfg.seed,
            tyler: cfg.tyler,
        }
    }

    /// Hex SHA-256 of the key's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("key serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl NullTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(1 + #{table >= t}) / (reps + 1)`: exact for a statistic exchangeable
    /// with the table entries. Values below the table minimum get 1, values
    /// above the maximum get `1 / (reps + 1)`.
    pub fn p_value(&self, t: f64) -> f64 {
        let below = self.values.partition_point(|v| *v < t);
        (1 + self.values.len() - below) as f64 / (self.values.len() + 1) as f64
    }

    /// The `1 - significance` quantile of the table.
    pub fn critical_value(&self, significance: f64) -> f64 {
        quantile_sorted(&self.values, 1.0 - significance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table: NullTable = serde_json::from_slice(&std::fs::read(path)?)?;
        if table.values.len() != table.key.reps || table.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Input(format!(
                "{} is not a valid null table",
                path.display()
            )));
        }
        Ok(table)
    }
}

/// Cache file for a null table inside `dir`.
pub fn cache_path(dir: &Path, key: &NullKey) -> PathBuf {
    dir.join(format!("null-p{}-n{}-{}.json", key.p, key.n, &key.digest()[..16]))
}

fn check_shape(p: usize, n: usize) -> Result<()> {
    if p < 3 {
        return Err(Error::InvalidDimensions(format!("the test needs p >= 3, got p = {p}")));
    }
    if n <= p {
        return Err(Error::SampleTooSmall { n, p });
    }
    Ok(())
}

/// Combined statistic of one simulated null replicate: a sample of size `n`
/// from the angular central Gaussian law with scatter `omega` (uniform when
/// `None`), Tyler-fitted and whitened.
pub fn null_replicate(
    p: usize,
    n: usize,
    cfg: &TestConfig,
    omega: Option<&SpdMatrix>,
    replicate: u64,
) -> Result<StatPair> {
    let seed = cfg.seed.derive(NULL_TAG).stream(replicate);
    let sample = match omega {
        None => sample_uniform_sphere(p, n, seed)?,
        Some(o) => sample_acg(o, n, seed)?,
    };
    let fit = tyler_fit(&sample, &cfg.tyler)?;
    combined(&fit.whitened, cfg.w_ajne, cfg.w_gine)
}

/// Simulates the null table of the combined statistic, optionally generating
/// the null data with a non-identity scatter.
pub fn calibrate_null_with_scatter(
    p: usize,
    n: usize,
    cfg: &TestConfig,
    omega: Option<&SpdMatrix>,
) -> Result<NullTable> {
    check_shape(p, n)?;
    if cfg.mc_null_reps < 1 {
        return Err(Error::InvalidConfig("mc_null_reps must be positive".into()));
    }
    if let Some(o) = omega {
        if o.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: o.dim(),
            });
        }
    }
    let mut values = (0..cfg.mc_null_reps as u64)
        .into_par_iter()
        .map(|r| null_replicate(p, n, cfg, omega, r).map(|s| s.combined))
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    Ok(NullTable {
        key: NullKey::new(p, n, cfg),
        values,
    })
}

/// Null table of the combined statistic for samples of shape `n x p`,
/// deterministic given `cfg.seed`.
pub fn calibrate_null(p: usize, n: usize, cfg: &TestConfig) -> Result<NullTable> {
    calibrate_null_with_scatter(p, n, cfg, None)
}

/// Loads the table from the cache directory when present, otherwise
/// simulates and stores it.
pub fn load_or_calibrate(dir: &Path, p: usize, n: usize, cfg: &TestConfig) -> Result<NullTable> {
    let key = NullKey::new(p, n, cfg);
    let path = cache_path(dir, &key);
    if path.exists() {
        if let Ok(table) = NullTable::load(&path) {
            if table.key == key {
                log::debug!("null table cache hit: {}", path.display());
                return Ok(table);
            }
        }
        log::warn!("ignoring stale null table {}", path.display());
    }
    let table = calibrate_null(p, n, cfg)?;
    table.save(&path)?;
    Ok(table)
}

struct Fitted {
    sample_p: usize,
    sample_n: usize,
    statistic: StatPair,
    scatter: SpdMatrix,
    diagnostics: Diagnostics,
}

fn fit_and_score(raw: &DataMatrix, cfg: &TestConfig) -> Result<Fitted> {
    cfg.validate()?;
    let (n, p) = (raw.nrows(), raw.ncols());
    check_shape(p, n)?;
    let data = if cfg.center { raw.centered() } else { raw.clone() };
    let sample = UnitSample::from_data(&data)?;
    let fit = tyler_fit(&sample, &cfg.tyler)?;
    let statistic = combined(&fit.whitened, cfg.w_ajne, cfg.w_gine)?;
    Ok(Fitted {
        sample_p: p,
        sample_n: n,
        diagnostics: Diagnostics {
            trace_s2: statistic.trace_s2,
            tyler_iterations: fit.iterations,
            tyler_residual: fit.final_residual,
        },
        statistic,
        scatter: fit.estimate,
    })
}

fn report(f: Fitted, p_value: f64, calibration: CalibrationDetail, cfg: &TestConfig) -> TestReport {
    TestReport {
        verdict: if p_value < cfg.significance {
            Verdict::Rejected
        } else {
            Verdict::ConsistentWithEllipticity
        },
        p_value,
        statistic: f.statistic,
        scatter_estimate: f.scatter,
        calibration,
        diagnostics: f.diagnostics,
        config: *cfg,
    }
}

fn series_pvalue(stat: &StatPair, cfg: &TestConfig) -> Result<f64> {
    let mut total = 0.0;
    for (kind, weight, value) in [
        (StatKind::Ajne, cfg.w_ajne, stat.t_ajne),
        (StatKind::Gine, cfg.w_gine, stat.t_gine),
    ] {
        if weight == 0.0 {
            continue;
        }
        let model = build_null(kind, stat.p, cfg.series_truncation_q)?;
        let draws = mixture_samples(&model, cfg.series_draws, cfg.seed.derive(SERIES_TAG))?;
        total += upper_tail_pvalue(&draws, value);
    }
    Ok(total.min(1.0))
}

/// Runs the test on raw observations (one per row).
pub fn run_test(raw: &DataMatrix, cfg: &TestConfig) -> Result<TestReport> {
    match cfg.calibration {
        Calibration::McNull => {
            cfg.validate()?;
            check_shape(raw.ncols(), raw.nrows())?;
            let table = calibrate_null(raw.ncols(), raw.nrows(), cfg)?;
            run_test_with_table(raw, cfg, &table)
        }
        Calibration::Series => {
            let fitted = fit_and_score(raw, cfg)?;
            let p_value = series_pvalue(&fitted.statistic, cfg)?;
            let detail = CalibrationDetail {
                mode: Calibration::Series,
                reps: cfg.series_draws,
                terms: Some(cfg.series_truncation_q),
                critical_value: None,
            };
            Ok(report(fitted, p_value, detail, cfg))
        }
    }
}

/// Runs the Monte-Carlo-calibrated test against a precomputed null table,
/// which must match the data shape and the config.
pub fn run_test_with_table(raw: &DataMatrix, cfg: &TestConfig, table: &NullTable) -> Result<TestReport> {
    let fitted = fit_and_score(raw, cfg)?;
    let key = NullKey::new(fitted.sample_p, fitted.sample_n, cfg);
    if table.key != key {
        return Err(Error::InvalidConfig(format!(
            "null table was built for {:?}, the test needs {:?}",
            table.key, key
        )));
    }
    let p_value = table.p_value(fitted.statistic.combined);
    let detail = CalibrationDetail {
        mode: Calibration::McNull,
        reps: table.len(),
        terms: None,
        critical_value: Some(table.critical_value(cfg.significance)),
    };
    Ok(report(fitted, p_value, detail, cfg))
}
