//! Simulation studies behind the figures: the null distributions of the two
//! statistics for i.i.d. versus Tyler-whitened directions, and confidence
//! bands of the combined statistic under the null and an offset alternative
//! as the sample size grows.
//!
//! Outputs are CSV files whose leading `#` lines carry the resolved spec as
//! JSON, so every file documents how it was produced. Replicates run in
//! parallel but each owns a fixed random stream, so output is byte-identical
//! across runs and thread counts.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::{ecdf_sorted, ks_two_sample, mean, quantile_sorted, std_error, KsResult};
use crate::matrix::SpdMatrix;
use crate::null_model::{gine_gap, GapPrediction};
use crate::sample::UnitSample;
use crate::samplers::{random_spd, sample_offset_alternative, sample_uniform_sphere, SeedSpec};
use crate::statistics::combined;
use crate::tyler::{tyler_fit, TylerConfig};

/// One-sided normal quantile at 0.001, used for the dominance margin.
const Z_999: f64 = 3.090_232_306_167_813_5;

/// Where the true scatter matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaSource {
    Identity,
    /// `random_spd(p, cond, seed.derive(..))`.
    RandomSpd { cond: f64 },
}

impl OmegaSource {
    fn resolve(&self, p: usize, seed: SeedSpec) -> Result<SpdMatrix> {
        match *self {
            OmegaSource::Identity => Ok(SpdMatrix::identity(p)),
            OmegaSource::RandomSpd { cond } => random_spd(p, cond, seed.derive(0x6f6d)),
        }
    }
}

fn experiment_tyler() -> TylerConfig {
    TylerConfig {
        max_iters: 5000,
        ..TylerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Spec {
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub omega: OmegaSource,
    pub seed: SeedSpec,
    pub tyler: TylerConfig,
}

impl Default for Fig1Spec {
    fn default() -> Self {
        Fig1Spec {
            p: 8,
            n: 1000,
            reps: 2000,
            omega: OmegaSource::Identity,
            seed: SeedSpec::new(7, 0),
            tyler: experiment_tyler(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Spec {
    pub p: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub offset_scale: f64,
    pub omega: OmegaSource,
    pub w_ajne: f64,
    pub w_gine: f64,
    pub seed: SeedSpec,
    pub tyler: TylerConfig,
}

impl Default for Fig2Spec {
    fn default() -> Self {
        Fig2Spec {
            p: 5,
            n_grid: vec![10, 15, 20, 30, 40, 50, 60],
            reps: 2000,
            offset_scale: 0.05,
            omega: OmegaSource::Identity,
            w_ajne: 1.0,
            w_gine: 1.0,
            seed: SeedSpec::new(11, 0),
            tyler: experiment_tyler(),
        }
    }
}

fn check_common(p: usize, n: usize, reps: usize) -> Result<()> {
    if p < 3 {
        return Err(Error::InvalidConfig(format!("experiments need p >= 3, got {p}")));
    }
    if n <= p {
        return Err(Error::SampleTooSmall { n, p });
    }
    if reps < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 replicates, got {reps}")));
    }
    if reps < 100 {
        log::warn!("{reps} replicates is below the 100 needed for meaningful summaries");
    }
    Ok(())
}

/// `i.i.d.` rows are the uniform directions behind the data; `whitened`
/// rows are the same data after Tyler whitening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Iid,
    Whitened,
}

impl SequenceKind {
    fn label(self) -> &'static str {
        match self {
            SequenceKind::Iid => "iid",
            SequenceKind::Whitened => "whitened",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub replicate: usize,
    pub sequence_kind: SequenceKind,
    pub t_ajne: f64,
    pub t_gine: f64,
}

/// Pointwise comparison of two empirical CDFs on a quantile grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub grid_points: usize,
    /// Largest `F_large(x) - F_small(x)` on the grid (positive means the
    /// expected order is violated at that point).
    pub max_violation: f64,
    /// Binomial noise allowance at the point of largest violation.
    pub margin: f64,
    pub holds: bool,
}

/// Checks `F_small(x) >= F_large(x)` on `grid_points` quantiles of the pooled
/// sample, i.e. that `small` is stochastically smaller than `large`, allowing
/// for two-sample binomial noise at one-sided level 0.001.
pub fn stochastic_dominance(small: &[f64], large: &[f64], grid_points: usize) -> DominanceCheck {
    let mut a = small.to_vec();
    let mut b = large.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut pooled = [a.as_slice(), b.as_slice()].concat();
    pooled.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut worst = (f64::NEG_INFINITY, 0.0);
    let mut holds = true;
    for k in 1..=grid_points {
        let x = quantile_sorted(&pooled, k as f64 / (grid_points + 1) as f64);
        let (fa, fb) = (ecdf_sorted(&a, x), ecdf_sorted(&b, x));
        let pbar = (fa * na + fb * nb) / (na + nb);
        let margin = Z_999 * (pbar * (1.0 - pbar) * (1.0 / na + 1.0 / nb)).sqrt();
        let violation = fb - fa;
        if violation > margin {
            holds = false;
        }
        if violation - margin > worst.0 - worst.1 {
            worst = (violation, margin);
        }
    }
    DominanceCheck {
        grid_points,
        max_violation: worst.0,
        margin: worst.1,
        holds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Summary {
    pub mean_ajne_iid: f64,
    pub mean_ajne_whitened: f64,
    pub mean_gine_iid: f64,
    pub mean_gine_whitened: f64,
    /// `mean_gine_iid - mean_gine_whitened`.
    pub gine_gap: f64,
    /// Standard error of the paired gap.
    pub gine_gap_se: f64,
    pub prediction: GapPrediction,
    pub ajne_ks: KsResult,
    pub gine_dominance: DominanceCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Result {
    pub spec: Fig1Spec,
    pub rows: Vec<Fig1Row>,
    pub summary: Fig1Summary,
}

fn column(rows: &[Fig1Row], kind: SequenceKind, gine: bool) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.sequence_kind == kind)
        .map(|r| if gine { r.t_gine } else { r.t_ajne })
        .collect()
}

impl Fig1Result {
    /// `t_G` (or `t_A` when `gine` is false) of every replicate of one kind.
    pub fn column(&self, kind: SequenceKind, gine: bool) -> Vec<f64> {
        column(&self.rows, kind, gine)
    }
}

/// Replicate `r`: uniform directions `w`, data `x = Omega^{1/2} w / ||.||`,
/// and the Tyler-whitened `t` of `x`.
fn fig1_replicate(spec: &Fig1Spec, root: &SpdMatrix, r: usize) -> Result<[Fig1Row; 2]> {
    let w = sample_uniform_sphere(spec.p, spec.n, spec.seed.derive(0x6631).stream(r as u64))?;
    let x = w.transform(root)?;
    let t = tyler_fit(&x, &spec.tyler)?.whitened;
    let sw = combined(&w, 1.0, 1.0)?;
    let st = combined(&t, 1.0, 1.0)?;
    Ok([
        Fig1Row {
            replicate: r,
            sequence_kind: SequenceKind::Iid,
            t_ajne: sw.t_ajne,
            t_gine: sw.t_gine,
        },
        Fig1Row {
            replicate: r,
            sequence_kind: SequenceKind::Whitened,
            t_ajne: st.t_ajne,
            t_gine: st.t_gine,
        },
    ])
}

/// Null distributions of `t_A` and `t_G` for i.i.d. and whitened directions.
pub fn run_fig1(spec: &Fig1Spec) -> Result<Fig1Result> {
    check_common(spec.p, spec.n, spec.reps)?;
    spec.tyler.validate()?;
    let root = spec.omega.resolve(spec.p, spec.seed)?.sqrt();
    let pairs = (0..spec.reps)
        .into_par_iter()
        .map(|r| fig1_replicate(spec, &root, r))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Fig1Row> = pairs.into_iter().flatten().collect();
    let pick = |kind, gine| column(&rows, kind, gine);
    let (ai, aw) = (pick(SequenceKind::Iid, false), pick(SequenceKind::Whitened, false));
    let (gi, gw) = (pick(SequenceKind::Iid, true), pick(SequenceKind::Whitened, true));
    let diffs: Vec<f64> = gi.iter().zip(&gw).map(|(a, b)| a - b).collect();
    let summary = Fig1Summary {
        mean_ajne_iid: mean(&ai),
        mean_ajne_whitened: mean(&aw),
        mean_gine_iid: mean(&gi),
        mean_gine_whitened: mean(&gw),
        gine_gap: mean(&gi) - mean(&gw),
        gine_gap_se: std_error(&diffs),
        prediction: gine_gap(spec.p)?,
        ajne_ks: ks_two_sample(&ai, &aw),
        gine_dominance: stochastic_dominance(&gw, &gi, 50),
    };
    Ok(Fig1Result {
        spec: spec.clone(),
        rows,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    IidNull,
    IidAlt,
    TylerNull,
    TylerAlt,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::IidNull, Arm::IidAlt, Arm::TylerNull, Arm::TylerAlt];

    pub fn label(self) -> &'static str {
        match self {
            Arm::IidNull => "iid_null",
            Arm::IidAlt => "iid_alt",
            Arm::TylerNull => "tyler_null",
            Arm::TylerAlt => "tyler_alt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub n: usize,
    pub arm: Arm,
    pub q_low: f64,
    pub q_high: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub n: usize,
    pub iid_disjoint: bool,
    pub tyler_disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Result {
    pub spec: Fig2Spec,
    pub bands: Vec<Band>,
    pub separation: Vec<Separation>,
}

impl Fig2Result {
    pub fn band(&self, n: usize, arm: Arm) -> Option<&Band> {
        self.bands.iter().find(|b| b.n == n && b.arm == arm)
    }
}

fn disjoint(a: &Band, b: &Band) -> bool {
    a.q_high < b.q_low || b.q_high < a.q_low
}

/// Combined statistic for the four arms of one replicate at size `n`.
fn fig2_replicate(spec: &Fig2Spec, omega: &SpdMatrix, root: &SpdMatrix, inv_root: &SpdMatrix, n: usize, r: usize) -> Result<[f64; 4]> {
    let base = spec.seed.derive(n as u64);
    let s = |u: &UnitSample| combined(u, spec.w_ajne, spec.w_gine).map(|c| c.combined);
    let w = sample_uniform_sphere(spec.p, n, base.stream(2 * r as u64))?;
    let x_null = w.transform(root)?;
    let x_alt = sample_offset_alternative(spec.p, n, spec.offset_scale, omega, base.stream(2 * r as u64 + 1))?;
    let w_alt = x_alt.transform(inv_root)?;
    Ok([
        s(&w)?,
        s(&w_alt)?,
        s(&tyler_fit(&x_null, &spec.tyler)?.whitened)?,
        s(&tyler_fit(&x_alt, &spec.tyler)?.whitened)?,
    ])
}

/// 0.95 bands of the combined statistic over the `n` grid for i.i.d. and
/// whitened directions under the null and the offset alternative.
pub fn run_fig2(spec: &Fig2Spec) -> Result<Fig2Result> {
    if spec.n_grid.is_empty() {
        return Err(Error::InvalidConfig("empty n grid".into()));
    }
    for &n in &spec.n_grid {
        check_common(spec.p, n, spec.reps)?;
    }
    if !(spec.offset_scale >= 0.0) || !spec.offset_scale.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "offset scale must be finite and >= 0, got {}",
            spec.offset_scale
        )));
    }
    spec.tyler.validate()?;
    let omega = spec.omega.resolve(spec.p, spec.seed)?;
    let (root, inv_root) = (omega.sqrt(), omega.inv_sqrt());
    let mut bands = Vec::new();
    let mut separation = Vec::new();
    for &n in &spec.n_grid {
        let reps = (0..spec.reps)
            .into_par_iter()
            .map(|r| fig2_replicate(spec, &omega, &root, &inv_root, n, r))
            .collect::<Result<Vec<_>>>()?;
        let mut arm_bands = Vec::with_capacity(4);
        for (k, arm) in Arm::ALL.into_iter().enumerate() {
            let mut v: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            arm_bands.push(Band {
                n,
                arm,
                q_low: quantile_sorted(&v, 0.025),
                q_high: quantile_sorted(&v, 0.975),
                mean: mean(&v),
            });
        }
        separation.push(Separation {
            n,
            iid_disjoint: disjoint(&arm_bands[0], &arm_bands[1]),
            tyler_disjoint: disjoint(&arm_bands[2], &arm_bands[3]),
        });
        bands.extend(arm_bands);
    }
    Ok(Fig2Result {
        spec: spec.clone(),
        bands,
        separation,
    })
}

fn write_header<W: Write>(out: &mut W, name: &str, spec: &impl Serialize) -> Result<()> {
    writeln!(out, "# experiment: {name}")?;
    writeln!(out, "# spec: {}", serde_json::to_string(spec)?)?;
    Ok(())
}

/// Writes the fig1 experiment table (`replicate,sequence_kind,t_ajne,t_gine`).
pub fn write_fig1_csv<W: Write>(result: &Fig1Result, mut out: W) -> Result<()> {
    write_header(&mut out, "fig1_null_distributions", &result.spec)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "sequence_kind", "t_ajne", "t_gine"])?;
    for r in &result.rows {
        w.write_record([
            r.replicate.to_string(),
            r.sequence_kind.label().to_string(),
            r.t_ajne.to_string(),
            r.t_gine.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the fig2 experiment table (`n,arm,q_low,q_high,mean`).
pub fn write_fig2_csv<W: Write>(result: &Fig2Result, mut out: W) -> Result<()> {
    write_header(&mut out, "fig2_confidence_bands", &result.spec)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "arm", "q_low", "q_high", "mean"])?;
    for b in &result.bands {
        w.write_record([
            b.n.to_string(),
            b.arm.label().to_string(),
            b.q_low.to_string(),
            b.q_high.to_string(),
            b.mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
