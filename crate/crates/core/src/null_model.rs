//! Asymptotic null laws of the uniformity statistics: truncated mixtures
//! `sum_q a_q^2 K_{nu_q}` of independent chi-squares, their Monte-Carlo
//! quantiles and p-values, and the predicted Gine mean shift caused by
//! whitening.
//!
//! The Ajne coefficient is available in two transcriptions. The factor after
//! `Gamma(q + alpha)` reads either `(2q-2)` or `(2q-2)!`; the first makes the
//! leading coefficient vanish. [`build_null`] builds both and keeps the one
//! whose mixture mean reproduces the exact null mean `E[t_A] = 1/4`.

use std::f64::consts::PI;

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::quantile_sorted;
use crate::samplers::SeedSpec;
use crate::special::{alpha, gamma2, log_gamma, nu_real};

/// Default number of series terms kept in a null model.
pub const DEFAULT_TRUNCATION_Q: usize = 200;

/// Dropped-tail mass allowed, as a fraction of the mixture mean.
pub const MAX_RELATIVE_TAIL: f64 = 0.01;

/// Smallest Monte-Carlo size accepted for mixture quantiles and p-values.
pub const MIN_MIXTURE_DRAWS: usize = 100_000;

/// Number of dropped terms summed explicitly in the tail estimate.
const TAIL_TERMS: usize = 5;

const BLOCK: usize = 8192;
const MIXTURE_TAG: u64 = 0x6d69_7874;

/// Which statistic a null model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Ajne,
    Gine,
}

impl std::str::FromStr for StatKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ajne" => Ok(StatKind::Ajne),
            "gine" => Ok(StatKind::Gine),
            other => Err(Error::Input(format!("unknown statistic '{other}' (ajne|gine)"))),
        }
    }
}

/// Transcription of the Ajne coefficient's `(2q-2)` factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AjneVariant {
    /// The plain factor `(2q - 2)`.
    Literal,
    /// The factorial `(2q - 2)!`.
    Factorial,
}

impl std::str::FromStr for AjneVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(AjneVariant::Literal),
            "factorial" => Ok(AjneVariant::Factorial),
            other => Err(Error::Input(format!(
                "unknown Ajne variant '{other}' (literal|factorial)"
            ))),
        }
    }
}

/// One mixture component `weight * chi^2_dof`, from series index `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub q: usize,
    pub weight: f64,
    /// `nu(p-1, 2q-1)` (Ajne) or `nu(p-1, 2q)` (Gine); exact whenever it fits
    /// in 64 bits.
    pub dof: f64,
}

/// A truncated chi-square mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub kind: StatKind,
    pub p: usize,
    pub truncation_q: usize,
    pub terms: Vec<MixtureTerm>,
    /// Estimated mean mass `sum a^2 nu` of the dropped terms.
    pub tail_mass_bound: f64,
    /// Present for Ajne models.
    pub ajne_variant: Option<AjneVariant>,
}

/// Predicted decrease of the mean Gine statistic under whitening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPrediction {
    pub p: usize,
    /// `1/8 + 1/(16p)`.
    pub predicted_gap: f64,
    /// Half of the `gamma_2` series.
    pub gamma2_half: f64,
    /// Uncertainty of `gamma2_half` from truncating the series.
    pub gamma2_half_error: f64,
}

/// `ln a_q^2`, or `None` when the coefficient is exactly zero.
fn log_weight(kind: StatKind, p: usize, q: usize, variant: AjneVariant) -> Result<Option<f64>> {
    let a = alpha(p);
    let pf = p as f64;
    let qf = q as f64;
    match kind {
        StatKind::Gine => {
            let ln_rational = ((pf - 1.0) * (2.0 * qf - 1.0) / (8.0 * PI * (2.0 * qf + pf - 1.0))).ln();
            let ln_ratio = log_gamma(a + 0.5)? + log_gamma(qf - 0.5)? - log_gamma(qf + a + 0.5)?;
            Ok(Some(ln_rational + 2.0 * ln_ratio))
        }
        StatKind::Ajne => {
            let ln_factor = match variant {
                AjneVariant::Literal if q == 1 => return Ok(None),
                AjneVariant::Literal => (2.0 * qf - 2.0).ln(),
                AjneVariant::Factorial => log_gamma(2.0 * qf - 1.0)?,
            };
            // (2q + p - 3)! = Gamma(2q + p - 2)
            let ln_a = (pf - 2.0) * 2f64.ln() + log_gamma(a + 1.0)? + log_gamma(qf + a)? + ln_factor
                - PI.ln()
                - log_gamma(qf)?
                - log_gamma(2.0 * qf + pf - 2.0)?;
            Ok(Some(2.0 * ln_a))
        }
    }
}

fn degree(kind: StatKind, q: usize) -> u64 {
    match kind {
        StatKind::Ajne => 2 * q as u64 - 1,
        StatKind::Gine => 2 * q as u64,
    }
}

/// `a_q^2 nu_q` (the term's mean), zero for vanishing coefficients.
fn term_mean(kind: StatKind, p: usize, q: usize, variant: AjneVariant) -> Result<f64> {
    Ok(match log_weight(kind, p, q, variant)? {
        Some(lw) => (lw + nu_real(p as u64 - 1, degree(kind, q))?.ln()).exp(),
        None => 0.0,
    })
}

fn check_args(p: usize, truncation_q: usize) -> Result<()> {
    if p < 3 {
        return Err(Error::Domain(format!("null models need p >= 3, got {p}")));
    }
    if truncation_q < 1 {
        return Err(Error::Domain("truncation_q must be at least 1".into()));
    }
    Ok(())
}

/// Mean mass of the terms after `truncation_q`: the next few terms summed
/// exactly, the rest extrapolated with the `q^{-2}` decay of the series.
fn tail_estimate(kind: StatKind, p: usize, truncation_q: usize, variant: AjneVariant) -> Result<f64> {
    let mut tail = 0.0;
    let mut last = 0.0;
    for q in truncation_q + 1..=truncation_q + TAIL_TERMS {
        last = term_mean(kind, p, q, variant)?;
        tail += last;
    }
    let q_last = (truncation_q + TAIL_TERMS) as f64;
    // sum_{k > Q} (Q/k)^2 ~ Q^2 / (Q + 1/2)
    tail += last * q_last * q_last / (q_last + 0.5);
    Ok(tail)
}

/// Builds the mixture without the truncation check and with an explicit Ajne
/// variant (ignored for Gine). Zero coefficients are omitted from `terms`.
pub fn build_null_with(
    kind: StatKind,
    p: usize,
    truncation_q: usize,
    variant: AjneVariant,
) -> Result<NullModel> {
    check_args(p, truncation_q)?;
    let mut terms = Vec::with_capacity(truncation_q);
    for q in 1..=truncation_q {
        let Some(lw) = log_weight(kind, p, q, variant)? else {
            continue;
        };
        let weight = lw.exp();
        if !weight.is_finite() {
            return Err(Error::Overflow(format!("{kind:?} coefficient at q = {q}, p = {p}")));
        }
        if weight > 0.0 {
            terms.push(MixtureTerm {
                q,
                weight,
                dof: nu_real(p as u64 - 1, degree(kind, q))?,
            });
        }
    }
    Ok(NullModel {
        kind,
        p,
        truncation_q,
        terms,
        tail_mass_bound: tail_estimate(kind, p, truncation_q, variant)?,
        ajne_variant: (kind == StatKind::Ajne).then_some(variant),
    })
}

/// Mixture means of both Ajne transcriptions, tail estimate included, and
/// the one closer to the exact null mean `1/4`.
pub fn select_ajne_variant(p: usize, truncation_q: usize) -> Result<(AjneVariant, f64, f64)> {
    let full_mean = |v| -> Result<f64> {
        let m = build_null_with(StatKind::Ajne, p, truncation_q, v)?;
        Ok(mixture_mean(&m) + m.tail_mass_bound)
    };
    let literal = full_mean(AjneVariant::Literal)?;
    let factorial = full_mean(AjneVariant::Factorial)?;
    let choice = if (factorial - 0.25).abs() <= (literal - 0.25).abs() {
        AjneVariant::Factorial
    } else {
        AjneVariant::Literal
    };
    log::info!(
        "Ajne coefficient variant for p = {p}: {choice:?} \
         (mixture means: literal {literal:.6}, factorial {factorial:.6}, target 0.25)"
    );
    Ok((choice, literal, factorial))
}

/// Builds the null model for `kind`, choosing the Ajne variant against the
/// exact null mean, and fails with [`Error::TruncationTooSmall`] when the
/// dropped tail exceeds 1% of the mixture mean.
pub fn build_null(kind: StatKind, p: usize, truncation_q: usize) -> Result<NullModel> {
    check_args(p, truncation_q)?;
    let variant = match kind {
        StatKind::Ajne => select_ajne_variant(p, truncation_q)?.0,
        StatKind::Gine => AjneVariant::Factorial,
    };
    let model = build_null_with(kind, p, truncation_q, variant)?;
    let mean = mixture_mean(&model);
    if model.tail_mass_bound > MAX_RELATIVE_TAIL * mean {
        return Err(Error::TruncationTooSmall {
            tail: model.tail_mass_bound,
            mean,
        });
    }
    Ok(model)
}

/// `sum a^2 nu` over the kept terms.
pub fn mixture_mean(model: &NullModel) -> f64 {
    model.terms.iter().map(|t| t.weight * t.dof).sum()
}

/// `draws` independent realizations of the mixture, in a fixed order that
/// does not depend on thread scheduling.
pub fn mixture_samples(model: &NullModel, draws: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    let chis = model
        .terms
        .iter()
        .map(|t| {
            ChiSquared::new(t.dof)
                .map(|c| (t.weight, c))
                .map_err(|e| Error::Domain(format!("chi-square with {} dof: {e}", t.dof)))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = seed.derive(MIXTURE_TAG);
    let blocks = draws.div_ceil(BLOCK);
    let out: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = base.stream(b as u64).rng();
            let len = BLOCK.min(draws - b * BLOCK);
            (0..len)
                .map(|_| chis.iter().map(|(w, c)| w * c.sample(&mut rng)).sum())
                .collect()
        })
        .collect();
    Ok(out.concat())
}

fn check_draws(mc_draws: usize) -> Result<()> {
    if mc_draws < MIN_MIXTURE_DRAWS {
        return Err(Error::Domain(format!(
            "mixture Monte Carlo needs at least {MIN_MIXTURE_DRAWS} draws, got {mc_draws}"
        )));
    }
    Ok(())
}

/// Empirical `prob`-quantile of the mixture from `mc_draws` draws.
pub fn mixture_quantile(model: &NullModel, prob: f64, mc_draws: usize, seed: SeedSpec) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability {prob} outside (0, 1)")));
    }
    check_draws(mc_draws)?;
    let mut xs = mixture_samples(model, mc_draws, seed)?;
    xs.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&xs, prob))
}

/// Upper-tail Monte-Carlo p-value `(#{draws >= observed} + 1) / (mc_draws + 1)`.
pub fn mixture_pvalue(model: &NullModel, observed: f64, mc_draws: usize, seed: SeedSpec) -> Result<f64> {
    if observed.is_nan() {
        return Err(Error::Domain("observed statistic is NaN".into()));
    }
    check_draws(mc_draws)?;
    let xs = mixture_samples(model, mc_draws, seed)?;
    Ok(upper_tail_pvalue(&xs, observed))
}

/// `(#{x >= observed} + 1) / (len + 1)` for unsorted draws.
pub(crate) fn upper_tail_pvalue(xs: &[f64], observed: f64) -> f64 {
    let count = xs.iter().filter(|&&x| x >= observed).count();
    (count + 1) as f64 / (xs.len() + 1) as f64
}

/// Terms used for the `gamma_2` series in [`gine_gap`].
const GAMMA2_TERMS: usize = 20_000;

/// Closed-form mean-gap prediction `1/8 + 1/(16p)` next to `gamma_2 / 2`.
///
/// The `gamma_2` series alternates with slowly shrinking terms, so the value
/// reported is the average of two consecutive partial sums; half their
/// difference bounds the remaining error.
pub fn gine_gap(p: usize) -> Result<GapPrediction> {
    if p < 3 {
        return Err(Error::Domain(format!("gap prediction needs p >= 3, got {p}")));
    }
    let a = gamma2(p, GAMMA2_TERMS)?;
    let b = gamma2(p, GAMMA2_TERMS + 1)?;
    Ok(GapPrediction {
        p,
        predicted_gap: 0.125 + 1.0 / (16.0 * p as f64),
        gamma2_half: (a.value + b.value) / 4.0,
        gamma2_half_error: (a.value - b.value).abs() / 4.0,
    })
}
