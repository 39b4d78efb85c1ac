//! Special functions behind the coefficient series: log-gamma, binomials,
//! the degrees-of-freedom sequence `nu(a, b)`, Gegenbauer polynomials and the
//! `gamma_2` series for the quadratic coefficient of the Gine kernel.
//!
//! Products of gamma functions and factorials are formed in log space with an
//! explicit sign.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln Gamma(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::NonPositiveArgument(x));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// `alpha = p/2 - 1`.
pub fn alpha(p: usize) -> f64 {
    p as f64 / 2.0 - 1.0
}

/// Binomial coefficient as a float; zero when `k > n`.
pub fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 1..=k {
        acc = acc * (n - k + i) as f64 / i as f64;
    }
    acc.round()
}

fn binom_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) is divisible by i at every step
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    Some(acc)
}

/// `nu(a, b) = C(a+b-2, a-1) + C(a+b-1, a-1)`, the dimension of the space of
/// degree-`b` spherical harmonics on the sphere in `R^{a+1}`.
pub fn nu(a: u64, b: u64) -> Result<u64> {
    if a < 1 || b < 1 {
        return Err(Error::Domain(format!("nu(a, b) needs a, b >= 1, got ({a}, {b})")));
    }
    let overflow = || Error::Overflow(format!("nu({a}, {b}) exceeds 64 bits"));
    let first = binom_exact(a + b - 2, a - 1).ok_or_else(overflow)?;
    let second = binom_exact(a + b - 1, a - 1).ok_or_else(overflow)?;
    let total = first.checked_add(second).ok_or_else(overflow)?;
    u64::try_from(total).map_err(|_| overflow())
}

/// `nu(a, b)` as a float, falling back to log-gamma arithmetic when the exact
/// integer does not fit in 64 bits.
pub fn nu_real(a: u64, b: u64) -> Result<f64> {
    match nu(a, b) {
        Ok(v) => Ok(v as f64),
        Err(Error::Overflow(_)) => {
            let ln_binom = |n: u64, k: u64| -> Result<f64> {
                Ok(log_gamma(n as f64 + 1.0)?
                    - log_gamma(k as f64 + 1.0)?
                    - log_gamma((n - k) as f64 + 1.0)?)
            };
            Ok(ln_binom(a + b - 2, a - 1)?.exp() + ln_binom(a + b - 1, a - 1)?.exp())
        }
        Err(e) => Err(e),
    }
}

/// Index and order of a Gegenbauer polynomial `C_q^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GegenbauerSpec {
    pub alpha: f64,
    pub order: u32,
}

impl GegenbauerSpec {
    pub fn new(alpha: f64, order: u32) -> Result<Self> {
        if !(alpha > -0.5) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "Gegenbauer index must exceed -1/2, got {alpha}"
            )));
        }
        Ok(GegenbauerSpec { alpha, order })
    }

    /// Spec for the sphere in `R^p`, `alpha = p/2 - 1`.
    pub fn for_dimension(p: usize, order: u32) -> Result<Self> {
        Self::new(alpha(p), order)
    }
}

fn check_unit_interval(z: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("argument {z} outside [-1, 1]")));
    }
    Ok(())
}

/// `C_q^alpha(z)` from the explicit finite sum
/// `sum_k (-1)^k Gamma(q-k+alpha) / (Gamma(alpha) k! (q-2k)!) (2z)^{q-2k}`.
///
/// The sum alternates with terms far larger than the result, so coefficients,
/// powers and the accumulation are carried in double-double arithmetic. The
/// coefficients follow their term ratio from the Pochhammer quotient
/// `(alpha)_q / q!`, which keeps the sign exact for negative `alpha`. For
/// `alpha = 0` the Chebyshev limit `C_q^0 = (2/q) T_q` (and `C_0^0 = 1`) is
/// used.
pub fn gegenbauer(spec: GegenbauerSpec, z: f64) -> Result<f64> {
    check_unit_interval(z)?;
    let q = spec.order as i64;
    let a = spec.alpha;
    if q == 0 {
        return Ok(1.0);
    }
    if a == 0.0 {
        return Ok(2.0 / q as f64 * chebyshev_t(spec.order, z));
    }
    let mut coef = Dd::from(1.0);
    for j in 0..q {
        coef = coef.mul(Dd::from(a).add(Dd::from(j as f64))).div(Dd::from((j + 1) as f64));
    }
    if !coef.hi.is_finite() {
        return Err(Error::Overflow(format!("Gegenbauer coefficients of order {q}")));
    }
    let two_z = Dd::from(2.0 * z);
    let z2 = two_z.mul(two_z);
    // powers (2z)^{q-2k} from the lowest upward: start at (2z)^{q mod 2}
    let n_terms = (q / 2 + 1) as usize;
    let mut powers = Vec::with_capacity(n_terms);
    let mut pw = if q % 2 == 1 { two_z } else { Dd::from(1.0) };
    for _ in 0..n_terms {
        powers.push(pw);
        pw = pw.mul(z2);
    }
    let mut sum = Dd::from(0.0);
    for k in 0..=(q / 2) {
        let power = q - 2 * k;
        sum = sum.add(coef.mul(powers[(power / 2) as usize]));
        let num = -((power * (power - 1)) as f64);
        let den = Dd::from((k + 1) as f64).mul(Dd::from((q - k - 1) as f64).add(Dd::from(a)));
        coef = coef.mul(Dd::from(num)).div(den);
    }
    Ok(sum.hi + sum.lo)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn quick(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::quick(s.hi, s.lo + t.hi);
        Dd::quick(u.hi, u.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::from(-q2)));
        let q3 = r.hi / o.hi;
        Dd::quick(q1, q2).add(Dd::from(q3))
    }
}

/// `C_q^alpha(z)` by the three-term recurrence
/// `n C_n = 2z(n+alpha-1) C_{n-1} - (n+2alpha-2) C_{n-2}`.
pub fn gegenbauer_recurrence(spec: GegenbauerSpec, z: f64) -> Result<f64> {
    check_unit_interval(z)?;
    let a = spec.alpha;
    if spec.order == 0 {
        return Ok(1.0);
    }
    if a == 0.0 {
        return Ok(2.0 / spec.order as f64 * chebyshev_t(spec.order, z));
    }
    let mut prev = 1.0;
    let mut cur = 2.0 * a * z;
    for n in 2..=spec.order {
        let nf = n as f64;
        let next = (2.0 * z * (nf + a - 1.0) * cur - (nf + 2.0 * a - 2.0) * prev) / nf;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

fn chebyshev_t(order: u32, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if order == 0 {
        return prev;
    }
    for _ in 1..order {
        let next = 2.0 * z * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `(Gamma(alpha + 1/2) / Gamma(alpha + 1))^2`, the Gine normalizing constant.
pub fn gine_constant(p: usize) -> f64 {
    let a = alpha(p);
    let ln = statrs::function::gamma::ln_gamma(a + 0.5) - statrs::function::gamma::ln_gamma(a + 1.0);
    (2.0 * ln).exp()
}

/// A partial sum of the alternating `gamma_2` series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gamma2Sum {
    pub p: usize,
    pub terms: usize,
    pub value: f64,
    /// Magnitude of the last included term.
    pub truncation_error: f64,
}

/// The `q`-th term (`q >= 1`) of the `gamma_2` series.
fn gamma2_term(p: usize, q: usize) -> Result<f64> {
    let pf = p as f64;
    let qf = q as f64;
    let rational = (pf - 1.0) * (2.0 * qf - 1.0) * (4.0 * qf + pf - 2.0)
        / ((pf - 2.0) * (2.0 * qf + pf - 1.0) * 4.0 * PI);
    let ln_ratio = log_gamma(pf / 2.0 - 0.5)? + log_gamma(qf - 0.5)? - log_gamma(qf + pf / 2.0 - 0.5)?;
    let ln_zeta = log_gamma(qf + pf / 2.0)? - log_gamma(pf / 2.0 - 1.0)? - log_gamma(qf)?;
    let mag = rational * (2.0 * ln_ratio + ln_zeta).exp();
    Ok(if q % 2 == 1 { mag } else { -mag })
}

/// Partial sum of the first `terms` terms of `gamma_2(alpha, p)`, the weight
/// of `cos^2` in the expansion of the Gine kernel through even Gegenbauer
/// polynomials.
pub fn gamma2(p: usize, terms: usize) -> Result<Gamma2Sum> {
    if p < 3 {
        return Err(Error::Domain(format!("gamma2 needs p >= 3, got {p}")));
    }
    if terms < 2 {
        return Err(Error::Domain(format!("gamma2 needs at least 2 terms, got {terms}")));
    }
    let mut value = 0.0;
    let mut last = 0.0;
    for q in 1..=terms {
        last = gamma2_term(p, q)?;
        value += last;
    }
    Ok(Gamma2Sum {
        p,
        terms,
        value,
        truncation_error: last.abs(),
    })
}

/// Sums `gamma_2` until the last term drops below `tol`, giving up after
/// `max_terms`.
pub fn gamma2_to_tolerance(p: usize, tol: f64, max_terms: usize) -> Result<Gamma2Sum> {
    if p < 3 {
        return Err(Error::Domain(format!("gamma2 needs p >= 3, got {p}")));
    }
    let mut value = 0.0;
    for q in 1..=max_terms {
        let term = gamma2_term(p, q)?;
        value += term;
        if q >= 2 && term.abs() < tol {
            return Ok(Gamma2Sum {
                p,
                terms: q,
                value,
                truncation_error: term.abs(),
            });
        }
    }
    Err(Error::SeriesNonConvergence(format!(
        "gamma2 for p = {p} did not reach tolerance {tol:e} within {max_terms} terms"
    )))
}
