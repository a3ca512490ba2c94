//! Photon-number distributions of a single-mode pulsed source.
//!
//! A pulsed SPDC source emits `n` pairs per pulse with the geometric law
//! `Pr(n) = (1 - x) x^n`, where `x = p * tau` is the emission probability
//! (pump power times interaction constant). Weak coherent light follows the
//! Poisson law instead. Every infinite sum downstream is truncated at an order
//! chosen from the analytic geometric tail, see [`truncation_order`].

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, domain, Error, Result};

/// Default bound on the discarded probability mass of a truncated series.
pub const DEFAULT_EPS_TRUNC: f64 = 1e-12;

/// Relative tolerance used when a closed form is compared with its series.
pub const EPS_NUM: f64 = 1e-10;

/// Hard cap on any truncation order; beyond it evaluation is refused.
pub const MAX_TRUNCATION_ORDER: usize = 10_000;

/// Pair-emission probability per pulse, `x = p * tau = gamma^2`, in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EmissionProbability(f64);

impl EmissionProbability {
    pub const ZERO: Self = Self(0.0);

    pub fn new(x: f64) -> Result<Self> {
        if (0.0..1.0).contains(&x) {
            Ok(Self(x))
        } else {
            Err(domain("x", x, "[0, 1)"))
        }
    }

    /// `x = p * tau` with the pump power in mW and `tau` in 1/mW.
    pub fn from_pump(power_mw: f64, tau: f64) -> Result<Self> {
        check_non_negative("pump power", power_mw)?;
        check_non_negative("tau", tau)?;
        Self::new(power_mw * tau)
    }

    /// The emission probability whose geometric law has the given mean,
    /// `x = mu / (1 + mu)`.
    pub fn from_mean(mean: f64) -> Result<Self> {
        check_non_negative("mean photon number", mean)?;
        Self::new(mean / (1.0 + mean))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Squeezing amplitude `gamma = sqrt(x)`.
    pub fn gamma(self) -> f64 {
        self.0.sqrt()
    }
}

impl TryFrom<f64> for EmissionProbability {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        Self::new(x)
    }
}

impl From<EmissionProbability> for f64 {
    fn from(x: EmissionProbability) -> f64 {
        x.0
    }
}

/// `Pr(n) = (1 - x) x^n`.
#[inline]
pub fn pair_probability(n: usize, x: EmissionProbability) -> f64 {
    let x = x.value();
    if n == 0 {
        return 1.0 - x;
    }
    (1.0 - x) * powu(x, n)
}

#[inline]
pub(crate) fn powu(base: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(n) => base.powi(n),
        Err(_) => base.powf(n as f64),
    }
}

/// Mean number of pairs per pulse, `x / (1 - x)`.
pub fn mean_pairs_per_pulse(x: EmissionProbability) -> f64 {
    let x = x.value();
    x / (1.0 - x)
}

/// The same mean evaluated as a truncated series, for cross-checks.
pub fn mean_pairs_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    let dist = PairDistribution::new(x, eps_trunc)?;
    Ok(dist.expectation(|n| n as f64))
}

/// All-pair generation rate `f * x / (1 - x)` in pairs per second.
pub fn pair_rate(rep_rate_hz: f64, x: EmissionProbability) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    Ok(rep_rate_hz * mean_pairs_per_pulse(x))
}

/// One-pair generation rate `f * (1 - x) * x` in pairs per second.
pub fn one_pair_rate(rep_rate_hz: f64, x: EmissionProbability) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    Ok(rep_rate_hz * pair_probability(1, x))
}

fn check_eps(eps_trunc: f64) -> Result<f64> {
    if eps_trunc > 0.0 && eps_trunc < 1.0 {
        Ok(eps_trunc)
    } else {
        Err(domain("eps_trunc", eps_trunc, "(0, 1)"))
    }
}

/// Smallest `n_max >= 1` whose geometric tail mass `x^(n_max + 1)` is at most
/// `eps_trunc`.
pub fn truncation_order(x: EmissionProbability, eps_trunc: f64) -> Result<usize> {
    check_eps(eps_trunc)?;
    let x = x.value();
    if x == 0.0 {
        return Ok(1);
    }
    let estimate = (eps_trunc.ln() / x.ln()).ceil() - 1.0;
    if !estimate.is_finite() || estimate > usize::MAX as f64 / 2.0 {
        return Err(Error::Resource(format!(
            "truncation order for x = {x} is unbounded"
        )));
    }
    let mut n = (estimate as usize).max(1);
    // ln/ceil can be off by one in either direction near integer boundaries.
    while x.powf((n + 1) as f64) > eps_trunc {
        n += 1;
    }
    while n > 1 && x.powf(n as f64) <= eps_trunc {
        n -= 1;
    }
    Ok(n)
}

/// Truncation order for a moment series `sum_n w(n) Pr(n)` whose weight grows
/// like `n^degree` and whose first non-vanishing term is at `n = leading`.
///
/// The tail is bounded relative to the leading term rather than absolutely, so
/// ratios of small moments stay accurate as `x -> 0`.
pub fn moment_truncation_order(
    x: EmissionProbability,
    eps_trunc: f64,
    leading: usize,
    degree: u32,
) -> Result<usize> {
    check_eps(eps_trunc)?;
    let x = x.value();
    let mut n = leading.max(1);
    if x == 0.0 {
        return Ok(n);
    }
    loop {
        let next = (n + 1) as f64;
        let ratio = ((next + 1.0) / next).powi(degree as i32) * x;
        if ratio < 1.0 {
            let bound = next.powi(degree as i32) * x.powf(next - leading as f64) / (1.0 - ratio);
            if bound <= eps_trunc {
                return Ok(n);
            }
        }
        n += 1;
        if n > MAX_TRUNCATION_ORDER {
            return Err(Error::Resource(format!(
                "moment series at x = {x} needs more than {MAX_TRUNCATION_ORDER} terms"
            )));
        }
    }
}

/// Truncated geometric pair-number distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDistribution {
    x: EmissionProbability,
    n_max: usize,
    tail_mass: f64,
}

impl PairDistribution {
    pub fn new(x: EmissionProbability, eps_trunc: f64) -> Result<Self> {
        let n_max = truncation_order(x, eps_trunc)?;
        Ok(Self::with_order(x, n_max))
    }

    pub fn with_order(x: EmissionProbability, n_max: usize) -> Self {
        let n_max = n_max.max(1);
        Self {
            x,
            n_max,
            tail_mass: powu(x.value(), n_max + 1),
        }
    }

    pub fn x(&self) -> EmissionProbability {
        self.x
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Probability mass beyond `n_max`, `x^(n_max + 1)`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn pmf(&self, n: usize) -> f64 {
        pair_probability(n, self.x)
    }

    /// `(n, Pr(n))` for `n = 0..=n_max`, built by recurrence.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let x = self.x.value();
        (0..=self.n_max).scan(1.0 - x, move |p, n| {
            let current = *p;
            *p *= x;
            Some((n, current))
        })
    }

    /// Truncated `sum_n weight(n) Pr(n)`.
    pub fn expectation(&self, weight: impl Fn(usize) -> f64) -> f64 {
        self.iter().map(|(n, p)| weight(n) * p).sum()
    }
}

/// Poisson photon-number law of a weak coherent pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentDistribution {
    mean: f64,
}

impl CoherentDistribution {
    pub fn new(mean: f64) -> Result<Self> {
        check_non_negative("mean photon number", mean)?;
        Ok(Self { mean })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `e^-nu nu^n / n!`, evaluated in log space.
    pub fn pmf(&self, n: usize) -> f64 {
        if self.mean == 0.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
        (n as f64 * self.mean.ln() - self.mean - ln_fact).exp()
    }

    /// Smallest `n_max >= 1` whose Poisson tail is at most `eps_trunc`.
    pub fn truncation_order(&self, eps_trunc: f64) -> Result<usize> {
        check_eps(eps_trunc)?;
        if self.mean == 0.0 {
            return Ok(1);
        }
        let ln_nu = self.mean.ln();
        // ln pmf(n + 1), advanced alongside n
        let mut ln_next = ln_nu - self.mean;
        let mut n = 0usize;
        loop {
            ln_next += ln_nu - ((n + 2) as f64).ln();
            n += 1;
            let ratio = self.mean / (n + 2) as f64;
            if ratio < 1.0 && ln_next.exp() / (1.0 - ratio) <= eps_trunc {
                return Ok(n);
            }
            if n > MAX_TRUNCATION_ORDER {
                return Err(Error::Resource(format!(
                    "Poisson series at mean {} needs more than {MAX_TRUNCATION_ORDER} terms",
                    self.mean
                )));
            }
        }
    }

    /// `(n, pmf(n))` for `n = 0..=n_max`.
    pub fn iter(&self, n_max: usize) -> impl Iterator<Item = (usize, f64)> {
        let nu = self.mean;
        (0..=n_max).scan(None::<f64>, move |ln_p, n| {
            let value = match *ln_p {
                None if nu == 0.0 => {
                    *ln_p = Some(f64::NEG_INFINITY);
                    return Some((n, 1.0));
                }
                None => -nu,
                Some(prev) => prev + nu.ln() - (n as f64).ln(),
            };
            *ln_p = Some(value);
            Some((n, value.exp()))
        })
    }

    /// Truncated `sum_n weight(n) pmf(n)`.
    pub fn expectation(&self, eps_trunc: f64, weight: impl Fn(usize) -> f64) -> Result<f64> {
        let n_max = self.truncation_order(eps_trunc)?;
        Ok(self.iter(n_max).map(|(n, p)| weight(n) * p).sum())
    }
}
