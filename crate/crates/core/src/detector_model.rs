//! Click and coincidence rates of bucket detectors fed by a pulsed SPDC source.
//!
//! Two configurations are modelled. In the two-arm one the idler goes to
//! detector 1 and the signal to detector 2. In the heralded-split one the
//! signal is divided by a 50/50 fibre beamsplitter between detectors 2 and 3,
//! with the photon number in each output drawn binomially.
//!
//! Rates come in two flavours: closed forms obtained by summing the geometric
//! series analytically, and truncated series that follow the textbook sums term
//! by term. The closed forms are the production path for two-arm rates; the
//! split rates are evaluated from their series.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, domain, Error, Result};
use crate::photon_statistics::{
    moment_truncation_order, powu, CoherentDistribution, EmissionProbability, PairDistribution,
    MAX_TRUNCATION_ORDER,
};

/// Overall arm efficiency (coupling x transmission x detector SDE), in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Efficiency(f64);

impl Efficiency {
    pub const ZERO: Self = Self(0.0);
    pub const ONE: Self = Self(1.0);

    pub fn new(eta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&eta) {
            Ok(Self(eta))
        } else {
            Err(domain("eta", eta, "[0, 1]"))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Probability that a photon is lost, `1 - eta`.
    #[inline]
    pub fn loss(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Efficiency {
    type Error = Error;

    fn try_from(eta: f64) -> Result<Self> {
        Self::new(eta)
    }
}

impl From<Efficiency> for f64 {
    fn from(eta: Efficiency) -> f64 {
        eta.0
    }
}

/// Per-arm efficiencies. `eta1` is the idler (herald) arm. In the two-arm
/// configuration `eta2` is the signal arm; in the split configuration `eta2`
/// and `eta3` are the two beamsplitter branches, not including the 1/2 split
/// itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorChain {
    pub eta1: Efficiency,
    pub eta2: Efficiency,
    pub eta3: Efficiency,
}

impl DetectorChain {
    pub fn new(eta1: f64, eta2: f64, eta3: f64) -> Result<Self> {
        Ok(Self {
            eta1: Efficiency::new(eta1)?,
            eta2: Efficiency::new(eta2)?,
            eta3: Efficiency::new(eta3)?,
        })
    }

    pub fn two_arm(eta1: f64, eta2: f64) -> Result<Self> {
        Self::new(eta1, eta2, 0.0)
    }
}

/// Rates of the two-arm configuration, counts per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoArmRates {
    pub sc1: f64,
    pub sc2: f64,
    pub cc: f64,
}

/// Rates of the heralded-split configuration, counts per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRates {
    /// Herald singles.
    pub sc1: f64,
    pub cc12: f64,
    pub cc13: f64,
    pub cc123: f64,
}

/// Every rate the analytic model predicts for one source setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub two_arm: TwoArmRates,
    pub split: SplitRates,
}

/// `1 - (1 - eta)^n`: a bucket detector clicks if at least one photon is seen.
#[inline]
pub fn click_probability(n: usize, eta: Efficiency) -> f64 {
    1.0 - powu(eta.loss(), n)
}

/// Per-pulse click probability of a single arm, `E[1 - (1 - eta)^n]`
/// `= x eta / (1 - x (1 - eta))`.
pub(crate) fn singles_probability(x: f64, eta: f64) -> f64 {
    x * eta / (1.0 - x * (1.0 - eta))
}

/// Per-pulse probability that both arms click.
///
/// Inclusion-exclusion over the generating function cancels catastrophically
/// when `x eta1 eta2` is small; this is the same expression over a common
/// denominator.
pub(crate) fn coincidence_probability(x: f64, eta1: f64, eta2: f64) -> f64 {
    let (l1, l2) = (1.0 - eta1, 1.0 - eta2);
    x * eta1 * eta2 * (1.0 - x * x * l1 * l2)
        / ((1.0 - x * l1) * (1.0 - x * l2) * (1.0 - x * l1 * l2))
}

/// Singles rate of one arm in counts per second (closed form).
pub fn singles_rate(rep_rate_hz: f64, x: EmissionProbability, eta: Efficiency) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    Ok(rep_rate_hz * singles_probability(x.value(), eta.value()))
}

/// Singles rate by direct summation of the series.
pub fn singles_rate_series(
    rep_rate_hz: f64,
    x: EmissionProbability,
    eta: Efficiency,
    eps_trunc: f64,
) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    // click_probability(n) <= n eta, so the tail is bounded against x eta.
    let dist = PairDistribution::with_order(x, moment_truncation_order(x, eps_trunc, 1, 1)?);
    Ok(rep_rate_hz * dist.expectation(|n| click_probability(n, eta)))
}

/// Two-fold coincidence rate between idler and signal arms (closed form).
pub fn coincidence_rate(
    rep_rate_hz: f64,
    x: EmissionProbability,
    eta1: Efficiency,
    eta2: Efficiency,
) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    Ok(rep_rate_hz * coincidence_probability(x.value(), eta1.value(), eta2.value()))
}

/// Two-fold coincidence rate by direct summation of the series.
pub fn coincidence_rate_series(
    rep_rate_hz: f64,
    x: EmissionProbability,
    eta1: Efficiency,
    eta2: Efficiency,
    eps_trunc: f64,
) -> Result<f64> {
    check_positive("repetition rate", rep_rate_hz)?;
    let dist = PairDistribution::with_order(x, moment_truncation_order(x, eps_trunc, 1, 2)?);
    Ok(rep_rate_hz * dist.expectation(|n| click_probability(n, eta1) * click_probability(n, eta2)))
}

/// Singles and coincidences of the two-arm configuration (`eta3` unused).
pub fn two_arm_rates(
    rep_rate_hz: f64,
    x: EmissionProbability,
    chain: &DetectorChain,
) -> Result<TwoArmRates> {
    Ok(TwoArmRates {
        sc1: singles_rate(rep_rate_hz, x, chain.eta1)?,
        sc2: singles_rate(rep_rate_hz, x, chain.eta2)?,
        cc: coincidence_rate(rep_rate_hz, x, chain.eta1, chain.eta2)?,
    })
}

/// Binomial weights `C(n, k) / 2^n` for `k = 0..=n`.
///
/// Small `n` uses the multiplicative recurrence; above 60 the weights are
/// formed in log space so that neither `C(n, k)` nor `2^n` overflows.
pub(crate) fn half_binomial_weights(n: usize) -> Vec<f64> {
    if n <= 60 {
        let mut weights = Vec::with_capacity(n + 1);
        let mut w = powu(0.5, n);
        for k in 0..=n {
            weights.push(w);
            w *= (n - k) as f64 / (k + 1) as f64;
        }
        weights
    } else {
        let ln_fact = ln_factorials(n);
        let ln_half_n = n as f64 * std::f64::consts::LN_2;
        (0..=n)
            .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k] - ln_half_n).exp())
            .collect()
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Herald singles and the two-fold and three-fold coincidences behind a 50/50
/// split of the signal arm, summed term by term.
///
/// For `n` pairs the idler clicks with `1 - (1 - eta1)^n`; `k` of the `n`
/// signal photons go to detector 3 with probability `C(n, k) / 2^n`, the rest
/// to detector 2.
pub fn split_coincidences(
    rep_rate_hz: f64,
    x: EmissionProbability,
    chain: &DetectorChain,
    eps_trunc: f64,
) -> Result<SplitRates> {
    check_positive("repetition rate", rep_rate_hz)?;
    // Three-folds start at n = 2 and carry weights up to degree 3 in n.
    let n_max = moment_truncation_order(x, eps_trunc, 2, 3)?;
    if n_max > MAX_TRUNCATION_ORDER {
        return Err(Error::Resource(format!(
            "split series needs {n_max} terms, cap is {MAX_TRUNCATION_ORDER}"
        )));
    }
    let dist = PairDistribution::with_order(x, n_max);
    let (eta1, eta2, eta3) = (chain.eta1, chain.eta2, chain.eta3);

    let mut sc1 = 0.0;
    let mut cc12 = 0.0;
    let mut cc13 = 0.0;
    let mut cc123 = 0.0;
    for (n, pr) in dist.iter().skip(1) {
        let herald = pr * click_probability(n, eta1);
        let weights = half_binomial_weights(n);
        let mut branch2 = 0.0;
        let mut branch3 = 0.0;
        let mut both = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let d2 = click_probability(n - k, eta2);
            let d3 = click_probability(k, eta3);
            branch2 += w * d2;
            branch3 += w * d3;
            both += w * d2 * d3;
        }
        sc1 += herald;
        cc12 += herald * branch2;
        cc13 += herald * branch3;
        cc123 += herald * both;
    }
    Ok(SplitRates {
        sc1: rep_rate_hz * sc1,
        cc12: rep_rate_hz * cc12,
        cc13: rep_rate_hz * cc13,
        cc123: rep_rate_hz * cc123,
    })
}

/// First difference `k(0) - k(d)` of `k(t) = 1 / (1 - c + c t)`.
fn pgf_step(c: f64, d: f64) -> f64 {
    let a = 1.0 - c;
    c * d / (a * (a + c * d))
}

/// Second difference `k(0) - k(d) - k(e) + k(d + e)` of the same `k`.
fn pgf_step2(c: f64, d: f64, e: f64) -> f64 {
    let a = 1.0 - c;
    c * c * d * e * (2.0 * a + c * d + c * e)
        / (a * (a + c * d) * (a + c * e) * (a + c * d + c * e))
}

/// Closed form of [`split_coincidences`].
///
/// Averaging over the binomial split turns a branch click into
/// `1 - (1 - eta/2)^n`, and a double click into
/// `1 - a^n - b^n + ((l2 + l3) / 2)^n` with `a = (1 + l2) / 2`,
/// `b = (1 + l3) / 2`, `l = 1 - eta`. Summed against the geometric law each
/// term becomes a finite difference of `1 / (1 - q x)`, evaluated here without
/// subtracting nearly equal numbers.
pub fn split_coincidences_closed(
    rep_rate_hz: f64,
    x: EmissionProbability,
    chain: &DetectorChain,
) -> Result<SplitRates> {
    check_positive("repetition rate", rep_rate_hz)?;
    let x = x.value();
    let (e1, l1) = (chain.eta1.value(), chain.eta1.loss());
    let d2 = 0.5 * chain.eta2.value();
    let d3 = 0.5 * chain.eta3.value();
    let (c, cl) = (x, x * l1);
    let g = 1.0 - x;
    Ok(SplitRates {
        sc1: rep_rate_hz * singles_probability(x, e1),
        cc12: rep_rate_hz * g * (pgf_step(c, d2) - pgf_step(cl, d2)),
        cc13: rep_rate_hz * g * (pgf_step(c, d3) - pgf_step(cl, d3)),
        cc123: rep_rate_hz * g * (pgf_step2(c, d2, d3) - pgf_step2(cl, d2, d3)),
    })
}

/// All analytic rates for one source setting.
pub fn predict_rates(
    rep_rate_hz: f64,
    x: EmissionProbability,
    chain: &DetectorChain,
    eps_trunc: f64,
) -> Result<RatePrediction> {
    Ok(RatePrediction {
        two_arm: two_arm_rates(rep_rate_hz, x, chain)?,
        split: split_coincidences(rep_rate_hz, x, chain, eps_trunc)?,
    })
}

/// Photon statistics of the light hitting a lone detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Geometric law, one arm of an SPDC source.
    Thermal,
    /// Poisson law, attenuated laser.
    Coherent,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Thermal => "thermal",
            SourceKind::Coherent => "coherent",
        }
    }
}

/// What a single-detector response curve reports per pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveVariant {
    /// Click probability `E[1 - (1 - eta)^n]`; never exceeds one.
    Click,
    /// Photon-weighted sum `E[n (1 - (1 - eta)^n)]`, kept for comparison with
    /// the formulas as usually printed.
    Literal,
}

impl CurveVariant {
    pub fn name(self) -> &'static str {
        match self {
            CurveVariant::Click => "click",
            CurveVariant::Literal => "literal",
        }
    }
}

/// Detected output per pulse for a source with the given mean photon number
/// per pulse (closed form).
///
/// Click variant: coherent `1 - e^(-eta nu)`, thermal `1 - 1/(1 + eta mu)`.
/// Literal variant: coherent `nu - (1 - eta) nu e^(-eta nu)`, thermal
/// `mu - (1 - x) q x / (1 - q x)^2` with `q = 1 - eta`, `x = mu / (1 + mu)`.
pub fn detected_vs_incident(
    kind: SourceKind,
    mean: f64,
    eta: Efficiency,
    variant: CurveVariant,
) -> Result<f64> {
    check_non_negative("mean photon number", mean)?;
    let e = eta.value();
    let q = eta.loss();
    let value = match (kind, variant) {
        (SourceKind::Coherent, CurveVariant::Click) => -(-e * mean).exp_m1(),
        (SourceKind::Thermal, CurveVariant::Click) => e * mean / (1.0 + e * mean),
        (SourceKind::Coherent, CurveVariant::Literal) => mean - q * mean * (-e * mean).exp(),
        (SourceKind::Thermal, CurveVariant::Literal) => {
            let x = mean / (1.0 + mean);
            let denom = 1.0 - q * x;
            mean - (1.0 - x) * q * x / (denom * denom)
        }
    };
    Ok(value)
}

/// [`detected_vs_incident`] by truncated summation over the photon-number law.
pub fn detected_vs_incident_series(
    kind: SourceKind,
    mean: f64,
    eta: Efficiency,
    variant: CurveVariant,
    eps_trunc: f64,
) -> Result<f64> {
    check_non_negative("mean photon number", mean)?;
    let weight = |n: usize| {
        let click = click_probability(n, eta);
        match variant {
            CurveVariant::Click => click,
            CurveVariant::Literal => n as f64 * click,
        }
    };
    match kind {
        SourceKind::Coherent => CoherentDistribution::new(mean)?.expectation(eps_trunc, weight),
        SourceKind::Thermal => {
            let x = EmissionProbability::from_mean(mean)?;
            let degree = match variant {
                CurveVariant::Click => 0,
                CurveVariant::Literal => 1,
            };
            let n_max = moment_truncation_order(x, eps_trunc, 1, degree)?;
            Ok(PairDistribution::with_order(x, n_max).expectation(weight))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_statistics::{DEFAULT_EPS_TRUNC, EPS_NUM};
    use proptest::prelude::*;

    const F: f64 = 76e6;

    fn x(v: f64) -> EmissionProbability {
        EmissionProbability::new(v).unwrap()
    }

    fn eta(v: f64) -> Efficiency {
        Efficiency::new(v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / b.abs().max(a.abs())
        }
    }

    #[test]
    fn click_probability_examples() {
        assert_eq!(click_probability(0, eta(0.7)), 0.0);
        assert!((click_probability(1, eta(0.215)) - 0.215).abs() < 1e-15);
        assert_eq!(click_probability(3, eta(0.5)), 0.875);
        assert!(Efficiency::new(1.2).is_err());
        assert!(Efficiency::new(-0.1).is_err());
    }

    #[test]
    fn singles_against_table_one() {
        let low = x(10.0 * 0.00135);
        let sc1 = singles_rate(F, low, eta(0.215)).unwrap();
        let sc2 = singles_rate(F, low, eta(0.198)).unwrap();
        assert!(rel(sc1, 223e3) < 0.02, "{sc1}");
        assert!(rel(sc2, 205e3) < 0.02, "{sc2}");
        assert_eq!(singles_rate(F, low, Efficiency::ZERO).unwrap(), 0.0);
    }

    #[test]
    fn coincidences_against_table_one() {
        let low = x(10.0 * 0.00135);
        let high = x(400.0 * 0.00098);
        let cc_low = coincidence_rate(F, low, eta(0.215), eta(0.198)).unwrap();
        let cc_high = coincidence_rate(F, high, eta(0.125), eta(0.107)).unwrap();
        assert!(rel(cc_low, 45e3) < 0.03, "{cc_low}");
        assert!(rel(cc_high, 1.17e6) < 0.03, "{cc_high}");
        assert_eq!(
            coincidence_rate(F, high, Efficiency::ZERO, eta(0.3)).unwrap(),
            0.0
        );
    }

    #[test]
    fn dead_branch_kills_threefolds() {
        let chain = DetectorChain::new(0.2, 0.0, 0.3).unwrap();
        let rates = split_coincidences(F, x(0.1), &chain, DEFAULT_EPS_TRUNC).unwrap();
        assert_eq!(rates.cc123, 0.0);
        let chain = DetectorChain::new(0.2, 0.3, 0.0).unwrap();
        let rates = split_coincidences(F, x(0.1), &chain, DEFAULT_EPS_TRUNC).unwrap();
        assert_eq!(rates.cc123, 0.0);
    }

    #[test]
    fn heralded_split_consistency_at_ten_milliwatt() {
        // Branch efficiencies from the signal arm scaled by the detector SDEs.
        let eta2 = 0.198;
        let eta3 = 0.198 * 0.56 / 0.68;
        let chain = DetectorChain::new(0.215, eta2, eta3).unwrap();
        let rates = split_coincidences(F, x(0.0135), &chain, DEFAULT_EPS_TRUNC).unwrap();
        // 2 * 77 * 223e3 / 0.021 back-solved for cc12 + cc13
        let back_solved = (2.0 * 77.0 * 223e3 / 0.021f64).sqrt();
        let sum = rates.cc12 + rates.cc13;
        assert!(rel(sum, back_solved) < 0.2, "{sum} vs {back_solved}");
        assert!(rates.cc123 <= rates.cc12.min(rates.cc13));
        assert!(rates.cc12.max(rates.cc13) <= rates.sc1);
    }

    #[test]
    fn small_branch_efficiency_limit() {
        // Branch clicks linearise to eta * photons, and E[k (n - k)] = n (n - 1) / 4.
        let xv = 0.0135;
        let (eta1, small) = (eta(0.215), 1e-4);
        let chain = DetectorChain::new(0.215, small, small).unwrap();
        let cc123 = split_coincidences(F, x(xv), &chain, DEFAULT_EPS_TRUNC)
            .unwrap()
            .cc123;
        let oracle: f64 = (2..200)
            .map(|n| {
                let nf = n as f64;
                (1.0 - xv)
                    * xv.powi(n)
                    * click_probability(n as usize, eta1)
                    * small
                    * small
                    * nf
                    * (nf - 1.0)
                    / 4.0
            })
            .sum();
        assert!(rel(cc123 / F, oracle) < 0.01, "{} vs {oracle}", cc123 / F);
    }

    #[test]
    fn split_series_matches_closed_form() {
        for &xv in &[1e-4, 0.0135, 0.128, 0.392, 0.7] {
            for &(a, b, c) in &[(0.215, 0.198, 0.163), (0.9, 0.5, 0.05), (1.0, 1.0, 1.0)] {
                let chain = DetectorChain::new(a, b, c).unwrap();
                let s = split_coincidences(F, x(xv), &chain, DEFAULT_EPS_TRUNC).unwrap();
                let k = split_coincidences_closed(F, x(xv), &chain).unwrap();
                for (u, v) in [
                    (s.sc1, k.sc1),
                    (s.cc12, k.cc12),
                    (s.cc13, k.cc13),
                    (s.cc123, k.cc123),
                ] {
                    assert!(rel(u, v) < 1e-9, "x={xv} chain={chain:?}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn log_space_binomial_weights_match_recurrence_and_sum_to_one() {
        let small = half_binomial_weights(60);
        assert!((small.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let large = half_binomial_weights(61);
        assert!((large.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // C(61, k) = C(60, k) + C(60, k - 1), halved
        for k in 1..61 {
            let expected = 0.5 * (small[k] + small[k - 1]);
            assert!(rel(large[k], expected) < 1e-12);
        }
        let huge = half_binomial_weights(1500);
        assert!((huge.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_refuses_unbounded_series() {
        let chain = DetectorChain::new(0.5, 0.5, 0.5).unwrap();
        let err = split_coincidences(F, x(0.99999), &chain, 1e-12).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn response_curve_examples() {
        for variant in [CurveVariant::Click, CurveVariant::Literal] {
            assert_eq!(
                detected_vs_incident(SourceKind::Thermal, 0.0, eta(0.5), variant).unwrap(),
                0.0
            );
        }
        let coherent =
            detected_vs_incident(SourceKind::Coherent, 2.0, eta(0.8), CurveVariant::Click).unwrap();
        let thermal =
            detected_vs_incident(SourceKind::Thermal, 2.0, eta(0.8), CurveVariant::Click).unwrap();
        assert!((coherent - (1.0 - (-1.6f64).exp())).abs() < 1e-15);
        assert!((coherent - 0.7981).abs() < 1e-4);
        assert!((thermal - (1.0 - 1.0 / 2.6)).abs() < 1e-15);
        assert!((thermal - 0.6154).abs() < 1e-4);
        assert!(
            detected_vs_incident(SourceKind::Thermal, -1.0, eta(0.5), CurveVariant::Click).is_err()
        );
    }

    #[test]
    fn response_closed_forms_match_series() {
        for kind in [SourceKind::Thermal, SourceKind::Coherent] {
            for variant in [CurveVariant::Click, CurveVariant::Literal] {
                for &mean in &[1e-3, 0.1, 2.0, 10.0, 50.0] {
                    for &e in &[0.01, 0.5, 1.0] {
                        let closed = detected_vs_incident(kind, mean, eta(e), variant).unwrap();
                        let series =
                            detected_vs_incident_series(kind, mean, eta(e), variant, 1e-14)
                                .unwrap();
                        assert!(
                            rel(closed, series) < 1e-9,
                            "{kind:?} {variant:?} mean={mean} eta={e}: {closed} vs {series}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn closed_forms_match_series_on_grid() {
        let xs = [1e-4, 1e-3, 0.0135, 0.1, 0.3, 0.5];
        let etas = [0.01, 0.1, 0.3, 0.6, 0.99];
        for &xv in &xs {
            for &a in &etas {
                let s = singles_rate(F, x(xv), eta(a)).unwrap();
                let ss = singles_rate_series(F, x(xv), eta(a), DEFAULT_EPS_TRUNC).unwrap();
                assert!(rel(s, ss) < EPS_NUM, "singles x={xv} eta={a}");
                for &b in &etas {
                    let c = coincidence_rate(F, x(xv), eta(a), eta(b)).unwrap();
                    let cs = coincidence_rate_series(F, x(xv), eta(a), eta(b), DEFAULT_EPS_TRUNC)
                        .unwrap();
                    assert!(rel(c, cs) < EPS_NUM, "cc x={xv} eta=({a},{b}): {c} vs {cs}");
                }
            }
        }
    }

    #[test]
    fn small_eta_singles_are_linear() {
        let xv = 0.2;
        let e = 1e-5;
        let s = singles_rate(F, x(xv), eta(e)).unwrap();
        let linear = F * xv / (1.0 - xv);
        assert!(rel(s / e, linear) < 1e-3);
    }

    proptest! {
        #[test]
        fn coincidences_never_exceed_singles(
            xv in 0.0f64..0.95, a in 0.0f64..=1.0, b in 0.0f64..=1.0,
        ) {
            let cc = coincidence_rate(F, x(xv), eta(a), eta(b)).unwrap();
            let s1 = singles_rate(F, x(xv), eta(a)).unwrap();
            let s2 = singles_rate(F, x(xv), eta(b)).unwrap();
            prop_assert!(cc >= 0.0);
            prop_assert!(cc <= s1.min(s2) * (1.0 + 1e-12));
            prop_assert!(s1 <= F);
        }

        #[test]
        fn threefolds_never_exceed_twofolds(
            xv in 0.0f64..0.8, a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0,
        ) {
            let chain = DetectorChain::new(a, b, c).unwrap();
            let r = split_coincidences(F, x(xv), &chain, DEFAULT_EPS_TRUNC).unwrap();
            prop_assert!(r.cc123 <= r.cc12.min(r.cc13) * (1.0 + 1e-12) + 1e-300);
            prop_assert!(r.cc12.max(r.cc13) <= r.sc1 * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn coherent_clicks_dominate_thermal(mean in 1e-6f64..100.0, e in 1e-3f64..=1.0) {
            let c = detected_vs_incident(SourceKind::Coherent, mean, eta(e), CurveVariant::Click).unwrap();
            let t = detected_vs_incident(SourceKind::Thermal, mean, eta(e), CurveVariant::Click).unwrap();
            prop_assert!(c > t);
        }
    }
}
