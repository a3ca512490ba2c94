//! Second- and third-order correlation functions at zero delay.
//!
//! With `g2 = <n(n-1)> / <n>^2` and `g3 = <n(n-1)(n-2)> / <n>^3`, the pair
//! source gives a family of values depending on which modes are looked at:
//!
//! | function | state | closed form |
//! |---|---|---|
//! | [`g2_unheralded`] | one arm (thermal) | `2` |
//! | [`g3_unheralded`] | one arm (thermal) | `6` |
//! | [`g2_heralded_ideal`] | signal after an ideal herald | `2x` |
//! | [`g2_signal_idler`] | both arms together | `1/(2x) + 3/2` |
//! | [`g3_signal_idler`] | both arms together | `6 + 3(1-x)/x` |
//!
//! Each has a truncated-series twin (`*_series`) used as an independent check.
//! [`g2_from_counts`] is the usual three-detector estimator, and
//! [`g2_heralded_predicted`] evaluates that estimator on the rates the
//! bucket-detector model predicts.

use serde::{Deserialize, Serialize};

use crate::detector_model::{split_coincidences, DetectorChain};
use crate::error::{check_non_negative, check_positive, domain, Error, Result};
use crate::inversion::TableEntry;
use crate::photon_statistics::{moment_truncation_order, EmissionProbability, PairDistribution};

/// Detector SDEs of the three-detector setup (herald, branch 2, branch 3).
pub const SDE_HERALD: f64 = 0.70;
pub const SDE_BRANCH2: f64 = 0.68;
pub const SDE_BRANCH3: f64 = 0.56;

/// How the signal-arm efficiency of the two-arm setup maps onto the two
/// branches behind the splitter. Branch `i` gets `eta_signal * eta{i}_scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSplit {
    pub eta2_scale: f64,
    pub eta3_scale: f64,
}

impl EtaSplit {
    /// Scale each branch by its detector SDE relative to the detector that
    /// measured the signal arm in the two-arm setup.
    pub fn from_sdes(signal: f64, branch2: f64, branch3: f64) -> Result<Self> {
        check_positive("signal SDE", signal)?;
        Ok(Self {
            eta2_scale: check_non_negative("branch 2 SDE", branch2)? / signal,
            eta3_scale: check_non_negative("branch 3 SDE", branch3)? / signal,
        })
    }

    pub fn with_eta3_scale(self, eta3_scale: f64) -> Self {
        Self { eta3_scale, ..self }
    }

    pub fn chain(&self, eta1: f64, eta_signal: f64) -> Result<DetectorChain> {
        DetectorChain::new(
            eta1,
            eta_signal * self.eta2_scale,
            eta_signal * self.eta3_scale,
        )
    }
}

impl Default for EtaSplit {
    fn default() -> Self {
        Self {
            eta2_scale: 1.0,
            eta3_scale: SDE_BRANCH3 / SDE_BRANCH2,
        }
    }
}

/// Three-detector estimator `2 SC1 CC123 / (CC12 + CC13)^2`.
///
/// The factor two compensates for the half of the two-photon events the
/// splitter sends to the same output.
pub fn g2_from_counts(sc1: f64, cc12: f64, cc13: f64, cc123: f64) -> Result<f64> {
    for (name, v) in [
        ("sc1", sc1),
        ("cc12", cc12),
        ("cc13", cc13),
        ("cc123", cc123),
    ] {
        check_non_negative(name, v)?;
    }
    let twofold = cc12 + cc13;
    if twofold == 0.0 {
        return Err(domain("cc12 + cc13", twofold, "(0, inf)"));
    }
    Ok(2.0 * sc1 * cc123 / (twofold * twofold))
}

/// [`g2_from_counts`] with a one-sigma Poissonian error for rates integrated
/// over `integration_s` seconds, treating the three inputs as independent.
pub fn g2_from_counts_with_error(
    sc1: f64,
    cc12: f64,
    cc13: f64,
    cc123: f64,
    integration_s: f64,
) -> Result<(f64, f64)> {
    check_positive("integration time", integration_s)?;
    let g = g2_from_counts(sc1, cc12, cc13, cc123)?;
    let twofold = cc12 + cc13;
    let d_sc1 = 2.0 * cc123 / (twofold * twofold);
    let d_cc123 = 2.0 * sc1 / (twofold * twofold);
    let d_twofold = -2.0 * g / twofold;
    let var = (d_sc1 * d_sc1 * sc1 + d_cc123 * d_cc123 * cc123 + d_twofold * d_twofold * twofold)
        / integration_s;
    Ok((g, var.sqrt()))
}

/// The three-detector estimator evaluated on model rates. The repetition rate
/// cancels.
pub fn g2_heralded_predicted(
    rep_rate_hz: f64,
    x: EmissionProbability,
    chain: &DetectorChain,
    eps_trunc: f64,
) -> Result<f64> {
    let rates = split_coincidences(rep_rate_hz, x, chain, eps_trunc)?;
    if rates.cc12 + rates.cc13 == 0.0 {
        return Err(Error::Divergent("predicted heralded g2"));
    }
    g2_from_counts(rates.sc1, rates.cc12, rates.cc13, rates.cc123)
}

/// `sum w_num(n) Pr(n) / (sum w_den(n) Pr(n))^power`, truncated relative to
/// the leading term of the numerator.
#[allow(clippy::too_many_arguments)]
fn series_ratio(
    x: EmissionProbability,
    eps_trunc: f64,
    leading: usize,
    degree: u32,
    numerator: impl Fn(f64) -> f64,
    denominator: impl Fn(f64) -> f64,
    power: i32,
    name: &'static str,
) -> Result<f64> {
    let n_max = moment_truncation_order(x, eps_trunc, leading, degree)?;
    let dist = PairDistribution::with_order(x, n_max);
    let (num, den) = dist.iter().fold((0.0, 0.0), |(a, b), (n, p)| {
        let n = n as f64;
        (a + numerator(n) * p, b + denominator(n) * p)
    });
    if den == 0.0 {
        return Err(Error::Divergent(name));
    }
    Ok(num / den.powi(power))
}

/// Unheralded single-arm `g2`; the reduced state is thermal, so this is 2 for
/// every `x`.
pub fn g2_unheralded(_x: EmissionProbability) -> f64 {
    2.0
}

pub fn g2_unheralded_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    series_ratio(
        x,
        eps_trunc,
        2,
        2,
        |n| n * (n - 1.0),
        |n| n,
        2,
        "unheralded g2",
    )
}

/// Unheralded single-arm `g3`, 6 for a thermal state.
pub fn g3_unheralded(x: EmissionProbability) -> Result<f64> {
    if x.value() == 0.0 {
        return Err(Error::Divergent("unheralded g3"));
    }
    Ok(6.0)
}

pub fn g3_unheralded_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    series_ratio(
        x,
        eps_trunc,
        3,
        3,
        |n| n * n * n - 3.0 * n * n + 2.0 * n,
        |n| n,
        3,
        "unheralded g3",
    )
}

/// Signal `g2` after an ideal herald has removed the vacuum: the signal holds
/// `n` photons with probability `Pr(n - 1)`. Equals `2x`.
pub fn g2_heralded_ideal(x: EmissionProbability) -> f64 {
    2.0 * x.value()
}

pub fn g2_heralded_ideal_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    // shift j = n - 1: sum (j + 1) j Pr(j) / (sum (j + 1) Pr(j))^2
    series_ratio(
        x,
        eps_trunc,
        1,
        2,
        |j| (j + 1.0) * j,
        |j| j + 1.0,
        2,
        "heralded g2",
    )
}

/// `g2` of signal and idler taken together (`2n` photons per pulse),
/// `1/(2x) + 3/2`.
pub fn g2_signal_idler(x: EmissionProbability) -> Result<f64> {
    let x = x.value();
    if x == 0.0 {
        return Err(Error::Divergent("signal-idler g2"));
    }
    Ok(0.5 / x + 1.5)
}

pub fn g2_signal_idler_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    series_ratio(
        x,
        eps_trunc,
        1,
        2,
        |n| 2.0 * n * (2.0 * n - 1.0),
        |n| 2.0 * n,
        2,
        "signal-idler g2",
    )
}

/// `g3` of signal and idler taken together, `6 + 3 (1 - x) / x`.
pub fn g3_signal_idler(x: EmissionProbability) -> Result<f64> {
    let x = x.value();
    if x == 0.0 {
        return Err(Error::Divergent("signal-idler g3"));
    }
    Ok(6.0 + 3.0 * (1.0 - x) / x)
}

pub fn g3_signal_idler_series(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    series_ratio(
        x,
        eps_trunc,
        2,
        3,
        |n| {
            let m = 2.0 * n;
            m * m * m - 3.0 * m * m + 2.0 * m
        },
        |n| 2.0 * n,
        3,
        "signal-idler g3",
    )
}

/// Signal-idler `g3` from the raw moments `(<N^3> - 3<N^2> + 2<N>) / <N>^3`.
pub fn g3_signal_idler_raw_moments(x: EmissionProbability, eps_trunc: f64) -> Result<f64> {
    let n_max = moment_truncation_order(x, eps_trunc, 1, 3)?;
    let dist = PairDistribution::with_order(x, n_max);
    let moment = |k: i32| dist.expectation(|n| (2.0 * n as f64).powi(k));
    let (m1, m2, m3) = (moment(1), moment(2), moment(3));
    if m1 == 0.0 {
        return Err(Error::Divergent("signal-idler g3"));
    }
    Ok((m3 - 3.0 * m2 + 2.0 * m1) / (m1 * m1 * m1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
    Measured,
}

/// One correlation value; `None` when it diverges or was not measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: Option<f64>,
    pub provenance: Provenance,
}

impl Correlation {
    fn analytic(value: Result<f64>) -> Self {
        Self {
            value: value.ok(),
            provenance: Provenance::Analytic,
        }
    }

    fn measured(value: Option<f64>) -> Self {
        Self {
            value,
            provenance: Provenance::Measured,
        }
    }
}

/// The seven correlation values for one pump power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub power_mw: f64,
    /// Emission probability from the inversion, if it succeeded.
    pub x: Option<f64>,
    pub g2_exp: Correlation,
    pub g2_exp2: Correlation,
    pub g2_sh: Correlation,
    pub g2_s: Correlation,
    pub g2_si: Correlation,
    pub g3_si: Correlation,
    pub g3_s: Correlation,
}

/// Correlation values for one inverted row.
pub fn correlation_report(
    entry: &TableEntry,
    rep_rate_hz: f64,
    split: &EtaSplit,
    eps_trunc: f64,
) -> CorrelationReport {
    let measured = entry
        .record
        .heralded
        .and_then(|h| g2_from_counts(entry.record.sc1, h.cc12, h.cc13, h.cc123).ok());
    let missing = Correlation::analytic(Err(Error::Divergent("not inverted")));
    let mut report = CorrelationReport {
        power_mw: entry.record.power_mw,
        x: None,
        g2_exp: Correlation::measured(measured),
        g2_exp2: missing,
        g2_sh: missing,
        g2_s: missing,
        g2_si: missing,
        g3_si: missing,
        g3_s: missing,
    };
    let Ok(row) = &entry.outcome else {
        return report;
    };
    let Ok(x) = EmissionProbability::new(row.x()) else {
        return report;
    };
    report.x = Some(x.value());
    let predicted = split
        .chain(row.eta1, row.eta2)
        .and_then(|chain| g2_heralded_predicted(rep_rate_hz, x, &chain, eps_trunc));
    report.g2_exp2 = Correlation::analytic(predicted);
    report.g2_sh = Correlation::analytic(Ok(g2_heralded_ideal(x)));
    report.g2_s = Correlation::analytic(Ok(g2_unheralded(x)));
    report.g2_si = Correlation::analytic(g2_signal_idler(x));
    report.g3_si = Correlation::analytic(g3_signal_idler(x));
    report.g3_s = Correlation::analytic(g3_unheralded(x));
    report
}

/// Correlation table for a sweep; rows are independent.
pub fn build_table_two(
    entries: &[TableEntry],
    rep_rate_hz: f64,
    split: &EtaSplit,
    eps_trunc: f64,
) -> Vec<CorrelationReport> {
    entries
        .iter()
        .map(|entry| correlation_report(entry, rep_rate_hz, split, eps_trunc))
        .collect()
}

/// Predicted heralded `g2` next to a measured estimator value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredComparison {
    pub power_mw: f64,
    pub measured: f64,
    /// Estimator evaluated on model rates.
    pub predicted: Option<f64>,
    /// Ideal-herald value `2x`.
    pub ideal: Option<f64>,
}

impl MeasuredComparison {
    pub fn new(power_mw: f64, measured: f64, report: Option<&CorrelationReport>) -> Self {
        Self {
            power_mw,
            measured,
            predicted: report.and_then(|r| r.g2_exp2.value),
            ideal: report.and_then(|r| r.g2_sh.value),
        }
    }
}
