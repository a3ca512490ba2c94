//! Recovering source and efficiency parameters from measured count rates.
//!
//! Given a pump power `p` and the measured singles `SC1`, `SC2` and
//! coincidences `CC`, [`invert_counts`] finds `(tau, eta1, eta2)` such that the
//! closed-form bucket-detector rates reproduce all three measurements. `tau` is
//! carried in 1/mW so that `x = p[mW] * tau`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector_model::{coincidence_probability, singles_probability};
use crate::error::{check_non_negative, check_positive, domain, Error, Result};
use crate::photon_statistics::{
    mean_pairs_per_pulse, one_pair_rate, pair_rate, EmissionProbability,
};

/// Planck constant, J s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Largest acceptable relative mismatch of any of the three equations.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Newton,
    Bisection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// Interaction constant in 1/mW.
    pub tau: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Emission probability `p * tau` at the solution.
    pub x: f64,
    /// Max relative mismatch of the three rate equations at the solution.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolverMethod,
}

/// Measured rates at one pump power, counts per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub power_mw: f64,
    pub sc1: f64,
    pub sc2: f64,
    pub cc: f64,
    /// Split-configuration counts, when they were measured.
    #[serde(default)]
    pub heralded: Option<HeraldedCounts>,
}

impl CountRecord {
    pub fn new(power_mw: f64, sc1: f64, sc2: f64, cc: f64) -> Self {
        Self {
            power_mw,
            sc1,
            sc2,
            cc,
            heralded: None,
        }
    }
}

/// Coincidences of the heralded-split configuration, counts per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldedCounts {
    pub cc12: f64,
    pub cc13: f64,
    pub cc123: f64,
}

/// One reconstructed row of the parameter table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOneRow {
    pub power_mw: f64,
    pub sc1: f64,
    pub sc2: f64,
    pub cc: f64,
    pub tau: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// All-pair generation rate, pairs/s.
    pub n_all: f64,
    /// One-pair generation rate, pairs/s.
    pub n_one: f64,
    /// Mean pairs per pulse.
    pub nbar: f64,
    pub residual: f64,
}

impl TableOneRow {
    pub fn x(&self) -> f64 {
        self.power_mw * self.tau
    }
}

/// A row that could not be inverted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for RowFailure {
    fn from(err: &Error) -> Self {
        let kind = match err {
            Error::Domain { .. } => "domain",
            Error::Divergent(_) => "divergent",
            Error::Inconsistent(_) => "inconsistent",
            Error::NoConvergence { .. } => "no-convergence",
            Error::Resource(_) => "resource",
        };
        Self {
            kind: kind.to_owned(),
            message: err.to_string(),
        }
    }
}

/// Input record together with its inversion outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub record: CountRecord,
    pub outcome: std::result::Result<TableOneRow, RowFailure>,
}

/// Low-power pair-rate estimate `SC1 * SC2 / CC`, which ignores multi-pair
/// emission and so undercounts at high pump power.
pub fn naive_pair_rate(sc1: f64, sc2: f64, cc: f64) -> Result<f64> {
    check_non_negative("sc1", sc1)?;
    check_non_negative("sc2", sc2)?;
    if cc <= 0.0 || !cc.is_finite() {
        return Err(domain("cc", cc, "(0, inf)"));
    }
    if cc > sc1.min(sc2) {
        return Err(Error::Inconsistent(format!(
            "coincidences {cc} exceed singles min({sc1}, {sc2})"
        )));
    }
    Ok(sc1 * sc2 / cc)
}

/// System detection efficiency from the count rate of an attenuated laser of
/// known power, `SC * h * c / (P * lambda)`.
pub fn sde_from_attenuated_laser(sc: f64, power_w: f64, wavelength_m: f64) -> Result<f64> {
    check_non_negative("single counts", sc)?;
    check_positive("optical power", power_w)?;
    check_positive("wavelength", wavelength_m)?;
    Ok(sc * PLANCK * SPEED_OF_LIGHT / (power_w * wavelength_m))
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Per-pulse measured fractions.
#[derive(Clone, Copy, Debug)]
struct Targets {
    s1: f64,
    s2: f64,
    c: f64,
}

impl Targets {
    fn residuals(&self, x: f64, eta1: f64, eta2: f64) -> Vector3<f64> {
        Vector3::new(
            singles_probability(x, eta1) / self.s1 - 1.0,
            singles_probability(x, eta2) / self.s2 - 1.0,
            coincidence_probability(x, eta1, eta2) / self.c - 1.0,
        )
    }

    /// Jacobian of the relative residuals with respect to
    /// `(logit eta1, logit eta2, logit x)`.
    fn jacobian(&self, x: f64, eta1: f64, eta2: f64) -> Matrix3<f64> {
        // G(q) = (1 - x) / (1 - q x); dG/dq = (1 - x) x / (1 - q x)^2,
        // dG/dx = (q - 1) / (1 - q x)^2.
        let dg_dq = |q: f64| {
            let d = 1.0 - q * x;
            (1.0 - x) * x / (d * d)
        };
        let dg_dx = |q: f64| {
            let d = 1.0 - q * x;
            (q - 1.0) / (d * d)
        };
        let (l1, l2) = (1.0 - eta1, 1.0 - eta2);
        let l12 = l1 * l2;

        // S = 1 - G(1 - eta); dS/deta = dG/dq, dS/dx = -dG/dx.
        let ds1_de1 = dg_dq(l1);
        let ds1_dx = -dg_dx(l1);
        let ds2_de2 = dg_dq(l2);
        let ds2_dx = -dg_dx(l2);
        // C = 1 - G(l1) - G(l2) + G(l1 l2)
        let dc_de1 = dg_dq(l1) - l2 * dg_dq(l12);
        let dc_de2 = dg_dq(l2) - l1 * dg_dq(l12);
        let dc_dx = -dg_dx(l1) - dg_dx(l2) + dg_dx(l12);

        let (j1, j2, jx) = (eta1 * (1.0 - eta1), eta2 * (1.0 - eta2), x * (1.0 - x));
        Matrix3::new(
            ds1_de1 * j1 / self.s1,
            0.0,
            ds1_dx * jx / self.s1,
            0.0,
            ds2_de2 * j2 / self.s2,
            ds2_dx * jx / self.s2,
            dc_de1 * j1 / self.c,
            dc_de2 * j2 / self.c,
            dc_dx * jx / self.c,
        )
    }

    /// Efficiency that reproduces singles fraction `s` exactly at emission
    /// probability `x`; valid for `x >= s`.
    fn eta_from_singles(x: f64, s: f64) -> f64 {
        // S = 1 - (1 - x) / (1 - (1 - eta) x), solved for eta
        1.0 - (1.0 - (1.0 - x) / (1.0 - s)) / x
    }
}

fn norm_inf(v: &Vector3<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, r| m.max(r.abs()))
}

/// Solve the three rate equations for `(tau, eta1, eta2)`.
pub fn invert_counts(
    rep_rate_hz: f64,
    power_mw: f64,
    sc1: f64,
    sc2: f64,
    cc: f64,
    config: &InversionConfig,
) -> Result<InversionResult> {
    check_positive("repetition rate", rep_rate_hz)?;
    check_positive("pump power", power_mw)?;
    check_positive("sc1", sc1)?;
    check_positive("sc2", sc2)?;
    check_positive("cc", cc)?;
    if cc > sc1.min(sc2) {
        return Err(Error::Inconsistent(format!(
            "coincidences {cc} exceed singles min({sc1}, {sc2})"
        )));
    }
    if sc1.max(sc2) >= rep_rate_hz {
        return Err(Error::Inconsistent(format!(
            "singles max({sc1}, {sc2}) reach the repetition rate {rep_rate_hz}"
        )));
    }
    let targets = Targets {
        s1: sc1 / rep_rate_hz,
        s2: sc2 / rep_rate_hz,
        c: cc / rep_rate_hz,
    };

    let (newton, newton_iters) = newton(&targets, config);
    let (x, eta1, eta2, iterations, method) = match newton {
        Some((x, e1, e2)) => (x, e1, e2, newton_iters, SolverMethod::Newton),
        None => {
            let (x, e1, e2, it) = bisection(&targets, config)?;
            (x, e1, e2, newton_iters + it, SolverMethod::Bisection)
        }
    };
    let residual = norm_inf(&targets.residuals(x, eta1, eta2));
    if residual.is_nan() || residual > config.tol {
        return Err(Error::NoConvergence {
            residual,
            iterations,
        });
    }
    Ok(InversionResult {
        tau: x / power_mw,
        eta1,
        eta2,
        x,
        residual,
        iterations,
        method,
    })
}

/// Damped Newton in logit coordinates, started from the low-power estimates.
/// Returns `None` if it stalls or leaves the tolerance unmet.
fn newton(t: &Targets, config: &InversionConfig) -> (Option<(f64, f64, f64)>, usize) {
    let clamp = |v: f64| v.clamp(1e-12, 1.0 - 1e-9);
    let mut theta = Vector3::new(
        logit(clamp(t.c / t.s2)),
        logit(clamp(t.c / t.s1)),
        logit(clamp(t.s1 * t.s2 / t.c)),
    );
    let unpack = |th: &Vector3<f64>| (logistic(th[2]), logistic(th[0]), logistic(th[1]));

    let (x, e1, e2) = unpack(&theta);
    let mut r = t.residuals(x, e1, e2);
    let mut norm = norm_inf(&r);
    for iter in 1..=config.max_iter {
        let (x, e1, e2) = unpack(&theta);
        let Some(step) = t.jacobian(x, e1, e2).lu().solve(&(-r)) else {
            return (None, iter);
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = theta + step * lambda;
            let (tx, te1, te2) = unpack(&trial);
            let tr = t.residuals(tx, te1, te2);
            let tn = norm_inf(&tr);
            if tn.is_finite() && tn < norm {
                accepted = Some((trial, tr, tn));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, tr, tn)) => {
                let moved = norm_inf(&(trial - theta));
                theta = trial;
                r = tr;
                norm = tn;
                // Polish to round-off once inside tolerance.
                if norm <= config.tol && (moved < 1e-13 || norm < 1e-15) {
                    return (Some(unpack(&theta)), iter);
                }
            }
            None => {
                return if norm <= config.tol {
                    (Some(unpack(&theta)), iter)
                } else {
                    (None, iter)
                };
            }
        }
    }
    if norm <= config.tol {
        (Some(unpack(&theta)), config.max_iter)
    } else {
        (None, config.max_iter)
    }
}

/// Fallback: for each `x` the singles fix both efficiencies exactly, leaving
/// a one-dimensional root in the coincidence equation.
fn bisection(t: &Targets, config: &InversionConfig) -> Result<(f64, f64, f64, usize)> {
    let effs = |x: f64| {
        (
            Targets::eta_from_singles(x, t.s1).clamp(0.0, 1.0),
            Targets::eta_from_singles(x, t.s2).clamp(0.0, 1.0),
        )
    };
    let mismatch = |x: f64| {
        let (e1, e2) = effs(x);
        coincidence_probability(x, e1, e2) / t.c - 1.0
    };
    let mut lo = t.s1.max(t.s2);
    let mut hi = 1.0 - 1e-15;
    let (f_lo, f_hi) = (mismatch(lo), mismatch(hi));
    if f_lo.signum() == f_hi.signum() {
        let residual = f_lo.abs().min(f_hi.abs());
        return Err(Error::NoConvergence {
            residual,
            iterations: config.max_iter,
        });
    }
    let mut iterations = 0;
    while iterations < config.max_iter.max(200) && hi - lo > f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if mismatch(mid).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let x = 0.5 * (lo + hi);
    let (e1, e2) = effs(x);
    Ok((x, e1, e2, iterations))
}

/// Invert one record and derive the rate columns.
pub fn invert_record(
    rep_rate_hz: f64,
    record: &CountRecord,
    config: &InversionConfig,
) -> Result<TableOneRow> {
    let inv = invert_counts(
        rep_rate_hz,
        record.power_mw,
        record.sc1,
        record.sc2,
        record.cc,
        config,
    )?;
    let x = EmissionProbability::new(inv.x)?;
    Ok(TableOneRow {
        power_mw: record.power_mw,
        sc1: record.sc1,
        sc2: record.sc2,
        cc: record.cc,
        tau: inv.tau,
        eta1: inv.eta1,
        eta2: inv.eta2,
        n_all: pair_rate(rep_rate_hz, x)?,
        n_one: one_pair_rate(rep_rate_hz, x)?,
        nbar: mean_pairs_per_pulse(x),
        residual: inv.residual,
    })
}

/// Invert every record independently; a failing row is annotated and the
/// others are still computed. Output order follows input order.
pub fn build_table(
    records: &[CountRecord],
    rep_rate_hz: f64,
    config: &InversionConfig,
) -> Vec<TableEntry> {
    records
        .par_iter()
        .map(|record| TableEntry {
            record: *record,
            outcome: invert_record(rep_rate_hz, record, config).map_err(|e| RowFailure::from(&e)),
        })
        .collect()
}

/// One-sigma uncertainties of the recovered parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionBands {
    pub tau: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// Linear propagation of Poissonian count errors (`sqrt(rate / T)` for an
/// integration time `T` seconds) through the inversion, by central
/// differences. The three counts are treated as independent.
pub fn poisson_bands(
    rep_rate_hz: f64,
    record: &CountRecord,
    integration_s: f64,
    config: &InversionConfig,
) -> Result<InversionBands> {
    check_positive("integration time", integration_s)?;
    let base = [record.sc1, record.sc2, record.cc];
    let solve = |v: [f64; 3]| invert_counts(rep_rate_hz, record.power_mw, v[0], v[1], v[2], config);
    let mut var = [0.0f64; 3];
    for i in 0..3 {
        let sigma = (base[i] / integration_s).sqrt();
        let h = (1e-4 * base[i]).min(sigma).max(f64::MIN_POSITIVE);
        let mut up = base;
        let mut down = base;
        up[i] += h;
        down[i] -= h;
        let (a, b) = (solve(up)?, solve(down)?);
        let grad = [
            (a.tau - b.tau) / (2.0 * h),
            (a.eta1 - b.eta1) / (2.0 * h),
            (a.eta2 - b.eta2) / (2.0 * h),
        ];
        for (v, g) in var.iter_mut().zip(grad) {
            *v += (g * sigma).powi(2);
        }
    }
    Ok(InversionBands {
        tau: var[0].sqrt(),
        eta1: var[1].sqrt(),
        eta2: var[2].sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector_model::{two_arm_rates, DetectorChain};

    const F: f64 = 76e6;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn inverts_ten_and_four_hundred_milliwatt_rows() {
        let cfg = InversionConfig::default();
        let low = invert_counts(F, 10.0, 223e3, 205e3, 45e3, &cfg).unwrap();
        assert!(rel(low.tau, 0.00135) < 0.02, "{low:?}");
        assert!(rel(low.eta1, 0.215) < 0.02);
        assert!(rel(low.eta2, 0.198) < 0.02);
        let high = invert_counts(F, 400.0, 5.626e6, 4.865e6, 1.170e6, &cfg).unwrap();
        assert!(rel(high.tau, 0.00098) < 0.02, "{high:?}");
        assert!(rel(high.eta1, 0.125) < 0.02);
        assert!(rel(high.eta2, 0.107) < 0.02);
        assert!(high.residual <= cfg.tol);
    }

    #[test]
    fn synthetic_round_trip() {
        let (tau, eta1, eta2, p) = (0.002, 0.3, 0.25, 50.0);
        let x = EmissionProbability::from_pump(p, tau).unwrap();
        let rates = two_arm_rates(F, x, &DetectorChain::two_arm(eta1, eta2).unwrap()).unwrap();
        let inv = invert_counts(
            F,
            p,
            rates.sc1,
            rates.sc2,
            rates.cc,
            &InversionConfig::default(),
        )
        .unwrap();
        assert!(rel(inv.tau, tau) < 1e-8);
        assert!(rel(inv.eta1, eta1) < 1e-8);
        assert!(rel(inv.eta2, eta2) < 1e-8);
    }

    #[test]
    fn reported_residual_is_the_actual_mismatch() {
        let cfg = InversionConfig::default();
        let inv = invert_counts(F, 100.0, 2025e3, 1800e3, 406e3, &cfg).unwrap();
        let x = EmissionProbability::new(inv.x).unwrap();
        let rates =
            two_arm_rates(F, x, &DetectorChain::two_arm(inv.eta1, inv.eta2).unwrap()).unwrap();
        let actual = [
            rel(rates.sc1, 2025e3),
            rel(rates.sc2, 1800e3),
            rel(rates.cc, 406e3),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        assert!((actual - inv.residual).abs() < 1e-15);
    }

    #[test]
    fn bisection_fallback_agrees_with_newton() {
        let cfg = InversionConfig::default();
        let t = Targets {
            s1: 2025e3 / F,
            s2: 1800e3 / F,
            c: 406e3 / F,
        };
        let (newton, _) = newton(&t, &cfg);
        let (nx, ne1, ne2) = newton.unwrap();
        let (bx, be1, be2, _) = bisection(&t, &cfg).unwrap();
        assert!(rel(bx, nx) < 1e-9);
        assert!(rel(be1, ne1) < 1e-9);
        assert!(rel(be2, ne2) < 1e-9);
    }

    #[test]
    fn rejects_inconsistent_counts() {
        let cfg = InversionConfig::default();
        let err = invert_counts(F, 10.0, 2e3, 3e3, 4e3, &cfg).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
        let err = invert_counts(F, 10.0, F, 3e3, 1e3, &cfg).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
        assert!(invert_counts(F, 10.0, 2e3, 3e3, 0.0, &cfg).is_err());
        assert!(invert_counts(F, 0.0, 2e3, 3e3, 1e3, &cfg).is_err());
    }

    #[test]
    fn perfect_detection_boundary_is_reachable() {
        // cc equal to a singles rate forces one efficiency to 1.
        let cfg = InversionConfig::default();
        let x = EmissionProbability::new(0.05).unwrap();
        let rates = two_arm_rates(F, x, &DetectorChain::two_arm(1.0, 0.4).unwrap()).unwrap();
        let inv = invert_counts(F, 10.0, rates.sc1, rates.sc2, rates.cc, &cfg);
        let inv = inv.unwrap();
        assert!(rel(inv.x, 0.05) < 1e-6, "{inv:?}");
        assert!(inv.eta1 > 1.0 - 1e-6);
    }

    #[test]
    fn naive_pair_rate_examples() {
        let n = naive_pair_rate(223e3, 205e3, 45e3).unwrap();
        assert!(rel(n, 1.016e6) < 1e-3);
        assert_eq!(naive_pair_rate(7.0, 7.0, 7.0).unwrap(), 7.0);
        assert!(matches!(
            naive_pair_rate(2.0, 2.0, 4.0),
            Err(Error::Inconsistent(_))
        ));
        assert!(naive_pair_rate(2.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn sde_examples() {
        let (p, lambda) = (2e-13, 1584e-9);
        let flux = p * lambda / (PLANCK * SPEED_OF_LIGHT);
        assert!((sde_from_attenuated_laser(flux, p, lambda).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sde_from_attenuated_laser(0.0, p, lambda).unwrap(), 0.0);
        let sde = sde_from_attenuated_laser(4.75e5, 1e-13, 1550e-9).unwrap();
        assert!((sde - 0.609).abs() < 1e-3, "{sde}");
        assert!(sde_from_attenuated_laser(1.0, 0.0, lambda).is_err());
        assert!(sde_from_attenuated_laser(1.0, p, -1.0).is_err());
    }

    #[test]
    fn build_table_isolates_bad_rows() {
        let records = vec![
            CountRecord::new(10.0, 223e3, 205e3, 45e3),
            CountRecord::new(20.0, 447e3, 405e3, 500e3),
            CountRecord::new(30.0, 657e3, 594e3, 136e3),
        ];
        let table = build_table(&records, F, &InversionConfig::default());
        assert_eq!(table.len(), 3);
        assert!(table[0].outcome.is_ok());
        assert_eq!(table[1].outcome.as_ref().unwrap_err().kind, "inconsistent");
        assert!(table[2].outcome.is_ok());
        assert_eq!(table[2].record.power_mw, 30.0);
        assert!(build_table(&[], F, &InversionConfig::default()).is_empty());
    }

    #[test]
    fn poisson_bands_shrink_with_integration_time() {
        let cfg = InversionConfig::default();
        let record = CountRecord::new(10.0, 223e3, 205e3, 45e3);
        let short = poisson_bands(F, &record, 1.0, &cfg).unwrap();
        let long = poisson_bands(F, &record, 100.0, &cfg).unwrap();
        assert!(short.tau > 0.0 && short.eta1 > 0.0);
        assert!((short.tau / long.tau - 10.0).abs() < 0.1);
    }
}
