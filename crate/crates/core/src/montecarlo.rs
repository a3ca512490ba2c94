//! Pulse-by-pulse Monte Carlo of the source and detectors.
//!
//! Each pulse draws a pair number from the geometric law (or a photon number
//! from the Poisson law), routes every photon through the fibre splitter with a
//! fair coin where applicable, and thins it with the arm efficiency. A detector
//! clicks if any photon survives. Nothing here evaluates the analytic click
//! formulas, so the tallies are an independent check on them.
//!
//! Every pulse owns its random stream, keyed by `(seed, pulse index)`. Results
//! therefore depend on neither the chunking nor the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::g2_heralded_predicted;
use crate::detector_model::{
    detected_vs_incident, split_coincidences, two_arm_rates, CurveVariant, DetectorChain,
    SourceKind,
};
use crate::error::{Error, Result};
use crate::photon_statistics::EmissionProbability;

/// Largest pulse count whose tallies convert to `f64` without rounding.
pub const MAX_PULSES: u64 = 1 << 53;

/// Which experiment is simulated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SimMode {
    /// Idler to detector 1, signal to detector 2.
    TwoArm,
    /// Idler to detector 1, signal split 50/50 between detectors 2 and 3.
    HeraldedSplit,
    /// A single detector (efficiency `eta1`) looking at thermal or coherent
    /// light with the given mean photon number per pulse.
    Saturation { source: SourceKind, mean: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub pulses: u64,
    pub seed: u64,
    pub x: EmissionProbability,
    pub chain: DetectorChain,
    pub mode: SimMode,
    /// Pulses per work unit; does not affect the result.
    pub chunk_pulses: u64,
}

impl SimConfig {
    pub fn new(
        pulses: u64,
        seed: u64,
        x: EmissionProbability,
        chain: DetectorChain,
        mode: SimMode,
    ) -> Self {
        Self {
            pulses,
            seed,
            x,
            chain,
            mode,
            chunk_pulses: 1 << 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::Domain {
                name: "pulses",
                value: 0.0,
                domain: "[1, 2^53]",
            });
        }
        if self.pulses > MAX_PULSES {
            return Err(Error::Resource(format!(
                "{} pulses exceed the exact tally range of {MAX_PULSES}",
                self.pulses
            )));
        }
        if self.chunk_pulses == 0 {
            return Err(Error::Domain {
                name: "chunk_pulses",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        if let SimMode::Saturation { mean, .. } = self.mode {
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::Domain {
                    name: "mean photon number",
                    value: mean,
                    domain: "[0, inf)",
                });
            }
        }
        Ok(())
    }
}

/// Integer tallies of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCounts {
    pub pulses: u64,
    pub clicks1: u64,
    pub clicks2: u64,
    pub clicks3: u64,
    pub pair12: u64,
    pub pair13: u64,
    pub triple123: u64,
}

impl SimCounts {
    fn merge(self, other: Self) -> Self {
        Self {
            pulses: self.pulses + other.pulses,
            clicks1: self.clicks1 + other.clicks1,
            clicks2: self.clicks2 + other.clicks2,
            clicks3: self.clicks3 + other.clicks3,
            pair12: self.pair12 + other.pair12,
            pair13: self.pair13 + other.pair13,
            triple123: self.triple123 + other.triple123,
        }
    }

    /// Per-pulse probability estimate of a tally with its binomial standard
    /// error.
    pub fn fraction(&self, tally: u64) -> Estimate {
        let n = self.pulses as f64;
        let p = tally as f64 / n;
        Estimate {
            value: p,
            std_err: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// Three-detector `g2` estimate with a delta-method standard error.
    ///
    /// Herald, two-fold and three-fold indicators are nested (a three-fold
    /// implies both two-folds, each two-fold implies a herald), so their joint
    /// second moments follow from the tallies alone.
    pub fn g2_estimate(&self) -> Option<Estimate> {
        let n = self.pulses as f64;
        let s = self.clicks1 as f64 / n;
        let a = self.pair12 as f64 / n;
        let b = self.pair13 as f64 / n;
        let t = self.triple123 as f64 / n;
        let d = a + b;
        if d == 0.0 || s == 0.0 {
            return None;
        }
        let g = 2.0 * s * t / (d * d);
        let means = [s, a, b, t];
        // E[XY] for X, Y in (herald, cc12, cc13, cc123)
        let joint = [[s, a, b, t], [a, a, t, t], [b, t, b, t], [t, t, t, t]];
        let grad = [
            2.0 * t / (d * d),
            -2.0 * g / d,
            -2.0 * g / d,
            2.0 * s / (d * d),
        ];
        let mut var = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                var += grad[i] * grad[j] * (joint[i][j] - means[i] * means[j]);
            }
        }
        Some(Estimate {
            value: g,
            std_err: (var.max(0.0) / n).sqrt(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// Random stream of one pulse.
pub fn pulse_rng(seed: u64, pulse: u64) -> Xoshiro256PlusPlus {
    // seed_from_u64 runs the key through SplitMix64, so neighbouring indices
    // give unrelated states; the odd multiplier keeps the key map injective.
    Xoshiro256PlusPlus::seed_from_u64(seed ^ pulse.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Inverse-CDF draw from `Pr(n) = (1 - x) x^n`: `floor(ln u / ln x)`.
pub fn geometric_sampler<R: Rng + ?Sized>(x: EmissionProbability, rng: &mut R) -> u64 {
    let x = x.value();
    if x == 0.0 {
        return 0;
    }
    // 1 - [0, 1) lies in (0, 1], so the log is finite.
    let u = 1.0 - rng.random::<f64>();
    let n = (u.ln() / x.ln()).floor();
    if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        n as u64
    }
}

/// Does at least one of `photons` photons survive thinning with `eta`?
#[inline]
fn any_detected<R: Rng + ?Sized>(photons: u64, eta: f64, rng: &mut R) -> bool {
    (0..photons).any(|_| rng.random::<f64>() < eta)
}

#[derive(Clone, Copy)]
enum PhotonSource {
    Pairs(EmissionProbability),
    Poisson(Option<Poisson<f64>>),
}

impl PhotonSource {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            PhotonSource::Pairs(x) => geometric_sampler(*x, rng),
            PhotonSource::Poisson(None) => 0,
            PhotonSource::Poisson(Some(d)) => d.sample(rng) as u64,
        }
    }
}

fn simulate_pulse(config: &SimConfig, source: &PhotonSource, pulse: u64, tally: &mut SimCounts) {
    let mut rng = pulse_rng(config.seed, pulse);
    let n = source.draw(&mut rng);
    tally.pulses += 1;
    if n == 0 {
        return;
    }
    let (e1, e2, e3) = (
        config.chain.eta1.value(),
        config.chain.eta2.value(),
        config.chain.eta3.value(),
    );
    match config.mode {
        SimMode::Saturation { .. } => {
            tally.clicks1 += any_detected(n, e1, &mut rng) as u64;
        }
        SimMode::TwoArm => {
            let d1 = any_detected(n, e1, &mut rng);
            let d2 = any_detected(n, e2, &mut rng);
            tally.clicks1 += d1 as u64;
            tally.clicks2 += d2 as u64;
            tally.pair12 += (d1 && d2) as u64;
        }
        SimMode::HeraldedSplit => {
            let d1 = any_detected(n, e1, &mut rng);
            let mut d2 = false;
            let mut d3 = false;
            for _ in 0..n {
                let to_third = rng.random::<bool>();
                let seen = rng.random::<f64>();
                if to_third {
                    d3 |= seen < e3;
                } else {
                    d2 |= seen < e2;
                }
            }
            tally.clicks1 += d1 as u64;
            tally.clicks2 += d2 as u64;
            tally.clicks3 += d3 as u64;
            tally.pair12 += (d1 && d2) as u64;
            tally.pair13 += (d1 && d3) as u64;
            tally.triple123 += (d1 && d2 && d3) as u64;
        }
    }
}

/// Run the simulation on the current rayon pool.
pub fn simulate(config: &SimConfig) -> Result<SimCounts> {
    config.validate()?;
    let source = match config.mode {
        SimMode::Saturation {
            source: SourceKind::Thermal,
            mean,
        } => PhotonSource::Pairs(EmissionProbability::from_mean(mean)?),
        SimMode::Saturation {
            source: SourceKind::Coherent,
            mean,
        } => PhotonSource::Poisson(if mean > 0.0 {
            Some(Poisson::new(mean).map_err(|e| Error::Domain {
                name: "mean photon number",
                value: mean,
                domain: if matches!(e, rand_distr::PoissonError::ShapeTooLarge) {
                    "[0, 1.8e19]"
                } else {
                    "[0, inf)"
                },
            })?)
        } else {
            None
        }),
        _ => PhotonSource::Pairs(config.x),
    };
    let chunks = config.pulses.div_ceil(config.chunk_pulses);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * config.chunk_pulses;
            let end = (start + config.chunk_pulses).min(config.pulses);
            let mut tally = SimCounts::default();
            for pulse in start..end {
                simulate_pulse(config, &source, pulse, &mut tally);
            }
            tally
        })
        .reduce(SimCounts::default, SimCounts::merge);
    Ok(counts)
}

/// Run the simulation on a dedicated pool of `threads` workers.
pub fn simulate_with_threads(config: &SimConfig, threads: usize) -> Result<SimCounts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    pool.install(|| simulate(config))
}

/// A simulated quantity next to its analytic prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub analytic: f64,
    pub simulated: f64,
    pub std_err: f64,
    /// `|simulated - analytic| / std_err`.
    pub sigma: f64,
}

impl Comparison {
    fn new(name: &str, analytic: f64, simulated: f64, std_err: f64) -> Self {
        let diff = (simulated - analytic).abs();
        let sigma = if std_err > 0.0 {
            diff / std_err
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.to_owned(),
            analytic,
            simulated,
            std_err,
            sigma,
        }
    }

    /// Rate comparison in counts per second. The standard error uses the
    /// analytic probability, which stays meaningful when a tally is zero.
    fn rate(
        name: &str,
        rep_rate_hz: f64,
        analytic_rate: f64,
        counts: &SimCounts,
        tally: u64,
    ) -> Self {
        let n = counts.pulses as f64;
        let p = analytic_rate / rep_rate_hz;
        let std_err = rep_rate_hz * (p * (1.0 - p) / n).sqrt();
        Self::new(name, analytic_rate, rep_rate_hz * tally as f64 / n, std_err)
    }
}

/// Compare every tally of a run with the analytic model.
pub fn compare_with_analytic(
    config: &SimConfig,
    counts: &SimCounts,
    rep_rate_hz: f64,
    eps_trunc: f64,
) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    match config.mode {
        SimMode::TwoArm => {
            let r = two_arm_rates(rep_rate_hz, config.x, &config.chain)?;
            out.push(Comparison::rate(
                "sc1",
                rep_rate_hz,
                r.sc1,
                counts,
                counts.clicks1,
            ));
            out.push(Comparison::rate(
                "sc2",
                rep_rate_hz,
                r.sc2,
                counts,
                counts.clicks2,
            ));
            out.push(Comparison::rate(
                "cc",
                rep_rate_hz,
                r.cc,
                counts,
                counts.pair12,
            ));
        }
        SimMode::HeraldedSplit => {
            let r = split_coincidences(rep_rate_hz, config.x, &config.chain, eps_trunc)?;
            out.push(Comparison::rate(
                "sc1",
                rep_rate_hz,
                r.sc1,
                counts,
                counts.clicks1,
            ));
            out.push(Comparison::rate(
                "cc12",
                rep_rate_hz,
                r.cc12,
                counts,
                counts.pair12,
            ));
            out.push(Comparison::rate(
                "cc13",
                rep_rate_hz,
                r.cc13,
                counts,
                counts.pair13,
            ));
            out.push(Comparison::rate(
                "cc123",
                rep_rate_hz,
                r.cc123,
                counts,
                counts.triple123,
            ));
            if let Some(est) = counts.g2_estimate() {
                let g2 = g2_heralded_predicted(rep_rate_hz, config.x, &config.chain, eps_trunc)?;
                out.push(Comparison::new("g2_heralded", g2, est.value, est.std_err));
            }
        }
        SimMode::Saturation { source, mean } => {
            let p = detected_vs_incident(source, mean, config.chain.eta1, CurveVariant::Click)?;
            out.push(Comparison::rate(
                "detected_per_pulse",
                1.0,
                p,
                counts,
                counts.clicks1,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_statistics::pair_probability;

    fn x(v: f64) -> EmissionProbability {
        EmissionProbability::new(v).unwrap()
    }

    #[test]
    fn vacuum_source_never_clicks() {
        let chain = DetectorChain::new(0.9, 0.9, 0.9).unwrap();
        for mode in [SimMode::TwoArm, SimMode::HeraldedSplit] {
            let cfg = SimConfig::new(10_000, 1, EmissionProbability::ZERO, chain, mode);
            let c = simulate(&cfg).unwrap();
            assert_eq!(
                c,
                SimCounts {
                    pulses: 10_000,
                    ..Default::default()
                }
            );
        }
        let sat = SimMode::Saturation {
            source: SourceKind::Coherent,
            mean: 0.0,
        };
        let c = simulate(&SimConfig::new(
            1000,
            1,
            EmissionProbability::ZERO,
            chain,
            sat,
        ))
        .unwrap();
        assert_eq!(c.clicks1, 0);
    }

    #[test]
    fn geometric_sampler_zero_and_pmf() {
        let mut rng = pulse_rng(7, 0);
        assert!((0..1000).all(|_| geometric_sampler(EmissionProbability::ZERO, &mut rng) == 0));

        let draws = 1_000_000u64;
        let xv = x(0.5);
        let mut hist = [0u64; 6];
        for i in 0..draws {
            let n = geometric_sampler(xv, &mut pulse_rng(11, i));
            if (n as usize) < hist.len() {
                hist[n as usize] += 1;
            }
        }
        for (n, &h) in hist.iter().enumerate() {
            let p = pair_probability(n, xv);
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            let z = (h as f64 / draws as f64 - p).abs() / sigma;
            assert!(z < 5.0, "n={n}: z={z}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let chain = DetectorChain::new(0.5, 0.5, 0.5).unwrap();
        let zero = SimConfig::new(0, 1, x(0.1), chain, SimMode::TwoArm);
        assert!(matches!(simulate(&zero), Err(Error::Domain { .. })));
        let huge = SimConfig::new(MAX_PULSES + 1, 1, x(0.1), chain, SimMode::TwoArm);
        assert!(matches!(simulate(&huge), Err(Error::Resource(_))));
        let bad_mean = SimMode::Saturation {
            source: SourceKind::Thermal,
            mean: -1.0,
        };
        assert!(simulate(&SimConfig::new(10, 1, x(0.1), chain, bad_mean)).is_err());
    }

    #[test]
    fn tallies_are_nested() {
        let chain = DetectorChain::new(0.6, 0.7, 0.8).unwrap();
        let c = simulate(&SimConfig::new(
            200_000,
            3,
            x(0.4),
            chain,
            SimMode::HeraldedSplit,
        ))
        .unwrap();
        assert!(c.triple123 <= c.pair12.min(c.pair13));
        assert!(c.pair12 <= c.clicks1.min(c.clicks2));
        assert!(c.pair13 <= c.clicks1.min(c.clicks3));
        assert!(c.clicks1 <= c.pulses);
        assert!(c.triple123 > 0);
    }

    #[test]
    fn chunking_and_threads_do_not_change_results() {
        let chain = DetectorChain::new(0.3, 0.4, 0.5).unwrap();
        let mut cfg = SimConfig::new(100_003, 99, x(0.2), chain, SimMode::HeraldedSplit);
        let a = simulate_with_threads(&cfg, 1).unwrap();
        cfg.chunk_pulses = 977;
        let b = simulate_with_threads(&cfg, 3).unwrap();
        assert_eq!(a, b);
        cfg.seed = 100;
        assert_ne!(a, simulate(&cfg).unwrap());
    }

    #[test]
    fn g2_standard_error_matches_batch_spread() {
        // Spread of the estimator over independent seeds against the delta
        // method; a loose factor-of-two check.
        let chain = DetectorChain::new(0.5, 0.5, 0.5).unwrap();
        let runs: Vec<Estimate> = (0..20)
            .map(|seed| {
                let cfg = SimConfig::new(50_000, seed, x(0.2), chain, SimMode::HeraldedSplit);
                simulate(&cfg).unwrap().g2_estimate().unwrap()
            })
            .collect();
        let mean = runs.iter().map(|e| e.value).sum::<f64>() / runs.len() as f64;
        let spread = (runs.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>()
            / (runs.len() - 1) as f64)
            .sqrt();
        let predicted = runs.iter().map(|e| e.std_err).sum::<f64>() / runs.len() as f64;
        assert!(
            spread / predicted > 0.5 && spread / predicted < 2.0,
            "{spread} vs {predicted}"
        );
    }
}
