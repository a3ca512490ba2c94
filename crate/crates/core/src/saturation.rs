//! Detected-versus-incident curves for thermal and coherent light.

use serde::{Deserialize, Serialize};

use crate::detector_model::{detected_vs_incident, CurveVariant, Efficiency, SourceKind};
use crate::error::{Error, Result};

/// Efficiencies plotted by default.
pub const DEFAULT_ETAS: [f64; 3] = [0.2, 0.5, 0.8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationCurve {
    pub source: SourceKind,
    pub eta: Efficiency,
    pub variant: CurveVariant,
    /// `(mean incident photons per pulse, detected per pulse)`.
    pub points: Vec<(f64, f64)>,
}

/// Logarithmic grid with `points` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Domain {
            name: "grid bounds",
            value: lo,
            domain: "0 < lo <= hi < inf",
        });
    }
    Ok(match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (points - 1) as f64;
            (0..points)
                .map(|i| match i {
                    0 => lo,
                    i if i == points - 1 => hi,
                    i => (a + step * i as f64).exp(),
                })
                .collect()
        }
    })
}

/// Sixty log-spaced means from 1e-2 to 1e2.
pub fn default_mean_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 60).expect("constant bounds are valid")
}

pub fn curve(
    source: SourceKind,
    eta: Efficiency,
    variant: CurveVariant,
    mean_grid: &[f64],
) -> Result<SaturationCurve> {
    let points = mean_grid
        .iter()
        .map(|&m| detected_vs_incident(source, m, eta, variant).map(|d| (m, d)))
        .collect::<Result<_>>()?;
    Ok(SaturationCurve {
        source,
        eta,
        variant,
        points,
    })
}

/// Coherent minus thermal detected output at each mean.
pub fn saturation_gap(
    eta: Efficiency,
    variant: CurveVariant,
    mean_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    mean_grid
        .iter()
        .map(|&m| {
            let c = detected_vs_incident(SourceKind::Coherent, m, eta, variant)?;
            let t = detected_vs_incident(SourceKind::Thermal, m, eta, variant)?;
            Ok((m, c - t))
        })
        .collect()
}

/// Both sources at every efficiency, coherent first.
pub fn curve_family(
    etas: &[Efficiency],
    variant: CurveVariant,
    mean_grid: &[f64],
) -> Result<Vec<SaturationCurve>> {
    let mut out = Vec::with_capacity(2 * etas.len());
    for source in [SourceKind::Coherent, SourceKind::Thermal] {
        for &eta in etas {
            out.push(curve(source, eta, variant, mean_grid)?);
        }
    }
    Ok(out)
}
