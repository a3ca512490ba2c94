//! Photon-pair statistics of a pulsed down-conversion source seen through
//! bucket (on/off) detectors.
//!
//! The pair number per pulse follows the geometric law `Pr(n) = (1 - x) x^n`
//! with `x = p * tau`. From it the crate predicts singles, coincidences and
//! three-fold rates, inverts measured rates back to `tau` and the arm
//! efficiencies, evaluates heralded and unheralded correlation functions,
//! compares detector saturation for thermal and coherent light, and checks all
//! of it against a pulse-level Monte Carlo.

pub mod correlation;
pub mod detector_model;
mod error;
pub mod inversion;
pub mod io;
pub mod montecarlo;
pub mod photon_statistics;
pub mod reference;
pub mod saturation;

pub use correlation::{CorrelationReport, EtaSplit};
pub use detector_model::{CurveVariant, DetectorChain, Efficiency, SourceKind};
pub use error::{Error, Result};
pub use inversion::{CountRecord, InversionConfig, TableEntry, TableOneRow};
pub use montecarlo::{SimConfig, SimCounts, SimMode};
pub use photon_statistics::{EmissionProbability, DEFAULT_EPS_TRUNC};
