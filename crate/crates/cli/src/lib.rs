//! Subcommands of the `spdc-stats` binary.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 some sweep rows could not
//! be inverted, 3 a simulated quantity disagrees with the model by more than
//! five standard errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use spdc_stats_core::correlation::EtaSplit;
use spdc_stats_core::detector_model::{CurveVariant, DetectorChain, Efficiency, SourceKind};
use spdc_stats_core::inversion::{build_table, InversionConfig};
use spdc_stats_core::io::{self, IoError, TableTwoRow};
use spdc_stats_core::montecarlo::{
    compare_with_analytic, simulate, simulate_with_threads, Comparison, SimConfig, SimCounts,
    SimMode,
};
use spdc_stats_core::photon_statistics::{EmissionProbability, DEFAULT_EPS_TRUNC};
use spdc_stats_core::saturation::{curve_family, log_grid, DEFAULT_ETAS};
use spdc_stats_core::{correlation, Error};

/// Simulated quantities further than this many standard errors from the model
/// fail a `simulate` run.
pub const SIGMA_BOUND: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(
    name = "spdc-stats",
    version,
    about = "Photon-pair statistics through bucket detectors"
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Pump repetition rate in Hz.
    #[arg(long, global = true, default_value_t = 76e6)]
    pub rep_rate: f64,
    /// Relative tail bound for truncated photon-number series.
    #[arg(long, visible_alias = "epsilon", global = true, default_value_t = DEFAULT_EPS_TRUNC)]
    pub eps_trunc: f64,
    /// Convergence tolerance of the rate inversion (max relative residual).
    #[arg(
        long,
        visible_alias = "tolerance",
        global = true,
        default_value_t = 1e-9
    )]
    pub tol_inv: f64,
    /// Branch-3 efficiency as a fraction of the signal-arm efficiency.
    #[arg(long, global = true, default_value_t = EtaSplit::default().eta3_scale)]
    pub eta3_scale: f64,
    /// Seed of the Monte Carlo streams.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Invert a measured sweep into table1.csv and table1.json.
    Invert {
        /// CSV with columns power_mw,sc1,sc2,cc[,cc12,cc13,cc123].
        sweep: PathBuf,
    },
    /// Correlation functions for an inverted sweep, written to table2.csv.
    Correlations {
        /// table1.json produced by `invert`.
        table: PathBuf,
    },
    /// Detected-versus-incident curves, written to curves.csv.
    Saturation(SaturationArgs),
    /// Pulse-level simulation against the model, written to simcounts.json.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Click,
    Literal,
}

impl From<VariantArg> for CurveVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Click => CurveVariant::Click,
            VariantArg::Literal => CurveVariant::Literal,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SaturationArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Click)]
    pub variant: VariantArg,
    /// Detection efficiencies, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ETAS)]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub mean_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub mean_max: f64,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    TwoArm,
    HeraldedSplit,
    Saturation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Thermal,
    Coherent,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::TwoArm)]
    pub mode: ModeArg,
    /// Pulses to simulate.
    #[arg(long, default_value_t = 1_000_000)]
    pub pulses: u64,
    /// Emission probability per pulse.
    #[arg(long, default_value_t = 0.0135)]
    pub x: f64,
    /// Idler-arm efficiency (the only detector in saturation mode).
    #[arg(long, default_value_t = 0.215)]
    pub eta1: f64,
    /// Signal-arm efficiency.
    #[arg(long, default_value_t = 0.198)]
    pub eta2: f64,
    /// Branch-3 efficiency; defaults to eta2 times --eta3-scale.
    #[arg(long)]
    pub eta3: Option<f64>,
    /// Light source in saturation mode.
    #[arg(long, value_enum, default_value_t = SourceArg::Thermal)]
    pub source: SourceArg,
    /// Mean photon number per pulse in saturation mode.
    #[arg(long, default_value_t = 1.0)]
    pub mean: f64,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "SPDC_STATS_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    OutDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub code: u8,
    pub summary: String,
}

/// Everything `simulate` writes.
#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub rep_rate_hz: f64,
    pub counts: SimCounts,
    pub comparisons: Vec<Comparison>,
    pub max_sigma: f64,
    pub sigma_bound: f64,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = &cli.run;
    fs::create_dir_all(&cfg.out).map_err(|source| CliError::OutDir {
        path: cfg.out.display().to_string(),
        source,
    })?;
    match &cli.command {
        Command::Invert { sweep } => cmd_invert(cfg, sweep),
        Command::Correlations { table } => cmd_correlations(cfg, table),
        Command::Saturation(args) => cmd_saturation(cfg, args),
        Command::Simulate(args) => cmd_simulate(cfg, args),
    }
}

fn inversion_config(cfg: &RunConfig) -> Result<InversionConfig, CliError> {
    if !(cfg.tol_inv > 0.0 && cfg.tol_inv.is_finite()) {
        return Err(Error::Domain {
            name: "tol-inv",
            value: cfg.tol_inv,
            domain: "(0, inf)",
        }
        .into());
    }
    Ok(InversionConfig {
        tol: cfg.tol_inv,
        ..InversionConfig::default()
    })
}

pub fn cmd_invert(cfg: &RunConfig, sweep: &Path) -> Result<Outcome, CliError> {
    let records = io::read_sweep_file(sweep)?;
    let table = build_table(&records, cfg.rep_rate, &inversion_config(cfg)?);
    let csv_path = cfg.out.join("table1.csv");
    let json_path = cfg.out.join("table1.json");
    io::write_file(&csv_path, |w| io::write_table1_csv(w, &table))?;
    io::write_file(&json_path, |w| io::write_json(w, &table))?;
    let failed: Vec<String> = table
        .iter()
        .filter_map(|e| {
            e.outcome
                .as_ref()
                .err()
                .map(|f| format!("{} mW: {} ({})", e.record.power_mw, f.kind, f.message))
        })
        .collect();
    let summary = if failed.is_empty() {
        format!("inverted {} rows", table.len())
    } else {
        format!(
            "inverted {} of {} rows; failed: {}",
            table.len() - failed.len(),
            table.len(),
            failed.join("; ")
        )
    };
    Ok(Outcome {
        files: vec![csv_path, json_path],
        code: if failed.is_empty() { 0 } else { 2 },
        summary,
    })
}

pub fn cmd_correlations(cfg: &RunConfig, table: &Path) -> Result<Outcome, CliError> {
    let entries = io::read_table1_json_file(table)?;
    let split = EtaSplit::default().with_eta3_scale(cfg.eta3_scale);
    let reports = correlation::build_table_two(&entries, cfg.rep_rate, &split, cfg.eps_trunc);
    let rows: Vec<TableTwoRow> = reports.iter().map(TableTwoRow::from).collect();
    let path = cfg.out.join("table2.csv");
    io::write_file(&path, |w| io::write_table2_csv(w, &rows))?;
    Ok(Outcome {
        files: vec![path],
        code: 0,
        summary: format!("{} correlation rows", rows.len()),
    })
}

pub fn cmd_saturation(cfg: &RunConfig, args: &SaturationArgs) -> Result<Outcome, CliError> {
    let etas = args
        .eta
        .iter()
        .map(|&e| Efficiency::new(e))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = log_grid(args.mean_min, args.mean_max, args.points)?;
    let curves = curve_family(&etas, args.variant.into(), &grid)?;
    let path = cfg.out.join("curves.csv");
    io::write_file(&path, |w| io::write_curves_csv(w, &curves))?;
    Ok(Outcome {
        files: vec![path],
        code: 0,
        summary: format!("{} curves of {} points", curves.len(), grid.len()),
    })
}

pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<Outcome, CliError> {
    let x = EmissionProbability::new(args.x)?;
    let eta3 = args.eta3.unwrap_or(args.eta2 * cfg.eta3_scale);
    let chain = DetectorChain::new(args.eta1, args.eta2, eta3)?;
    let mode = match args.mode {
        ModeArg::TwoArm => SimMode::TwoArm,
        ModeArg::HeraldedSplit => SimMode::HeraldedSplit,
        ModeArg::Saturation => SimMode::Saturation {
            source: match args.source {
                SourceArg::Thermal => SourceKind::Thermal,
                SourceArg::Coherent => SourceKind::Coherent,
            },
            mean: args.mean,
        },
    };
    let config = SimConfig::new(args.pulses, cfg.seed, x, chain, mode);
    let counts = match args.threads {
        Some(n) => simulate_with_threads(&config, n)?,
        None => simulate(&config)?,
    };
    let comparisons = compare_with_analytic(&config, &counts, cfg.rep_rate, cfg.eps_trunc)?;
    let max_sigma = comparisons.iter().fold(0.0f64, |m, c| m.max(c.sigma));
    let report = SimulationReport {
        config,
        rep_rate_hz: cfg.rep_rate,
        counts,
        comparisons,
        max_sigma,
        sigma_bound: SIGMA_BOUND,
    };
    let path = cfg.out.join("simcounts.json");
    io::write_file(&path, |w| io::write_json(w, &report))?;
    let within = max_sigma <= SIGMA_BOUND;
    Ok(Outcome {
        files: vec![path],
        code: if within { 0 } else { 3 },
        summary: format!(
            "{} pulses, largest deviation {max_sigma:.2} sigma{}",
            args.pulses,
            if within { "" } else { " (beyond bound)" }
        ),
    })
}
