//! Reference measurements and published tables bundled with the crate.

use crate::inversion::CountRecord;
use crate::io::{read_sweep, read_table2_csv, IoResult, TableTwoRow};

/// Measured sweep of singles and coincidences, counts per second.
pub const TABLE1_MEASURED_CSV: &str = include_str!("../data/table1_measured.csv");
/// Published parameters for the sweep, rates in pairs per second.
pub const TABLE1_EXPECTED_CSV: &str = include_str!("../data/table1_expected.csv");
/// Published correlation values; `-` where no measurement exists.
pub const TABLE2_EXPECTED_CSV: &str = include_str!("../data/table2_expected.csv");
/// Measured three-fold rates and heralded `g2` at three pump powers.
pub const HERALDED_MEASURED_CSV: &str = include_str!("../data/heralded_measured.csv");

/// Repetition rate of the pump laser, Hz.
pub const REP_RATE_HZ: f64 = 76e6;

/// A published value with the number of decimals it was printed with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Printed {
    pub value: f64,
    pub decimals: u32,
}

impl Printed {
    fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        Self {
            value: raw.parse().expect("bundled value"),
            decimals: raw.split_once('.').map_or(0, |(_, d)| d.len() as u32),
        }
    }

    /// Half a unit in the last printed digit.
    pub fn half_ulp(&self) -> f64 {
        0.5 * 10f64.powi(-(self.decimals as i32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedParameters {
    pub power_mw: f64,
    pub tau: Printed,
    pub eta1: Printed,
    pub eta2: Printed,
    pub n_all: Printed,
    pub n_one: Printed,
    pub nbar: Printed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeraldedPoint {
    pub power_mw: f64,
    pub cc123: f64,
    pub g2_exp: f64,
}

pub fn table1_measured() -> Vec<CountRecord> {
    read_sweep(TABLE1_MEASURED_CSV.as_bytes()).expect("bundled sweep is valid")
}

fn data_lines(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').collect())
}

pub fn table1_expected() -> Vec<ExpectedParameters> {
    data_lines(TABLE1_EXPECTED_CSV)
        .map(|c| ExpectedParameters {
            power_mw: c[0].parse().expect("bundled value"),
            tau: Printed::parse(c[1]),
            eta1: Printed::parse(c[2]),
            eta2: Printed::parse(c[3]),
            n_all: Printed::parse(c[4]),
            n_one: Printed::parse(c[5]),
            nbar: Printed::parse(c[6]),
        })
        .collect()
}

pub fn table2_expected() -> IoResult<Vec<TableTwoRow>> {
    read_table2_csv(TABLE2_EXPECTED_CSV.as_bytes())
}

pub fn heralded_measured() -> Vec<HeraldedPoint> {
    data_lines(HERALDED_MEASURED_CSV)
        .map(|c| HeraldedPoint {
            power_mw: c[0].parse().expect("bundled value"),
            cc123: c[1].parse().expect("bundled value"),
            g2_exp: c[2].parse().expect("bundled value"),
        })
        .collect()
}
