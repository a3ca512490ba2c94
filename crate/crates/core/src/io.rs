//! CSV and JSON readers and writers for sweeps, tables, curves and runs.
//!
//! Powers are in mW, rates in counts per second. Floats are written in their
//! shortest round-trip form so emitting and re-reading a table is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::CorrelationReport;
use crate::inversion::{CountRecord, HeraldedCounts, RowFailure, TableEntry, TableOneRow};
use crate::saturation::SaturationCurve;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("bad header: expected {expected}, found `{found}`")]
    Header { expected: String, found: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type IoResult<T> = Result<T, IoError>;

pub const SWEEP_COLUMNS: [&str; 4] = ["power_mw", "sc1", "sc2", "cc"];
pub const HERALDED_COLUMNS: [&str; 3] = ["cc12", "cc13", "cc123"];
pub const TABLE1_COLUMNS: [&str; 16] = [
    "power_mw", "sc1", "sc2", "cc", "cc12", "cc13", "cc123", "tau", "eta1", "eta2", "n_all",
    "n_one", "nbar", "residual", "status", "message",
];
pub const TABLE2_COLUMNS: [&str; 8] = [
    "power_mw", "g2_exp", "g2_exp2", "g2_sh", "g2_s", "g2_si", "g3_si", "g3_s",
];
pub const CURVE_COLUMNS: [&str; 5] = ["source_kind", "eta", "variant", "mean", "detected"];

/// Placeholder for a correlation that diverges or was not measured.
pub const DASH: &str = "-";

fn open(path: &Path) -> IoResult<File> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> IoResult<File> {
    File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn header_error(expected: &[&str], found: &csv::StringRecord) -> IoError {
    IoError::Header {
        expected: expected.join(","),
        found: found.iter().collect::<Vec<_>>().join(","),
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_f64(record: &csv::StringRecord, idx: usize, name: &str) -> IoResult<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| IoError::Parse {
        line: line_of(record),
        message: format!("{name}: `{raw}` is not a number"),
    })
}

fn parse_opt(record: &csv::StringRecord, idx: usize, name: &str) -> IoResult<Option<f64>> {
    match record.get(idx).map(str::trim) {
        None | Some("") | Some(DASH) => Ok(None),
        Some(_) => parse_f64(record, idx, name).map(Some),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Read a measured sweep: `power_mw,sc1,sc2,cc` optionally followed by
/// `cc12,cc13,cc123`. Powers must be strictly increasing and counts
/// non-negative; the optional columns are all filled or all empty per row.
pub fn read_sweep<R: Read>(reader: R) -> IoResult<Vec<CountRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let heralded = match names.len() {
        4 => false,
        7 => true,
        _ => {
            return Err(header_error(
                &[&SWEEP_COLUMNS[..], &HERALDED_COLUMNS[..]].concat(),
                &header,
            ))
        }
    };
    let expected = [&SWEEP_COLUMNS[..], &HERALDED_COLUMNS[..]].concat();
    if names[..] != expected[..names.len()] {
        return Err(header_error(&expected[..names.len()], &header));
    }

    let mut out: Vec<CountRecord> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let bad = |message: String| IoError::Parse { line, message };
        let mut vals = [0.0; 4];
        for (i, name) in SWEEP_COLUMNS.iter().enumerate() {
            vals[i] = parse_f64(&record, i, name)?;
        }
        let [power_mw, sc1, sc2, cc] = vals;
        if !(power_mw.is_finite() && power_mw > 0.0) {
            return Err(bad(format!("power_mw must be positive, got {power_mw}")));
        }
        for (name, v) in SWEEP_COLUMNS[1..].iter().zip(&vals[1..]) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(bad(format!(
                    "{name} must be a non-negative count rate, got {v}"
                )));
            }
        }
        if let Some(prev) = out.last() {
            if power_mw <= prev.power_mw {
                return Err(bad(format!(
                    "powers must be strictly increasing ({power_mw} after {})",
                    prev.power_mw
                )));
            }
        }
        let mut row = CountRecord::new(power_mw, sc1, sc2, cc);
        if heralded {
            let extra: Vec<Option<f64>> = HERALDED_COLUMNS
                .iter()
                .enumerate()
                .map(|(i, name)| parse_opt(&record, 4 + i, name))
                .collect::<IoResult<_>>()?;
            match extra[..] {
                [Some(cc12), Some(cc13), Some(cc123)] => {
                    for (name, v) in HERALDED_COLUMNS.iter().zip([cc12, cc13, cc123]) {
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(bad(format!(
                                "{name} must be a non-negative count rate, got {v}"
                            )));
                        }
                    }
                    row.heralded = Some(HeraldedCounts { cc12, cc13, cc123 });
                }
                [None, None, None] => {}
                _ => return Err(bad("cc12, cc13 and cc123 must be given together".into())),
            }
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_sweep_file(path: &Path) -> IoResult<Vec<CountRecord>> {
    read_sweep(open(path)?)
}

/// Write a parameter table; failed rows keep their inputs and carry the
/// failure kind in `status`.
pub fn write_table1_csv<W: Write>(writer: W, entries: &[TableEntry]) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TABLE1_COLUMNS)?;
    for e in entries {
        let r = &e.record;
        let h = r.heralded;
        let mut fields = vec![
            r.power_mw.to_string(),
            r.sc1.to_string(),
            r.sc2.to_string(),
            r.cc.to_string(),
            fmt_opt(h.map(|h| h.cc12)),
            fmt_opt(h.map(|h| h.cc13)),
            fmt_opt(h.map(|h| h.cc123)),
        ];
        match &e.outcome {
            Ok(row) => {
                fields.extend(
                    [
                        row.tau,
                        row.eta1,
                        row.eta2,
                        row.n_all,
                        row.n_one,
                        row.nbar,
                        row.residual,
                    ]
                    .iter()
                    .map(f64::to_string),
                );
                fields.push("ok".into());
                fields.push(String::new());
            }
            Err(fail) => {
                fields.extend(std::iter::repeat_n(String::new(), 7));
                fields.push(fail.kind.clone());
                fields.push(fail.message.clone());
            }
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_table1_csv<R: Read>(reader: R) -> IoResult<Vec<TableEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TABLE1_COLUMNS) {
        return Err(header_error(&TABLE1_COLUMNS, &header));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let num = |i: usize| parse_f64(&record, i, TABLE1_COLUMNS[i]);
        let mut rec = CountRecord::new(num(0)?, num(1)?, num(2)?, num(3)?);
        let extra = (
            parse_opt(&record, 4, "cc12")?,
            parse_opt(&record, 5, "cc13")?,
            parse_opt(&record, 6, "cc123")?,
        );
        if let (Some(cc12), Some(cc13), Some(cc123)) = extra {
            rec.heralded = Some(HeraldedCounts { cc12, cc13, cc123 });
        }
        let status = record.get(14).unwrap_or("");
        let outcome = if status == "ok" {
            Ok(TableOneRow {
                power_mw: rec.power_mw,
                sc1: rec.sc1,
                sc2: rec.sc2,
                cc: rec.cc,
                tau: num(7)?,
                eta1: num(8)?,
                eta2: num(9)?,
                n_all: num(10)?,
                n_one: num(11)?,
                nbar: num(12)?,
                residual: num(13)?,
            })
        } else {
            Err(RowFailure {
                kind: status.to_owned(),
                message: record.get(15).unwrap_or("").to_owned(),
            })
        };
        out.push(TableEntry {
            record: rec,
            outcome,
        });
    }
    Ok(out)
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut writer: W, value: &T) -> IoResult<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer)?;
    Ok(())
}

pub fn read_table1_json<R: Read>(reader: R) -> IoResult<Vec<TableEntry>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn read_table1_json_file(path: &Path) -> IoResult<Vec<TableEntry>> {
    read_table1_json(std::io::BufReader::new(open(path)?))
}

/// One line of the correlation table; `None` is written as a dash.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableTwoRow {
    pub power_mw: f64,
    pub g2_exp: Option<f64>,
    pub g2_exp2: Option<f64>,
    pub g2_sh: Option<f64>,
    pub g2_s: Option<f64>,
    pub g2_si: Option<f64>,
    pub g3_si: Option<f64>,
    pub g3_s: Option<f64>,
}

impl TableTwoRow {
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            self.g2_exp,
            self.g2_exp2,
            self.g2_sh,
            self.g2_s,
            self.g2_si,
            self.g3_si,
            self.g3_s,
        ]
    }
}

impl From<&CorrelationReport> for TableTwoRow {
    fn from(r: &CorrelationReport) -> Self {
        Self {
            power_mw: r.power_mw,
            g2_exp: r.g2_exp.value,
            g2_exp2: r.g2_exp2.value,
            g2_sh: r.g2_sh.value,
            g2_s: r.g2_s.value,
            g2_si: r.g2_si.value,
            g3_si: r.g3_si.value,
            g3_s: r.g3_s.value,
        }
    }
}

pub fn write_table2_csv<W: Write>(writer: W, rows: &[TableTwoRow]) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TABLE2_COLUMNS)?;
    for row in rows {
        let mut fields = vec![row.power_mw.to_string()];
        fields.extend(
            row.values()
                .iter()
                .map(|v| v.map_or_else(|| DASH.to_owned(), |v| v.to_string())),
        );
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_table2_csv<R: Read>(reader: R) -> IoResult<Vec<TableTwoRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TABLE2_COLUMNS) {
        return Err(header_error(&TABLE2_COLUMNS, &header));
    }
    rdr.records()
        .map(|record| {
            let record = record?;
            let g = |i: usize| parse_opt(&record, i, TABLE2_COLUMNS[i]);
            Ok(TableTwoRow {
                power_mw: parse_f64(&record, 0, "power_mw")?,
                g2_exp: g(1)?,
                g2_exp2: g(2)?,
                g2_sh: g(3)?,
                g2_s: g(4)?,
                g2_si: g(5)?,
                g3_si: g(6)?,
                g3_s: g(7)?,
            })
        })
        .collect()
}

/// One point of a saturation curve in long format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub source_kind: String,
    pub eta: f64,
    pub variant: String,
    pub mean: f64,
    pub detected: f64,
}

pub fn write_curves_csv<W: Write>(writer: W, curves: &[SaturationCurve]) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CURVE_COLUMNS)?;
    for c in curves {
        for &(mean, detected) in &c.points {
            wtr.write_record([
                c.source.name().to_owned(),
                c.eta.value().to_string(),
                c.variant.name().to_owned(),
                mean.to_string(),
                detected.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_curves_csv<R: Read>(reader: R) -> IoResult<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CURVE_COLUMNS) {
        return Err(header_error(&CURVE_COLUMNS, &header));
    }
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> IoResult<()>) -> IoResult<()> {
    let mut out = std::io::BufWriter::new(create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}
