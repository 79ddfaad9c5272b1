//! CSV and JSON report files.
//!
//! Floating-point cells are written in scientific notation with nine
//! significant digits; [`quantize`] gives the value a cell parses back to.

use std::path::Path;

use serde::Serialize;

use super::metrics::{serialize_ratio, BandEnergyRow, EvalReport, EvalRow, RmseRatio};
use super::response::{Bandwidth, FrequencyResponseCurve, ResponseSample};
use crate::error::{Error, Result};
use crate::frl::TrainMode;

pub const FREQ_RESPONSE_HEADER: [&str; 4] = ["f", "H_mag", "stddev", "n_repeats"];
pub const EVAL_REPORT_HEADER: [&str; 6] = ["resolution", "rmse", "mae", "rel_err", "error_ratio", "f_oob"];
pub const BAND_ENERGY_HEADER: [&str; 4] = ["step", "band_lo", "band_hi", "energy"];

pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// The value a written cell parses back to.
pub fn quantize(v: f64) -> f64 {
    format_value(v).parse().expect("formatted float parses")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("{}: {other:?}", path.display())),
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::InvalidData(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.records().map(|rec| rec.map_err(|e| csv_err(path, e))).collect()
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let s = rec.get(i).unwrap_or_default();
    s.parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::InvalidData(format!("{}: line {line}: cannot parse {s:?}", path.display()))
    })
}

pub fn write_freq_response(path: &Path, curve: &FrequencyResponseCurve) -> Result<()> {
    write_table(
        path,
        &FREQ_RESPONSE_HEADER,
        curve.samples.iter().map(|s| {
            vec![format_value(s.f), format_value(s.h_mag), format_value(s.stddev), s.n_repeats.to_string()]
        }),
    )
}

pub fn read_freq_response(path: &Path) -> Result<Vec<ResponseSample>> {
    read_table(path, &FREQ_RESPONSE_HEADER)?
        .iter()
        .map(|r| {
            Ok(ResponseSample {
                f: cell(r, 0, path)?,
                h_mag: cell(r, 1, path)?,
                stddev: cell(r, 2, path)?,
                n_repeats: cell(r, 3, path)?,
            })
        })
        .collect()
}

pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_table(
        path,
        &EVAL_REPORT_HEADER,
        report.rows.iter().map(|r| {
            vec![
                r.resolution.to_string(),
                format_value(r.rmse),
                format_value(r.mae),
                format_value(r.rel_err),
                format_value(r.error_ratio),
                format_value(r.f_oob),
            ]
        }),
    )
}

pub fn read_eval_report(path: &Path) -> Result<Vec<EvalRow>> {
    read_table(path, &EVAL_REPORT_HEADER)?
        .iter()
        .map(|r| {
            Ok(EvalRow {
                resolution: cell(r, 0, path)?,
                rmse: cell(r, 1, path)?,
                mae: cell(r, 2, path)?,
                rel_err: cell(r, 3, path)?,
                error_ratio: cell(r, 4, path)?,
                f_oob: cell(r, 5, path)?,
            })
        })
        .collect()
}

pub fn write_band_energy(path: &Path, rows: &[BandEnergyRow]) -> Result<()> {
    write_table(
        path,
        &BAND_ENERGY_HEADER,
        rows.iter().map(|r| {
            vec![r.step.to_string(), format_value(r.band_lo), format_value(r.band_hi), format_value(r.energy)]
        }),
    )
}

pub fn read_band_energy(path: &Path) -> Result<Vec<BandEnergyRow>> {
    read_table(path, &BAND_ENERGY_HEADER)?
        .iter()
        .map(|r| {
            Ok(BandEnergyRow {
                step: cell(r, 0, path)?,
                band_lo: cell(r, 1, path)?,
                band_hi: cell(r, 2, path)?,
                energy: cell(r, 3, path)?,
            })
        })
        .collect()
}

fn quantized_ratio<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => serialize_ratio(&quantize(*v), s),
        None => s.serialize_none(),
    }
}

fn serialize_rmse_ratio<S: serde::Serializer>(v: &Option<RmseRatio>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(RmseRatio::Value(x)) => serialize_ratio(&quantize(*x), s),
        Some(r) => r.serialize(s),
        None => s.serialize_none(),
    }
}

/// Contents of `summary.json`. Fields a command did not compute are omitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub train_res: usize,
    pub mode: TrainMode,
    pub seed: u64,
    /// Display form: a number, or `>f` when the curve never drops.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "quantized_ratio")]
    pub anchoring_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "serialize_rmse_ratio")]
    pub rmse_ratio: Option<RmseRatio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl Summary {
    pub fn new(train_res: usize, mode: TrainMode, seed: u64) -> Self {
        Self {
            train_res,
            mode,
            seed,
            bandwidth: None,
            anchoring_ratio: None,
            delta: None,
            probe_resolution: None,
            rmse_ratio: None,
            horizon: None,
            cutoff: None,
            checkpoint: None,
            dataset: None,
        }
    }

    pub fn with_probe(mut self, bw: Bandwidth, ar: f64, delta: f64, probe_res: usize) -> Self {
        self.bandwidth = Some(bw.to_string());
        self.anchoring_ratio = Some(ar);
        self.delta = Some(delta);
        self.probe_resolution = Some(probe_res);
        self
    }

    pub fn with_eval(mut self, report: &EvalReport) -> Self {
        self.rmse_ratio = Some(report.rmse_ratio);
        self.horizon = Some(report.horizon);
        self.cutoff = Some(report.cutoff);
        self.checkpoint = Some(report.checkpoint_id.clone()).filter(|s| !s.is_empty());
        self.dataset = Some(report.dataset_id.clone()).filter(|s| !s.is_empty());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
