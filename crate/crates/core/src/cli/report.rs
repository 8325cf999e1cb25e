//! Run reports and their on-disk forms: `trajectory.csv` and `report.json`,
//! every float written with 17 significant digits.

use super::scenario::Scenario;
use serde::ser::Serialize;
use serde::Serialize as DeriveSerialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use std::collections::BTreeMap;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, DeriveSerialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Measured without a tolerance.
    Info,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct DiagnosticResult {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl DiagnosticResult {
    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        DiagnosticResult { name: name.to_string(), status: Status::Skipped, tolerance: None, values: BTreeMap::new(), reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct TrajectorySummary {
    pub nodes: usize,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub final_energy: f64,
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct ConvergenceRow {
    pub value: f64,
    pub nodes: Option<usize>,
    pub error: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct ConvergenceTable {
    pub parameter: String,
    pub rows: Vec<ConvergenceRow>,
    /// Log-log slope of error against the discretization scale; `None` when
    /// fewer than two rows have a positive error.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub kind: &'static str,
    pub trajectory: Option<TrajectorySummary>,
    pub oracle_error: Option<f64>,
    pub diagnostics: Vec<DiagnosticResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTable>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// One CSV row; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub state: Vec<f64>,
    pub energy: Option<f64>,
    pub slope: Option<f64>,
    pub speed: Option<f64>,
    pub step_increment: Option<f64>,
    pub edi_cum_residual: Option<f64>,
}

/// `x` with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_csv<W: Write>(w: &mut W, dim: usize, rows: &[CsvRow]) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("u_{i}")));
    header.extend(["energy", "slope", "speed", "step_increment", "edi_cum_residual"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![fmt_float(r.t)];
        cells.extend(r.state.iter().map(|x| fmt_float(*x)));
        cells.extend([r.energy, r.slope, r.speed, r.step_increment, r.edi_cum_residual].map(cell));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Pretty JSON with floats in the 17-digit form; NaN and infinities become
/// `null`.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_float(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-3.0), "-3.0000000000000000e0");
        let json = to_json(&BTreeMap::from([("x", 0.1), ("y", f64::NAN)]));
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert!(back["y"].is_null());
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let rows = [CsvRow { t: 0.0, state: vec![1.0], energy: Some(0.5), slope: None, speed: None, step_increment: None, edi_cum_residual: None }];
        let mut out = Vec::new();
        write_csv(&mut out, 1, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,u_0,energy,slope,speed,step_increment,edi_cum_residual"));
        assert!(lines.next().unwrap().ends_with("e-1,,,,"));
    }
}
