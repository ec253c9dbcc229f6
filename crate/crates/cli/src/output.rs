//! Result envelope and CSV interchange.

use std::fs::File;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use tlres::flags::Flag;
use tlres::netsynth::ComplexTrace;

use crate::config::{JobConfig, ModeRow};
use crate::CliError;

pub const TRACE_HEADER: [&str; 3] = ["freq_hz", "re_s21", "im_s21"];
pub const MODE_HEADER: [&str; 3] = ["mode_n", "f_r_hz", "q_i"];

/// Flags that only describe the problem and never lower confidence.
const INFORMATIONAL: [Flag; 2] = [Flag::ExactlyDetermined, Flag::NonAttainedMaximum];

pub fn is_low_confidence(flags: &[Flag]) -> bool {
    flags.iter().any(|f| !INFORMATIONAL.contains(f))
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub status: &'static str,
    pub flags: Vec<Flag>,
    pub config: &'a JobConfig,
    pub outputs: Vec<String>,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes rows of plain numbers under `header`; `None` becomes an empty field.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Option<f64>>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_trace(path: &Path, trace: &ComplexTrace) -> Result<(), CliError> {
    let rows: Vec<Vec<Option<f64>>> = trace
        .freqs
        .iter()
        .zip(&trace.s21)
        .map(|(f, z)| vec![Some(*f), Some(z.re), Some(z.im)])
        .collect();
    write_table(path, &TRACE_HEADER, &rows)
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<(), CliError> {
    let header = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(CliError::Validation(format!(
            "{}: header must be `{}`, found `{}`",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn open(path: &Path) -> Result<csv::Reader<File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn parse_field(path: &Path, line: usize, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>()
        .map_err(|_| CliError::Validation(format!("{}:{line}: `{s}` is not a number", path.display())))
}

pub fn read_trace(path: &Path) -> Result<ComplexTrace, CliError> {
    let mut r = open(path)?;
    check_header(path, &mut r, &TRACE_HEADER)?;
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = i + 2;
        freqs.push(parse_field(path, line, &rec[0])?);
        s21.push(Complex64::new(parse_field(path, line, &rec[1])?, parse_field(path, line, &rec[2])?));
    }
    Ok(ComplexTrace::new(freqs, s21)?)
}

pub fn read_modes(path: &Path) -> Result<Vec<ModeRow>, CliError> {
    let mut r = open(path)?;
    check_header(path, &mut r, &MODE_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = i + 2;
        let mode_n = rec[0]
            .parse::<u32>()
            .map_err(|_| CliError::Validation(format!("{}:{line}: bad mode index", path.display())))?;
        let q_i = if rec[2].is_empty() { None } else { Some(parse_field(path, line, &rec[2])?) };
        rows.push(ModeRow { mode_n, f_r_hz: parse_field(path, line, &rec[1])?, q_i });
    }
    Ok(rows)
}
