//! Artifact writers. Every float is printed with 17 significant digits so a
//! rerun with the same inputs reproduces the files byte for byte.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::CliError;

pub const PATHS_FILE: &str = "paths.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_HEADER: [&str; 4] = ["feature", "statistic", "p_value", "pass"];

/// `d.dddddddddddddddde±x`: 17 significant digits, round-trip exact.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // keep the sign of negative zero out of the files
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

/// JSON formatter that routes floats through [`format_f64`], optionally
/// pretty-printing the structure.
pub struct SigFormatter<'a> {
    pretty: Option<PrettyFormatter<'a>>,
}

impl SigFormatter<'_> {
    pub fn compact() -> Self {
        Self { pretty: None }
    }

    pub fn pretty() -> Self {
        Self {
            pretty: Some(PrettyFormatter::with_indent(b"  ")),
        }
    }
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                match &mut self.pretty {
                    Some(p) => p.$name(writer $(, $arg)*),
                    None => serde_json::ser::CompactFormatter.$name(writer $(, $arg)*),
                }
            }
        )*
    };
}

impl Formatter for SigFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn to_json<T: Serialize + ?Sized>(value: &T, pretty: bool) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let formatter = if pretty { SigFormatter::pretty() } else { SigFormatter::compact() };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Usage(format!("serialisation failed: {e}")))?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub feature: String,
    pub statistic: f64,
    /// Absent for deterministic checks.
    pub p_value: Option<f64>,
    pub pass: bool,
}

/// One line per record; no lines for an empty ensemble.
pub fn write_paths(dir: &Path, records: &[Value]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for r in records {
        out.extend(to_json(r, false)?);
        out.push(b'\n');
    }
    fs::write(dir.join(PATHS_FILE), out)?;
    Ok(())
}

pub fn write_summary(dir: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(format!("csv output failed: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            format_f64(r.statistic),
            r.p_value.map(format_f64).unwrap_or_default(),
            r.pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv output failed: {e}")))?;
    fs::write(dir.join(SUMMARY_FILE), bytes)?;
    Ok(())
}

pub fn write_report<T: Serialize>(dir: &Path, report: &T) -> Result<(), CliError> {
    let mut bytes = to_json(report, true)?;
    bytes.push(b'\n');
    fs::write(dir.join(REPORT_FILE), bytes)?;
    Ok(())
}
