//! CSV and JSON rendering of flat records.
//!
//! Records are serialised to `serde_json` values with field order
//! preserved, so both formats list keys in declaration order. CSV floats use
//! 17 significant digits in scientific notation; missing values print as
//! `undefined`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => "undefined".to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) if n.is_f64() => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::String(s) if s.contains([',', '"', '\n']) => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_rows(rows: &[Map<String, Value>]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push_str(&first.keys().cloned().collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row.values().map(csv_cell).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn as_object(v: Value) -> Result<Map<String, Value>, CliError> {
    match v {
        Value::Object(m) => Ok(m),
        other => Err(internal(format!("expected a flat record, got {other}"))),
    }
}

/// Renders one record.
pub fn record<T: Serialize>(rec: &T, format: Format) -> Result<String, CliError> {
    let value = serde_json::to_value(rec).map_err(internal)?;
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&value).map_err(internal)? + "\n"),
        Format::Csv => Ok(csv_rows(&[as_object(value)?])),
    }
}

/// Renders a table: CSV rows, or a JSON array of records.
pub fn table<T: Serialize>(rows: &[T], format: Format) -> Result<String, CliError> {
    let values = rows
        .iter()
        .map(|r| serde_json::to_value(r).map_err(internal))
        .collect::<Result<Vec<_>, _>>()?;
    match format {
        Format::Json => {
            Ok(serde_json::to_string_pretty(&Value::Array(values)).map_err(internal)? + "\n")
        }
        Format::Csv => {
            let maps = values
                .into_iter()
                .map(as_object)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(csv_rows(&maps))
        }
    }
}

pub fn write(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(internal)
        }
    }
}
