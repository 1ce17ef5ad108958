//! Output files. Every file carries the format version and the resolved run
//! configuration: JSON files as top-level fields, text files as a first
//! comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde_json::{Map, Value};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn provenance(config: &Value) -> String {
    format!("format_version={FORMAT_VERSION} config={config}")
}

/// Text file whose first line is `<comment> format_version=… config=…`.
pub fn write_text(
    dir: &Path,
    name: &str,
    comment: &str,
    config: &Value,
    body: &str,
) -> Result<(), CliError> {
    let mut out = format!("{comment} {}\n", provenance(config));
    out.push_str(body);
    fs::write(dir.join(name), out).map_err(|e| CliError::io(&dir.join(name), e))
}

pub fn write_csv(dir: &Path, name: &str, config: &Value, body: &str) -> Result<(), CliError> {
    write_text(dir, name, "#", config, body)
}

/// JSON object with `format_version` and `config` ahead of `fields`.
pub fn write_json(dir: &Path, name: &str, config: &Value, fields: Value) -> Result<(), CliError> {
    let mut obj = Map::new();
    obj.insert("format_version".into(), Value::from(FORMAT_VERSION));
    obj.insert("config".into(), config.clone());
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    let text =
        serde_json::to_string_pretty(&Value::Object(obj)).expect("json serialisation") + "\n";
    fs::write(dir.join(name), text).map_err(|e| CliError::io(&dir.join(name), e))
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => Ok(value),
        other => Err(CliError::Runtime(format!(
            "{}: unsupported format version {other:?}",
            path.display()
        ))),
    }
}

/// A CSV table whose first column names the rows and the rest are numbers.
#[derive(Debug)]
pub struct NamedMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub values: Array2<f64>,
}

pub fn matrix_body(
    corner: &str,
    rows: &[String],
    columns: &[String],
    values: &Array2<f64>,
) -> String {
    supblock::summary::matrix_csv(corner, rows, columns, values)
}

pub fn read_matrix(path: &Path) -> Result<NamedMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad =
        |line: usize, msg: &str| CliError::Runtime(format!("{}:{line}: {msg}", path.display()));
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let columns: Vec<String> = header.split(',').skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split(',');
        rows.push(fields.next().unwrap_or_default().to_string());
        let nums: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(i + 1, &format!("not a number: `{f}`")))
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != columns.len() {
            return Err(bad(i + 1, "wrong number of fields"));
        }
        flat.extend(nums);
    }
    let values = Array2::from_shape_vec((rows.len(), columns.len()), flat).expect("matrix shape");
    Ok(NamedMatrix {
        columns,
        rows,
        values,
    })
}

pub fn series_body(name: &str, values: &[f64]) -> String {
    let mut out = format!("step,{name}\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    out
}
