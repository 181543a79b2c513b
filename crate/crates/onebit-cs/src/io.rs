//! Helpers for the structured-text (JSON) container files used for models,
//! ensembles, observations, signals, and datasets.
//!
//! Floats are written in scientific notation with 18 significant digits, more
//! than the 17 needed to pin down an `f64` exactly, so a save/load round trip
//! is bit-exact. Reading goes through `serde_json` and surfaces the offending
//! field in every error.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Formats one float so that parsing it back recovers the identical bits.
pub fn format_float(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn push_float_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", format_float(*v));
    }
    out.push(']');
}

pub fn read_json_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_text_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn get_field<'a>(value: &'a Value, path: &Path, field: &str) -> Result<&'a Value> {
    value
        .get(field)
        .ok_or_else(|| Error::parse(path, format!("missing field `{field}`")))
}

pub fn get_u64(value: &Value, path: &Path, field: &str) -> Result<u64> {
    get_field(value, path, field)?
        .as_u64()
        .ok_or_else(|| Error::parse(path, format!("field `{field}` must be a nonnegative integer")))
}

pub fn get_usize(value: &Value, path: &Path, field: &str) -> Result<usize> {
    Ok(get_u64(value, path, field)? as usize)
}

pub fn get_f64(value: &Value, path: &Path, field: &str) -> Result<f64> {
    get_field(value, path, field)?
        .as_f64()
        .ok_or_else(|| Error::parse(path, format!("field `{field}` must be a number")))
}

pub fn get_str<'a>(value: &'a Value, path: &Path, field: &str) -> Result<&'a str> {
    get_field(value, path, field)?
        .as_str()
        .ok_or_else(|| Error::parse(path, format!("field `{field}` must be a string")))
}

pub fn get_array<'a>(value: &'a Value, path: &Path, field: &str) -> Result<&'a Vec<Value>> {
    get_field(value, path, field)?
        .as_array()
        .ok_or_else(|| Error::parse(path, format!("field `{field}` must be an array")))
}

pub fn get_f64_array(value: &Value, path: &Path, field: &str) -> Result<Vec<f64>> {
    let arr = get_array(value, path, field)?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .ok_or_else(|| Error::parse(path, format!("field `{field}[{i}]` must be a number")))
        })
        .collect()
}

/// Checks the `format_version` field of a container document.
pub fn check_format_version(value: &Value, path: &Path) -> Result<()> {
    let version = get_u64(value, path, "format_version")?;
    if version != 1 {
        return Err(Error::parse(
            path,
            format!("unsupported format_version {version}, expected 1"),
        ));
    }
    Ok(())
}
