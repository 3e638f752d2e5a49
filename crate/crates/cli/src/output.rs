//! File emission: atomic writes, shortest round-trip float formatting, and
//! the non-finite guard every emitted number passes through.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::AppError;

/// Formats a float with the shortest representation that round-trips;
/// refuses non-finite values so NaNs never reach disk.
pub fn fmt_f64(v: f64) -> Result<String, AppError> {
    if !v.is_finite() {
        return Err(AppError::Numeric(format!("non-finite value {v} in output")));
    }
    Ok(format!("{v}"))
}

/// Writes bytes to `path` via a temp file in the same directory plus a
/// rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| AppError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .map_err(|e| AppError::Data(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| AppError::Data(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Writes a CSV with the given header and rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), AppError> {
    let mut out = String::with_capacity(header.len() + 1 + rows.len() * 32);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Serializes a value as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let json = serde_json::to_vec_pretty(value)
        .map_err(|e| AppError::Numeric(format!("cannot serialize {}: {e}", path.display())))?;
    write_atomic(path, &json)
}
