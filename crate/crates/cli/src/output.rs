//! Report files. Contents depend only on the run configuration, never on
//! timing or thread count.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(&format!("cannot create {}", dir.display()), e))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::io("cannot serialise report", e))?;
    text.push('\n');
    fs::write(&path, text)
        .map_err(|e| Failure::io(&format!("cannot write {}", path.display()), e))?;
    Ok(path)
}

pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let fail = |e: csv::Error| Failure::io(&format!("cannot write {}", path.display()), e);
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Failure::io(&format!("cannot write {}", path.display()), e))?;
    Ok(path)
}

/// Shortest round-trip form in exponent notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn resolution(r: &[usize]) -> String {
    r.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// File-name fragment for a manifold name.
pub fn slug(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}
