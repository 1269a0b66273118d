//! CSV emission: header row, `\n` line endings, 17-significant-digit floats.

use std::fmt::Write as _;
use std::path::Path;

use crate::Result;

/// One cell of a CSV row.
#[derive(Clone, Debug)]
pub enum Cell {
    Str(String),
    Int(i64),
    Uint(u64),
    Float(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Uint(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Uint(v)
    }
}

/// Round-trippable decimal form: 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        // integral values stay readable
        format!("{v:.1}")
    } else {
        format!("{v:.16e}")
    }
}

/// Render a table; columns never contain commas by construction.
pub fn render_csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for cell in row {
            if !first {
                out.push(',');
            }
            first = false;
            match cell {
                Cell::Str(s) => out.push_str(s),
                Cell::Int(v) => {
                    let _ = write!(out, "{v}");
                }
                Cell::Uint(v) => {
                    let _ = write!(out, "{v}");
                }
                Cell::Float(v) => out.push_str(&format_float(*v)),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_csv(header, rows))?;
    Ok(())
}
