//! Deterministic CSV assembly.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite f64 and makes reruns byte-comparable. Lines
//! end with LF; fields never need quoting because no emitted string
//! contains a comma.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{AppError, AppResult};

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Str(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Float(v) => {
                let _ = write!(out, "{v:.16e}");
            }
            Cell::Str(s) => {
                debug_assert!(!s.contains(',') && !s.contains('\n'));
                out.push_str(s);
            }
        }
    }
}

/// An in-memory result table with a fixed column order.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_csv()).map_err(|e| {
            AppError::config(format!("cannot write output '{}': {e}", path.display()))
        })
    }
}

/// A two-column plot series, written next to the main output as
/// `<stem>_plot.csv`.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn write_next_to(&self, output: &Path) -> AppResult<std::path::PathBuf> {
        let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let path = output.with_file_name(format!("{stem}_plot.csv"));
        let mut text = format!("{},{}\n", self.x_label, self.y_label);
        for &(x, y) in &self.points {
            let _ = writeln!(text, "{x:.16e},{y:.16e}");
        }
        fs::write(&path, text).map_err(|e| {
            AppError::config(format!("cannot write plot series '{}': {e}", path.display()))
        })?;
        Ok(path)
    }
}

/// Median of a nonempty slice (midpoint average for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of non-finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
