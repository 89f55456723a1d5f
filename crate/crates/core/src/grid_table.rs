//! Plain-text table of values sampled on a regular grid.
//!
//! ```text
//! # grid-table v1
//! dim 2
//! shape 3 2
//! origin 0 0
//! spacing 0.5 0.5
//! columns value mask
//! 0.0 1
//! ...
//! ```
//!
//! Node `(i₀, …, i_{d−1})` sits at `origin + i·spacing`; rows are ordered with
//! the last index varying fastest. Values use Rust's shortest round-trip float
//! formatting, so a write/parse cycle is lossless. `nan` marks an undefined
//! value and lines starting with `#` after the header are ignored.

use std::fmt::Write as _;

use thiserror::Error;

pub const HEADER: &str = "# grid-table v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridTableError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("grid shape and metadata disagree: {0}")]
    Shape(String),
    #[error("no column named {0:?}")]
    MissingColumn(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub columns: Vec<String>,
    /// One row per node, one entry per column.
    pub rows: Vec<Vec<f64>>,
}

impl GridTable {
    pub fn new(
        shape: Vec<usize>,
        origin: Vec<f64>,
        spacing: Vec<f64>,
        columns: Vec<String>,
    ) -> Result<Self, GridTableError> {
        let d = shape.len();
        if d == 0 || origin.len() != d || spacing.len() != d {
            return Err(GridTableError::Shape(format!(
                "shape has {d} axes, origin {}, spacing {}",
                origin.len(),
                spacing.len()
            )));
        }
        if spacing.iter().any(|h| !(*h > 0.0)) || shape.contains(&0) {
            return Err(GridTableError::Shape("spacing must be positive and shape non-empty".into()));
        }
        if columns.is_empty() {
            return Err(GridTableError::Shape("at least one column is required".into()));
        }
        Ok(GridTable {
            shape,
            origin,
            spacing,
            columns,
            rows: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat row number.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (k, &m) in self.shape.iter().enumerate().rev() {
            idx[k] = flat % m;
            flat /= m;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &m)| acc * m + i)
    }

    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + i as f64 * self.spacing[k])
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, GridTableError> {
        let c = self
            .columns
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| GridTableError::MissingColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }

    /// Fill rows from a function of the node position.
    pub fn fill<F: FnMut(&[f64]) -> Vec<f64>>(&mut self, mut f: F) {
        self.rows = (0..self.len())
            .map(|i| {
                let row = f(&self.position(i));
                assert_eq!(row.len(), self.columns.len(), "row width");
                row
            })
            .collect();
    }

    pub fn to_text(&self) -> String {
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| format_value(*x))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "dim {}", self.dim()).unwrap();
        let shape: Vec<String> = self.shape.iter().map(|m| m.to_string()).collect();
        writeln!(s, "shape {}", shape.join(" ")).unwrap();
        writeln!(s, "origin {}", join(&self.origin)).unwrap();
        writeln!(s, "spacing {}", join(&self.spacing)).unwrap();
        writeln!(s, "columns {}", self.columns.join(" ")).unwrap();
        for row in &self.rows {
            writeln!(s, "{}", join(row)).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, GridTableError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let syntax = |line: usize, reason: &str| GridTableError::Syntax {
            line,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            Some((i, _)) => return Err(syntax(i, "missing grid-table v1 header")),
            None => return Err(syntax(0, "empty input")),
        }
        let mut lines = lines.filter(|(_, l)| !l.starts_with('#'));
        let mut field = |key: &str| -> Result<(usize, Vec<String>), GridTableError> {
            let (i, l) = lines
                .next()
                .ok_or_else(|| syntax(0, &format!("missing `{key}` line")))?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(key) {
                return Err(syntax(i, &format!("expected `{key}`")));
            }
            Ok((i, parts.map(str::to_string).collect()))
        };
        let (i, dim) = field("dim")?;
        let dim: usize = dim
            .first()
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| syntax(i, "bad dimension"))?;
        let (i, shape) = field("shape")?;
        let shape = shape
            .iter()
            .map(|v| v.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| syntax(i, "bad shape"))?;
        let (i, origin) = field("origin")?;
        let origin = parse_floats(&origin).ok_or_else(|| syntax(i, "bad origin"))?;
        let (i, spacing) = field("spacing")?;
        let spacing = parse_floats(&spacing).ok_or_else(|| syntax(i, "bad spacing"))?;
        let (_, columns) = field("columns")?;
        if shape.len() != dim {
            return Err(GridTableError::Shape(format!(
                "dim {dim} but shape has {} entries",
                shape.len()
            )));
        }
        let mut table = GridTable::new(shape, origin, spacing, columns)?;
        for (i, l) in lines {
            let row = parse_floats(&l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
                .ok_or_else(|| syntax(i, "bad value"))?;
            if row.len() != table.columns.len() {
                return Err(syntax(i, "row width differs from column count"));
            }
            table.rows.push(row);
        }
        if table.rows.len() != table.len() {
            return Err(GridTableError::RowCount {
                expected: table.len(),
                found: table.rows.len(),
            });
        }
        Ok(table)
    }
}

fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:?}")
    }
}

fn parse_floats(parts: &[String]) -> Option<Vec<f64>> {
    parts
        .iter()
        .map(|p| match p.as_str() {
            "nan" => Some(f64::NAN),
            _ => p.parse().ok(),
        })
        .collect()
}
