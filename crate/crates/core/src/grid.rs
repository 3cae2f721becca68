//! Dense row-major 2-D grid used for lattice-shaped results.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "grid {rows}x{cols} needs {} cells, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn at(&self, idx: usize) -> &T {
        &self.data[idx]
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

fn lines(rows: usize, cols: usize, cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::new();
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| cell(r, c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

impl<T: Scalar> Grid<T> {
    /// Headerless `rows x cols` CSV with shortest round-trip formatting.
    pub fn csv_text(&self) -> String {
        lines(self.rows, self.cols, |r, c| self.get(r, c).to_string())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.csv_text())
    }
}

impl<T: Scalar> Grid<Option<T>> {
    /// Undefined cells are written as empty fields.
    pub fn csv_text(&self) -> String {
        lines(self.rows, self.cols, |r, c| match self.get(r, c) {
            Some(v) => v.to_string(),
            None => String::new(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.csv_text())
    }
}

/// Reads a headerless numeric grid; every line must have the same width
/// and every cell must parse (empty cells become `None`).
pub fn read_grid_csv(path: &Path) -> Result<Grid<Option<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if *cols.get_or_insert(fields.len()) != fields.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: format!("expected {} fields, found {}", cols.unwrap(), fields.len()),
            });
        }
        for f in fields {
            let v = if f.is_empty() {
                None
            } else {
                Some(f.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("bad number {f:?}: {e}"),
                })?)
            };
            data.push(v);
        }
        rows += 1;
    }
    Grid::from_vec(rows, cols.unwrap_or(0), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = Grid::from_vec(2, 2, vec![Some(0.1), None, Some(-3.0), Some(1e-300)]).unwrap();
        g.write_csv(&p).unwrap();
        assert_eq!(read_grid_csv(&p).unwrap(), g);
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_grid_csv(&p), Err(Error::Parse { line: 2, .. })));
    }
}
