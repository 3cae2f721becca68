//! Binary and CSV persistence for trained maps.
//!
//! Binary layout (little endian): 8-byte magic, then `rows`, `cols`, `dim`,
//! `trained_epochs`, `seed` as u64, then `rows * cols * dim` f64 values.

use std::io::{Read, Write};
use std::path::Path;

use super::SomGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CODEBOOK_MAGIC: &[u8; 8] = b"SOMCB001";
const HEADER_LEN: usize = 8 + 5 * 8;

pub fn save_codebook<T: Scalar>(path: &Path, grid: &SomGrid<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + grid.codebook.len() * 8);
    buf.extend_from_slice(CODEBOOK_MAGIC);
    for v in [grid.rows, grid.cols, grid.dim, grid.trained_epochs] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.extend_from_slice(&grid.seed.to_le_bytes());
    for v in &grid.codebook {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.into(),
    }
}

pub fn load_codebook<T: Scalar>(path: &Path) -> Result<SomGrid<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != CODEBOOK_MAGIC {
        return Err(corrupt(path, "not a codebook file"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
    let [rows, cols, dim, epochs] = [0, 1, 2, 3].map(|i| word(i) as usize);
    let seed = word(4);
    let n = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| corrupt(path, "codebook dimensions overflow"))?;
    if bytes.len() - HEADER_LEN != n * 8 {
        return Err(corrupt(
            path,
            format!(
                "expected {} payload bytes for {rows}x{cols}x{dim}, found {}",
                n * 8,
                bytes.len() - HEADER_LEN
            ),
        ));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let mut grid = SomGrid::new(rows, cols, dim, values).map_err(|e| corrupt(path, e.to_string()))?;
    grid.trained_epochs = epochs;
    grid.seed = seed;
    Ok(grid)
}

/// One line per unit: `unit_row,unit_col,<feature columns>`.
pub fn write_codebook_csv<T: Scalar>(path: &Path, grid: &SomGrid<T>, feature_names: &[String]) -> Result<()> {
    if feature_names.len() != grid.dim {
        return Err(Error::invalid(format!(
            "{} names for a {}-dim codebook",
            feature_names.len(),
            grid.dim
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_row".to_string(), "unit_col".to_string()];
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)?;
    for u in 0..grid.n_units() {
        let (r, c) = grid.coords(u);
        let mut rec = vec![r.to_string(), c.to_string()];
        rec.extend(grid.unit(u).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SomGrid<f64> {
        let mut g = SomGrid::new(2, 3, 2, (0..12).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap();
        g.trained_epochs = 7;
        g.seed = 99;
        g
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.bin");
        let g = sample();
        save_codebook(&p, &g).unwrap();
        assert_eq!(load_codebook::<f64>(&p).unwrap(), g);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), (HEADER_LEN + 12 * 8) as u64);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.bin");
        save_codebook(&p, &sample()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();

        let truncated = dir.path().join("short.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_codebook::<f64>(&truncated).is_err());

        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_codebook::<f64>(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_has_one_line_per_unit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.csv");
        write_codebook_csv(&p, &sample(), &["a".into(), "b".into()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "unit_row,unit_col,a,b");
        assert_eq!(lines.len(), 7);
        assert!(lines[6].starts_with("1,2,"));
    }
}
