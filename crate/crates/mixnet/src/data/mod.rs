//! Dataset ingestion, toy-data generation, normalization, model
//! persistence, and plot-data export.

mod checkpoint;
mod grid;
mod idx;
pub mod metrics;
mod toy;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, SavedModel};
pub use grid::export_grid;
pub use idx::load_idx;
pub use toy::{gen_toy, ToyKind};

use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Per-dimension min-max record: `normalized = (x - min) / span`,
/// `original = normalized * span + min`. Constant dimensions keep span 0
/// and normalize to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    min: Vec<f64>,
    span: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &Mat) -> Normalization {
        let d = x.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        let span = min.iter().zip(&max).map(|(a, b)| b - a).collect();
        Normalization { min, span }
    }

    /// Fixed `[0, limit]` scaling (pixel data uses limit 255).
    pub fn fixed_scale(d: usize, limit: f64) -> Normalization {
        Normalization {
            min: vec![0.0; d],
            span: vec![limit; d],
        }
    }

    pub fn from_parts(min: Vec<f64>, span: Vec<f64>) -> Result<Normalization> {
        if min.len() != span.len() {
            return Err(Error::ShapeMismatch(
                "normalization min/span lengths differ".into(),
            ));
        }
        Ok(Normalization { min, span })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn span(&self) -> &[f64] {
        &self.span
    }

    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..self.min.len() {
                row[c] = if self.span[c] != 0.0 {
                    (row[c] - self.min[c]) / self.span[c]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Mat) -> Result<Mat> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..self.min.len() {
                row[c] = row[c] * self.span[c] + self.min[c];
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Mat) -> Result<()> {
        if x.cols() != self.min.len() {
            return Err(Error::ShapeMismatch(format!(
                "normalization covers {} dimensions, data has {}",
                self.min.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// An `N x D` dataset normalized to `[0, 1]`, its normalization record, and
/// optional integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: Mat,
    pub labels: Option<Vec<i64>>,
    pub normalization: Normalization,
}

impl Dataset {
    /// Builds a dataset from raw (unnormalized) rows.
    pub fn from_raw(raw: Mat, labels: Option<Vec<i64>>) -> Result<Dataset> {
        if raw.is_empty() {
            return Err(Error::Format("dataset has no rows".into()));
        }
        if !raw.all_finite() {
            return Err(Error::Format("dataset contains non-finite values".into()));
        }
        if let Some(l) = &labels {
            if l.len() != raw.rows() {
                return Err(Error::Format(format!(
                    "{} labels for {} rows",
                    l.len(),
                    raw.rows()
                )));
            }
        }
        let normalization = Normalization::fit(&raw);
        let data = normalization.apply(&raw)?;
        Ok(Dataset {
            data,
            labels,
            normalization,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// The data mapped back to original units.
    pub fn original_data(&self) -> Mat {
        self.normalization
            .invert(&self.data)
            .expect("record fits its own data")
    }
}

/// Loads a comma-separated file; when `has_labels` is set the last column
/// is parsed as integer labels. Values are min-max normalized per column.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let label = if has_labels {
            let cell = cells.pop().ok_or_else(|| {
                Error::Format(format!("{}:{}: empty row", path.display(), lineno + 1))
            })?;
            Some(cell.parse::<i64>().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: label cell '{cell}' is not an integer",
                    path.display(),
                    lineno + 1
                ))
            })?)
        } else {
            None
        };
        let mut row = Vec::with_capacity(cells.len());
        for cell in &cells {
            row.push(cell.parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cell '{cell}' is not numeric",
                    path.display(),
                    lineno + 1
                ))
            })?);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "{}:{}: row has {} columns, expected {w}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
        if let Some(l) = label {
            labels.push(l);
        }
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    let raw = Mat::from_rows(&rows)?;
    Dataset::from_raw(raw, has_labels.then_some(labels))
}

/// Writes rows (and optional trailing label column) as comma-separated
/// text. The whole payload is built first so failures leave no file behind.
pub fn write_csv(path: &Path, data: &Mat, labels: Option<&[i64]>) -> Result<()> {
    let mut out = String::new();
    for (i, row) in data.iter_rows().enumerate() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        if let Some(l) = labels {
            out.push(',');
            out.push_str(&format!("{}", l[i]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// run never leaves a partial output file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_round_trip_with_labels() {
        let dir = tmpdir();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "0,0,0\n1,1,1\n0.5,0.25,0\n").unwrap();
        let ds = load_csv(&p, true).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels.as_deref(), Some(&[0i64, 1, 0][..]));
        // min-max: first column spans [0,1] already.
        assert_eq!(ds.data.get(2, 0), 0.5);
    }

    #[test]
    fn csv_simple_two_point_file_normalizes_to_unit_corners() {
        let dir = tmpdir();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "0,0\n1,1\n").unwrap();
        let ds = load_csv(&p, false).unwrap();
        assert_eq!(ds.data.row(0), &[0.0, 0.0]);
        assert_eq!(ds.data.row(1), &[1.0, 1.0]);
    }

    #[test]
    fn csv_rejects_non_numeric_cell_with_location() {
        let dir = tmpdir();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "0,0\n1,oops\n").unwrap();
        let err = load_csv(&p, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("oops") && msg.contains(":2"), "{msg}");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tmpdir();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "0,0\n1\n").unwrap();
        assert!(load_csv(&p, false).is_err());
    }

    #[test]
    fn normalization_round_trips_to_original_units() {
        let raw = Mat::from_rows(&[vec![-3.0, 10.0], vec![5.0, 10.0], vec![1.0, 40.0]]).unwrap();
        let ds = Dataset::from_raw(raw.clone(), None).unwrap();
        assert!(ds.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let back = ds.original_data();
        for (a, b) in raw.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn write_csv_then_load_recovers_values() {
        let dir = tmpdir();
        let p = dir.path().join("out.csv");
        let m = Mat::from_rows(&[vec![0.125, -2.5], vec![3.0, 0.0]]).unwrap();
        write_csv(&p, &m, Some(&[7, -1])).unwrap();
        let ds = load_csv(&p, true).unwrap();
        assert_eq!(ds.labels.as_deref(), Some(&[7i64, -1][..]));
        let back = ds.original_data();
        for (a, b) in m.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
