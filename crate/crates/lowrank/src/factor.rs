//! Dense `n x r` factors: the optimization variable and the output format
//! of every approximation method in this crate (`M ≈ X Xᵀ`).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix with `n` rows and `r` columns, stored row-major.
///
/// Rows are the per-point embedding vectors; the represented PSD matrix is
/// `X Xᵀ`. Immutable sharing across threads is safe; all mutation happens
/// through explicit `&mut` access during construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    n: usize,
    r: usize,
    values: Vec<f64>,
}

impl Factor {
    /// Creates a factor filled with zeros.
    pub fn zeros(n: usize, r: usize) -> Result<Self> {
        Self::check_shape(n, r)?;
        Ok(Factor {
            n,
            r,
            values: vec![0.0; n * r],
        })
    }

    /// Creates a factor from a row-major value buffer.
    pub fn from_row_major(n: usize, r: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(n, r)?;
        if values.len() != n * r {
            return Err(Error::dim(format!(
                "factor buffer has {} values, expected {}x{}={}",
                values.len(),
                n,
                r,
                n * r
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("factor contains non-finite values"));
        }
        Ok(Factor { n, r, values })
    }

    fn check_shape(n: usize, r: usize) -> Result<()> {
        if n == 0 || r == 0 {
            return Err(Error::invalid("factor dimensions must be at least 1"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.r..(i + 1) * self.r]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.r..(i + 1) * self.r]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Number of stored numeric entries (`n * r`).
    pub fn storage_entries(&self) -> usize {
        self.values.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &Factor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Returns `self - eta * dir`.
    pub fn step(&self, eta: f64, dir: &Factor) -> Result<Factor> {
        self.check_same_shape(dir)?;
        let values = self
            .values
            .iter()
            .zip(&dir.values)
            .map(|(x, g)| x - eta * g)
            .collect();
        Ok(Factor {
            n: self.n,
            r: self.r,
            values,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &Factor) -> Result<()> {
        if self.n != other.n || self.r != other.r {
            return Err(Error::dim(format!(
                "factors have shapes {}x{} and {}x{}",
                self.n, self.r, other.n, other.r
            )));
        }
        Ok(())
    }

    /// Gram matrix `Xᵀ X` (r x r).
    pub fn gram(&self) -> DMatrix<f64> {
        let r = self.r;
        let mut g = DMatrix::zeros(r, r);
        for i in 0..self.n {
            let row = self.row(i);
            for a in 0..r {
                for b in a..r {
                    g[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    /// Cross Gram matrix `selfᵀ other` (r_self x r_other).
    pub fn cross_gram(&self, other: &Factor) -> Result<DMatrix<f64>> {
        if self.n != other.n {
            return Err(Error::dim(format!(
                "cross gram needs equal row counts, got {} and {}",
                self.n, other.n
            )));
        }
        let mut g = DMatrix::zeros(self.r, other.r);
        for i in 0..self.n {
            let a = self.row(i);
            let b = other.row(i);
            for (ka, &va) in a.iter().enumerate() {
                for (kb, &vb) in b.iter().enumerate() {
                    g[(ka, kb)] += va * vb;
                }
            }
        }
        Ok(g)
    }

    /// Right-multiplies by an `r x r` matrix, returning `X Q`.
    pub fn mul_right(&self, q: &DMatrix<f64>) -> Result<Factor> {
        if q.nrows() != self.r {
            return Err(Error::dim(format!(
                "right factor is {}x{}, expected {} rows",
                q.nrows(),
                q.ncols(),
                self.r
            )));
        }
        let rc = q.ncols();
        let mut values = vec![0.0; self.n * rc];
        for i in 0..self.n {
            let row = self.row(i);
            let out = &mut values[i * rc..(i + 1) * rc];
            for (k, &v) in row.iter().enumerate() {
                for c in 0..rc {
                    out[c] += v * q[(k, c)];
                }
            }
        }
        Factor::from_row_major(self.n, rc, values)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.r, &self.values)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Factor> {
        let mut values = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                values.push(m[(i, j)]);
            }
        }
        Factor::from_row_major(m.nrows(), m.ncols(), values)
    }

    /// Writes the factor as text: header `n r`, then one whitespace-separated
    /// row per line, values in scientific notation with 17 significant digits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{} {}", self.n, self.r)?;
            for i in 0..self.n {
                let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Reads a factor written by [`Factor::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Factor> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (n, r) = loop {
            match lines.next() {
                Some((idx, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    let trimmed = line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    let mut it = trimmed.split_whitespace();
                    let n: usize = parse_field(path, idx + 1, it.next(), "row count")?;
                    let r: usize = parse_field(path, idx + 1, it.next(), "column count")?;
                    if it.next().is_some() {
                        return Err(Error::parse(path, idx + 1, "trailing tokens in header"));
                    }
                    break (n, r);
                }
                None => return Err(Error::parse(path, 1, "missing header line")),
            }
        };

        let mut values = Vec::with_capacity(n * r);
        let mut rows_read = 0usize;
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != r {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected {} values in row, found {}", r, fields.len()),
                ));
            }
            for f in fields {
                let v: f64 = f.parse().map_err(|_| {
                    Error::parse(path, idx + 1, format!("invalid float literal {f:?}"))
                })?;
                values.push(v);
            }
            rows_read += 1;
        }
        if rows_read != n {
            return Err(Error::parse(
                path,
                0,
                format!("expected {n} rows, found {rows_read}"),
            ));
        }
        Factor::from_row_major(n, r, values)
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    field: Option<&str>,
    what: &str,
) -> Result<T> {
    let raw = field.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what}: {raw:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Factor::from_row_major(1, 2, vec![1.0, f64::NAN]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(Factor::zeros(0, 1).is_err());
        assert!(Factor::zeros(1, 0).is_err());
    }

    #[test]
    fn gram_matches_dense() {
        let x = Factor::from_row_major(3, 2, vec![1.0, 2.0, -1.0, 0.5, 3.0, -2.0]).unwrap();
        let d = x.to_dmatrix();
        let g = x.gram();
        let gd = d.transpose() * &d;
        assert!((g - gd).norm() < 1e-12);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factor.txt");
        let x =
            Factor::from_row_major(2, 3, vec![1.0, -2.5e-7, 3.0, 0.125, 9.0, 1.0 / 3.0]).unwrap();
        x.save(&path).unwrap();
        let y = Factor::load(&path).unwrap();
        assert_eq!(x, y);
    }
}
