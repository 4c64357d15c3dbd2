//! Row-major sample matrices.

use std::io::{BufRead, Write};

use crate::error::{HxdError, Result};

/// `n × D` observations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(HxdError::InvalidArgument(format!(
                "{} values do not fill rows of width {dim}",
                data.len()
            )));
        }
        Ok(SampleMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(HxdError::EmptySample)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(HxdError::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        SampleMatrix::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Checks every coordinate lies in `[0, 1]`.
    pub fn check_unit_cube(&self) -> Result<()> {
        for (i, r) in self.rows().enumerate() {
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(HxdError::OutOfCube { index: i });
            }
        }
        Ok(())
    }

    /// Selects rows in the given order.
    pub fn select(&self, order: &[usize]) -> SampleMatrix {
        let mut data = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        SampleMatrix {
            dim: self.dim,
            data,
        }
    }

    /// Headerless CSV, one observation per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.rows() {
            let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads headerless CSV; blank lines and `#` comments are skipped.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dim = 0;
        let mut data = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let vals = t
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        HxdError::Parse(format!("line {}: bad number '{}'", lineno + 1, f.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if dim == 0 {
                dim = vals.len();
            } else if vals.len() != dim {
                return Err(HxdError::Parse(format!(
                    "line {}: expected {dim} columns, found {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            data.extend(vals);
        }
        if dim == 0 {
            return Err(HxdError::EmptySample);
        }
        SampleMatrix::new(dim, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = SampleMatrix::from_rows(&[vec![0.1, 0.25], vec![1.0 / 3.0, 0.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = SampleMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "0.1,0.2\n0.3\n";
        assert!(SampleMatrix::read_csv(text.as_bytes()).is_err());
        assert!(SampleMatrix::read_csv("".as_bytes()).is_err());
        assert!(SampleMatrix::read_csv("0.1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn cube_check() {
        let m = SampleMatrix::from_rows(&[vec![0.1], vec![1.2]]).unwrap();
        assert!(matches!(m.check_unit_cube(), Err(HxdError::OutOfCube { index: 1 })));
    }
}
