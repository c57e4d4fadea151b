//! Compressed-sparse-row matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Entries with magnitude at or below this are not stored.
pub const DROP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// input order, so the result is deterministic for a given triplet list.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut v) = triplets[i];
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            if v.abs() > DROP_TOLERANCE {
                indices.push(c as u32);
                values.push(v);
                offsets[r + 1] += 1;
            }
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        SparseMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (c, v) = self.row(r);
            c.iter().zip(v).map(move |(&c, &v)| (r, c as usize, v))
        })
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.offsets[r]..self.offsets[r + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *out = acc;
        }
    }

    /// `y += A x`.
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.offsets[r]..self.offsets[r + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *out += acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                let c = self.indices[k] as usize;
                indices[fill[c]] = r as u32;
                values[fill[c]] = self.values[k];
                fill[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            offsets,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// MatrixMarket `coordinate real general`, 1-based, shortest round-trip floats.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseMatrix> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty MatrixMarket file".into()))??;
        let h = header.to_ascii_lowercase();
        if !h.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(Error::Format(format!("unsupported MatrixMarket header {header:?}")));
        }
        let mut size = None;
        let mut triplets = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            let bad = || Error::Format(format!("bad MatrixMarket line {t:?}"));
            if size.is_none() {
                let n: Vec<usize> = parts
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                if n.len() != 3 {
                    return Err(bad());
                }
                size = Some((n[0], n[1], n[2]));
                triplets.reserve(n[2]);
                continue;
            }
            if parts.len() != 3 {
                return Err(bad());
            }
            let (rows, cols, _) = size.unwrap();
            let r: usize = parts[0].parse().map_err(|_| bad())?;
            let c: usize = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            if r == 0 || c == 0 || r > rows || c > cols {
                return Err(bad());
            }
            triplets.push((r - 1, c - 1, v));
        }
        let (rows, cols, nnz) = size.ok_or_else(|| Error::Format("missing size line".into()))?;
        if triplets.len() != nnz {
            return Err(Error::Format(format!(
                "expected {nnz} entries, found {}",
                triplets.len()
            )));
        }
        Ok(SparseMatrix::from_triplets(rows, cols, triplets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            4,
            vec![(0, 1, 2.0), (2, 3, -1.0), (0, 1, 0.5), (1, 0, 1e-20), (2, 0, 4.0)],
        )
    }

    #[test]
    fn triplets_sum_and_drop() {
        let m = sample();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0), (&[1u32][..], &[2.5][..]));
        assert_eq!(m.row_nnz(1), 0);
        assert_eq!(m.row(2), (&[0u32, 3][..], &[4.0, -1.0][..]));
    }

    #[test]
    fn matvec_and_transpose() {
        let m = sample();
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0, 4.0]), vec![5.0, 0.0, 0.0]);
        let t = m.transpose();
        assert_eq!(t.rows(), 4);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn matrix_market_round_trip() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        assert_eq!(SparseMatrix::read_matrix_market(&buf[..]).unwrap(), m);
        assert!(SparseMatrix::read_matrix_market(&b"garbage\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_is_adjoint(
            entries in prop::collection::vec((0usize..6, 0usize..5, -10.0f64..10.0), 0..30),
            x in prop::collection::vec(-1.0f64..1.0, 5),
            y in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let m = SparseMatrix::from_triplets(6, 5, entries);
            let ax = m.mul_vec(&x);
            let aty = m.transpose().mul_vec(&y);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = aty.iter().zip(&x).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
