//! Dense row-major matrices.
//!
//! `FeatureMatrix` holds node features, propagated hop features, hidden
//! representations and weights. Kernels here are plain loops in i-k-j order;
//! the sparse side of the work lives in [`crate::graph::CsrMatrix`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        FeatureMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_rows * n_cols != data.len() {
            return Err(Error::shape(format!(
                "{}x{} matrix needs {} values, got {}",
                n_rows,
                n_cols,
                n_rows * n_cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite entry at ({}, {})",
                pos / n_cols.max(1),
                pos % n_cols.max(1)
            )));
        }
        Ok(FeatureMatrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::shape("ragged rows"));
        }
        Self::from_vec(rows.len(), n_cols, rows.concat())
    }

    /// Glorot/Xavier uniform initialization, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform<R: Rng + ?Sized>(n_rows: usize, n_cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_rows + n_cols) as f64).sqrt();
        let data = (0..n_rows * n_cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        FeatureMatrix { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(rows.len(), self.n_cols);
        for (dst, &src) in rows.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(self.n_rows, width);
        for i in 0..self.n_rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    /// Rows `[start, start + height)` as a new matrix.
    pub fn row_block(&self, start: usize, height: usize) -> FeatureMatrix {
        let data = self.data[start * self.n_cols..(start + height) * self.n_cols].to_vec();
        FeatureMatrix {
            n_rows: height,
            n_cols: self.n_cols,
            data,
        }
    }

    /// Column-wise concatenation, left to right.
    pub fn hconcat(blocks: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let n_rows = blocks.first().map_or(0, |b| b.n_rows);
        if blocks.iter().any(|b| b.n_rows != n_rows) {
            return Err(Error::shape("hconcat blocks differ in row count"));
        }
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut out = FeatureMatrix::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            let mut offset = 0;
            let row = out.row_mut(i);
            for b in blocks {
                row[offset..offset + b.n_cols].copy_from_slice(b.row(i));
                offset += b.n_cols;
            }
        }
        Ok(out)
    }

    /// Row-wise stacking, top to bottom.
    pub fn vconcat(blocks: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let n_cols = blocks.first().map_or(0, |b| b.n_cols);
        if blocks.iter().any(|b| b.n_cols != n_cols) {
            return Err(Error::shape("vconcat blocks differ in column count"));
        }
        let n_rows = blocks.iter().map(|b| b.n_rows).sum();
        let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
        Ok(FeatureMatrix { n_rows, n_cols, data })
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut out = FeatureMatrix::zeros(self.n_rows, rhs.n_cols);
        for i in 0..self.n_rows {
            let out_row = &mut out.data[i * rhs.n_cols..(i + 1) * rhs.n_cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_rows != rhs.n_rows {
            return Err(Error::shape(format!(
                "t_matmul {}x{} (transposed) by {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut out = FeatureMatrix::zeros(self.n_cols, rhs.n_cols);
        for r in 0..self.n_rows {
            let rhs_row = rhs.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.n_cols..(i + 1) * rhs.n_cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_cols != rhs.n_cols {
            return Err(Error::shape(format!(
                "matmul_t {}x{} by {}x{} (transposed)",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut out = FeatureMatrix::zeros(self.n_rows, rhs.n_rows);
        for i in 0..self.n_rows {
            let a = self.row(i);
            for j in 0..rhs.n_rows {
                out.data[i * rhs.n_rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out.data[j * self.n_rows + i] = self.data[i * self.n_cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &FeatureMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("add_assign shapes differ"));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled_add(&mut self, alpha: f64, rhs: &FeatureMatrix) {
        debug_assert_eq!(self.shape(), rhs.shape());
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += alpha * b;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> FeatureMatrix {
        let mut out = self.clone();
        for i in 0..out.n_rows {
            softmax_in_place(out.row_mut(i));
        }
        out
    }

    /// Per-row argmax; ties resolve to the lowest column index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Scales every row to unit L1 norm; all-zero rows are left untouched.
    pub fn normalize_rows_l1(&mut self) {
        for i in 0..self.n_rows {
            let row = self.row_mut(i);
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]]).unwrap();
        let b = FeatureMatrix::from_rows(&[vec![1.0, 0.5], vec![2.0, 0.0], vec![-1.0, 4.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[5.0, 0.5, -5.0, 12.0]);
        assert_eq!(a.transpose().t_matmul(&b).unwrap(), ab);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = FeatureMatrix::from_rows(&[vec![1000.0, 0.0, -1000.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let p = m.softmax_rows();
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!((p.get(1, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(matches!(FeatureMatrix::from_vec(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            FeatureMatrix::from_vec(1, 2, vec![0.0, f64::NAN]),
            Err(Error::Input(_))
        ));
    }
}
