use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// How row-independent kernels are scheduled.
///
/// Both modes accumulate each output row independently in the same order, so
/// they produce bitwise-identical results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

/// Compressed sparse row matrix with strictly increasing column indices per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::shape(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::shape("row_ptr bounds disagree with col_idx/values"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::shape("row_ptr is decreasing"));
        }
        for r in 0..n_rows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::shape(format!("row {r} columns not strictly increasing")));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::shape(format!("row {r} has a column index >= {n_cols}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite value in sparse matrix"));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are an error.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= n_rows || *c >= n_cols) {
            return Err(Error::input(format!(
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            )));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n_rows + 1];
        for &(r, _, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let (col_idx, values) = entries.into_iter().map(|(_, c, v)| (c, v)).unzip();
        Self::try_new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Sparse copy of the chosen rows of a dense matrix, dropping exact zeros.
    pub fn from_dense_rows(dense: &FeatureMatrix, rows: &[usize]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: rows.len(),
            n_cols: dense.n_cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(dense: &FeatureMatrix) -> Self {
        let rows: Vec<usize> = (0..dense.n_rows()).collect();
        Self::from_dense_rows(dense, &rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// Stored value at `(r, c)`, or 0 when the entry is absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |i| vals[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn to_dense(&self) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let entries = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, entries)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }
}

/// Sparse-dense product `m · x`, row by row.
pub fn spmm(m: &CsrMatrix, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    spmm_with(m, x, Exec::Sequential)
}

pub fn spmm_with(m: &CsrMatrix, x: &FeatureMatrix, exec: Exec) -> Result<FeatureMatrix> {
    if m.n_cols != x.n_rows() {
        return Err(Error::shape(format!(
            "spmm {}x{} by {}x{}",
            m.n_rows,
            m.n_cols,
            x.n_rows(),
            x.n_cols()
        )));
    }
    let width = x.n_cols();
    let mut out = FeatureMatrix::zeros(m.n_rows, width);
    if width == 0 {
        return Ok(out);
    }
    let kernel = |(r, out_row): (usize, &mut [f64])| {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                *o += v * xv;
            }
        }
    };
    match exec {
        Exec::Sequential => out
            .data_mut()
            .chunks_exact_mut(width)
            .enumerate()
            .for_each(kernel),
        Exec::Parallel => out
            .data_mut()
            .par_chunks_exact_mut(width)
            .enumerate()
            .for_each(kernel),
    }
    Ok(out)
}

/// `mᵀ · x` without materializing the transpose.
pub fn spmm_transposed(m: &CsrMatrix, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if m.n_rows != x.n_rows() {
        return Err(Error::shape(format!(
            "spmm_transposed {}x{} (transposed) by {}x{}",
            m.n_rows,
            m.n_cols,
            x.n_rows(),
            x.n_cols()
        )));
    }
    let width = x.n_cols();
    let mut out = FeatureMatrix::zeros(m.n_cols, width);
    for r in 0..m.n_rows {
        let (cols, vals) = m.row(r);
        let x_row = x.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &xv) in out.row_mut(c).iter_mut().zip(x_row) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}
