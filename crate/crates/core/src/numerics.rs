//! Dense row-major `f64` matrices and the handful of kernels the rest of the
//! crate needs: matrix product, row normalization, row softmax and cosine
//! similarity.
//!
//! Every reduction runs left-to-right over the contracted index so that results
//! are bit-reproducible regardless of how callers slice their batches.

use crate::error::{Error, Result};

/// Rows whose Euclidean norm falls below this are treated as zero vectors.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite matrix entry at row {} col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has length {} but row 0 has {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix still has `rows` rows.
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Gathers the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Euclidean dot product, accumulated left to right.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a · b`. Each output entry is accumulated left to right over the shared
/// dimension, so the result does not depend on how `a` is split into row blocks.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` computed as row-by-row dot products. Bit-identical to
/// `matmul(a, &b.transpose())`.
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_bt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(a_row, b.row(j));
        }
    }
    Ok(out)
}

/// Row-normalized matrix together with the norms it was divided by.
#[derive(Debug, Clone)]
pub struct NormalizedRows {
    pub matrix: Matrix,
    pub norms: Vec<f64>,
    /// `true` where the input row had norm below [`NORM_EPS`]; that output row is all zeros.
    pub degenerate: Vec<bool>,
}

impl NormalizedRows {
    pub fn first_degenerate(&self) -> Option<usize> {
        self.degenerate.iter().position(|&d| d)
    }

    /// Fails with the index of the first zero-norm row, if any.
    pub fn require_nondegenerate(self, op: &'static str) -> Result<Self> {
        match self.first_degenerate() {
            Some(row) => Err(Error::DegenerateRow { op, row }),
            None => Ok(self),
        }
    }
}

pub fn l2_normalize_rows(m: &Matrix) -> NormalizedRows {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows);
    let mut degenerate = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let row = out.row_mut(r);
        let n = norm(row);
        norms.push(n);
        if n < NORM_EPS {
            row.iter_mut().for_each(|v| *v = 0.0);
            degenerate.push(true);
        } else {
            row.iter_mut().for_each(|v| *v /= n);
            degenerate.push(false);
        }
    }
    NormalizedRows {
        matrix: out,
        norms,
        degenerate,
    }
}

/// Numerically stable softmax of a single slice, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log(Σ exp(row))` with max subtraction.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in row {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let cols = m.cols;
        softmax_into(m.row(r), &mut out.data[r * cols..(r + 1) * cols]);
    }
    out
}

/// Entry `(i, j)` is the cosine of row `i` of `a` and row `j` of `b`.
pub fn cosine_similarity_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "cosine_similarity_matrix",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let an = l2_normalize_rows(a).require_nondegenerate("cosine_similarity_matrix (left)")?;
    let bn = l2_normalize_rows(b).require_nondegenerate("cosine_similarity_matrix (right)")?;
    matmul_bt(&an.matrix, &bn.matrix)
}
