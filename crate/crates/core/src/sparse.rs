//! Compressed sparse row matrices and the sparse-dense product.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

thread_local! {
    static SPMM_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`spmm`] calls issued from the current thread.
///
/// The counter is per thread so concurrent work elsewhere cannot perturb a
/// measurement taken around a single-threaded training run.
pub fn spmm_call_count() -> u64 {
    SPMM_CALLS.with(Cell::get)
}

/// CSR matrix in canonical form: column indices strictly increasing per row,
/// no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a canonical matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed; entries that end up zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &t {
            if r >= n_rows {
                return Err(Error::OutOfRange { what: "row", index: r, limit: n_rows });
            }
            if c >= n_cols {
                return Err(Error::OutOfRange { what: "column", index: c, limit: n_cols });
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite value at ({r}, {c})")));
            }
        }
        t.sort_by_key(|e| (e.0, e.1));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut rows_of = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            i += 1;
            while i < t.len() && t[i].0 == r && t[i].1 == c {
                v += t[i].2;
                i += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
                rows_of.push(r);
            }
        }
        for &r in &rows_of {
            row_offsets[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self { n_rows, n_cols, row_offsets, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_offsets: vec![0; n_rows + 1], col_indices: Vec::new(), values: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                d.set(r, c, v);
            }
        }
        d
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = (0..self.n_rows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)));
        SparseMatrix::from_triplets(self.n_cols, self.n_rows, triplets).expect("transpose of a valid matrix is valid")
    }

    /// Largest `|m_ij - m_ji|`; zero for exactly symmetric matrices.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut sums = vec![0.0; self.n_cols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Checks the CSR invariants. Constructors uphold them; this is for tests
    /// and for matrices assembled elsewhere.
    pub fn check_canonical(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Format { what: "csr", message: m.to_string() });
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return bad("row_offsets length or origin");
        }
        if self.row_offsets[self.n_rows] != self.values.len() || self.col_indices.len() != self.values.len() {
            return bad("stored entry count");
        }
        for r in 0..self.n_rows {
            if self.row_offsets[r] > self.row_offsets[r + 1] {
                return bad("row_offsets decreasing");
            }
            let cols = &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= self.n_cols) {
                return bad("column order");
            }
        }
        if self.values.contains(&0.0) {
            return bad("explicit zero");
        }
        Ok(())
    }
}

/// Sparse-dense product `m · x`.
///
/// Each output row is accumulated over the stored entries of the matching row
/// of `m` in ascending column order, so the result is bitwise reproducible
/// regardless of how rows are scheduled across threads.
pub fn spmm(m: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if m.n_cols != x.rows() {
        return Err(Error::dims("spmm", format!("dense operand with {} rows", m.n_cols), format!("{} rows", x.rows())));
    }
    SPMM_CALLS.with(|c| c.set(c.get() + 1));

    let cols = x.cols();
    let mut out = DenseMatrix::zeros(m.n_rows, cols);
    if cols == 0 {
        return Ok(out);
    }
    let fill = |(r, orow): (usize, &mut [f64])| {
        for (c, v) in m.row(r) {
            for (o, &xv) in orow.iter_mut().zip(x.row(c)) {
                *o += v * xv;
            }
        }
    };
    let work = m.nnz() * cols;
    if work > 1 << 16 {
        out.as_mut_slice().par_chunks_mut(cols).enumerate().for_each(fill);
    } else {
        out.as_mut_slice().chunks_mut(cols).enumerate().for_each(fill);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralNormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the largest absolute eigenvalue of a symmetric matrix.
///
/// Iterates on `m²` (whose dominant eigenvalue is `λ_max²` and has no sign
/// ambiguity) and stops once successive Rayleigh quotients agree to a relative
/// tolerance of 1e-9.
pub fn spectral_norm_estimate(m: &SparseMatrix, iters: usize, seed: u64) -> Result<SpectralNormEstimate> {
    if m.n_rows != m.n_cols {
        return Err(Error::dims("spectral_norm_estimate", "square matrix", format!("{}x{}", m.n_rows, m.n_cols)));
    }
    let n = m.n_rows;
    if n == 0 || m.nnz() == 0 {
        return Ok(SpectralNormEstimate { value: 0.0, iterations: 0, converged: true });
    }
    const REL_TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DenseMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    normalize(&mut v);
    let mut prev = f64::NAN;
    for it in 1..=iters {
        let w = spmm(m, &v)?;
        let w2 = spmm(m, &w)?;
        // Rayleigh quotient of m² at unit v is ‖m v‖².
        let est = w.frobenius_norm();
        let norm = w2.frobenius_norm();
        if norm == 0.0 {
            return Ok(SpectralNormEstimate { value: est, iterations: it, converged: true });
        }
        v = w2;
        v.scale(1.0 / norm);
        if prev.is_finite() && (est - prev).abs() <= REL_TOL * est {
            return Ok(SpectralNormEstimate { value: est, iterations: it, converged: true });
        }
        prev = est;
    }
    Ok(SpectralNormEstimate { value: prev, iterations: iters, converged: false })
}

fn normalize(v: &mut DenseMatrix) {
    let n = v.frobenius_norm();
    if n > 0.0 {
        v.scale(1.0 / n);
    }
}
