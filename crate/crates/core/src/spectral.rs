//! Dense small-graph spectral machinery: a self-contained cyclic Jacobi
//! eigensolver, the graph Fourier transform, spectral polynomial filters and
//! the matrix exponential.
//!
//! This module shares nothing with the sparse propagation path beyond the
//! [`DenseMatrix`] container, so it can serve as ground truth for it.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Largest matrix order accepted by the dense oracle.
pub const MAX_ORACLE_ORDER: usize = 2000;

const SYMMETRY_TOL: f64 = 1e-12;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// `M = U diag(λ) Uᵀ` with eigenvalues ascending and eigenvectors as the
/// columns of `U`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SpectralDecomposition {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn apply_spectral_fn(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.order();
        let u = &self.eigenvectors;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (p, &fp) in fl.iter().enumerate() {
                    s += u.get(i, p) * fp * u.get(j, p);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthonormality_residual(&self) -> f64 {
        let u = &self.eigenvectors;
        let utu = u.t_matmul(u).expect("square");
        utu.max_abs_diff(&DenseMatrix::identity(self.order()))
    }

    /// `‖U Λ Uᵀ − m‖_max`.
    pub fn reconstruction_residual(&self, m: &DenseMatrix) -> f64 {
        self.apply_spectral_fn(|l| l).max_abs_diff(m)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps rotate every off-diagonal pair until the off-diagonal Frobenius
/// mass drops below 1e-12 relative to the matrix norm.
pub fn dense_eigendecomposition(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::dims("dense_eigendecomposition", "square matrix", format!("{}x{}", n, m.cols())));
    }
    if n > MAX_ORACLE_ORDER {
        return Err(Error::InvalidInput(format!("dense oracle limited to n <= {MAX_ORACLE_ORDER}, got {n}")));
    }
    let asym = m.max_abs_diff(&m.transpose());
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }

    // symmetrise exactly so rounding in the input cannot bias the rotations
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= OFF_DIAGONAL_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, t, apq);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let eigenvalues = order.iter().map(|&i| a.get(i, i)).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = a.rows();
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a.get(r, p);
        let arq = a.get(r, q);
        let np = c * arp - s * arq;
        let nq = s * arp + c * arq;
        a.set(r, p, np);
        a.set(p, r, np);
        a.set(r, q, nq);
        a.set(q, r, nq);
    }
    for r in 0..n {
        let vrp = v.get(r, p);
        let vrq = v.get(r, q);
        v.set(r, p, c * vrp - s * vrq);
        v.set(r, q, s * vrp + c * vrq);
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn check_signal(dec: &SpectralDecomposition, len: usize, context: &'static str) -> Result<()> {
    if len != dec.order() {
        return Err(Error::dims(context, dec.order(), len));
    }
    Ok(())
}

/// `x̂ = Uᵀ x`.
pub fn graph_fourier(dec: &SpectralDecomposition, x: &[f64]) -> Result<Vec<f64>> {
    check_signal(dec, x.len(), "graph_fourier")?;
    let n = dec.order();
    let u = &dec.eigenvectors;
    Ok((0..n).map(|k| (0..n).map(|i| u.get(i, k) * x[i]).sum()).collect())
}

/// `x = U x̂`.
pub fn inverse_graph_fourier(dec: &SpectralDecomposition, coeffs: &[f64]) -> Result<Vec<f64>> {
    check_signal(dec, coeffs.len(), "inverse_graph_fourier")?;
    let n = dec.order();
    let u = &dec.eigenvectors;
    Ok((0..n).map(|i| (0..n).map(|k| u.get(i, k) * coeffs[k]).sum()).collect())
}

/// `U diag(Σ θ_i λ^i) Uᵀ x`, evaluated in the spectral domain.
pub fn spectral_polynomial_filter(dec: &SpectralDecomposition, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let xhat = graph_fourier(dec, x)?;
    let filtered: Vec<f64> = xhat.iter().zip(&dec.eigenvalues).map(|(&c, &l)| c * horner(theta, l)).collect();
    inverse_graph_fourier(dec, &filtered)
}

fn horner(theta: &[f64], x: f64) -> f64 {
    theta.iter().rev().fold(0.0, |acc, &t| acc * x + t)
}

/// `e^{βM} = U diag(e^{βλ}) Uᵀ`.
pub fn dense_matrix_exponential(dec: &SpectralDecomposition, beta: f64) -> DenseMatrix {
    dec.apply_spectral_fn(|l| (beta * l).exp())
}

/// Spectral (operator 2-) norm of an arbitrary dense matrix, via the largest
/// eigenvalue of the Gram matrix `MᵀM`.
pub fn dense_spectral_norm(m: &DenseMatrix) -> Result<f64> {
    let gram = m.t_matmul(m)?;
    let dec = dense_eigendecomposition(&gram)?;
    Ok(dec.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
