//! Dense helpers for clustered least squares.
//!
//! Exchangeable blocks `a (I - c 11')` are applied in closed form, so a
//! weighted cross-product over all clusters costs O(rows * p^2) with no
//! per-cluster factorization.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Inverse of an exchangeable block, `a (I - c 11')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeableInverse {
    pub scale: f64,
    pub shrink: f64,
}

impl ExchangeableInverse {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        shrink: 0.0,
    };

    /// Inverse of `(1 - rho) I + rho 11'` for a cluster of size `n`.
    pub fn correlation(rho: f64, n: usize) -> Self {
        Self {
            scale: 1.0 / (1.0 - rho),
            shrink: rho / (1.0 + (n as f64 - 1.0) * rho),
        }
    }

    /// Inverse of `I + lambda 11'` for a cluster of size `n`.
    pub fn random_intercept(lambda: f64, n: usize) -> Self {
        Self {
            scale: 1.0,
            shrink: lambda / (1.0 + n as f64 * lambda),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| self.scale * (x - self.shrink * s)).collect()
    }

    /// `u' W v` for the block `W` this represents.
    pub fn quad(&self, u: &[f64], v: &[f64]) -> f64 {
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let su: f64 = u.iter().sum();
        let sv: f64 = v.iter().sum();
        self.scale * (dot - self.shrink * su * sv)
    }
}

/// Per-cluster cross products `(sum X' W X, sum X' W y)`.
pub fn weighted_normal_equations<F>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    clusters: &[Range<usize>],
    weight: F,
) -> (DMatrix<f64>, DVector<f64>)
where
    F: Fn(usize) -> ExchangeableInverse,
{
    let p = x.ncols();
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwy = DVector::zeros(p);
    for range in clusters {
        let n = range.len();
        let w = weight(n);
        let xi = x.rows(range.start, n);
        let yi = y.rows(range.start, n);
        let sx = xi.row_sum().transpose();
        let sy = yi.sum();
        let xtx = xi.transpose() * xi;
        let xty = xi.transpose() * yi;
        xtwx += (xtx - &sx * sx.transpose() * w.shrink) * w.scale;
        xtwy += (xty - &sx * (w.shrink * sy)) * w.scale;
    }
    (xtwx, xtwy)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    Ok(chol.inverse())
}

/// Solve `m b = rhs` for symmetric positive definite `m`; also returns `log det m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<(DVector<f64>, f64)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.solve(rhs), logdet))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Indices of columns that are (numerically) linear combinations of the
/// columns before them.
///
/// Runs a Cholesky elimination on the column-normalized Gram matrix and flags
/// any column whose remaining pivot falls below `tol`.
pub fn dependent_columns(x: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let p = x.ncols();
    let gram = x.transpose() * x;
    let norms: Vec<f64> = (0..p).map(|j| gram[(j, j)].sqrt()).collect();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut dependent = Vec::new();
    for j in 0..p {
        if norms[j] == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut pivot = 1.0;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < tol {
            dependent.push(j);
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            if norms[i] == 0.0 {
                continue;
            }
            let mut v = gram[(i, j)] / (norms[i] * norms[j]);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_exchangeable(rho: f64, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn closed_form_inverse_matches_dense() {
        for &(rho, n) in &[(0.0, 3), (0.5, 4), (0.753, 6), (-0.2, 5), (0.99, 2)] {
            let dense = dense_exchangeable(rho, n).try_inverse().unwrap();
            let w = ExchangeableInverse::correlation(rho, n);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = w.apply(&e);
                for i in 0..n {
                    assert!((col[i] - dense[(i, j)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn random_intercept_inverse_matches_dense() {
        let lambda = 3.0;
        let n = 4;
        let dense = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + lambda } else { lambda })
            .try_inverse()
            .unwrap();
        let w = ExchangeableInverse::random_intercept(lambda, n);
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 0.1, -1.0, 2.0];
        let expected = (DVector::from_row_slice(&u).transpose() * &dense * DVector::from_row_slice(&v))[0];
        assert!((w.quad(&u, &v) - expected).abs() < 1e-12);
    }

    #[test]
    fn detects_dependent_columns() {
        let x = DMatrix::from_row_slice(4, 4, &[
            1.0, 1.0, 2.0, 0.0, //
            1.0, 2.0, 3.0, 0.0, //
            1.0, 3.0, 4.0, 0.0, //
            1.0, 5.0, 6.0, 0.0,
        ]);
        assert_eq!(dependent_columns(&x, 1e-10), vec![2, 3]);
        let full = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        assert!(dependent_columns(&full, 1e-10).is_empty());
    }
}
