//! Ground-truth spectral representation of synthetic test matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::Factor;

/// Orthonormality tolerance for `UᵀU = I`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Spectral decomposition `M = Σ σ_i u_i u_iᵀ` of a synthetic PSD matrix.
///
/// Eigenvalues are nonincreasing and nonnegative. Eigenvectors are held as
/// an `n x n` dense matrix with orthonormal columns; they are optional
/// because only desk-scale verification needs them (the matrix itself is
/// never materialized by the solvers).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<DMatrix<f64>>,
}

impl GroundTruth {
    /// Builds a ground truth from a nonincreasing, nonnegative spectrum and
    /// (optionally) an orthonormal eigenvector matrix.
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: Option<DMatrix<f64>>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("eigenvalue list is empty"));
        }
        for w in eigenvalues.windows(2) {
            if w[1] > w[0] {
                return Err(Error::invalid("eigenvalues must be nonincreasing"));
            }
        }
        if eigenvalues.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
        }
        if let Some(u) = &eigenvectors {
            let n = eigenvalues.len();
            if u.nrows() != n || u.ncols() != n {
                return Err(Error::dim(format!(
                    "eigenvector matrix is {}x{}, expected {}x{}",
                    u.nrows(),
                    u.ncols(),
                    n,
                    n
                )));
            }
            let gram = u.transpose() * u;
            let eye = DMatrix::identity(n, n);
            let dev = (gram - eye).abs().max();
            if dev > ORTHONORMALITY_TOL {
                return Err(Error::invalid(format!(
                    "eigenvectors not orthonormal: max |UᵀU - I| = {dev:.3e}"
                )));
            }
        }
        Ok(GroundTruth {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.eigenvectors.as_ref()
    }

    fn require_vectors(&self) -> Result<&DMatrix<f64>> {
        self.eigenvectors
            .as_ref()
            .ok_or_else(|| Error::invalid("operation requires stored eigenvectors"))
    }

    /// Entry `M_ij = Σ_k σ_k u_ik u_jk`.
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let u = self.require_vectors()?;
        let mut acc = 0.0;
        for (k, &s) in self.eigenvalues.iter().enumerate() {
            if s == 0.0 {
                // spectrum is sorted, the tail is all zero
                break;
            }
            acc += s * u[(i, k)] * u[(j, k)];
        }
        Ok(acc)
    }

    /// Scaled eigenvector block `[√σ_1 u_1 … √σ_r u_r]`, the canonical
    /// factor of the best rank-`r` approximation.
    pub fn scaled_eigvec_factor(&self, r: usize) -> Result<Factor> {
        let u = self.require_vectors()?;
        let n = self.n();
        if r == 0 || r > n {
            return Err(Error::invalid(format!("rank {r} out of range for n={n}")));
        }
        let mut values = vec![0.0; n * r];
        for (k, &s) in self.eigenvalues.iter().take(r).enumerate() {
            let sq = s.sqrt();
            for i in 0..n {
                values[i * r + k] = sq * u[(i, k)];
            }
        }
        Factor::from_row_major(n, r, values)
    }

    /// Dense best rank-`r` part `M_r` (desk scale only).
    pub fn rank_r_dense(&self, r: usize) -> Result<DMatrix<f64>> {
        let f = self.scaled_eigvec_factor(r)?;
        let d = f.to_dmatrix();
        Ok(&d * d.transpose())
    }

    /// Dense residual part `N = M - M_r` (desk scale only).
    pub fn residual_dense(&self, r: usize) -> Result<DMatrix<f64>> {
        let u = self.require_vectors()?;
        let n = self.n();
        if r > n {
            return Err(Error::invalid(format!("rank {r} out of range for n={n}")));
        }
        let mut acc = DMatrix::zeros(n, n);
        for (k, &s) in self.eigenvalues.iter().enumerate().skip(r) {
            if s == 0.0 {
                break;
            }
            let col = u.column(k);
            for i in 0..n {
                for j in 0..n {
                    acc[(i, j)] += s * col[i] * col[j];
                }
            }
        }
        Ok(acc)
    }

    /// Dense `M` (desk scale only).
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.residual_dense(0)
    }

    /// `‖M_r‖_F = sqrt(Σ_{i≤r} σ_i²)`.
    pub fn rank_r_frobenius(&self, r: usize) -> f64 {
        self.eigenvalues
            .iter()
            .take(r)
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }

    /// `‖M‖_F`.
    pub fn frobenius(&self) -> f64 {
        self.rank_r_frobenius(self.n())
    }
}
