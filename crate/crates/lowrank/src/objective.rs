//! The sampled factorization objective and its calculus.
//!
//! For a factor `X` with rows `x_i` and observations `M_ij` on a symmetric
//! off-diagonal set Ω,
//!
//! ```text
//! f(X) = 1/2 Σ_{(i,j)∈Ω} (x_iᵀx_j - M_ij)² + λ Σ_i [(‖x_i‖₂ - α)₊]⁴
//! ```
//!
//! where the first sum runs over both orientations of every observed pair.
//! The row-norm regularizer keeps iterates bounded; it is C² because the
//! hinge enters with a fourth power. All routines below run in
//! `O(nnz · r + n · r)` and never form an `n x n` matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::sampled::SampledMatrix;

/// Tuning parameters of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    /// Regularization weight, `>= 0`.
    pub lambda: f64,
    /// Row-norm threshold, `> 0`.
    pub alpha: f64,
}

impl ObjectiveParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!(
                "lambda {lambda} must be finite and >= 0"
            )));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!(
                "alpha {alpha} must be finite and > 0"
            )));
        }
        Ok(ObjectiveParams { lambda, alpha })
    }
}

/// Residual values `x_iᵀx_j - M_ij` on the observation set, aligned with
/// the symmetric-expansion storage order of the source matrix.
#[derive(Debug, Clone)]
pub struct SparseResidual {
    n: usize,
    values: Vec<f64>,
}

impl SparseResidual {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Values in the storage order of the [`SampledMatrix`] this residual
    /// was computed against (both orientations present).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(i, j, residual)` over the symmetric expansion of `m`.
    ///
    /// `m` must be the matrix the residual was computed from.
    pub fn iter_with<'a>(
        &'a self,
        m: &'a SampledMatrix,
    ) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        m.iter_directed()
            .zip(self.values.iter().copied())
            .map(|((i, j, _), r)| (i, j, r))
    }
}

fn check_factor_matches(x: &Factor, m: &SampledMatrix) -> Result<()> {
    if x.n() != m.n() {
        return Err(Error::dim(format!(
            "factor has {} rows but matrix dimension is {}",
            x.n(),
            m.n()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Computes the sparse residual `P_Ω(XXᵀ - M)`.
pub fn residual(x: &Factor, m: &SampledMatrix) -> Result<SparseResidual> {
    check_factor_matches(x, m)?;
    let mut values = Vec::with_capacity(m.nnz_directed());
    for i in 0..m.n() {
        let xi = x.row(i);
        for (j, v) in m.row_entries(i) {
            values.push(dot(xi, x.row(j)) - v);
        }
    }
    Ok(SparseResidual { n: m.n(), values })
}

/// Row-norm regularizer `Σ_i [(‖x_i‖₂ - α)₊]⁴`.
pub fn regularizer_value(x: &Factor, alpha: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.n() {
        let excess = x.row_norm(i) - alpha;
        if excess > 0.0 {
            acc += excess.powi(4);
        }
    }
    acc
}

/// Gradient of the regularizer: row `i` is
/// `4 (‖x_i‖ - α)₊³ x_i / ‖x_i‖`, zero for rows inside the threshold
/// (including zero rows, since `α > 0`).
pub fn regularizer_grad(x: &Factor, alpha: f64) -> Factor {
    let mut g = Factor::zeros(x.n(), x.r()).expect("shape validated by x");
    for i in 0..x.n() {
        let norm = x.row_norm(i);
        let excess = norm - alpha;
        if excess > 0.0 {
            let coeff = 4.0 * excess.powi(3) / norm;
            let gi = g.row_mut(i);
            for (o, v) in gi.iter_mut().zip(x.row(i)) {
                *o = coeff * v;
            }
        }
    }
    g
}

/// Hessian quadratic form of the regularizer along `h`:
///
/// ```text
/// Σ_i 4 t_i³ (‖x_i‖²‖h_i‖² - <x_i,h_i>²)/‖x_i‖³ + 12 t_i² <x_i,h_i>²/‖x_i‖²
/// ```
///
/// with `t_i = (‖x_i‖ - α)₊`. Nonnegative for every input.
pub fn regularizer_hess_quadform(x: &Factor, h: &Factor, alpha: f64) -> Result<f64> {
    x.check_same_shape(h)?;
    let mut acc = 0.0;
    for i in 0..x.n() {
        let norm = x.row_norm(i);
        let excess = norm - alpha;
        if excess > 0.0 {
            let xi = x.row(i);
            let hi = h.row(i);
            let hx = dot(xi, hi);
            let hh = dot(hi, hi);
            let t3 = excess.powi(3);
            let t2 = excess * excess;
            acc += 4.0 * t3 * ((norm * norm * hh - hx * hx) / norm.powi(3))
                + 12.0 * t2 * (hx * hx) / (norm * norm);
        }
    }
    Ok(acc)
}

/// Objective value `f(X)`.
pub fn value(x: &Factor, m: &SampledMatrix, params: &ObjectiveParams) -> Result<f64> {
    check_factor_matches(x, m)?;
    let mut quad = 0.0;
    for i in 0..m.n() {
        let xi = x.row(i);
        for (j, v) in m.row_entries(i) {
            let r = dot(xi, x.row(j)) - v;
            quad += r * r;
        }
    }
    // both orientations of each pair are in the sum, matching the 1/2
    // prefactor over the symmetric index set
    Ok(0.5 * quad + params.lambda * regularizer_value(x, params.alpha))
}

/// Gradient `∇f(X) = 2 P_Ω(XXᵀ - M) X + λ ∇G_α(X)`, returned as a factor.
pub fn gradient(x: &Factor, m: &SampledMatrix, params: &ObjectiveParams) -> Result<Factor> {
    check_factor_matches(x, m)?;
    let r = x.r();
    let mut g = Factor::zeros(x.n(), r)?;
    for i in 0..m.n() {
        let xi = x.row(i);
        // accumulate into a local row to avoid aliasing g while reading x
        let mut acc = vec![0.0f64; r];
        for (j, v) in m.row_entries(i) {
            let xj = x.row(j);
            let res = dot(xi, xj) - v;
            for (a, &b) in acc.iter_mut().zip(xj) {
                *a += res * b;
            }
        }
        let norm = x.row_norm(i);
        let excess = norm - params.alpha;
        let reg_coeff = if excess > 0.0 {
            params.lambda * 4.0 * excess.powi(3) / norm
        } else {
            0.0
        };
        let gi = g.row_mut(i);
        for k in 0..r {
            gi[k] = 2.0 * acc[k] + reg_coeff * xi[k];
        }
    }
    Ok(g)
}

/// Hessian quadratic form `vec(H)ᵀ ∇²f(X) vec(H)`:
///
/// ```text
/// ‖P_Ω(HXᵀ + XHᵀ)‖_F² + 2 <P_Ω(XXᵀ - M), P_Ω(HHᵀ)> + λ vec(H)ᵀ∇²G_α(X)vec(H)
/// ```
pub fn hessian_quadform(
    x: &Factor,
    h: &Factor,
    m: &SampledMatrix,
    params: &ObjectiveParams,
) -> Result<f64> {
    check_factor_matches(x, m)?;
    x.check_same_shape(h)?;
    let mut sym = 0.0;
    let mut cross = 0.0;
    for i in 0..m.n() {
        let xi = x.row(i);
        let hi = h.row(i);
        for (j, v) in m.row_entries(i) {
            let xj = x.row(j);
            let hj = h.row(j);
            let s = dot(hi, xj) + dot(xi, hj);
            sym += s * s;
            cross += (dot(xi, xj) - v) * dot(hi, hj);
        }
    }
    let reg = regularizer_hess_quadform(x, h, params.alpha)?;
    Ok(sym + 2.0 * cross + params.lambda * reg)
}
