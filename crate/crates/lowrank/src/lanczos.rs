//! Lanczos iteration with full reorthogonalization for the top
//! eigenpairs of a symmetric operator given only through matvecs.
//!
//! Desk-scale tool: the basis is capped at `min(n, 500)` vectors and every
//! step reorthogonalizes against the whole basis, trading memory for
//! robustness against loss of orthogonality.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const BASIS_CAP: usize = 500;
const PROBE_SEED: u64 = 0x51ac_3a9d_21b4_7e01;

/// Largest (algebraic) `k_want` eigenpairs of a symmetric operator.
///
/// Returns `(eigenvalues, vectors)` with eigenvalues nonincreasing and
/// vectors as columns of an `n x k_want` matrix. Fails with
/// `NonConvergence` when the Ritz residuals are still above `tol * scale`
/// at the basis cap.
pub(crate) fn top_eigenpairs<F>(
    apply: F,
    n: usize,
    k_want: usize,
    tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if k_want == 0 || k_want > n {
        return Err(Error::invalid(format!(
            "requested {k_want} eigenpairs of an operator of dimension {n}"
        )));
    }
    let max_steps = n.min(BASIS_CAP);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // beta[k] couples q_k and q_{k+1}

    let mut q = random_unit(&mut rng, n);
    let mut beta_prev = 0.0f64;
    let mut scale = 0.0f64; // running magnitude estimate of the spectrum

    loop {
        basis.push(q.clone());
        let k = basis.len();
        let mut w = apply(&q)?;
        let alpha: f64 = dot(&q, &w);
        alphas.push(alpha);
        scale = scale.max(alpha.abs());

        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        if k >= 2 {
            let q_prev = &basis[k - 2];
            for (wi, qi) in w.iter_mut().zip(q_prev) {
                *wi -= beta_prev * qi;
            }
        }
        // full reorthogonalization, twice
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }

        let beta = norm(&w);
        let effective_tol = tol * scale.max(f64::MIN_POSITIVE);

        let done_steps = k == max_steps;
        let enough_for_check = k >= k_want;
        if enough_for_check && (done_steps || beta <= effective_tol || k.is_multiple_of(10)) {
            if let Some(result) = try_extract(&basis, &alphas, &betas, beta, k_want, tol, scale) {
                return Ok(result);
            }
            if done_steps {
                return Err(Error::NonConvergence(format!(
                    "Lanczos residuals above tolerance after {k} steps"
                )));
            }
        } else if done_steps {
            return Err(Error::NonConvergence(format!(
                "Lanczos basis exhausted at {k} steps before {k_want} pairs were available"
            )));
        }

        if beta <= effective_tol {
            // invariant subspace found; continue in a fresh random direction
            let mut fresh = random_unit(&mut rng, n);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&fresh, b);
                    for (fi, bi) in fresh.iter_mut().zip(b) {
                        *fi -= c * bi;
                    }
                }
            }
            let fresh_norm = norm(&fresh);
            if fresh_norm <= 1e-12 {
                // whole space spanned; extraction above must have succeeded
                return Err(Error::NonConvergence(
                    "Lanczos exhausted the space without meeting the residual tolerance".into(),
                ));
            }
            for fi in fresh.iter_mut() {
                *fi /= fresh_norm;
            }
            betas.push(0.0);
            beta_prev = 0.0;
            q = fresh;
        } else {
            betas.push(beta);
            beta_prev = beta;
            q = w.into_iter().map(|x| x / beta).collect();
        }
    }
}

/// Solves the projected tridiagonal problem and accepts the top Ritz pairs
/// when their residual bounds `|beta_k * s_last|` are small.
fn try_extract(
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    beta_last: f64,
    k_want: usize,
    tol: f64,
    scale: f64,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().take(k.saturating_sub(1)).enumerate() {
        t[(i, i + 1)] = b;
        t[(i + 1, i)] = b;
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let spectrum_scale = order
        .iter()
        .map(|&i| eig.eigenvalues[i].abs())
        .fold(scale, f64::max)
        .max(f64::MIN_POSITIVE);
    for &idx in order.iter().take(k_want) {
        let s_last = eig.eigenvectors[(k - 1, idx)];
        if (beta_last * s_last).abs() > tol * spectrum_scale {
            return None;
        }
    }

    let n = basis[0].len();
    let mut values = Vec::with_capacity(k_want);
    let mut vectors = DMatrix::zeros(n, k_want);
    for (out_col, &idx) in order.iter().take(k_want).enumerate() {
        values.push(eig.eigenvalues[idx]);
        for (step, b) in basis.iter().enumerate() {
            let s = eig.eigenvectors[(step, idx)];
            if s != 0.0 {
                for (row, &bv) in b.iter().enumerate() {
                    vectors[(row, out_col)] += s * bv;
                }
            }
        }
    }
    Some((values, vectors))
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let nv = norm(&v);
        if nv > 1e-9 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
