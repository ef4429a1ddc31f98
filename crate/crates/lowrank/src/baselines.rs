//! Comparison methods: Nyström column sampling and the rescaled spectral
//! truncation of the sampled matrix.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::lanczos;
use crate::sampled::SampledMatrix;

/// Eigenvalues of the principal submatrix below this fraction of the
/// largest one are treated as zero in the pseudo-inverse.
const PINV_TOL: f64 = 1e-10;

/// Residual tolerance of the iterative eigensolver behind
/// [`spectral_truncate`].
const LANCZOS_TOL: f64 = 1e-10;

/// Uniformly sampled columns of a symmetric matrix together with the
/// induced principal submatrix.
#[derive(Debug, Clone)]
pub struct ColumnSample {
    /// Sorted distinct column indices, length `c`.
    pub indices: Vec<usize>,
    /// `n x c` block of the sampled columns.
    pub columns: DMatrix<f64>,
    /// `c x c` principal submatrix (rows of `columns` at `indices`).
    pub principal: DMatrix<f64>,
}

/// Draws `c` distinct columns uniformly without replacement and evaluates
/// them through the entry oracle.
pub fn sample_columns<F>(oracle: F, n: usize, c: usize, seed: u64) -> Result<ColumnSample>
where
    F: Fn(usize, usize) -> f64,
{
    if c == 0 || c > n {
        return Err(Error::invalid(format!(
            "column count {c} out of range for n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = sample_indices(&mut rng, n, c).into_vec();
    indices.sort_unstable();

    let mut columns = DMatrix::zeros(n, c);
    for (k, &j) in indices.iter().enumerate() {
        for i in 0..n {
            columns[(i, k)] = oracle(i, j);
        }
    }
    let mut principal = DMatrix::zeros(c, c);
    for (a, &i) in indices.iter().enumerate() {
        for b in 0..c {
            principal[(a, b)] = columns[(i, b)];
        }
    }
    Ok(ColumnSample {
        indices,
        columns,
        principal,
    })
}

/// Nyström rank-`r` approximation `X̂ X̂ᵀ = C W_r⁺ Cᵀ`.
///
/// `W` is eigendecomposed, its top `r` eigenpairs above the pseudo-inverse
/// tolerance are kept, and the factor is `X̂ = C V_r Λ_r^{-1/2}` (columns
/// short of `r` are zero-padded). Memory use is `n c + c² + n r` entries.
pub fn nystrom<F>(oracle: F, n: usize, c: usize, r: usize, seed: u64) -> Result<Factor>
where
    F: Fn(usize, usize) -> f64,
{
    if r > c {
        return Err(Error::invalid(format!("rank {r} exceeds column count {c}")));
    }
    let sample = sample_columns(oracle, n, c, seed)?;
    let eig = sample.principal.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lead = eig.eigenvalues[order[0]];
    let cutoff = PINV_TOL * lead.abs().max(f64::MIN_POSITIVE);
    let kept: Vec<usize> = order
        .iter()
        .take(r)
        .copied()
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .collect();
    if kept.is_empty() {
        return Err(Error::RankDeficient(
            "all leading eigenvalues of the principal submatrix fall below tolerance".into(),
        ));
    }

    let mut values = vec![0.0f64; n * r];
    for (col_out, &idx) in kept.iter().enumerate() {
        let lam = eig.eigenvalues[idx];
        let inv_sqrt = 1.0 / lam.sqrt();
        // X̂ column = C v / sqrt(lambda)
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..c {
                acc += sample.columns[(i, k)] * eig.eigenvectors[(k, idx)];
            }
            values[i * r + col_out] = acc * inv_sqrt;
        }
    }
    Factor::from_row_major(n, r, values)
}

/// Effective sampling rate of a `c`-column Nyström draw: the fraction of
/// matrix entries it reads, `(2cn - c²) / n²`.
pub fn nystrom_effective_rate(n: usize, c: usize) -> f64 {
    let n = n as f64;
    let c = c as f64;
    (2.0 * c * n - c * c) / (n * n)
}

/// Top-`r` eigenpairs of the rescaled sample `(1/p) P_Ω(M)`, computed by
/// the matvec-only Lanczos solver. Eigenvalues come back nonincreasing.
pub fn spectral_eigenpairs(m: &SampledMatrix, r: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = m.p_nominal();
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::invalid(
            "spectral truncation needs a recorded positive sampling probability",
        ));
    }
    let inv_p = 1.0 / p;
    lanczos::top_eigenpairs(
        |v| {
            let mut y = m.matvec(v)?;
            for yi in y.iter_mut() {
                *yi *= inv_p;
            }
            Ok(y)
        },
        m.n(),
        r,
        LANCZOS_TOL,
    )
}

/// Rescaled spectral truncation as a PSD factor: eigenvalues of
/// `(1/p) P_Ω(M)` are clamped at zero before taking square roots, so the
/// returned factor always represents a PSD matrix.
pub fn spectral_truncate(m: &SampledMatrix, r: usize) -> Result<Factor> {
    if r == 0 || r > m.n() {
        return Err(Error::invalid(format!(
            "rank {r} out of range for n={}",
            m.n()
        )));
    }
    if m.nnz_pairs() == 0 {
        return Factor::zeros(m.n(), r);
    }
    let (vals, vecs) = spectral_eigenpairs(m, r)?;
    let n = m.n();
    let mut values = vec![0.0f64; n * r];
    for (k, &lam) in vals.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        if s > 0.0 {
            for i in 0..n {
                values[i * r + k] = s * vecs[(i, k)];
            }
        }
    }
    Factor::from_row_major(n, r, values)
}
