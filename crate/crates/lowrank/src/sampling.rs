//! Observation-set generation under the off-diagonal symmetric Ber(p)
//! model, and spectral-norm estimation of the centered 0-1 matrix
//! `Ω - pJ` used for tuning the regularization weight.
//!
//! Randomness is drawn from the counter-based ChaCha8 stream cipher
//! (`rand_chacha::ChaCha8Rng`) seeded with a caller-provided 64-bit seed.
//! For mask generation the unordered pairs `(i, j)`, `i < j`, are visited
//! in row-major order with exactly one uniform draw per pair, so masks are
//! reproducible across implementations that follow the same convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampled::SampledMatrix;

/// Fixed seed for power-method start vectors, decoupled from mask seeds so
/// repeated estimates on the same pattern agree bit-for-bit.
const NORM_PROBE_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

/// Adjacency of a symmetric off-diagonal observation set.
pub trait ObservationPattern {
    fn n(&self) -> usize;
    /// Column indices observed in row `i` (symmetric expansion, sorted).
    fn neighbors(&self, i: usize) -> &[usize];
}

/// Off-diagonal symmetric 0-1 observation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    n: usize,
    p_nominal: f64,
    seed: u64,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl ObservationPattern for Mask {
    fn n(&self) -> usize {
        self.n
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }
}

impl ObservationPattern for SampledMatrix {
    fn n(&self) -> usize {
        SampledMatrix::n(self)
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        let lo = self.row_ptr()[i];
        let hi = self.row_ptr()[i + 1];
        &self.col_idx()[lo..hi]
    }
}

impl Mask {
    pub fn p_nominal(&self) -> f64 {
        self.p_nominal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of unordered observed pairs.
    pub fn nnz_pairs(&self) -> usize {
        self.col_idx.len() / 2
    }

    /// Iterates over unordered pairs, `i < j`, sorted.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Represents the mask as a [`SampledMatrix`] with unit values, the
    /// serialization form shared with the triplet format.
    pub fn to_sampled(&self) -> SampledMatrix {
        let pairs: Vec<(usize, usize, f64)> = self.iter_pairs().map(|(i, j)| (i, j, 1.0)).collect();
        SampledMatrix::from_pairs(self.n, &pairs, self.p_nominal)
            .expect("mask pairs are valid by construction")
    }

    /// Rebuilds a mask from a unit-valued [`SampledMatrix`].
    pub fn from_sampled(m: &SampledMatrix, seed: u64) -> Result<Self> {
        for (_, _, v) in m.iter_pairs() {
            if v != 1.0 {
                return Err(Error::invalid("mask serialization must hold unit values"));
            }
        }
        Ok(Mask {
            n: SampledMatrix::n(m),
            p_nominal: m.p_nominal(),
            seed,
            row_ptr: m.row_ptr().to_vec(),
            col_idx: m.col_idx().to_vec(),
        })
    }
}

/// Samples an observation set: every unordered off-diagonal pair enters
/// independently with probability `p`, deterministically in `seed`.
pub fn sample_mask(n: usize, p: f64, seed: u64) -> Result<Mask> {
    if n == 0 {
        return Err(Error::invalid("mask dimension must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "sampling probability {p} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // First pass stores the upper-triangle hits per row, second pass mirrors.
    let mut upper: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in upper.iter_mut().enumerate() {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                row.push(j);
            }
        }
    }
    let mut degree = vec![0usize; n];
    for (i, row) in upper.iter().enumerate() {
        degree[i] += row.len();
        for &j in row {
            degree[j] += 1;
        }
    }
    let mut row_ptr = vec![0usize; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = row_ptr[i] + degree[i];
    }
    let mut col_idx = vec![0usize; row_ptr[n]];
    let mut cursor = row_ptr[..n].to_vec();
    for (i, row) in upper.iter().enumerate() {
        for &j in row {
            col_idx[cursor[i]] = j;
            cursor[i] += 1;
        }
    }
    // Mirror the lower triangle, then sort each row.
    let mut cursor2 = cursor;
    for (i, row) in upper.iter().enumerate() {
        for &j in row {
            col_idx[cursor2[j]] = i;
            cursor2[j] += 1;
        }
    }
    for i in 0..n {
        let lo = row_ptr[i];
        let hi = row_ptr[i + 1];
        col_idx[lo..hi].sort_unstable();
    }
    Ok(Mask {
        n,
        p_nominal: p,
        seed,
        row_ptr,
        col_idx,
    })
}

/// Applies the centered operator: `(Ω - pJ) v = Ω v - p (Σ_k v_k) 1`.
///
/// Runs in `O(nnz + n)` and never forms a dense matrix. `J` is the all-ones
/// matrix including the diagonal; `Ω` has a zero diagonal.
pub fn centered_matvec<P: ObservationPattern>(pattern: &P, p: f64, v: &[f64]) -> Result<Vec<f64>> {
    let n = pattern.n();
    if v.len() != n {
        return Err(Error::dim(format!(
            "vector length {} does not match n={}",
            v.len(),
            n
        )));
    }
    let total: f64 = v.iter().sum();
    let shift = p * total;
    let mut y = vec![0.0; n];
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &j in pattern.neighbors(i) {
            acc += v[j];
        }
        *yi = acc - shift;
    }
    Ok(y)
}

/// Power-method estimate of `‖Ω - pJ‖`.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    /// Estimated spectral norm; a lower bound on the true norm.
    pub value: f64,
    /// Whether the relative change dropped below tolerance before the
    /// iteration budget ran out.
    pub converged: bool,
    /// Iterations actually performed.
    pub iters: usize,
}

/// Estimates `‖Ω - pJ‖` by power iteration on the squared operator
/// `(Ω - pJ)²`, which is PSD, so the Rayleigh quotient increases
/// monotonically and the square root never overshoots the true norm.
pub fn spectral_norm_centered<P: ObservationPattern>(
    pattern: &P,
    p: f64,
    iters: usize,
    tol: f64,
) -> Result<NormEstimate> {
    if iters == 0 {
        return Err(Error::invalid("power method needs at least one iteration"));
    }
    let n = pattern.n();
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_PROBE_SEED);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm0 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm0 == 0.0 || n == 1 {
        // n = 1 has no off-diagonal entries: operator is -p on the 1-space
        return Ok(NormEstimate {
            value: p,
            converged: true,
            iters: 0,
        });
    }
    for x in q.iter_mut() {
        *x /= norm0;
    }

    let mut theta_prev = 0.0f64;
    let mut converged = false;
    let mut performed = 0usize;
    for it in 0..iters {
        let w = centered_matvec(pattern, p, &q)?;
        let bq = centered_matvec(pattern, p, &w)?;
        // Rayleigh quotient of the squared operator at the current q.
        let theta: f64 = q.iter().zip(&bq).map(|(a, b)| a * b).sum();
        let theta = theta.max(0.0);
        performed = it + 1;
        let norm_bq = bq.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_bq == 0.0 {
            // Operator annihilates the probe (e.g. empty mask with p = 0).
            return Ok(NormEstimate {
                value: theta.sqrt(),
                converged: true,
                iters: performed,
            });
        }
        q = bq.into_iter().map(|x| x / norm_bq).collect();
        if it > 0 && (theta - theta_prev).abs() <= tol * theta.max(f64::MIN_POSITIVE) {
            theta_prev = theta;
            converged = true;
            break;
        }
        theta_prev = theta;
    }
    Ok(NormEstimate {
        value: theta_prev.sqrt(),
        converged,
        iters: performed,
    })
}
