//! Synthetic problem generation and evaluation metrics: relative
//! approximation errors against ground truth, Lloyd's k-means on factor
//! rows, and two-class clustering accuracy.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::truth::GroundTruth;

/// Synthesizes a PSD ground truth with the given spectrum and Haar-like
/// eigenvectors obtained by orthogonalizing a square Gaussian matrix.
///
/// `eigenvalues` must be nonincreasing and nonnegative; shorter lists are
/// padded with zeros. Deterministic in `seed`.
pub fn gen_psd(n: usize, eigenvalues: &[f64], seed: u64) -> Result<GroundTruth> {
    if eigenvalues.len() > n {
        return Err(Error::invalid(format!(
            "{} eigenvalues exceed dimension {n}",
            eigenvalues.len()
        )));
    }
    for w in eigenvalues.windows(2) {
        if w[1] > w[0] {
            return Err(Error::invalid("eigenvalues must be nonincreasing"));
        }
    }
    if eigenvalues.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
    }
    let mut padded = eigenvalues.to_vec();
    padded.resize(n, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let g = DMatrix::from_fn(n, n, |_, _| -> f64 { normal.sample(&mut rng) });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // canonicalize signs so the draw is independent of QR conventions
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for i in 0..n {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    GroundTruth::new(padded, Some(q))
}

/// Relative error `‖X̂X̂ᵀ - Ref‖_F / ‖Ref‖_F` against a dense reference.
pub fn rel_error_dense(approx: &Factor, reference: &DMatrix<f64>) -> Result<f64> {
    let n = approx.n();
    if reference.nrows() != n || reference.ncols() != n {
        return Err(Error::dim(format!(
            "reference is {}x{}, expected {n}x{n}",
            reference.nrows(),
            reference.ncols()
        )));
    }
    let ref_norm = reference.norm();
    if ref_norm == 0.0 {
        return Err(Error::invalid("reference matrix is zero"));
    }
    // stream row by row; no n x n product is materialized
    let mut err_sq = 0.0;
    for i in 0..n {
        let xi = approx.row(i);
        for j in 0..n {
            let prod: f64 = xi.iter().zip(approx.row(j)).map(|(a, b)| a * b).sum();
            let d = prod - reference[(i, j)];
            err_sq += d * d;
        }
    }
    Ok(err_sq.sqrt() / ref_norm)
}

/// Reference target for factored relative errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorTarget {
    /// Compare against the full matrix `M`.
    Full,
    /// Compare against the best rank-`r` part `M_r`.
    RankR(usize),
}

/// Relative error against a ground truth via the trace expansion
/// `‖X̂X̂ᵀ - YYᵀ‖_F² = ‖X̂ᵀX̂‖² - 2‖YᵀX̂‖² + ‖YᵀY‖²`, never forming an
/// `n x n` product.
pub fn rel_error_truth(approx: &Factor, truth: &GroundTruth, target: ErrorTarget) -> Result<f64> {
    let n = truth.n();
    if approx.n() != n {
        return Err(Error::dim(format!(
            "factor has {} rows, ground truth dimension is {n}",
            approx.n()
        )));
    }
    let rank = match target {
        ErrorTarget::Full => {
            // effective rank: zero eigenvalues contribute nothing
            truth.eigenvalues().iter().take_while(|&&s| s > 0.0).count()
        }
        ErrorTarget::RankR(r) => {
            if r == 0 || r > n {
                return Err(Error::invalid(format!("target rank {r} out of range")));
            }
            r
        }
    };
    let ref_norm_sq: f64 = truth.eigenvalues().iter().take(rank).map(|s| s * s).sum();
    if ref_norm_sq == 0.0 {
        return Err(Error::invalid("reference matrix is zero"));
    }

    let gram_x = approx.gram();
    let xx: f64 = gram_x.iter().map(|v| v * v).sum();
    // ‖YᵀX̂‖² with Y the scaled eigenvector block of the target rank
    let u = truth
        .eigenvectors()
        .ok_or_else(|| Error::invalid("relative error requires stored eigenvectors"))?;
    let mut cross_sq = 0.0;
    for k in 0..rank {
        let sigma = truth.eigenvalues()[k];
        if sigma == 0.0 {
            break;
        }
        // v_k = sqrt(σ_k) u_kᵀ X̂  (length r)
        let mut v = vec![0.0f64; approx.r()];
        for i in 0..n {
            let w = u[(i, k)];
            if w != 0.0 {
                for (a, &xv) in v.iter_mut().zip(approx.row(i)) {
                    *a += w * xv;
                }
            }
        }
        let scale = sigma;
        cross_sq += scale * v.iter().map(|x| x * x).sum::<f64>();
    }
    let err_sq = (xx - 2.0 * cross_sq + ref_norm_sq).max(0.0);
    Ok(err_sq.sqrt() / ref_norm_sq.sqrt())
}

/// Lloyd's k-means on the rows of a factor with k-means++ seeding; the
/// best of `reps` runs by within-cluster sum of squares wins.
pub fn kmeans_rows(x: &Factor, k: usize, reps: usize, seed: u64) -> Result<Vec<u32>> {
    let n = x.n();
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "k={k} exceeds the number of rows {n}"
        )));
    }
    if reps == 0 {
        return Err(Error::invalid("at least one repetition required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<u32>)> = None;
    for _ in 0..reps {
        let (wcss, labels) = lloyd_once(x, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| wcss < *b) {
            best = Some((wcss, labels));
        }
    }
    Ok(best.expect("at least one repetition ran").1)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd_once(x: &Factor, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<u32>) {
    let n = x.n();
    let r = x.r();

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.push(x.row(first).to_vec());
    let mut dist_sq: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total <= 0.0 {
            // all points coincide with existing centers; pick uniformly
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(x.row(next).to_vec());
        for (i, slot) in dist_sq.iter_mut().enumerate() {
            let d = sq_dist(x.row(i), centers.last().unwrap());
            if d < *slot {
                *slot = d;
            }
        }
    }

    let mut labels = vec![0u32; n];
    let mut wcss = f64::INFINITY;
    for _ in 0..100 {
        // assignment
        let mut changed = false;
        let mut new_wcss = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            let row = x.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *label != best as u32 {
                *label = best as u32;
                changed = true;
            }
            new_wcss += best_d;
        }
        // update
        let mut sums = vec![vec![0.0f64; r]; k];
        let mut counts = vec![0usize; k];
        for (i, &label) in labels.iter().enumerate() {
            let c = label as usize;
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (center, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *center = s / counts[c] as f64;
                }
            }
        }
        let improved = new_wcss < wcss - 1e-12 * wcss.abs().max(1.0);
        wcss = new_wcss;
        if !changed || !improved {
            break;
        }
    }
    (wcss, labels)
}

/// Two-class clustering accuracy: the best match fraction over the two
/// label permutations.
pub fn clustering_accuracy(labels: &[u32], truth: &[u32]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::dim(format!(
            "label lists have lengths {} and {}",
            labels.len(),
            truth.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty label lists"));
    }
    let n = labels.len() as f64;
    let direct = labels
        .iter()
        .zip(truth)
        .filter(|(a, b)| (**a != 0) == (**b != 0))
        .count() as f64;
    let flipped = n - direct;
    Ok(direct.max(flipped) / n)
}
