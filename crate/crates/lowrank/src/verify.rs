//! Randomized verification suites over the landscape diagnostics: the two
//! deterministic inequalities, the four-term decomposition identity of the
//! auxiliary function, and finite-difference checks of the objective's
//! first and second derivatives.
//!
//! Each suite draws independent desk-scale instances from a seeded stream
//! and reports the failure count; the inequalities and the identity are
//! exact mathematics, so any failure beyond floating-point slack is an
//! implementation bug.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::factor::Factor;
use crate::metrics::gen_psd;
use crate::objective::{self, ObjectiveParams};
use crate::sampled::SampledMatrix;
use crate::sampling::sample_mask;
use crate::theory::{self, RectMask};

/// Aggregate outcome of one randomized suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub instances: usize,
    pub failures: usize,
    /// Worst observed violation or relative error, for reporting.
    pub worst: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_dmatrix(rng: &mut ChaCha8Rng, nr: usize, nc: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(nr, nc, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

/// Deterministic deviation bound on random rectangular observation sets
/// and factor quadruples.
pub fn run_deviation_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n1 = rng.random_range(2..=8);
        let n2 = rng.random_range(2..=8);
        let r1 = rng.random_range(1..=3);
        let r2 = rng.random_range(1..=3);
        let t = rng.random::<f64>() * 3.0 - 1.0;
        let density = rng.random::<f64>();
        let mut cells = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                if rng.random::<f64>() < density {
                    cells.push((i, j));
                }
            }
        }
        let mask = RectMask { n1, n2, cells };
        let scale = 0.5 + rng.random::<f64>() * 2.0;
        let a = random_dmatrix(&mut rng, n1, r1, scale);
        let b = random_dmatrix(&mut rng, n1, r2, scale);
        let c = random_dmatrix(&mut rng, n2, r1, scale);
        let d = random_dmatrix(&mut rng, n2, r2, scale);
        let check = theory::check_deviation_bound(&mask, t, &a, &b, &c, &d)?;
        worst = worst.max(check.lhs - check.rhs);
        if !check.holds {
            failures += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "lemma-concern".into(),
        instances,
        failures,
        worst,
    })
}

/// Nuclear-norm bound for Hadamard products of low-rank factors.
pub fn run_hadamard_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n1 = rng.random_range(2..=8);
        let n2 = rng.random_range(2..=8);
        let r1 = rng.random_range(1..=3);
        let r2 = rng.random_range(1..=3);
        let scale = 0.5 + rng.random::<f64>() * 2.0;
        let a = random_dmatrix(&mut rng, n1, r1, scale);
        let b = random_dmatrix(&mut rng, n1, r2, scale);
        let c = random_dmatrix(&mut rng, n2, r1, scale);
        let d = random_dmatrix(&mut rng, n2, r2, scale);
        let check = theory::check_hadamard_nuclear(&a, &b, &c, &d)?;
        worst = worst.max(check.lhs - check.rhs);
        if !check.holds {
            failures += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "hadamard".into(),
        instances,
        failures,
        worst,
    })
}

/// One random desk-scale landscape instance: a sampled synthetic truth,
/// a random factor, and objective parameters.
pub(crate) fn random_landscape_instance(
    seed: u64,
) -> Result<(
    Factor,
    SampledMatrix,
    ObjectiveParams,
    crate::truth::GroundTruth,
    usize,
)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=14);
    let rank_truth = rng.random_range(1..=3.min(n - 1));
    let r = rng.random_range(1..=4.min(n - 1));
    let p = 0.3 + rng.random::<f64>() * 0.5;
    let mut eigs: Vec<f64> = (0..rank_truth).map(|k| 5.0 - 0.8 * k as f64).collect();
    let tail = rng.random::<f64>() * 0.4;
    eigs.extend(std::iter::repeat_n(tail, n - rank_truth));
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let truth = gen_psd(n, &eigs, seed ^ 0x51)?;
    let mask = sample_mask(n, p, seed ^ 0x1234)?;
    let pairs: Vec<(usize, usize, f64)> = mask
        .iter_pairs()
        .map(|(i, j)| Ok((i, j, truth.entry(i, j)?)))
        .collect::<Result<_>>()?;
    let m = SampledMatrix::from_pairs(n, &pairs, p)?;
    let scale = 0.1 + rng.random::<f64>() * 2.0;
    let values: Vec<f64> = (0..n * r)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    let x = Factor::from_row_major(n, r, values)?;
    let lambda = if rng.random::<f64>() < 0.5 {
        0.0
    } else {
        rng.random::<f64>() * 2.0
    };
    let alpha = 0.2 + rng.random::<f64>();
    let params = ObjectiveParams::new(lambda, alpha)?;
    Ok((x, m, params, truth, r))
}

/// Decomposition identity of the auxiliary function on random instances.
pub fn run_k_identity_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (x, m, params, truth, r) = random_landscape_instance(seed.wrapping_add(i as u64))?;
        let b = theory::k_breakdown(&x, &m, &params, &truth, r)?;
        let sum = b.component_sum();
        let scale = b.k_total.abs().max(sum.abs()).max(1.0);
        let rel = (b.k_total - sum).abs() / scale;
        worst = worst.max(rel);
        if rel > 1e-8 {
            failures += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "k-identity".into(),
        instances,
        failures,
        worst,
    })
}

/// Draws an instance whose factor rows all stay clear of the
/// regularizer's threshold shell, so finite differences are valid.
fn instance_away_from_shell(seed: u64) -> Result<(Factor, SampledMatrix, ObjectiveParams, Factor)> {
    for attempt in 0..64 {
        let inst_seed = seed.wrapping_add(attempt * 0x0101_0101);
        let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
        let n = rng.random_range(8..=12);
        let r = rng.random_range(2..=3);
        let p = 0.4 + rng.random::<f64>() * 0.3;
        let mask = sample_mask(n, p, inst_seed ^ 0xfeed)?;
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| {
                let _ = (i, j);
                (i, j, rng.random::<f64>() * 4.0 - 2.0)
            })
            .collect();
        let m = SampledMatrix::from_pairs(n, &pairs, p)?;
        let values: Vec<f64> = (0..n * r)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let x = Factor::from_row_major(n, r, values)?;
        // threshold placed so some rows exceed it
        let mut norms: Vec<f64> = (0..n).map(|i| x.row_norm(i)).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let alpha = 0.75 * norms[n - 1];
        let margin = 0.02 * alpha.max(1.0);
        if norms.iter().any(|&norm| (norm - alpha).abs() < margin) {
            continue;
        }
        let lambda = 0.2 + rng.random::<f64>() * 1.5;
        let params = ObjectiveParams::new(lambda, alpha)?;
        let h_values: Vec<f64> = (0..n * r)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let h = Factor::from_row_major(n, r, h_values)?;
        return Ok((x, m, params, h));
    }
    Err(crate::error::Error::NonConvergence(
        "could not place rows away from the threshold shell".into(),
    ))
}

/// First- and second-derivative checks against central finite differences.
///
/// Fails an instance when the gradient error exceeds `1e-5` relative or
/// the Hessian quadratic form error exceeds `1e-4` relative.
pub fn run_gradient_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (x, m, params, h) = instance_away_from_shell(seed.wrapping_add((i as u64) << 16))?;
        let n = x.n();
        let r = x.r();

        let g = objective::gradient(&x, &m, &params)?;
        let step = 1e-6;
        let mut fd = Factor::zeros(n, r)?;
        for row in 0..n {
            for col in 0..r {
                let mut plus = x.clone();
                plus.row_mut(row)[col] += step;
                let mut minus = x.clone();
                minus.row_mut(row)[col] -= step;
                fd.row_mut(row)[col] = (objective::value(&plus, &m, &params)?
                    - objective::value(&minus, &m, &params)?)
                    / (2.0 * step);
            }
        }
        let grad_err = {
            let num: f64 = g
                .values()
                .iter()
                .zip(fd.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            num / g.frobenius_norm().max(1e-12)
        };

        let quad = objective::hessian_quadform(&x, &h, &m, &params)?;
        let hstep = 1e-4;
        let eval = |s: f64| -> Result<f64> {
            let mut y = x.clone();
            for (o, d) in y.values_mut().iter_mut().zip(h.values()) {
                *o += s * d;
            }
            objective::value(&y, &m, &params)
        };
        let fd2 = (eval(hstep)? - 2.0 * eval(0.0)? + eval(-hstep)?) / (hstep * hstep);
        let quad_err = (fd2 - quad).abs() / quad.abs().max(1e-8);

        worst = worst.max(grad_err).max(quad_err);
        if grad_err > 1e-5 || quad_err > 1e-4 {
            failures += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "gradients".into(),
        instances,
        failures,
        worst,
    })
}
