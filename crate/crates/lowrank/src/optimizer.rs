//! Gradient descent on the sampled factorization objective with Armijo
//! backtracking, random initialization, and automatic parameter tuning.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objective::{self, ObjectiveParams};
use crate::sampled::SampledMatrix;
use crate::sampling;

/// How the row-norm threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    /// `alpha = 100 * sqrt(max observed |M_ij|)`.
    AutoSqrt,
    /// `alpha = 100 * max observed |M_ij|` (no square root).
    AutoLinf,
    /// Explicit value.
    Fixed(f64),
}

/// How the regularization weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    /// `lambda = 100 * ‖Ω - pJ‖`, estimated by power iteration.
    AutoSpectral,
    /// `lambda = coeff * sqrt(n p)`.
    ScaledSqrtNp { coeff: f64 },
    /// Explicit value (0 disables the regularizer).
    Fixed(f64),
}

/// Solver configuration. Defaults follow the stopping rules
/// `‖∇f‖_F ≤ 1e-3`, `‖η ∇f‖_F ≤ 1e-10`, at most 1000 iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub r: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub init_seed: u64,
    pub alpha_mode: AlphaMode,
    pub lambda_mode: LambdaMode,
    /// Iteration budget for the `‖Ω - pJ‖` power-method estimate.
    pub norm_iters: usize,
    pub norm_tol: f64,
}

impl SolveConfig {
    pub fn new(r: usize) -> Self {
        SolveConfig {
            r,
            max_iters: 1000,
            grad_tol: 1e-3,
            step_tol: 1e-10,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            init_seed: 0,
            alpha_mode: AlphaMode::AutoSqrt,
            lambda_mode: LambdaMode::AutoSpectral,
            norm_iters: 200,
            norm_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("target rank must be at least 1"));
        }
        if !self.grad_tol.is_finite()
            || self.grad_tol <= 0.0
            || !self.step_tol.is_finite()
            || self.step_tol <= 0.0
        {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(0.0 < self.armijo_c && self.armijo_c < 1.0) {
            return Err(Error::invalid("armijo_c must lie in (0, 1)"));
        }
        if !(0.0 < self.armijo_shrink && self.armijo_shrink < 1.0) {
            return Err(Error::invalid("armijo_shrink must lie in (0, 1)"));
        }
        if self.norm_iters == 0 {
            return Err(Error::invalid("norm_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// `‖∇f‖_F` fell below the gradient tolerance.
    GradTol,
    /// `‖η ∇f‖_F` fell below the step tolerance, or backtracking stalled.
    StepTol,
    /// Iteration budget exhausted.
    MaxIters,
}

/// One iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    /// Step size accepted at this iteration (0 for the final record).
    pub step_size: f64,
}

/// Full solve trace: per-iteration objective values (nonincreasing),
/// gradient norms, accepted step sizes, and the termination reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: Vec<IterRecord>,
    pub reason: TerminationReason,
    pub wall_secs: f64,
    pub params: ObjectiveParams,
}

impl SolveTrace {
    pub fn final_f(&self) -> f64 {
        self.iterations.last().map(|r| r.f_value).unwrap_or(0.0)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.iterations.last().map(|r| r.grad_norm).unwrap_or(0.0)
    }

    /// Writes one JSON record per iteration, then a trailer with the
    /// termination reason.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.iterations {
            let line = serde_json::to_string(rec).expect("iteration record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        let trailer = serde_json::json!({
            "reason": self.reason,
            "wall_secs": self.wall_secs,
            "lambda": self.params.lambda,
            "alpha": self.params.alpha,
        });
        writeln!(w, "{trailer}").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Random initialization with i.i.d. standard normal entries, filled in
/// row-major order from a ChaCha8 stream.
pub fn init_factor(n: usize, r: usize, seed: u64) -> Result<Factor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let values: Vec<f64> = (0..n * r).map(|_| normal.sample(&mut rng)).collect();
    Factor::from_row_major(n, r, values)
}

/// Default automatic tuning: `alpha = 100 sqrt(max |M_ij|)` over observed
/// entries and `lambda = 100 ‖Ω - pJ‖` with the norm estimated by power
/// iteration on the sample's own pattern.
pub fn tune_params(m: &SampledMatrix) -> Result<ObjectiveParams> {
    resolve_params(m, AlphaMode::AutoSqrt, LambdaMode::AutoSpectral, 200, 1e-6)
}

/// Resolves tuning modes against an observed sample.
pub fn resolve_params(
    m: &SampledMatrix,
    alpha_mode: AlphaMode,
    lambda_mode: LambdaMode,
    norm_iters: usize,
    norm_tol: f64,
) -> Result<ObjectiveParams> {
    let max_abs = m.max_abs_value();
    let alpha = match alpha_mode {
        AlphaMode::AutoSqrt | AlphaMode::AutoLinf => {
            let max_abs =
                max_abs.ok_or_else(|| Error::invalid("cannot tune alpha on an empty sample"))?;
            if max_abs == 0.0 {
                // all observed entries are zero; any positive threshold works
                1.0
            } else {
                match alpha_mode {
                    AlphaMode::AutoSqrt => 100.0 * max_abs.sqrt(),
                    AlphaMode::AutoLinf => 100.0 * max_abs,
                    AlphaMode::Fixed(_) => unreachable!(),
                }
            }
        }
        AlphaMode::Fixed(a) => a,
    };
    let lambda = match lambda_mode {
        LambdaMode::AutoSpectral => {
            let est = sampling::spectral_norm_centered(m, m.p_nominal(), norm_iters, norm_tol)?;
            100.0 * est.value
        }
        LambdaMode::ScaledSqrtNp { coeff } => coeff * ((m.n() as f64) * m.p_nominal()).sqrt(),
        LambdaMode::Fixed(l) => l,
    };
    ObjectiveParams::new(lambda, alpha)
}

/// Outcome of one backtracking line search.
pub(crate) struct LineSearchOutcome {
    pub eta: f64,
    pub x_next: Factor,
    pub f_next: f64,
}

/// Backtracking on an arbitrary objective closure: returns the largest
/// `eta = eta0 * shrink^k`, `k ≤ max_halvings`, with
/// `f(x - eta g) ≤ f(x) - c eta ‖g‖_F²`, or `None` when the budget is
/// exhausted.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backtrack<F: Fn(&Factor) -> Result<f64>>(
    f: F,
    x: &Factor,
    g: &Factor,
    f_x: f64,
    eta0: f64,
    c: f64,
    shrink: f64,
    max_halvings: usize,
) -> Result<Option<LineSearchOutcome>> {
    let g_sq = {
        let n = g.frobenius_norm();
        n * n
    };
    let mut eta = eta0;
    for _ in 0..=max_halvings {
        let x_next = x.step(eta, g)?;
        let f_next = f(&x_next)?;
        if f_next <= f_x - c * eta * g_sq {
            return Ok(Some(LineSearchOutcome {
                eta,
                x_next,
                f_next,
            }));
        }
        eta *= shrink;
    }
    Ok(None)
}

/// One Armijo step on the sampled objective. Returns the accepted step
/// size and the updated factor; errors with `NonConvergence` when 60
/// halvings fail to produce sufficient decrease (the caller terminates
/// with the step-tolerance reason).
pub fn armijo_step(
    m: &SampledMatrix,
    params: &ObjectiveParams,
    x: &Factor,
    g: &Factor,
    eta0: f64,
    cfg: &SolveConfig,
) -> Result<(f64, Factor)> {
    let f_x = objective::value(x, m, params)?;
    let out = backtrack(
        |y| objective::value(y, m, params),
        x,
        g,
        f_x,
        eta0,
        cfg.armijo_c,
        cfg.armijo_shrink,
        60,
    )?;
    match out {
        Some(o) => Ok((o.eta, o.x_next)),
        None => Err(Error::NonConvergence(
            "backtracking exhausted 60 halvings without sufficient decrease".into(),
        )),
    }
}

/// Runs gradient descent from random initialization until one of the
/// stopping rules fires. The objective trace is nonincreasing by the
/// sufficient-decrease condition of every accepted step.
pub fn solve(m: &SampledMatrix, cfg: &SolveConfig) -> Result<(Factor, SolveTrace)> {
    cfg.validate()?;
    let start = Instant::now();
    let params = resolve_params(
        m,
        cfg.alpha_mode,
        cfg.lambda_mode,
        cfg.norm_iters,
        cfg.norm_tol,
    )?;
    let mut x = init_factor(m.n(), cfg.r, cfg.init_seed)?;
    let mut iterations = Vec::new();
    let mut eta0 = 1.0f64;

    let mut f_x = objective::value(&x, m, &params)?;
    let reason = loop {
        let iter = iterations.len();
        let g = objective::gradient(&x, m, &params)?;
        let grad_norm = g.frobenius_norm();

        if grad_norm <= cfg.grad_tol {
            iterations.push(IterRecord {
                iter,
                f_value: f_x,
                grad_norm,
                step_size: 0.0,
            });
            break TerminationReason::GradTol;
        }
        if iter >= cfg.max_iters {
            iterations.push(IterRecord {
                iter,
                f_value: f_x,
                grad_norm,
                step_size: 0.0,
            });
            break TerminationReason::MaxIters;
        }

        let outcome = backtrack(
            |y| objective::value(y, m, &params),
            &x,
            &g,
            f_x,
            eta0,
            cfg.armijo_c,
            cfg.armijo_shrink,
            60,
        )?;
        let outcome = match outcome {
            Some(o) => o,
            None => {
                // stalled: no step of any size decreases f enough
                iterations.push(IterRecord {
                    iter,
                    f_value: f_x,
                    grad_norm,
                    step_size: 0.0,
                });
                break TerminationReason::StepTol;
            }
        };

        iterations.push(IterRecord {
            iter,
            f_value: f_x,
            grad_norm,
            step_size: outcome.eta,
        });

        let step_len = outcome.eta * grad_norm;
        x = outcome.x_next;
        f_x = outcome.f_next;
        if step_len <= cfg.step_tol {
            iterations.push(IterRecord {
                iter: iter + 1,
                f_value: f_x,
                grad_norm,
                step_size: 0.0,
            });
            break TerminationReason::StepTol;
        }
        // warm start: try twice the accepted step first
        eta0 = (outcome.eta * 2.0).clamp(1e-12, 1e12);
    };

    let trace = SolveTrace {
        iterations,
        reason,
        wall_secs: start.elapsed().as_secs_f64(),
        params,
    };
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_sampled_kernel, gen_two_spheres, KernelSpec};
    use crate::sampling::sample_mask;

    fn planted_instance(n: usize, r: usize, p: f64, seed: u64) -> (Factor, SampledMatrix) {
        let x = init_factor(n, r, seed).unwrap();
        let mask = sample_mask(n, p, seed ^ 0x77).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| {
                (
                    i,
                    j,
                    x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum(),
                )
            })
            .collect();
        (x, SampledMatrix::from_pairs(n, &pairs, p).unwrap())
    }

    #[test]
    fn init_factor_deterministic() {
        let a = init_factor(20, 3, 5).unwrap();
        let b = init_factor(20, 3, 5).unwrap();
        let c = init_factor(20, 3, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_factor_gaussian_moments() {
        let n = 1000;
        let r = 1000;
        let x = init_factor(n, r, 42).unwrap();
        let count = (n * r) as f64;
        let mean = x.values().iter().sum::<f64>() / count;
        let var = x.values().iter().map(|v| v * v).sum::<f64>() / count - mean * mean;
        assert!(mean.abs() < 4.0 / count.sqrt(), "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn tune_full_mask_lambda_is_hundred() {
        // ‖Ω - J‖ = ‖-I‖ = 1 on the complete off-diagonal mask
        let mask = sample_mask(10, 1.0, 3).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask.iter_pairs().map(|(i, j)| (i, j, 1.0)).collect();
        let m = SampledMatrix::from_pairs(10, &pairs, 1.0).unwrap();
        let params = tune_params(&m).unwrap();
        assert!(
            (params.lambda - 100.0).abs() < 1e-4,
            "lambda {}",
            params.lambda
        );
        assert!(
            (params.alpha - 100.0).abs() < 1e-10,
            "alpha {}",
            params.alpha
        );
    }

    #[test]
    fn tune_radial_kernel_alpha_near_hundred() {
        let data = gen_two_spheres(60, 4).unwrap();
        let mask = sample_mask(60, 0.5, 5).unwrap();
        let m = build_sampled_kernel(&data, &KernelSpec::Radial { gamma: 1.0 }, &mask).unwrap();
        let params = tune_params(&m).unwrap();
        // max radial entry is at most 1 and close to it for near-identical points
        assert!(
            params.alpha <= 100.0 + 1e-9 && params.alpha > 80.0,
            "alpha {}",
            params.alpha
        );
    }

    #[test]
    fn tune_lambda_scaling_band() {
        let n = 500;
        let p = 0.2;
        let scale = ((n as f64) * p).sqrt();
        for seed in 0..50 {
            let mask = sample_mask(n, p, seed).unwrap();
            let pairs: Vec<(usize, usize, f64)> =
                mask.iter_pairs().map(|(i, j)| (i, j, 1.0)).collect();
            let m = SampledMatrix::from_pairs(n, &pairs, p).unwrap();
            let params =
                resolve_params(&m, AlphaMode::AutoSqrt, LambdaMode::AutoSpectral, 200, 1e-6)
                    .unwrap();
            let ratio = params.lambda / scale;
            assert!(
                (50.0..=300.0).contains(&ratio),
                "seed {seed}: lambda/sqrt(np) = {ratio}"
            );
        }
    }

    #[test]
    fn tune_rejects_empty_sample() {
        let m = SampledMatrix::from_pairs(5, &[], 0.0).unwrap();
        assert!(tune_params(&m).is_err());
    }

    #[test]
    fn backtrack_hand_computed_quadratic() {
        // f(x) = x² on a 1x1 factor: from x=1 with g=2, eta0=1, c=1e-4,
        // eta=1 overshoots (f stays 1), eta=0.5 lands at the minimum.
        let f = |y: &Factor| -> Result<f64> { Ok(y.values()[0] * y.values()[0]) };
        let x = Factor::from_row_major(1, 1, vec![1.0]).unwrap();
        let g = Factor::from_row_major(1, 1, vec![2.0]).unwrap();
        let out = backtrack(f, &x, &g, 1.0, 1.0, 1e-4, 0.5, 60)
            .unwrap()
            .expect("line search succeeds");
        assert_eq!(out.eta, 0.5);
        assert_eq!(out.x_next.values()[0], 0.0);
        assert_eq!(out.f_next, 0.0);
    }

    #[test]
    fn armijo_zero_gradient_accepts_eta0() {
        let (_, m) = planted_instance(6, 2, 0.8, 1);
        let params = ObjectiveParams::new(0.0, 10.0).unwrap();
        let cfg = SolveConfig::new(2);
        // exact factor: gradient is zero
        let (x, _) = planted_instance(6, 2, 0.8, 1);
        let g = Factor::zeros(6, 2).unwrap();
        let (eta, x_next) = armijo_step(&m, &params, &x, &g, 0.25, &cfg).unwrap();
        assert_eq!(eta, 0.25);
        assert_eq!(x_next, x);
    }

    #[test]
    fn armijo_accepted_step_satisfies_decrease() {
        let (_, m) = planted_instance(12, 2, 0.6, 2);
        let params = ObjectiveParams::new(0.0, 10.0).unwrap();
        let cfg = SolveConfig::new(2);
        let x = init_factor(12, 2, 99).unwrap();
        let g = objective::gradient(&x, &m, &params).unwrap();
        let f_x = objective::value(&x, &m, &params).unwrap();
        let (eta, x_next) = armijo_step(&m, &params, &x, &g, 1.0, &cfg).unwrap();
        let f_next = objective::value(&x_next, &m, &params).unwrap();
        let gn = g.frobenius_norm();
        assert!(f_next <= f_x - cfg.armijo_c * eta * gn * gn + 1e-12);
    }

    #[test]
    fn solve_recovers_planted_rank_one() {
        let n = 30;
        let (truth, m) = planted_instance(n, 1, 0.5, 3);
        let mut cfg = SolveConfig::new(1);
        cfg.init_seed = 4;
        cfg.lambda_mode = LambdaMode::Fixed(0.0);
        let (x, trace) = solve(&m, &cfg).unwrap();
        // compare Gram matrices via the dense residual
        let xd = x.to_dmatrix();
        let td = truth.to_dmatrix();
        let diff = &xd * xd.transpose() - &td * td.transpose();
        let rel = diff.norm() / (&td * td.transpose()).norm();
        assert!(
            rel < 1e-4,
            "relative error {rel}, reason {:?}",
            trace.reason
        );
    }

    #[test]
    fn solve_empty_mask_zero_lambda_terminates_immediately() {
        let m = SampledMatrix::from_pairs(5, &[], 0.0).unwrap();
        let mut cfg = SolveConfig::new(2);
        cfg.lambda_mode = LambdaMode::Fixed(0.0);
        cfg.alpha_mode = AlphaMode::Fixed(1.0);
        let (_, trace) = solve(&m, &cfg).unwrap();
        assert_eq!(trace.reason, TerminationReason::GradTol);
        assert_eq!(trace.iterations.len(), 1);
    }

    #[test]
    fn solve_full_mask_full_rank_drives_f_to_zero() {
        // complete off-diagonal sample of a PSD matrix, r = n: the
        // unconstrained factorization can fit every observed entry
        let n = 6;
        let eigs = vec![3.0, 2.5, 2.0, 1.5, 1.0, 0.5];
        let truth = crate::metrics::gen_psd(n, &eigs, 7).unwrap();
        let mask = sample_mask(n, 1.0, 8).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| (i, j, truth.entry(i, j).unwrap()))
            .collect();
        let m = SampledMatrix::from_pairs(n, &pairs, 1.0).unwrap();
        let mut cfg = SolveConfig::new(n);
        cfg.lambda_mode = LambdaMode::Fixed(0.0);
        cfg.init_seed = 9;
        cfg.grad_tol = 1e-9;
        cfg.max_iters = 20000;
        let (x, trace) = solve(&m, &cfg).unwrap();
        assert!(trace.final_f() < 1e-12, "final f {}", trace.final_f());
        // off-diagonal entries match the dense eigendecomposition oracle
        let xd = x.to_dmatrix();
        let xxt = &xd * xd.transpose();
        for (i, j, v) in m.iter_pairs() {
            assert!((xxt[(i, j)] - v).abs() < 1e-6);
        }
    }

    #[test]
    fn solve_trace_monotone() {
        let (_, m) = planted_instance(25, 2, 0.4, 10);
        let mut cfg = SolveConfig::new(2);
        cfg.init_seed = 11;
        cfg.lambda_mode = LambdaMode::Fixed(0.0);
        let (_, trace) = solve(&m, &cfg).unwrap();
        for w in trace.iterations.windows(2) {
            assert!(w[1].f_value <= w[0].f_value + 1e-15);
        }
    }

    #[test]
    fn trace_jsonl_roundtrip_lines() {
        let (_, m) = planted_instance(10, 2, 0.6, 12);
        let mut cfg = SolveConfig::new(2);
        cfg.lambda_mode = LambdaMode::Fixed(0.0);
        let (_, trace) = solve(&m, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        trace.write_jsonl(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), trace.iterations.len() + 1);
        let first: IterRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first.iter, 0);
    }

    #[test]
    fn per_iteration_cost_scales_with_observations() {
        // doubling the observation count should roughly double the cost of
        // one gradient evaluation; allow generous slack
        let n = 400;
        let x = init_factor(n, 4, 13).unwrap();
        let params = ObjectiveParams::new(0.0, 100.0).unwrap();
        let build = |p: f64| {
            let mask = sample_mask(n, p, 14).unwrap();
            let pairs: Vec<(usize, usize, f64)> =
                mask.iter_pairs().map(|(i, j)| (i, j, 0.5)).collect();
            SampledMatrix::from_pairs(n, &pairs, p).unwrap()
        };
        let m1 = build(0.2);
        let m2 = build(0.4);
        let time = |m: &SampledMatrix| {
            let mut best = f64::INFINITY;
            for _ in 0..5 {
                let t = Instant::now();
                for _ in 0..10 {
                    std::hint::black_box(objective::gradient(&x, m, &params).unwrap());
                }
                best = best.min(t.elapsed().as_secs_f64());
            }
            best
        };
        let t1 = time(&m1);
        let t2 = time(&m2);
        let ratio = t2 / t1;
        assert!(ratio < 4.0, "cost ratio {ratio} for 2x observations");
    }
}
