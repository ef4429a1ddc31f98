//! Experiment orchestration: scenario definitions, per-trial method runs,
//! and report/CSV emission.
//!
//! Trials run concurrently with independent seeds; reports are assembled
//! in trial order, so identical configurations produce identical reports
//! up to the timing fields.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::kernels::{self, KernelSpec};
use crate::metrics::{self, ErrorTarget};
use crate::optimizer::{self, AlphaMode, LambdaMode, SolveConfig};
use crate::sampled::{memory_footprint, SampledMatrix};
use crate::sampling::sample_mask;
use crate::theory;
use crate::truth::GroundTruth;

/// Approximation methods that can run in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nonconvex,
    Spectral,
    Nystrom,
}

/// Spectrum family for the rank-mismatch scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// All nonzero eigenvalues equal to 10.
    #[default]
    Constant,
    /// Decreasing spectra: `20, 18, …, 2` when the true rank is fixed at
    /// 10, and `30, 28, …, 32 - 2R` when the true rank `R` varies.
    Decreasing,
}

/// Scenario selector with its sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    /// Constant head `10,10,10,10`, swept fifth eigenvalue, unit tail.
    FullRank { sigma5_values: Vec<f64> },
    /// Exactly rank-5 spectra `10,10,10,10,10/kappa`; `null` means
    /// `kappa = ∞` (true rank 4).
    ExtremeKappa { kappa_values: Vec<Option<f64>> },
    /// True rank fixed at 10, selected rank swept.
    RankMismatchFixedM {
        selected_ranks: Vec<usize>,
        #[serde(default)]
        spectrum: SpectrumKind,
    },
    /// Selected rank fixed, true rank swept.
    RankMismatchFixedR {
        true_ranks: Vec<usize>,
        #[serde(default)]
        spectrum: SpectrumKind,
    },
    /// Kernel PCA on the two-sphere dataset; the nonconvex sampling rate
    /// is tied to the Nyström column budget.
    KpcaTwoSpheres {
        nystrom_columns: usize,
        gamma: f64,
        #[serde(default = "default_rate_ratio")]
        rate_ratio: f64,
    },
    /// Explicit spectrum, single sweep point.
    Custom { eigenvalues: Vec<f64> },
}

fn default_rate_ratio() -> f64 {
    2.5
}

/// Experiment configuration, deserializable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub n: usize,
    pub r: usize,
    /// Sampling rate for the nonconvex and spectral methods. Ignored for
    /// the KPCA scenario, where it derives from the column budget.
    #[serde(default)]
    pub p: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Redraw the ground-truth eigenvectors at every sweep point instead
    /// of reusing one draw across the sweep.
    #[serde(default)]
    pub redraw_eigenvectors: bool,
    /// Default report destination; a CLI flag overrides it.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub lambda: Option<LambdaMode>,
    #[serde(default)]
    pub alpha: Option<AlphaMode>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial required"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        match &self.scenario {
            Scenario::KpcaTwoSpheres {
                nystrom_columns,
                gamma,
                rate_ratio,
            } => {
                if *nystrom_columns == 0 || *nystrom_columns > self.n {
                    return Err(Error::invalid("nystrom column budget out of range"));
                }
                if *gamma <= 0.0 || *rate_ratio <= 0.0 {
                    return Err(Error::invalid("gamma and rate_ratio must be positive"));
                }
            }
            _ => {
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return Err(Error::invalid(format!(
                        "sampling rate {} outside (0, 1]",
                        self.p
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Metrics of one method on one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub re_full: Option<f64>,
    pub re_rank_r: Option<f64>,
    pub accuracy: Option<f64>,
    pub iterations: Option<usize>,
    /// Auxiliary landscape value at the returned factor (nonconvex only).
    pub k_value: Option<f64>,
    pub final_f: Option<f64>,
    pub reason: Option<crate::optimizer::TerminationReason>,
    pub wall_secs: f64,
    pub error: Option<String>,
}

/// One sweep point (a fixed ground truth) with its per-trial results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPointReport {
    /// Human-readable sweep coordinate, e.g. `sigma5=7`.
    pub label: String,
    pub trials: Vec<Vec<TrialResult>>,
    /// `(sparse_entries, factor_entries)` of the first trial's sample.
    pub memory_entries: Option<(usize, usize)>,
}

/// Full experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub points: Vec<SweepPointReport>,
    pub total_wall_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Box-plot quantiles per sweep point, method, and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,method,metric,min,q1,median,q3,max\n");
        for point in &self.points {
            for method in self.methods_present() {
                for (metric, extract) in [
                    (
                        "re_full",
                        &(|t: &TrialResult| t.re_full) as &dyn Fn(&TrialResult) -> Option<f64>,
                    ),
                    ("re_rank_r", &|t: &TrialResult| t.re_rank_r),
                    ("accuracy", &|t: &TrialResult| t.accuracy),
                ] {
                    let mut values: Vec<f64> = point
                        .trials
                        .iter()
                        .flatten()
                        .filter(|t| t.method == method && t.error.is_none())
                        .filter_map(extract)
                        .collect();
                    if values.is_empty() {
                        continue;
                    }
                    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let q = |f: f64| -> f64 {
                        let idx = f * (values.len() - 1) as f64;
                        let lo = idx.floor() as usize;
                        let hi = idx.ceil() as usize;
                        let w = idx - lo as f64;
                        values[lo] * (1.0 - w) + values[hi] * w
                    };
                    out.push_str(&format!(
                        "{},{:?},{},{},{},{},{},{}\n",
                        point.label,
                        method,
                        metric,
                        values[0],
                        q(0.25),
                        q(0.5),
                        q(0.75),
                        values[values.len() - 1]
                    ));
                }
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    fn methods_present(&self) -> Vec<Method> {
        self.config.methods.clone()
    }

    /// Median of a metric at a sweep point for one method.
    pub fn median(&self, point: usize, method: Method, metric: &str) -> Option<f64> {
        let mut values: Vec<f64> = self.points[point]
            .trials
            .iter()
            .flatten()
            .filter(|t| t.method == method && t.error.is_none())
            .filter_map(|t| match metric {
                "re_full" => t.re_full,
                "re_rank_r" => t.re_rank_r,
                "accuracy" => t.accuracy,
                _ => None,
            })
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        Some(if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        })
    }
}

/// Sweep points of a scenario: label plus the spectrum (or KPCA marker).
enum SweepPoint {
    Spectrum {
        label: String,
        eigenvalues: Vec<f64>,
    },
    Kpca {
        label: String,
    },
}

fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let n = cfg.n;
    let points = match &cfg.scenario {
        Scenario::FullRank { sigma5_values } => sigma5_values
            .iter()
            .map(|&s5| {
                if s5 > 10.0 {
                    return Err(Error::invalid("sigma5 must lie within the constant head"));
                }
                let mut eigs = vec![10.0, 10.0, 10.0, 10.0, s5];
                eigs.extend(std::iter::repeat_n(1.0, n.saturating_sub(5)));
                Ok(SweepPoint::Spectrum {
                    label: format!("sigma5={s5}"),
                    eigenvalues: eigs,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Scenario::ExtremeKappa { kappa_values } => kappa_values
            .iter()
            .map(|kappa| {
                let (label, sigma5) = match kappa {
                    Some(k) => {
                        if *k < 1.0 {
                            return Err(Error::invalid("kappa must be at least 1"));
                        }
                        (format!("kappa={k}"), 10.0 / k)
                    }
                    None => ("kappa=inf".to_string(), 0.0),
                };
                Ok(SweepPoint::Spectrum {
                    label,
                    eigenvalues: vec![10.0, 10.0, 10.0, 10.0, sigma5],
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Scenario::RankMismatchFixedM {
            selected_ranks,
            spectrum,
        } => {
            let eigenvalues = match spectrum {
                SpectrumKind::Constant => vec![10.0; 10],
                SpectrumKind::Decreasing => (0..10).map(|k| 20.0 - 2.0 * k as f64).collect(),
            };
            selected_ranks
                .iter()
                .map(|&r| {
                    Ok(SweepPoint::Spectrum {
                        label: format!("r={r}"),
                        eigenvalues: eigenvalues.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scenario::RankMismatchFixedR {
            true_ranks,
            spectrum,
        } => true_ranks
            .iter()
            .map(|&rank| {
                if rank == 0 || rank > n {
                    return Err(Error::invalid(format!("true rank {rank} out of range")));
                }
                let eigenvalues: Vec<f64> = match spectrum {
                    SpectrumKind::Constant => vec![10.0; rank],
                    SpectrumKind::Decreasing => (0..rank).map(|k| 30.0 - 2.0 * k as f64).collect(),
                };
                Ok(SweepPoint::Spectrum {
                    label: format!("rank={rank}"),
                    eigenvalues,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Scenario::KpcaTwoSpheres { .. } => vec![SweepPoint::Kpca {
            label: "two_spheres".to_string(),
        }],
        Scenario::Custom { eigenvalues } => vec![SweepPoint::Spectrum {
            label: "custom".to_string(),
            eigenvalues: eigenvalues.clone(),
        }],
    };
    Ok(points)
}

fn solve_config(cfg: &ExperimentConfig, r: usize, init_seed: u64) -> SolveConfig {
    let mut sc = SolveConfig::new(r);
    sc.init_seed = init_seed;
    if let Some(m) = cfg.max_iters {
        sc.max_iters = m;
    }
    if let Some(g) = cfg.grad_tol {
        sc.grad_tol = g;
    }
    if let Some(l) = cfg.lambda {
        sc.lambda_mode = l;
    }
    if let Some(a) = cfg.alpha {
        sc.alpha_mode = a;
    }
    sc
}

fn selected_rank(cfg: &ExperimentConfig, label: &str) -> usize {
    // the fixed-M rank-mismatch sweep varies the selected rank
    if let Scenario::RankMismatchFixedM { .. } = cfg.scenario {
        if let Some(stripped) = label.strip_prefix("r=") {
            if let Ok(r) = stripped.parse::<usize>() {
                return r;
            }
        }
    }
    cfg.r
}

fn run_spectrum_trial(
    cfg: &ExperimentConfig,
    truth: &GroundTruth,
    r: usize,
    trial: usize,
) -> Vec<TrialResult> {
    let trial_seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial as u64);
    let n = cfg.n;
    let mut results = Vec::new();

    let mask = match sample_mask(n, cfg.p, trial_seed) {
        Ok(m) => m,
        Err(e) => {
            for &method in &cfg.methods {
                results.push(error_result(method, &e));
            }
            return results;
        }
    };
    let sample: Result<SampledMatrix> = (|| {
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| Ok((i, j, truth.entry(i, j)?)))
            .collect::<Result<_>>()?;
        SampledMatrix::from_pairs(n, &pairs, cfg.p)
    })();
    let sample = match sample {
        Ok(s) => s,
        Err(e) => {
            for &method in &cfg.methods {
                results.push(error_result(method, &e));
            }
            return results;
        }
    };

    for &method in &cfg.methods {
        let start = std::time::Instant::now();
        let outcome: Result<TrialResult> = (|| match method {
            Method::Nonconvex => {
                let sc = solve_config(cfg, r, trial_seed ^ 0xA5A5);
                let (x, trace) = optimizer::solve(&sample, &sc)?;
                let u_r = truth.scaled_eigvec_factor(r)?;
                let k = theory::k_total(&x, &sample, &trace.params, &u_r)?;
                Ok(TrialResult {
                    method,
                    re_full: Some(metrics::rel_error_truth(&x, truth, ErrorTarget::Full)?),
                    re_rank_r: Some(metrics::rel_error_truth(&x, truth, ErrorTarget::RankR(r))?),
                    accuracy: None,
                    iterations: Some(trace.iterations.len()),
                    k_value: Some(k),
                    final_f: Some(trace.final_f()),
                    reason: Some(trace.reason),
                    wall_secs: 0.0,
                    error: None,
                })
            }
            Method::Spectral => {
                let x = baselines::spectral_truncate(&sample, r)?;
                Ok(TrialResult {
                    method,
                    re_full: Some(metrics::rel_error_truth(&x, truth, ErrorTarget::Full)?),
                    re_rank_r: Some(metrics::rel_error_truth(&x, truth, ErrorTarget::RankR(r))?),
                    accuracy: None,
                    iterations: None,
                    k_value: None,
                    final_f: None,
                    reason: None,
                    wall_secs: 0.0,
                    error: None,
                })
            }
            Method::Nystrom => Err(Error::invalid(
                "the column-sampling method applies to the kernel scenario only",
            )),
        })();
        results.push(finish(outcome, method, start));
    }
    results
}

fn run_kpca_trial(
    cfg: &ExperimentConfig,
    data: &kernels::Dataset,
    spec: &KernelSpec,
    columns: usize,
    p_ncvx: f64,
    trial: usize,
) -> Vec<TrialResult> {
    let trial_seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial as u64);
    let n = cfg.n;
    let truth_labels = data.labels().expect("two-sphere data carries labels");
    let mut results = Vec::new();

    for &method in &cfg.methods {
        let start = std::time::Instant::now();
        let outcome: Result<TrialResult> = (|| {
            let x: Factor = match method {
                Method::Nonconvex => {
                    let mask = sample_mask(n, p_ncvx, trial_seed)?;
                    let sample = kernels::build_sampled_kernel(data, spec, &mask)?;
                    drop(mask);
                    let sc = solve_config(cfg, cfg.r, trial_seed ^ 0xA5A5);
                    let (x, _) = optimizer::solve(&sample, &sc)?;
                    x
                }
                Method::Nystrom => baselines::nystrom(
                    |i, j| spec_eval(spec, data, i, j),
                    n,
                    columns,
                    cfg.r,
                    trial_seed ^ 0x5151,
                )?,
                Method::Spectral => {
                    let mask = sample_mask(n, p_ncvx, trial_seed)?;
                    let sample = kernels::build_sampled_kernel(data, spec, &mask)?;
                    baselines::spectral_truncate(&sample, cfg.r)?
                }
            };
            let labels = metrics::kmeans_rows(&x, 2, 20, trial_seed ^ 0x3333)?;
            let accuracy = metrics::clustering_accuracy(&labels, truth_labels)?;
            Ok(TrialResult {
                method,
                re_full: None,
                re_rank_r: None,
                accuracy: Some(accuracy),
                iterations: None,
                k_value: None,
                final_f: None,
                reason: None,
                wall_secs: 0.0,
                error: None,
            })
        })();
        results.push(finish(outcome, method, start));
    }
    results
}

fn spec_eval(spec: &KernelSpec, data: &kernels::Dataset, i: usize, j: usize) -> f64 {
    kernels::kernel_eval(spec, data.point(i), data.point(j))
        .expect("dimensions match by construction")
}

fn error_result(method: Method, e: &Error) -> TrialResult {
    TrialResult {
        method,
        re_full: None,
        re_rank_r: None,
        accuracy: None,
        iterations: None,
        k_value: None,
        final_f: None,
        reason: None,
        wall_secs: 0.0,
        error: Some(e.to_string()),
    }
}

fn finish(outcome: Result<TrialResult>, method: Method, start: std::time::Instant) -> TrialResult {
    let mut result = match outcome {
        Ok(r) => r,
        Err(e) => error_result(method, &e),
    };
    result.wall_secs = start.elapsed().as_secs_f64();
    result
}

/// Runs every trial of every sweep point. Per-trial failures are recorded
/// in the report without aborting the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let points = sweep_points(cfg)?;
    let mut reports = Vec::with_capacity(points.len());

    for (point_idx, point) in points.iter().enumerate() {
        match point {
            SweepPoint::Spectrum { label, eigenvalues } => {
                let truth_seed = if cfg.redraw_eigenvectors {
                    cfg.seed.wrapping_add(1000 + point_idx as u64)
                } else {
                    cfg.seed
                };
                let truth = metrics::gen_psd(cfg.n, eigenvalues, truth_seed)?;
                let r = selected_rank(cfg, label);
                let trials: Vec<Vec<TrialResult>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|trial| run_spectrum_trial(cfg, &truth, r, trial))
                    .collect();
                let memory = {
                    let mask = sample_mask(cfg.n, cfg.p, cfg.seed)?;
                    let pairs: Vec<(usize, usize, f64)> = mask
                        .iter_pairs()
                        .map(|(i, j)| Ok((i, j, truth.entry(i, j)?)))
                        .collect::<Result<_>>()?;
                    let sample = SampledMatrix::from_pairs(cfg.n, &pairs, cfg.p)?;
                    Some(memory_footprint(&sample, r))
                };
                reports.push(SweepPointReport {
                    label: label.clone(),
                    trials,
                    memory_entries: memory,
                });
            }
            SweepPoint::Kpca { label } => {
                let (columns, gamma, ratio) = match &cfg.scenario {
                    Scenario::KpcaTwoSpheres {
                        nystrom_columns,
                        gamma,
                        rate_ratio,
                    } => (*nystrom_columns, *gamma, *rate_ratio),
                    _ => unreachable!("kpca sweep point implies kpca scenario"),
                };
                let spec = KernelSpec::Radial { gamma };
                let data = kernels::gen_two_spheres(cfg.n, cfg.seed)?;
                let p_nys = baselines::nystrom_effective_rate(cfg.n, columns);
                let p_ncvx = (p_nys / ratio).min(1.0);
                let trials: Vec<Vec<TrialResult>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|trial| run_kpca_trial(cfg, &data, &spec, columns, p_ncvx, trial))
                    .collect();
                let memory = {
                    let mask = sample_mask(cfg.n, p_ncvx, cfg.seed)?;
                    let sample = kernels::build_sampled_kernel(&data, &spec, &mask)?;
                    Some(memory_footprint(&sample, cfg.r))
                };
                reports.push(SweepPointReport {
                    label: label.clone(),
                    trials,
                    memory_entries: memory,
                });
            }
        }
    }

    Ok(RunReport {
        config: cfg.clone(),
        points: reports,
        total_wall_secs: start.elapsed().as_secs_f64(),
    })
}
