//! Kernel functions, on-demand construction of the sampled Gram matrix,
//! and the two-sphere synthetic dataset.
//!
//! The Gram matrix is never materialized: only the entries requested by an
//! observation mask are evaluated, at cost `O(nnz * d)`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampled::SampledMatrix;
use crate::sampling::Mask;

/// Kernel family with parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `K(x, y) = exp(-gamma ‖x - y‖²)`, `gamma > 0`.
    Radial { gamma: f64 },
    /// `K(x, y) = (xᵀy + offset)^degree`, `degree ≥ 1`, `offset ≥ 0`.
    Polynomial { degree: u32, offset: f64 },
    /// `K(x, y) = xᵀy`.
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Radial { gamma } => {
                if gamma <= 0.0 || !gamma.is_finite() {
                    return Err(Error::invalid(format!(
                        "radial bandwidth {gamma} must be positive"
                    )));
                }
            }
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    return Err(Error::invalid("polynomial degree must be at least 1"));
                }
                if offset < 0.0 || !offset.is_finite() {
                    return Err(Error::invalid(format!(
                        "polynomial offset {offset} must be >= 0"
                    )));
                }
            }
            KernelSpec::Linear => {}
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Radial { gamma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * sq).exp()
            }
            KernelSpec::Polynomial { degree, offset } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(degree as i32)
            }
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Evaluates the kernel at a pair of points.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.eval_unchecked(x, y))
}

/// Point cloud with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    /// Row-major `n x d`.
    points: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, points: Vec<f64>, labels: Option<Vec<u32>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("dataset dimensions must be at least 1"));
        }
        if points.len() != n * d {
            return Err(Error::dim(format!(
                "point buffer has {} values, expected {}",
                points.len(),
                n * d
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite coordinates"));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dim(format!(
                    "label count {} does not match n={}",
                    l.len(),
                    n
                )));
            }
        }
        Ok(Dataset {
            n,
            d,
            points,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// File format: header `n d has_labels`, then one point per line,
    /// whitespace-separated coordinates with an optional trailing label.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let has_labels = self.labels.is_some();
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{} {} {}", self.n, self.d, u8::from(has_labels))?;
            for i in 0..self.n {
                let coords: Vec<String> =
                    self.point(i).iter().map(|v| format!("{v:.16e}")).collect();
                if let Some(labels) = &self.labels {
                    writeln!(w, "{} {}", coords.join(" "), labels[i])?;
                } else {
                    writeln!(w, "{}", coords.join(" "))?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate().filter_map(|(idx, l)| match l {
            Ok(s) => {
                let t = s.trim().to_string();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((idx + 1, t)))
                }
            }
            Err(e) => Some(Err(e)),
        });

        let (hline, header) = match lines.next() {
            Some(Ok(x)) => x,
            Some(Err(e)) => return Err(Error::io(path, e)),
            None => return Err(Error::parse(path, 1, "missing header line")),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                hline,
                "header must be `n d [has_labels]`",
            ));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, hline, "invalid point count"))?;
        let d: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, hline, "invalid dimension"))?;
        let has_labels = match fields.get(2) {
            None => false,
            Some(&"0") => false,
            Some(&"1") => true,
            Some(other) => {
                return Err(Error::parse(
                    path,
                    hline,
                    format!("has_labels must be 0 or 1, found {other:?}"),
                ))
            }
        };

        let mut points = Vec::with_capacity(n * d);
        let mut labels = if has_labels {
            Some(Vec::with_capacity(n))
        } else {
            None
        };
        let mut rows = 0usize;
        for item in lines {
            let (lineno, line) = match item {
                Ok(x) => x,
                Err(e) => return Err(Error::io(path, e)),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let expected = d + usize::from(has_labels);
            if fields.len() != expected {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {expected} fields, found {}", fields.len()),
                ));
            }
            for f in &fields[..d] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("invalid coordinate {f:?}")))?;
                points.push(v);
            }
            if let Some(ls) = labels.as_mut() {
                let l: u32 = fields[d].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("invalid label {:?}", fields[d]))
                })?;
                ls.push(l);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::parse(
                path,
                0,
                format!("expected {n} points, found {rows}"),
            ));
        }
        Dataset::new(n, d, points, labels)
    }
}

/// Evaluates the kernel on exactly the masked pairs, producing the sampled
/// Gram matrix. Output pair order is canonical (sorted), independent of the
/// evaluation schedule.
pub fn build_sampled_kernel(
    data: &Dataset,
    spec: &KernelSpec,
    mask: &Mask,
) -> Result<SampledMatrix> {
    spec.validate()?;
    if crate::sampling::ObservationPattern::n(mask) != data.n() {
        return Err(Error::dim(format!(
            "mask dimension {} does not match dataset size {}",
            crate::sampling::ObservationPattern::n(mask),
            data.n()
        )));
    }
    // Row-grouped traversal reuses the left point across a whole row.
    let mut pairs = Vec::with_capacity(mask.nnz_pairs());
    for (i, j) in mask.iter_pairs() {
        let v = spec.eval_unchecked(data.point(i), data.point(j));
        pairs.push((i, j, v));
    }
    SampledMatrix::from_pairs(data.n(), &pairs, mask.p_nominal())
}

/// Two concentric noisy spheres in R³.
///
/// Each point joins class 0 or 1 with equal probability; class 0 lies on
/// the radius-0.3 sphere, class 1 on the radius-1 sphere, and every point
/// is perturbed by N(0, I₃/100) noise. Draw order per point is fixed
/// (class, direction, noise) on a single ChaCha8 stream.
pub fn gen_two_spheres(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("two-sphere dataset needs at least 2 points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut points = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let class: u32 = u32::from(rng.random::<f64>() < 0.5);
        let radius = if class == 0 { 0.3 } else { 1.0 };
        let mut dir = [0.0f64; 3];
        loop {
            for c in dir.iter_mut() {
                *c = normal.sample(&mut rng);
            }
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for c in dir.iter_mut() {
                    *c /= norm;
                }
                break;
            }
        }
        for c in dir {
            let noise: f64 = normal.sample(&mut rng);
            points.push(radius * c + 0.1 * noise);
        }
        labels.push(class);
    }
    Dataset::new(n, 3, points, Some(labels))
}
