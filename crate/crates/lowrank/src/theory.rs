//! Executable diagnostics for the optimization landscape: the bilinear
//! sampling deviation, deterministic inequality checkers, the Procrustes
//! alignment to the spectral factor, and the auxiliary second-order
//! function `K` with its four-term decomposition.
//!
//! Everything here operates at desk scale. Dense `n x n` objects appear
//! only behind explicit ground-truth inputs; the deviation checkers use
//! dense SVDs because the instances are tiny by construction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objective::{self, ObjectiveParams};
use crate::sampled::SampledMatrix;
use crate::sampling::{Mask, ObservationPattern};
use crate::truth::GroundTruth;

/// Slack added to the right-hand side when checking the deterministic
/// inequalities; covers floating-point rounding only.
pub const CHECK_SLACK: f64 = 1e-9;

/// Bilinear sampling deviation
/// `D_{Ω,t}(M₁, M₂) = <P_Ω M₁, P_Ω M₂> - t <M₁, M₂>`
/// with Ω the symmetric off-diagonal observation set of `mask`.
///
/// The full inner product runs over all `n²` entries; the projected one
/// over both orientations of every observed pair.
pub fn bilinear_deviation(
    mask: &Mask,
    t: f64,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
) -> Result<f64> {
    let n = ObservationPattern::n(mask);
    if m1.nrows() != n || m1.ncols() != n || m2.nrows() != n || m2.ncols() != n {
        return Err(Error::dim(format!(
            "matrices must be {n}x{n}, got {}x{} and {}x{}",
            m1.nrows(),
            m1.ncols(),
            m2.nrows(),
            m2.ncols()
        )));
    }
    let mut projected = 0.0;
    for i in 0..n {
        for &j in mask.neighbors(i) {
            projected += m1[(i, j)] * m2[(i, j)];
        }
    }
    let full = m1.dot(m2);
    Ok(projected - t * full)
}

/// Arbitrary rectangular observation set on `[n1] x [n2]`.
#[derive(Debug, Clone)]
pub struct RectMask {
    pub n1: usize,
    pub n2: usize,
    /// Observed cells, free-form (duplicates are not allowed).
    pub cells: Vec<(usize, usize)>,
}

impl RectMask {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::invalid(
                "rectangular mask dimensions must be at least 1",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &self.cells {
            if i >= self.n1 || j >= self.n2 {
                return Err(Error::invalid(format!(
                    "cell ({i}, {j}) out of range for {}x{}",
                    self.n1, self.n2
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid(format!("duplicate cell ({i}, {j})")));
            }
        }
        Ok(())
    }

    fn indicator(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n1, self.n2);
        for &(i, j) in &self.cells {
            m[(i, j)] = 1.0;
        }
        m
    }
}

/// Result of one inequality check.
#[derive(Debug, Clone, Copy)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn row_norm_product_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.nrows() {
        let na: f64 = a.row(k).iter().map(|v| v * v).sum();
        let nb: f64 = b.row(k).iter().map(|v| v * v).sum();
        acc += na * nb;
    }
    acc
}

/// Checks the deterministic deviation bound
///
/// ```text
/// |D_{Ω₀,t}(ACᵀ, BDᵀ)| ≤ ‖Ω₀ - tJ‖ · sqrt(Σ_k ‖A_k‖²‖B_k‖²) · sqrt(Σ_k ‖C_k‖²‖D_k‖²)
/// ```
///
/// on a rectangular observation set. The spectral norm on the right is
/// computed by dense SVD.
pub fn check_deviation_bound(
    mask: &RectMask,
    t: f64,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<InequalityCheck> {
    mask.validate()?;
    if a.nrows() != mask.n1 || b.nrows() != mask.n1 {
        return Err(Error::dim("A and B must have n1 rows"));
    }
    if c.nrows() != mask.n2 || d.nrows() != mask.n2 {
        return Err(Error::dim("C and D must have n2 rows"));
    }
    if a.ncols() != c.ncols() {
        return Err(Error::dim("A and C must share their column count"));
    }
    if b.ncols() != d.ncols() {
        return Err(Error::dim("B and D must share their column count"));
    }

    let ac = a * c.transpose();
    let bd = b * d.transpose();
    let mut projected = 0.0;
    for &(i, j) in &mask.cells {
        projected += ac[(i, j)] * bd[(i, j)];
    }
    let lhs = (projected - t * ac.dot(&bd)).abs();

    let centered = mask.indicator() - DMatrix::from_element(mask.n1, mask.n2, t);
    let spectral = centered
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let rhs = spectral * row_norm_product_sum(a, b).sqrt() * row_norm_product_sum(c, d).sqrt();
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + CHECK_SLACK,
    })
}

/// Checks the Hadamard-product nuclear norm bound
///
/// ```text
/// ‖(ACᵀ) ∘ (BDᵀ)‖_* ≤ sqrt(Σ_k ‖A_k‖²‖B_k‖²) · sqrt(Σ_k ‖C_k‖²‖D_k‖²)
/// ```
pub fn check_hadamard_nuclear(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<InequalityCheck> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim("A and B must share their row count"));
    }
    if c.nrows() != d.nrows() {
        return Err(Error::dim("C and D must share their row count"));
    }
    if a.ncols() != c.ncols() {
        return Err(Error::dim("A and C must share their column count"));
    }
    if b.ncols() != d.ncols() {
        return Err(Error::dim("B and D must share their column count"));
    }
    let ac = a * c.transpose();
    let bd = b * d.transpose();
    let had = ac.component_mul(&bd);
    let nuclear: f64 = had.svd(false, false).singular_values.iter().sum();
    let bound = row_norm_product_sum(a, b).sqrt() * row_norm_product_sum(c, d).sqrt();
    Ok(InequalityCheck {
        lhs: nuclear,
        rhs: bound,
        holds: nuclear <= bound + CHECK_SLACK,
    })
}

/// Orthogonal Procrustes alignment: the rotation `R` minimizing
/// `‖X - U_r R‖_F`, chosen so that `Xᵀ(U_r R)` is symmetric PSD.
///
/// With the SVD `XᵀU_r = A D Bᵀ`, the alignment is `R = B Aᵀ`.
pub fn align_rotation(x: &Factor, u_r: &Factor) -> Result<DMatrix<f64>> {
    x.check_same_shape(u_r)?;
    let cross = x.cross_gram(u_r)?; // XᵀU_r, r x r
    let svd = cross.svd(true, true);
    let a = svd
        .u
        .ok_or_else(|| Error::NonConvergence("SVD did not produce U".into()))?;
    let b_t = svd
        .v_t
        .ok_or_else(|| Error::NonConvergence("SVD did not produce Vᵀ".into()))?;
    // R = B Aᵀ
    Ok(b_t.transpose() * a.transpose())
}

/// The auxiliary landscape function
/// `K(X) = vec(Δ)ᵀ ∇²f(X) vec(Δ) - 4 <∇f(X), Δ>` with `Δ = X - U_r R`
/// for the Procrustes-aligned spectral factor. Nonnegative at every local
/// minimum of the objective.
pub fn k_total(
    x: &Factor,
    m: &SampledMatrix,
    params: &ObjectiveParams,
    u_r: &Factor,
) -> Result<f64> {
    let r = align_rotation(x, u_r)?;
    let u = u_r.mul_right(&r)?;
    let delta = difference(x, &u)?;
    let quad = objective::hessian_quadform(x, &delta, m, params)?;
    let grad = objective::gradient(x, m, params)?;
    Ok(quad - 4.0 * grad.dot(&delta)?)
}

/// Four-term decomposition of `K` plus the norms of the alignment error.
#[derive(Debug, Clone, Copy)]
pub struct KBreakdown {
    /// `K(X)` computed from the objective's Hessian quadratic form and
    /// gradient (the definition).
    pub k_total: f64,
    /// `p (‖ΔΔᵀ‖_F² - 3 ‖XXᵀ - UUᵀ‖_F²)`.
    pub k1: f64,
    /// `D_{Ω,p}(ΔΔᵀ, ΔΔᵀ) - 3 D_{Ω,p}(XXᵀ - UUᵀ, XXᵀ - UUᵀ)`.
    pub k2: f64,
    /// Regularizer part `λ (vec(Δ)ᵀ∇²G_α vec(Δ) - 4 <∇G_α, Δ>)`.
    pub k3: f64,
    /// Residual-spectrum part
    /// `6 D_{Ω,p}(ΔΔᵀ, N) + 8 D_{Ω,p}(UΔᵀ, N) + 6p <ΔΔᵀ, N>`.
    pub k4: f64,
    /// `(‖ΔΔᵀ‖_F, ‖UΔᵀ‖_F)`.
    pub delta_norms: (f64, f64),
}

impl KBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.k1 + self.k2 + self.k3 + self.k4
    }
}

fn difference(a: &Factor, b: &Factor) -> Result<Factor> {
    a.check_same_shape(b)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    Factor::from_row_major(a.n(), a.r(), values)
}

/// `‖F Gᵀ‖_F²` from the cross Gram trick, `‖FGᵀ‖_F² = <FᵀF, GᵀG>`.
fn product_frob_sq(f: &Factor, g: &Factor) -> Result<f64> {
    let cross = f.cross_gram(g)?;
    Ok(cross.iter().map(|v| v * v).sum())
}

/// Evaluates `K(X)` and its decomposition against a ground truth.
///
/// `m` must hold samples of the matrix described by `truth` (same values
/// on the observation set), with its nominal sampling probability used as
/// the deviation weight `p`. The decomposition identity
/// `k_total = k1 + k2 + k3 + k4` then holds to numerical precision.
pub fn k_breakdown(
    x: &Factor,
    m: &SampledMatrix,
    params: &ObjectiveParams,
    truth: &GroundTruth,
    r: usize,
) -> Result<KBreakdown> {
    if truth.eigenvectors().is_none() {
        return Err(Error::invalid(
            "k_breakdown requires ground-truth eigenvectors",
        ));
    }
    if truth.n() != m.n() {
        return Err(Error::dim(format!(
            "ground truth dimension {} does not match sample dimension {}",
            truth.n(),
            m.n()
        )));
    }
    let p = m.p_nominal();
    let u_r = truth.scaled_eigvec_factor(r)?;
    let rot = align_rotation(x, &u_r)?;
    let u = u_r.mul_right(&rot)?;
    let delta = difference(x, &u)?;

    // definition route, all sparse
    let quad = objective::hessian_quadform(x, &delta, m, params)?;
    let grad = objective::gradient(x, m, params)?;
    let k_total = quad - 4.0 * grad.dot(&delta)?;

    // K1: Gram identities, no dense matrices
    let dd_sq = product_frob_sq(&delta, &delta)?; // ‖ΔΔᵀ‖_F²
    let s_sq = {
        // ‖XXᵀ - UUᵀ‖_F² = ‖XᵀX‖² + ‖UᵀU‖² - 2‖XᵀU‖²
        let xx = product_frob_sq(x, x)?;
        let uu = product_frob_sq(&u, &u)?;
        let xu = product_frob_sq(x, &u)?;
        xx + uu - 2.0 * xu
    };
    let k1 = p * (dd_sq - 3.0 * s_sq);

    // K2: projected parts on the observation set minus p-weighted parts
    let mut proj_dd = 0.0; // <P_Ω(ΔΔᵀ), P_Ω(ΔΔᵀ)>
    let mut proj_s = 0.0; // <P_Ω(S), P_Ω(S)> with S = XXᵀ - UUᵀ
    for i in 0..m.n() {
        let di = delta.row(i);
        let xi = x.row(i);
        let ui = u.row(i);
        for (j, _) in m.row_entries(i) {
            let dd: f64 = di.iter().zip(delta.row(j)).map(|(a, b)| a * b).sum();
            proj_dd += dd * dd;
            let sx: f64 = xi.iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
            let su: f64 = ui.iter().zip(u.row(j)).map(|(a, b)| a * b).sum();
            let s = sx - su;
            proj_s += s * s;
        }
    }
    let k2 = (proj_dd - p * dd_sq) - 3.0 * (proj_s - p * s_sq);

    // K3: regularizer curvature minus four times its slope along Δ
    let reg_quad = objective::regularizer_hess_quadform(x, &delta, params.alpha)?;
    let reg_grad = objective::regularizer_grad(x, params.alpha);
    let k3 = params.lambda * (reg_quad - 4.0 * reg_grad.dot(&delta)?);

    // K4: terms involving the residual spectrum N = M - M_r
    let n_dense = truth.residual_dense(r)?;
    let mut proj_dd_n = 0.0; // <P_Ω(ΔΔᵀ), P_Ω(N)>
    let mut proj_ud_n = 0.0; // <P_Ω(UΔᵀ), P_Ω(N)>
    for i in 0..m.n() {
        let di = delta.row(i);
        let ui = u.row(i);
        for (j, _) in m.row_entries(i) {
            let nv = n_dense[(i, j)];
            let dd: f64 = di.iter().zip(delta.row(j)).map(|(a, b)| a * b).sum();
            proj_dd_n += dd * nv;
            let ud: f64 = ui.iter().zip(delta.row(j)).map(|(a, b)| a * b).sum();
            proj_ud_n += ud * nv;
        }
    }
    // full inner products through N's action on Δ
    let nd = &n_dense * delta.to_dmatrix();
    let full_dd_n = {
        let dd = delta.to_dmatrix();
        dd.dot(&nd)
    };
    let full_ud_n = u.to_dmatrix().dot(&nd);
    let k4 =
        6.0 * (proj_dd_n - p * full_dd_n) + 8.0 * (proj_ud_n - p * full_ud_n) + 6.0 * p * full_dd_n;

    let u_delta = product_frob_sq(&u, &delta)?.sqrt();
    Ok(KBreakdown {
        k_total,
        k1,
        k2,
        k3,
        k4,
        delta_norms: (dd_sq.sqrt(), u_delta),
    })
}

/// Subspace incoherence `(n / r) max_i ‖P_U e_i‖²` of the column span of
/// `basis`. Columns are orthonormalized internally; the value lies in
/// `[1, n/r]`.
pub fn incoherence(basis: &DMatrix<f64>) -> Result<f64> {
    let n = basis.nrows();
    let r = basis.ncols();
    if r == 0 || r > n {
        return Err(Error::invalid(format!(
            "basis shape {n}x{r} is not a subspace basis"
        )));
    }
    let qr = basis.clone().qr();
    let q = qr.q();
    let rr = qr.r();
    for k in 0..r {
        if rr[(k, k)].abs() <= 1e-12 {
            return Err(Error::RankDeficient(format!(
                "basis column {k} is linearly dependent"
            )));
        }
    }
    let mut max_row = 0.0f64;
    for i in 0..n {
        let norm_sq: f64 = q.row(i).iter().map(|v| v * v).sum();
        max_row = max_row.max(norm_sq);
    }
    Ok((n as f64 / r as f64) * max_row)
}

/// Row-norm spikiness `sqrt(n) ‖U_r‖_{2,∞} / ‖U_r‖_F`, in `[1, sqrt(n)]`.
pub fn spikiness(u_r: &Factor) -> Result<f64> {
    let frob = u_r.frobenius_norm();
    if frob == 0.0 {
        return Err(Error::invalid("spikiness of the zero matrix is undefined"));
    }
    let max_row = (0..u_r.n()).map(|i| u_r.row_norm(i)).fold(0.0f64, f64::max);
    Ok((u_r.n() as f64).sqrt() * max_row / frob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::gen_psd;
    use crate::sampling::sample_mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dmatrix(nr: usize, nc: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(nr, nc, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn random_rect_mask(n1: usize, n2: usize, density: f64, seed: u64) -> RectMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                if rng.random::<f64>() < density {
                    cells.push((i, j));
                }
            }
        }
        RectMask { n1, n2, cells }
    }

    #[test]
    fn deviation_with_t_zero_is_projected_product() {
        let mask = sample_mask(6, 0.5, 1).unwrap();
        let m1 = random_dmatrix(6, 6, 2);
        let m2 = random_dmatrix(6, 6, 3);
        let d = bilinear_deviation(&mask, 0.0, &m1, &m2).unwrap();
        let mut expect = 0.0;
        for (i, j) in mask.iter_pairs() {
            expect += m1[(i, j)] * m2[(i, j)] + m1[(j, i)] * m2[(j, i)];
        }
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn deviation_full_mask_zero_diagonal_t_one() {
        let mask = sample_mask(7, 1.0, 4).unwrap();
        let mut m1 = random_dmatrix(7, 7, 5);
        let mut m2 = random_dmatrix(7, 7, 6);
        for i in 0..7 {
            m1[(i, i)] = 0.0;
            m2[(i, i)] = 0.0;
        }
        let d = bilinear_deviation(&mask, 1.0, &m1, &m2).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn deviation_matches_brute_force() {
        let mask = sample_mask(6, 0.4, 7).unwrap();
        let m1 = random_dmatrix(6, 6, 8);
        let m2 = random_dmatrix(6, 6, 9);
        let t = 0.37;
        let d = bilinear_deviation(&mask, t, &m1, &m2).unwrap();
        // brute force over the dense indicator
        let mut omega = DMatrix::zeros(6, 6);
        for (i, j) in mask.iter_pairs() {
            omega[(i, j)] = 1.0;
            omega[(j, i)] = 1.0;
        }
        let mut proj = 0.0;
        let mut full = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                proj += omega[(i, j)] * m1[(i, j)] * m2[(i, j)];
                full += m1[(i, j)] * m2[(i, j)];
            }
        }
        assert!((d - (proj - t * full)).abs() < 1e-12);
    }

    #[test]
    fn deviation_is_bilinear() {
        let mask = sample_mask(5, 0.5, 10).unwrap();
        let a = random_dmatrix(5, 5, 11);
        let b = random_dmatrix(5, 5, 12);
        let c = random_dmatrix(5, 5, 13);
        let t = 0.6;
        for (ca, cb) in [(0.7, -1.3), (2.0, 0.25)] {
            let combo = &a * ca + &b * cb;
            let lhs = bilinear_deviation(&mask, t, &combo, &c).unwrap();
            let rhs = ca * bilinear_deviation(&mask, t, &a, &c).unwrap()
                + cb * bilinear_deviation(&mask, t, &b, &c).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn deviation_bound_zero_inputs() {
        let mask = random_rect_mask(4, 5, 0.5, 14);
        let a = DMatrix::zeros(4, 2);
        let b = DMatrix::zeros(4, 3);
        let c = DMatrix::zeros(5, 2);
        let d = DMatrix::zeros(5, 3);
        let check = check_deviation_bound(&mask, 0.5, &a, &b, &c, &d).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn deviation_bound_full_mask_t_one() {
        // full rectangular mask at t = 1: Ω - J vanishes
        let n1 = 4;
        let n2 = 3;
        let cells: Vec<(usize, usize)> =
            (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
        let mask = RectMask { n1, n2, cells };
        let a = random_dmatrix(n1, 2, 15);
        let b = random_dmatrix(n1, 2, 16);
        let c = random_dmatrix(n2, 2, 17);
        let d = random_dmatrix(n2, 2, 18);
        let check = check_deviation_bound(&mask, 1.0, &a, &b, &c, &d).unwrap();
        assert!(check.lhs < 1e-10);
        assert!(check.rhs < 1e-8);
        assert!(check.holds);
    }

    #[test]
    fn deviation_bound_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for trial in 0..500 {
            let n1 = 2 + (rng.random::<u32>() % 7) as usize;
            let n2 = 2 + (rng.random::<u32>() % 7) as usize;
            let r1 = 1 + (rng.random::<u32>() % 3) as usize;
            let r2 = 1 + (rng.random::<u32>() % 3) as usize;
            let density = rng.random::<f64>();
            let t = rng.random::<f64>() * 3.0 - 1.0;
            let mask = random_rect_mask(n1, n2, density, 1000 + trial);
            let a = random_dmatrix(n1, r1, 2000 + trial);
            let b = random_dmatrix(n1, r2, 3000 + trial);
            let c = random_dmatrix(n2, r1, 4000 + trial);
            let d = random_dmatrix(n2, r2, 5000 + trial);
            let check = check_deviation_bound(&mask, t, &a, &b, &c, &d).unwrap();
            assert!(
                check.holds,
                "trial {trial}: lhs {} > rhs {}",
                check.lhs, check.rhs
            );
        }
    }

    #[test]
    fn hadamard_equality_for_all_ones() {
        // A = B = C = D = 1 (n x 1): (Jᵀ∘J) has nuclear norm n == bound
        let ones = DMatrix::from_element(3, 1, 1.0);
        let check = check_hadamard_nuclear(&ones, &ones, &ones, &ones).unwrap();
        assert!((check.lhs - 3.0).abs() < 1e-10);
        assert!((check.rhs - 3.0).abs() < 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn hadamard_zero_inputs() {
        let z = DMatrix::zeros(3, 2);
        let check = check_hadamard_nuclear(&z, &z, &z, &z).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn hadamard_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for trial in 0..500 {
            let n1 = 2 + (rng.random::<u32>() % 7) as usize;
            let n2 = 2 + (rng.random::<u32>() % 7) as usize;
            let r1 = 1 + (rng.random::<u32>() % 3) as usize;
            let r2 = 1 + (rng.random::<u32>() % 3) as usize;
            let a = random_dmatrix(n1, r1, 6000 + trial);
            let b = random_dmatrix(n1, r2, 7000 + trial);
            let c = random_dmatrix(n2, r1, 8000 + trial);
            let d = random_dmatrix(n2, r2, 9000 + trial);
            let check = check_hadamard_nuclear(&a, &b, &c, &d).unwrap();
            assert!(
                check.holds,
                "trial {trial}: nuclear {} > bound {}",
                check.lhs, check.rhs
            );
        }
    }

    fn factor_from(m: &DMatrix<f64>) -> Factor {
        Factor::from_dmatrix(m).unwrap()
    }

    #[test]
    fn alignment_identity_when_equal() {
        let truth = gen_psd(8, &[5.0, 3.0, 1.0], 21).unwrap();
        let u_r = truth.scaled_eigvec_factor(3).unwrap();
        let rot = align_rotation(&u_r, &u_r).unwrap();
        let eye = DMatrix::identity(3, 3);
        assert!((rot - eye).abs().max() < 1e-10);
    }

    #[test]
    fn alignment_recovers_orthogonal_transform() {
        let truth = gen_psd(8, &[5.0, 3.0, 1.0], 22).unwrap();
        let u_r = truth.scaled_eigvec_factor(3).unwrap();
        let q = {
            let g = random_dmatrix(3, 3, 23);
            g.qr().q()
        };
        let x = u_r.mul_right(&q).unwrap();
        let rot = align_rotation(&x, &u_r).unwrap();
        // U_r R should equal X exactly
        let aligned = u_r.mul_right(&rot).unwrap();
        let diff: f64 = aligned
            .values()
            .iter()
            .zip(x.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10, "residual {diff}");
    }

    #[test]
    fn alignment_is_procrustes_minimizer() {
        let x = factor_from(&random_dmatrix(10, 3, 24));
        let u_r = factor_from(&random_dmatrix(10, 3, 25));
        let rot = align_rotation(&x, &u_r).unwrap();
        // orthogonality
        let eye = DMatrix::identity(3, 3);
        assert!((rot.transpose() * &rot - &eye).abs().max() < 1e-10);
        // PSD of Xᵀ(U_r R): symmetric part has nonnegative eigenvalues
        let aligned = u_r.mul_right(&rot).unwrap();
        let cross = x.cross_gram(&aligned).unwrap();
        let sym = (cross.clone() + cross.transpose()) * 0.5;
        let min_eig = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
        // minimality against random rotations
        let base = {
            let d = x.to_dmatrix() - aligned.to_dmatrix();
            d.norm()
        };
        for s in 0..100 {
            let q = random_dmatrix(3, 3, 500 + s).qr().q();
            let other = (x.to_dmatrix() - u_r.mul_right(&q).unwrap().to_dmatrix()).norm();
            assert!(base <= other + 1e-10, "seed {s}: {base} > {other}");
        }
    }

    fn k_instance(
        n: usize,
        rank_truth: usize,
        r: usize,
        p: f64,
        lambda: f64,
        seed: u64,
    ) -> (Factor, SampledMatrix, ObjectiveParams, GroundTruth) {
        let mut eigs: Vec<f64> = (0..rank_truth).map(|k| 5.0 - 0.8 * k as f64).collect();
        eigs.extend(std::iter::repeat_n(0.3, n - rank_truth));
        // keep the list nonincreasing
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let truth = gen_psd(n, &eigs, seed).unwrap();
        let mask = sample_mask(n, p, seed ^ 0x1234).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| (i, j, truth.entry(i, j).unwrap()))
            .collect();
        let m = SampledMatrix::from_pairs(n, &pairs, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9999);
        let scale = 0.1 + rng.random::<f64>() * 2.0;
        let values: Vec<f64> = (0..n * r)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
            .collect();
        let x = Factor::from_row_major(n, r, values).unwrap();
        let alpha = 0.2 + rng.random::<f64>();
        let params = ObjectiveParams::new(lambda, alpha).unwrap();
        (x, m, params, truth)
    }

    #[test]
    fn k_zero_when_delta_zero() {
        let truth = gen_psd(8, &[4.0, 2.0], 26).unwrap();
        let mask = sample_mask(8, 0.6, 27).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| (i, j, truth.entry(i, j).unwrap()))
            .collect();
        let m = SampledMatrix::from_pairs(8, &pairs, 0.6).unwrap();
        let params = ObjectiveParams::new(1.5, 1.0).unwrap();
        let u_r = truth.scaled_eigvec_factor(2).unwrap();
        let b = k_breakdown(&u_r, &m, &params, &truth, 2).unwrap();
        assert!(b.k_total.abs() < 1e-10);
        assert!(b.k1.abs() < 1e-10);
        assert!(b.k2.abs() < 1e-10);
        assert!(b.k3.abs() < 1e-10);
        assert!(b.k4.abs() < 1e-10);
    }

    #[test]
    fn k_full_mask_exact_rank_reduces_to_diagonal_defect() {
        // p = 1 with an exactly rank-r truth: N = 0 kills k4, and the
        // deviation D_{Ω,1}(A, A) collapses to -Σ_i A_ii² because the mask
        // covers every off-diagonal entry. k2 therefore equals the pure
        // diagonal defect -Σ_i (ΔΔᵀ)_ii² + 3 Σ_i S_ii².
        let n = 8;
        let truth = gen_psd(n, &[4.0, 2.0], 28).unwrap();
        let mask = sample_mask(n, 1.0, 29).unwrap();
        let pairs: Vec<(usize, usize, f64)> = mask
            .iter_pairs()
            .map(|(i, j)| (i, j, truth.entry(i, j).unwrap()))
            .collect();
        let m = SampledMatrix::from_pairs(n, &pairs, 1.0).unwrap();
        let params = ObjectiveParams::new(0.0, 1.0).unwrap();
        let x = factor_from(&(random_dmatrix(n, 2, 30) * 0.5));
        let b = k_breakdown(&x, &m, &params, &truth, 2).unwrap();
        assert!(b.k4.abs() < 1e-10, "k4 = {}", b.k4);
        let (dd, s) = {
            let d = x.to_dmatrix();
            let u_r = truth.scaled_eigvec_factor(2).unwrap();
            let rot = align_rotation(&x, &u_r).unwrap();
            let u = u_r.mul_right(&rot).unwrap().to_dmatrix();
            let delta = &d - &u;
            (
                &delta * delta.transpose(),
                &d * d.transpose() - &u * u.transpose(),
            )
        };
        let expect: f64 = (0..n)
            .map(|i| -dd[(i, i)].powi(2) + 3.0 * s[(i, i)].powi(2))
            .sum();
        assert!(
            (b.k2 - expect).abs() <= 1e-10 * expect.abs().max(1.0),
            "k2 {} vs diagonal defect {expect}",
            b.k2
        );
    }

    #[test]
    fn k_identity_random_instances() {
        for trial in 0..60 {
            let n = 6 + (trial % 5);
            let rank_truth = 1 + (trial % 3);
            let r = 1 + (trial % 4).min(n - 1);
            let p = 0.3 + 0.1 * ((trial % 7) as f64) / 7.0;
            let lambda = if trial % 2 == 0 { 0.0 } else { 1.3 };
            let (x, m, params, truth) =
                k_instance(n, rank_truth, r, p, lambda, 40_000 + trial as u64);
            let b = k_breakdown(&x, &m, &params, &truth, r).unwrap();
            let lhs = b.k_total;
            let rhs = b.component_sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!(
                (lhs - rhs).abs() <= 1e-8 * scale,
                "trial {trial}: K {lhs} vs ΣKᵢ {rhs}"
            );
        }
    }

    #[test]
    fn k_rotation_invariance() {
        let (x, m, params, truth) = k_instance(9, 2, 3, 0.5, 0.8, 777);
        let b0 = k_breakdown(&x, &m, &params, &truth, 3).unwrap();
        let q = random_dmatrix(3, 3, 31).qr().q();
        let xq = x.mul_right(&q).unwrap();
        let b1 = k_breakdown(&xq, &m, &params, &truth, 3).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0);
        assert!(
            close(b0.k_total, b1.k_total),
            "{} vs {}",
            b0.k_total,
            b1.k_total
        );
        assert!(close(b0.k1, b1.k1));
        assert!(close(b0.k2, b1.k2));
        assert!(close(b0.k3, b1.k3));
        assert!(close(b0.k4, b1.k4));
    }

    #[test]
    fn incoherence_identity_columns_is_maximal() {
        let n = 12;
        let r = 3;
        let mut basis = DMatrix::zeros(n, r);
        for k in 0..r {
            basis[(k, k)] = 1.0;
        }
        let mu = incoherence(&basis).unwrap();
        assert!((mu - n as f64 / r as f64).abs() < 1e-12);
    }

    #[test]
    fn incoherence_flat_basis_is_one() {
        // two orthonormal columns with all entries ±1/√n
        let n = 4;
        let b = DMatrix::from_row_slice(n, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let mu = incoherence(&b).unwrap();
        assert!((mu - 1.0).abs() < 1e-12, "mu {mu}");
    }

    #[test]
    fn incoherence_random_matches_projection_oracle() {
        let n = 100;
        let r = 5;
        let g = random_dmatrix(n, r, 32);
        let mu = incoherence(&g).unwrap();
        assert!(mu > 1.0 && mu < n as f64 / r as f64);
        // oracle: explicit projector
        let q = g.clone().qr().q();
        let proj = &q * q.transpose();
        let mut max_norm = 0.0f64;
        for i in 0..n {
            let col = proj.column(i);
            let norm_sq: f64 = col.iter().map(|v| v * v).sum();
            max_norm = max_norm.max(norm_sq);
        }
        let oracle = n as f64 / r as f64 * max_norm;
        assert!((mu - oracle).abs() < 1e-10);
    }

    #[test]
    fn incoherence_rejects_rank_deficient() {
        let mut b = DMatrix::zeros(5, 2);
        b[(0, 0)] = 1.0;
        b[(0, 1)] = 2.0; // second column parallel to the first
        assert!(incoherence(&b).is_err());
    }

    #[test]
    fn spikiness_extremes() {
        // equal row norms: 1
        let x = Factor::from_row_major(4, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((spikiness(&x).unwrap() - 1.0).abs() < 1e-12);
        // single nonzero row: sqrt(n)
        let y = Factor::from_row_major(4, 1, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((spikiness(&y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spikiness_incoherence_sandwich() {
        // μ̃²/κ ≤ n‖M_r‖ℓ∞/(rσ₁) ≤ μ ≤ n‖M_r‖ℓ∞/(rσ_r) ≤ κμ̃²
        for seed in 0..20 {
            let n = 30;
            let r = 3;
            let eigs = vec![6.0, 4.0, 2.0];
            let truth = gen_psd(n, &eigs, 100 + seed).unwrap();
            let u_r = truth.scaled_eigvec_factor(r).unwrap();
            let mu_tilde = spikiness(&u_r).unwrap();
            let kappa = eigs[0] / eigs[r - 1];
            // incoherence of the unscaled eigenvector block
            let u = truth.eigenvectors().unwrap().columns(0, r).into_owned();
            let mu = incoherence(&u).unwrap();
            let linf = (0..n)
                .map(|i| u_r.row_norm(i).powi(2))
                .fold(0.0f64, f64::max);
            let mid_lo = n as f64 * linf / (r as f64 * eigs[0]);
            let mid_hi = n as f64 * linf / (r as f64 * eigs[r - 1]);
            let tol = 1e-9;
            assert!(mu_tilde * mu_tilde / kappa <= mid_lo + tol);
            assert!(mid_lo <= mu + tol);
            assert!(mu <= mid_hi + tol);
            assert!(mid_hi <= kappa * mu_tilde * mu_tilde + tol);
        }
    }
}
