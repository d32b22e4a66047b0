//! Linear analysis: limit matrices, dispersion curves, crescent geometry,
//! the critical eigenvalue branch, block-matrix classification, the
//! discretized operator with its adjoint and null vectors, the rank-one
//! projector, and resolvent / point-spectrum probes.

use crate::gridw::{flatten, unflatten, weighted_inner, weighted_norm, Field, Grid, WeightedNormSpec};
use crate::linalg::{c, eig2, eigens_4x4, smallest_singular_values, Banded, C};
use crate::model::{evaluate_df, s_omega, ModelParams, RestState};
use crate::profile::{fit_tail_rates, WaveProfile};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("need at least {need} samples near the origin, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("eigenvalue branches too close to continue at s = {re}+{im}i, shrink the step")]
    BranchCollision { re: f64, im: f64 },
    #[error("block matrix A is singular")]
    SingularA,
    #[error("adjoint null space ambiguous: singular values {sigma1:e}, {sigma2:e}")]
    NullSpaceAmbiguous { sigma1: f64, sigma2: f64 },
    #[error("resolvent solve failed at s = {re}+{im}i")]
    SolveFailed { re: f64, im: f64 },
    #[error("crescent fit failed: {0}")]
    CrescentFitFailed(String),
    #[error("eigenvalue computation failed: {0}")]
    Eigen(#[from] crate::linalg::LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Constant-coefficient data at the two spatial limits.
#[derive(Clone, Debug)]
pub struct LimitMatrices {
    pub c_plus: [[f64; 2]; 2],
    pub c_minus: [[f64; 2]; 2],
    pub sigma1: f64,
    pub sigma2: f64,
    pub a: [[f64; 2]; 2],
    pub a_inv: [[f64; 2]; 2],
    pub speed: f64,
}

impl LimitMatrices {
    pub fn new(params: &ModelParams, rest: &RestState, speed: f64) -> Self {
        let a = params.a_matrix();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let a_inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        let s = s_omega(rest.omega);
        let df_inf = evaluate_df(params, rest.v_inf);
        let df_zero = evaluate_df(params, [0.0, 0.0]);
        let mut c_plus = [[0.0; 2]; 2];
        let mut c_minus = [[0.0; 2]; 2];
        for p in 0..2 {
            for q in 0..2 {
                c_plus[p][q] = s[p][q] + df_inf[p][q];
                c_minus[p][q] = s[p][q] + df_zero[p][q];
            }
        }
        LimitMatrices { c_plus, c_minus, sigma1: rest.sigma1, sigma2: rest.sigma2, a, a_inv, speed }
    }

    fn c_side(&self, side: Side) -> &[[f64; 2]; 2] {
        match side {
            Side::Plus => &self.c_plus,
            Side::Minus => &self.c_minus,
        }
    }

    /// First-order spatial matrix (0 I; A^{-1}(sI - C) -c A^{-1}).
    pub fn m_matrix(&self, side: Side, s: C) -> [[C; 4]; 4] {
        let cm = self.c_side(side);
        let mut m = [[c(0.0, 0.0); 4]; 4];
        m[0][2] = c(1.0, 0.0);
        m[1][3] = c(1.0, 0.0);
        for p in 0..2 {
            for q in 0..2 {
                // A^{-1}(sI - C) = s A^{-1} - A^{-1} C
                let ainv_c: f64 = (0..2).map(|r| self.a_inv[p][r] * cm[r][q]).sum();
                m[2 + p][q] = s * self.a_inv[p][q] - ainv_c;
                m[2 + p][2 + q] = c(-self.speed * self.a_inv[p][q], 0.0);
            }
        }
        m
    }

    /// Second-order symbol -nu^2 A + i nu c I + C.
    pub fn d_matrix(&self, side: Side, nu: f64) -> [[C; 2]; 2] {
        let cm = self.c_side(side);
        let mut d = [[c(0.0, 0.0); 2]; 2];
        for p in 0..2 {
            for q in 0..2 {
                d[p][q] = c(-nu * nu * self.a[p][q] + cm[p][q], 0.0);
                if p == q {
                    d[p][q] += c(0.0, nu * self.speed);
                }
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
pub struct SpectralCurve {
    pub branch_id: usize,
    pub side: Side,
    pub samples: Vec<(f64, C)>,
}

/// Closed-form roots of det(sI - D(nu)) = 0 over the grid, grouped into two
/// continuous branches by nearest-neighbor matching.
pub fn dispersion_curves(lim: &LimitMatrices, side: Side, nu_grid: &[f64]) -> Vec<SpectralCurve> {
    let mut b0 = Vec::with_capacity(nu_grid.len());
    let mut b1 = Vec::with_capacity(nu_grid.len());
    let mut prev: Option<(C, C)> = None;
    for &nu in nu_grid {
        let (mut s0, mut s1) = eig2(lim.d_matrix(side, nu));
        if let Some((p0, p1)) = prev {
            let straight = (s0 - p0).norm() + (s1 - p1).norm();
            let swapped = (s1 - p0).norm() + (s0 - p1).norm();
            if swapped < straight {
                std::mem::swap(&mut s0, &mut s1);
            }
        }
        b0.push((nu, s0));
        b1.push((nu, s1));
        prev = Some((s0, s1));
    }
    vec![
        SpectralCurve { branch_id: 0, side, samples: b0 },
        SpectralCurve { branch_id: 1, side, samples: b1 },
    ]
}

/// |det(sI - D(nu))| for self-residual checks.
pub fn dispersion_residual(lim: &LimitMatrices, side: Side, nu: f64, s: C) -> f64 {
    let d = lim.d_matrix(side, nu);
    ((s - d[0][0]) * (s - d[1][1]) - d[0][1] * d[1][0]).norm()
}

/// Index of the branch passing through the origin, if any.
pub fn critical_branch(curves: &[SpectralCurve]) -> Option<usize> {
    curves.iter().position(|cv| {
        cv.side == Side::Plus && cv.samples.iter().any(|(_, s)| s.norm() < 1e-9)
    })
}

#[derive(Clone, Copy, Debug)]
pub struct TangencyFit {
    pub kappa_fit: f64,
    pub rms_residual: f64,
    pub n_samples: usize,
}

/// Least squares of Re s = -kappa (Im s)^2 over samples with |s| < window.
pub fn fit_tangency(curve: &SpectralCurve, window: f64) -> Result<TangencyFit, SpectralError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pts = Vec::new();
    for &(_, s) in &curve.samples {
        if s.norm() < window && s.norm() > 1e-12 {
            num += s.re * s.im * s.im;
            den += s.im.powi(4);
            pts.push(s);
        }
    }
    if pts.len() < 4 || den == 0.0 {
        return Err(SpectralError::InsufficientSamples { got: pts.len(), need: 4 });
    }
    let kappa = -num / den;
    let rms = (pts.iter().map(|s| (s.re + kappa * s.im * s.im).powi(2)).sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(TangencyFit { kappa_fit: kappa, rms_residual: rms, n_samples: pts.len() })
}

#[derive(Clone, Copy, Debug)]
pub struct CrescentParams {
    pub kappa: f64,
    pub gamma: f64,
    pub rho: f64,
    pub delta: f64,
}

/// Membership in the crescent neighborhood: nonzero, within delta of the
/// origin, and right of the parabola-with-sector boundary.
pub fn crescent_contains(s: C, p: &CrescentParams) -> bool {
    if s.norm() == 0.0 || s.norm() > p.delta {
        return false;
    }
    let im = s.im.abs();
    let bound = -p.kappa * im.min(p.rho).powi(2) + p.gamma * (p.rho - im).min(0.0);
    s.re >= bound
}

/// Fits crescent constants from computed curves: kappa backs off the critical
/// tangency by 10%, rho halves the |Im| where some curve first re-enters the
/// parabola region, gamma takes 90% of the steepest admissible sector slope.
pub fn fit_crescent(curves: &[SpectralCurve], window: f64) -> Result<CrescentParams, SpectralError> {
    let crit =
        critical_branch(curves).ok_or_else(|| SpectralError::CrescentFitFailed("no critical branch".into()))?;
    let tang = fit_tangency(&curves[crit], window)?;
    if tang.kappa_fit <= 0.0 {
        return Err(SpectralError::CrescentFitFailed(format!(
            "nonpositive tangency curvature {}",
            tang.kappa_fit
        )));
    }
    let kappa = 0.9 * tang.kappa_fit;
    let mut im_cross = f64::INFINITY;
    let mut im_max: f64 = 0.0;
    for cv in curves {
        for &(_, s) in &cv.samples {
            im_max = im_max.max(s.im.abs());
            if s.norm() > 1e-12 && s.re >= -kappa * s.im * s.im {
                im_cross = im_cross.min(s.im.abs());
            }
        }
    }
    if !im_cross.is_finite() {
        im_cross = im_max.max(1.0);
    }
    let rho = 0.5 * im_cross;
    if rho <= 0.0 {
        return Err(SpectralError::CrescentFitFailed("curve re-enters at Im 0".into()));
    }
    let delta = (0.5 * rho).min(0.1);
    let mut gamma_cap = f64::INFINITY;
    for cv in curves {
        for &(_, s) in &cv.samples {
            let im = s.im.abs();
            if im > rho {
                let numer = -s.re - kappa * rho * rho;
                if numer <= 0.0 {
                    return Err(SpectralError::CrescentFitFailed(format!(
                        "sample {s} blocks the sector at rho {rho}"
                    )));
                }
                gamma_cap = gamma_cap.min(numer / (im - rho));
            }
        }
    }
    let gamma = if gamma_cap.is_finite() { 0.9 * gamma_cap } else { kappa * rho };
    Ok(CrescentParams { kappa, gamma, rho, delta })
}

#[derive(Clone, Debug)]
pub struct LambdaBranch {
    /// (s, lambda) along the path
    pub samples: Vec<(C, C)>,
}

/// Continues the eigenvalue of M_plus(s) that vanishes at s = 0 along the
/// path, by nearest matching with a collision guard.
pub fn track_lambda(lim: &LimitMatrices, s_path: &[C]) -> Result<LambdaBranch, SpectralError> {
    let ev0 = eigens_4x4(&lim.m_matrix(Side::Plus, c(0.0, 0.0)))?;
    let mut lambda = ev0.iter().copied().min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
    let mut gap = ev0
        .iter()
        .filter(|l| (*l - lambda).norm() > 1e-14)
        .map(|l| (l - lambda).norm())
        .fold(f64::INFINITY, f64::min);
    let mut samples = vec![(c(0.0, 0.0), lambda)];
    for &s in s_path {
        if s.norm() == 0.0 {
            continue;
        }
        let ev = eigens_4x4(&lim.m_matrix(Side::Plus, s))?;
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&i, &j| {
            (ev[i] - lambda).norm().partial_cmp(&(ev[j] - lambda).norm()).unwrap()
        });
        let nearest = (ev[order[0]] - lambda).norm();
        let second = (ev[order[1]] - lambda).norm();
        let radius = 0.4 * gap;
        if nearest > radius || second < radius {
            return Err(SpectralError::BranchCollision { re: s.re, im: s.im });
        }
        lambda = ev[order[0]];
        gap = second;
        samples.push((s, lambda));
    }
    Ok(LambdaBranch { samples })
}

#[derive(Clone, Copy, Debug)]
pub struct LambdaDerivatives {
    pub lambda0: C,
    pub d1: C,
    pub d2: C,
}

fn lambda_near(lim: &LimitMatrices, s: C, anchor: C) -> Result<C, SpectralError> {
    let ev = eigens_4x4(&lim.m_matrix(Side::Plus, s))?;
    Ok(ev.iter().copied().min_by(|a, b| (a - anchor).norm().partial_cmp(&(b - anchor).norm()).unwrap()).unwrap())
}

/// Richardson-extrapolated central differences of the critical branch along
/// the real axis.
pub fn lambda_derivatives(lim: &LimitMatrices, h: f64) -> Result<LambdaDerivatives, SpectralError> {
    let l0 = lambda_near(lim, c(0.0, 0.0), c(0.0, 0.0))?;
    let lp = lambda_near(lim, c(h, 0.0), l0)?;
    let lm = lambda_near(lim, c(-h, 0.0), l0)?;
    let lp2 = lambda_near(lim, c(h / 2.0, 0.0), l0)?;
    let lm2 = lambda_near(lim, c(-h / 2.0, 0.0), l0)?;
    let d1_h = (lp - lm) / (2.0 * h);
    let d1_h2 = (lp2 - lm2) / h;
    let d1 = (d1_h2 * 4.0 - d1_h) / 3.0;
    let d2_h = (lp - l0 * 2.0 + lm) / (h * h);
    let d2_h2 = (lp2 - l0 * 2.0 + lm2) / (h * h / 4.0);
    let d2 = (d2_h2 * 4.0 - d2_h) / 3.0;
    Ok(LambdaDerivatives { lambda0: l0, d1, d2 })
}

/// min over the parabolic path s = i tau - a tau^2 of Re lambda / |lambda|^2.
pub fn parabolic_ratio_min(
    lim: &LimitMatrices,
    a: f64,
    tau_max: f64,
    n: usize,
) -> Result<f64, SpectralError> {
    let path: Vec<C> = (1..=n)
        .map(|i| {
            let tau = tau_max * i as f64 / n as f64;
            c(-a * tau * tau, tau)
        })
        .collect();
    let branch = track_lambda(lim, &path)?;
    let mut min_ratio = f64::INFINITY;
    for &(s, l) in branch.samples.iter().skip(1) {
        let _ = s;
        min_ratio = min_ratio.min(l.re / l.norm_sqr());
    }
    Ok(min_ratio)
}

/// Eigenvalue-count classification (stable, center, unstable) of the block
/// matrix (0 I; A^{-1}C -A^{-1}B).
pub fn classify_block_matrix(
    a: &DMatrix<C>,
    b: &DMatrix<C>,
    cm: &DMatrix<C>,
) -> Result<(usize, usize, usize), SpectralError> {
    let m = a.nrows();
    assert!(b.nrows() == m && cm.nrows() == m);
    let lu = a.clone().lu();
    let ainv_c = lu.solve(cm).ok_or(SpectralError::SingularA)?;
    let ainv_b = lu.solve(b).ok_or(SpectralError::SingularA)?;
    let det = lu.determinant();
    if det.norm() < 1e-300 {
        return Err(SpectralError::SingularA);
    }
    let mut big = DMatrix::<C>::zeros(2 * m, 2 * m);
    for i in 0..m {
        big[(i, m + i)] = c(1.0, 0.0);
        for j in 0..m {
            big[(m + i, j)] = ainv_c[(i, j)];
            big[(m + i, m + j)] = -ainv_b[(i, j)];
        }
    }
    let scale = big.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    let tol = 1e-9 * scale;
    let eigs = big
        .eigenvalues()
        .ok_or_else(|| SpectralError::CrescentFitFailed("eigenvalue iteration failed".into()))?;
    let mut counts = (0usize, 0usize, 0usize);
    for l in eigs.iter() {
        if l.re < -tol {
            counts.0 += 1;
        } else if l.re > tol {
            counts.2 += 1;
        } else {
            counts.1 += 1;
        }
    }
    Ok(counts)
}

/// Discretized operator on the full grid: banded real 2N x 2N, second-order
/// interior stencils, identity rows at the Dirichlet ends.
pub struct DiscreteOperator {
    pub matrix: Banded<f64>,
    pub grid: Grid,
}

impl DiscreteOperator {
    pub fn apply(&self, v: &[[f64; 2]]) -> Field {
        unflatten(&self.matrix.matvec(&flatten(v)))
    }
}

fn assemble_with(
    profile: &WaveProfile,
    params: &ModelParams,
    transpose_blocks: bool,
) -> DiscreteOperator {
    let grid = profile.grid;
    let n = grid.n;
    let h = grid.h();
    let a = params.a_matrix();
    let s = s_omega(profile.omega);
    let speed = profile.c;
    let mut m = Banded::zero(2 * n, 3, 3);
    m.set(0, 0, 1.0);
    m.set(1, 1, 1.0);
    m.set(2 * n - 2, 2 * n - 2, 1.0);
    m.set(2 * n - 1, 2 * n - 1, 1.0);
    for j in 1..n - 1 {
        let row0 = 2 * j;
        let df = evaluate_df(params, profile.v_star[j]);
        for p in 0..2 {
            for q in 0..2 {
                let (ap, sp, dfp) = if transpose_blocks {
                    (a[q][p], s[q][p], df[q][p])
                } else {
                    (a[p][q], s[p][q], df[p][q])
                };
                let drift = if p == q { speed / (2.0 * h) } else { 0.0 };
                let drift = if transpose_blocks { -drift } else { drift };
                m.add_to(row0 + p, row0 + q, -2.0 * ap / (h * h) + sp + dfp);
                m.add_to(row0 + p, row0 - 2 + q, ap / (h * h) - drift);
                m.add_to(row0 + p, row0 + 2 + q, ap / (h * h) + drift);
            }
        }
    }
    DiscreteOperator { matrix: m, grid }
}

/// L u = A u_xx + c u_x + S u + Df(v_star) u with homogeneous Dirichlet rows.
pub fn assemble_l(profile: &WaveProfile, params: &ModelParams) -> DiscreteOperator {
    assemble_with(profile, params, false)
}

/// Adjoint from the explicit formula A^T u_xx - c u_x + S^T u + Df^T u.
pub fn assemble_l_adjoint(profile: &WaveProfile, params: &ModelParams) -> DiscreteOperator {
    assemble_with(profile, params, true)
}

#[derive(Clone, Copy, Debug)]
pub struct AdjointComparison {
    pub max_interior_diff: f64,
    pub max_boundary_diff: f64,
}

/// Entry-wise comparison of the discrete transpose of L against the explicit
/// adjoint; they agree exactly except where Dirichlet identity rows replace
/// stencil rows.
pub fn compare_adjoint_with_transpose(
    l: &DiscreteOperator,
    ladj: &DiscreteOperator,
) -> AdjointComparison {
    let n2 = 2 * l.grid.n;
    let boundary = |i: usize| i < 2 || i >= n2 - 2;
    let mut interior: f64 = 0.0;
    let mut bnd: f64 = 0.0;
    for i in 0..n2 {
        let lo = i.saturating_sub(3);
        let hi = (i + 3).min(n2 - 1);
        for j in lo..=hi {
            let d = (l.matrix.get(j, i) - ladj.matrix.get(i, j)).abs();
            if boundary(i) || boundary(j) {
                bnd = bnd.max(d);
            } else {
                interior = interior.max(d);
            }
        }
    }
    AdjointComparison { max_interior_diff: interior, max_boundary_diff: bnd }
}

#[derive(Clone, Debug)]
pub struct AdjointNullVector {
    pub field: Field,
    /// l2 residual ||L* psi|| / ||psi||
    pub residual: f64,
    /// two smallest singular values of the adjoint matrix
    pub sigma_pair: (f64, f64),
    pub left_rate: Option<f64>,
    pub right_rate: Option<f64>,
    /// (x, |psi|) at stations across the domain
    pub boundedness: Vec<(f64, f64)>,
}

/// Near-null vector of the discrete adjoint by inverse iteration with shift
/// zero, normalized so that (psi2, v_star_x)_{L^2} = 1.
pub fn adjoint_null_vector(
    ladj: &DiscreteOperator,
    profile: &WaveProfile,
) -> Result<AdjointNullVector, SpectralError> {
    let grid = ladj.grid;
    let n2 = 2 * grid.n;
    let (sv, vecs) = smallest_singular_values(&ladj.matrix, 2, 80)?;
    if sv[1] < 10.0 * sv[0] {
        return Err(SpectralError::NullSpaceAmbiguous { sigma1: sv[0], sigma2: sv[1] });
    }
    // right singular vector of the smallest value is the near-null direction
    let mut psi_flat = vecs[0].clone();
    // polish with a few inverse-iteration sweeps on the matrix itself
    if let Ok(lu) = ladj.matrix.clone().factor() {
        for _ in 0..3 {
            psi_flat = lu.solve(&psi_flat);
            let norm = psi_flat.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in psi_flat.iter_mut() {
                *v /= norm;
            }
        }
    }
    let applied = ladj.matrix.matvec(&psi_flat);
    let residual = applied.iter().map(|v| v * v).sum::<f64>().sqrt()
        / psi_flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut psi = unflatten(&psi_flat);
    assert_eq!(psi.len(), grid.n);
    let vx = crate::profile::profile_derivative(profile);
    let overlap = weighted_inner(&psi, &vx, 0.0, &grid);
    if overlap.abs() < 1e-300 * (n2 as f64) {
        return Err(SpectralError::NullSpaceAmbiguous { sigma1: sv[0], sigma2: sv[1] });
    }
    for u in psi.iter_mut() {
        u[0] /= overlap;
        u[1] /= overlap;
    }
    let rates = fit_tail_rates(&grid, &psi, [0.0, 0.0]);
    let stations: Vec<(f64, f64)> = [-0.95, -0.5, -0.25, 0.0, 0.25, 0.5, 0.95]
        .iter()
        .map(|&fr| {
            let x = fr * grid.half_width;
            let j = (((x + grid.half_width) / grid.h()).round() as usize).min(grid.n - 1);
            (grid.x(j), (psi[j][0] * psi[j][0] + psi[j][1] * psi[j][1]).sqrt())
        })
        .collect();
    Ok(AdjointNullVector {
        field: psi,
        residual,
        sigma_pair: (sv[0], sv[1]),
        left_rate: rates.left,
        right_rate: rates.right,
        boundedness: stations,
    })
}

/// P_k r = v_star_x (psi2, r)_{L^2}: rank-one spectral projector onto the
/// kernel direction. The inner product is unweighted; k only gates which r
/// are admissible.
pub fn projector_pk(r: &[[f64; 2]], psi2: &[[f64; 2]], v_star_x: &[[f64; 2]], grid: &Grid) -> Field {
    let coef = weighted_inner(psi2, r, 0.0, grid);
    v_star_x.iter().map(|u| [coef * u[0], coef * u[1]]).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventSample {
    pub s: C,
    pub norm_v: f64,
    pub norm_pkr: f64,
    pub norm_r_strong: f64,
}

fn complex_shifted(l: &Banded<f64>, s: C) -> Banded<C> {
    let n = l.n;
    let mut out = Banded::zero(n, l.kl, l.ku);
    for i in 0..n {
        let lo = i.saturating_sub(l.kl);
        let hi = (i + l.ku).min(n - 1);
        for j in lo..=hi {
            let mut val = c(-l.get(i, j), 0.0);
            if i == j {
                val += s;
            }
            out.set(i, j, val);
        }
    }
    out
}

/// Weighted H^1_k norm of a complex field given as (re, im) parts.
fn h1k_norm_complex(re: &Field, im: &Field, k: f64, grid: &Grid) -> f64 {
    let spec = WeightedNormSpec::h1(k);
    let a = weighted_norm(re, spec, grid).unwrap_or(f64::NAN);
    let b = weighted_norm(im, spec, grid).unwrap_or(f64::NAN);
    (a * a + b * b).sqrt()
}

/// Solves (sI - L)v = r along the path and tabulates the weighted norms
/// entering the resolvent bound.
pub fn resolvent_probe(
    l: &DiscreteOperator,
    r: &[[f64; 2]],
    s_path: &[C],
    k: f64,
    mu: f64,
    psi2: &[[f64; 2]],
    v_star_x: &[[f64; 2]],
) -> Result<Vec<ResolventSample>, SpectralError> {
    let grid = l.grid;
    let mut r_bc = r.to_vec();
    r_bc[0] = [0.0, 0.0];
    r_bc[grid.n - 1] = [0.0, 0.0];
    let pkr = projector_pk(&r_bc, psi2, v_star_x, &grid);
    let qr: Field = r_bc.iter().zip(&pkr).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
    let norm_pkr = weighted_norm(&pkr, WeightedNormSpec::l2(k), &grid).unwrap();
    let norm_r_strong = weighted_norm(&qr, WeightedNormSpec::l2(k + 1.0 + mu), &grid).unwrap();
    let rhs = flatten(&r_bc);
    let rhs_c: Vec<C> = rhs.iter().map(|&v| c(v, 0.0)).collect();
    let mut out = Vec::with_capacity(s_path.len());
    for &s in s_path {
        let m = complex_shifted(&l.matrix, s);
        let lu = m.factor().map_err(|_| SpectralError::SolveFailed { re: s.re, im: s.im })?;
        let v = lu.solve(&rhs_c);
        let re: Field = unflatten(&v.iter().map(|z| z.re).collect::<Vec<_>>());
        let im: Field = unflatten(&v.iter().map(|z| z.im).collect::<Vec<_>>());
        let norm_v = h1k_norm_complex(&re, &im, k, &grid);
        if !norm_v.is_finite() {
            return Err(SpectralError::SolveFailed { re: s.re, im: s.im });
        }
        out.push(ResolventSample { s, norm_v, norm_pkr, norm_r_strong });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumCandidate {
    pub s: C,
    pub residual: f64,
    pub dispersion_distance: f64,
    pub artifact: bool,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub candidates: Vec<SpectrumCandidate>,
    pub kernel_sv: (f64, f64),
    pub kernel_sq_sv: (f64, f64),
    /// (dim ker, dim generalized ker at order 2) inferred numerically
    pub kernel_dims: (usize, usize),
    /// overlap (psi2, v_star_x) certifying that the generalized kernel does
    /// not grow at order 2; meaningful only if psi data was supplied
    pub jordan_overlap: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct ProbeOptions {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
    pub artifact_radius: f64,
    pub residual_tol: f64,
    pub iters: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            re_range: (-0.5, 0.1),
            im_range: (-0.4, 0.4),
            n_re: 5,
            n_im: 5,
            artifact_radius: 0.05,
            // must sit above the discrete-kernel residual floor, which is the
            // smallest singular value of the assembled matrix
            residual_tol: 1e-5,
            iters: 40,
        }
    }
}

pub fn dispersion_distance(s: C, curves: &[SpectralCurve]) -> f64 {
    let mut d = f64::INFINITY;
    for cv in curves {
        for &(_, sc) in &cv.samples {
            d = d.min((s - sc).norm());
        }
    }
    d
}

/// Shift-invert scan for point spectrum in a box, with essential-spectrum
/// artifact flags and a kernel-multiplicity report from singular values of
/// the operator and its square.
pub fn point_spectrum_probe(
    l: &DiscreteOperator,
    curves: &[SpectralCurve],
    opts: &ProbeOptions,
    psi_info: Option<(&[[f64; 2]], &[[f64; 2]])>,
) -> Result<SpectrumReport, SpectralError> {
    let n2 = 2 * l.grid.n;
    let mut found: Vec<(C, f64)> = Vec::new();
    for ire in 0..opts.n_re {
        for iim in 0..opts.n_im {
            let re = opts.re_range.0
                + (opts.re_range.1 - opts.re_range.0) * (ire as f64 + 0.5) / opts.n_re as f64;
            let im = opts.im_range.0
                + (opts.im_range.1 - opts.im_range.0) * (iim as f64 + 0.5) / opts.n_im as f64;
            let mut shift = c(re, im);
            let lu = match complex_shifted(&l.matrix, shift).factor() {
                Ok(lu) => lu,
                Err(_) => {
                    shift += c(1e-8, 1e-8);
                    match complex_shifted(&l.matrix, shift).factor() {
                        Ok(lu) => lu,
                        Err(_) => continue,
                    }
                }
            };
            let mut x: Vec<C> = (0..n2)
                .map(|i| c(((i % 23) as f64 - 11.0) / 11.0, ((i % 7) as f64 - 3.0) / 4.0))
                .collect();
            for _ in 0..opts.iters {
                let y = lu.solve(&x);
                let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !norm.is_finite() || norm == 0.0 {
                    break;
                }
                x = y.iter().map(|z| z / norm).collect();
            }
            // Rayleigh quotient with the real operator
            let xre: Vec<f64> = x.iter().map(|z| z.re).collect();
            let xim: Vec<f64> = x.iter().map(|z| z.im).collect();
            let lre = l.matrix.matvec(&xre);
            let lim_ = l.matrix.matvec(&xim);
            let mut num = c(0.0, 0.0);
            let mut den = 0.0;
            for i in 0..n2 {
                let lx = c(lre[i], lim_[i]);
                num += x[i].conj() * lx;
                den += x[i].norm_sqr();
            }
            let lambda = num / den;
            let mut res = 0.0f64;
            for i in 0..n2 {
                let lx = c(lre[i], lim_[i]);
                res += (lx - lambda * x[i]).norm_sqr();
            }
            let res = res.sqrt() / den.sqrt();
            if res < opts.residual_tol
                && lambda.re >= opts.re_range.0
                && lambda.re <= opts.re_range.1
                && lambda.im >= opts.im_range.0
                && lambda.im <= opts.im_range.1
            {
                found.push((lambda, res));
            }
        }
    }
    found.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
    let mut dedup: Vec<(C, f64)> = Vec::new();
    for (s, r) in found {
        if let Some(last) = dedup.last_mut() {
            if (last.0 - s).norm() < 1e-6 * (1.0 + s.norm()) {
                if r < last.1 {
                    *last = (s, r);
                }
                continue;
            }
        }
        dedup.push((s, r));
    }
    let candidates: Vec<SpectrumCandidate> = dedup
        .into_iter()
        .map(|(s, r)| {
            let d = dispersion_distance(s, curves);
            SpectrumCandidate { s, residual: r, dispersion_distance: d, artifact: d < opts.artifact_radius }
        })
        .collect();

    let (kv, _) = smallest_singular_values(&l.matrix, 2, 80)?;
    let l2m = l.matrix.multiply(&l.matrix);
    let (kv2, _) = smallest_singular_values(&l2m, 2, 80)?;
    let jordan_overlap = psi_info.map(|(psi, vx)| weighted_inner(psi, vx, 0.0, &l.grid));
    let dim_l = if kv[1] >= 10.0 * kv[0] { 1 } else { 2 };
    let dim_l2 = match jordan_overlap {
        Some(ov) if ov.abs() > 0.1 => dim_l,
        Some(_) => dim_l + 1,
        None => {
            if kv2[1] >= 10.0 * kv2[0] {
                1
            } else {
                2
            }
        }
    };
    Ok(SpectrumReport {
        candidates,
        kernel_sv: (kv[0], kv[1]),
        kernel_sq_sv: (kv2[0], kv2[1]),
        kernel_dims: (dim_l, dim_l2),
        jordan_overlap,
    })
}

/// Eigenvalues of the frozen-coefficient periodic finite-difference operator
/// in closed form: the symbol at discrete Fourier modes. These land on the
/// discrete dispersion curves and serve as known essential-spectrum
/// artifacts.
pub fn frozen_periodic_eigenvalues(lim: &LimitMatrices, side: Side, grid: &Grid, modes: &[i64]) -> Vec<C> {
    let h = grid.h();
    let cm = lim.c_side(side);
    let mut out = Vec::new();
    for &j in modes {
        let nu = std::f64::consts::PI * j as f64 / grid.half_width;
        // discrete symbols of the centered stencils
        let lap = (2.0 * (nu * h).cos() - 2.0) / (h * h);
        let drift = (nu * h).sin() / h;
        let mut d = [[c(0.0, 0.0); 2]; 2];
        for p in 0..2 {
            for q in 0..2 {
                d[p][q] = c(lap * lim.a[p][q] + cm[p][q], 0.0);
                if p == q {
                    d[p][q] += c(0.0, drift * lim.speed);
                }
            }
        }
        let (s0, s1) = eig2(d);
        out.push(s0);
        out.push(s1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_rest_state, ModelParams};
    use crate::profile::{solve_profile, ProfileProblem, SolveOptions};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    /// profile speed at the reference resolution L=200, N=4096
    const C_REF: f64 = 1.1882489824;

    fn shipped_limits() -> LimitMatrices {
        let params = ModelParams::default_set();
        let rest = solve_rest_state(&params).unwrap();
        LimitMatrices::new(&params, &rest, C_REF)
    }

    struct Fixture {
        params: ModelParams,
        profile: WaveProfile,
        l: DiscreteOperator,
        ladj: DiscreteOperator,
        psi2: AdjointNullVector,
        vx: Field,
    }

    fn fixture() -> &'static Fixture {
        static FIX: OnceLock<Fixture> = OnceLock::new();
        FIX.get_or_init(|| {
            let params = ModelParams::default_set();
            let rest = solve_rest_state(&params).unwrap();
            let grid = Grid::new(200.0, 4096).unwrap();
            let problem = ProfileProblem::new(params.clone(), rest, grid);
            let profile = solve_profile(&problem, None, &SolveOptions::default()).unwrap();
            let l = assemble_l(&profile, &params);
            let ladj = assemble_l_adjoint(&profile, &params);
            let psi2 = adjoint_null_vector(&ladj, &profile).unwrap();
            let vx = crate::profile::profile_derivative(&profile);
            Fixture { params, profile, l, ladj, psi2, vx }
        })
    }

    #[test]
    fn limit_matrix_structure() {
        let lim = shipped_limits();
        assert!((lim.c_plus[0][0] - lim.sigma1).abs() < 1e-13);
        assert!(lim.c_plus[0][1].abs() < 1e-13);
        assert!((lim.c_plus[1][0] - lim.sigma2).abs() < 1e-13);
        assert!(lim.c_plus[1][1].abs() < 1e-13);
        // minus side: rotation generated by g(0) plus the frame rotation
        assert!((lim.c_minus[0][0] - (-0.6)).abs() < 1e-13);
        assert!((lim.c_minus[0][1] - 2.0).abs() < 1e-13);
        assert!((lim.c_minus[1][0] - (-2.0)).abs() < 1e-13);
    }

    #[test]
    fn dispersion_plus_through_origin() {
        let lim = shipped_limits();
        let nus: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.02).collect();
        let curves = dispersion_curves(&lim, Side::Plus, &nus);
        let at_zero: Vec<C> = curves.iter().map(|cv| cv.samples[100].1).collect();
        let mut found_zero = false;
        let mut found_sigma1 = false;
        for s in at_zero {
            if s.norm() < 1e-12 {
                found_zero = true;
            }
            if (s - c(lim.sigma1, 0.0)).norm() < 1e-12 {
                found_sigma1 = true;
            }
        }
        assert!(found_zero && found_sigma1);
    }

    #[test]
    fn dispersion_minus_example_set() {
        // explicit-parameter oracle values for the nu=0 minus-side pair
        let params = ModelParams::quintic(
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.1, 0.5),
            Complex64::new(1.0, 1.0),
            Complex64::new(-1.0, 1.0),
        );
        let rest = solve_rest_state(&params).unwrap();
        let lim = LimitMatrices::new(&params, &rest, 1.0);
        let d = lim.d_matrix(Side::Minus, 0.0);
        let (s0, s1) = eig2(d);
        let expect_im = 0.5 + rest.omega; // about -1.6746
        for s in [s0, s1] {
            assert!((s.re - (-0.1)).abs() < 1e-10);
            assert!((s.im.abs() - expect_im.abs()).abs() < 1e-10);
        }
        assert!((expect_im - (-1.6745966692)).abs() < 1e-9);
    }

    #[test]
    fn dispersion_conjugate_symmetry() {
        let lim = shipped_limits();
        for side in [Side::Plus, Side::Minus] {
            for nu in [0.3, 1.7, 5.0] {
                let d_p = lim.d_matrix(side, nu);
                let d_m = lim.d_matrix(side, -nu);
                let (a1, a2) = eig2(d_p);
                let (b1, b2) = eig2(d_m);
                let conj_match = ((a1.conj() - b1).norm() < 1e-12 && (a2.conj() - b2).norm() < 1e-12)
                    || ((a1.conj() - b2).norm() < 1e-12 && (a2.conj() - b1).norm() < 1e-12);
                assert!(conj_match);
            }
        }
    }

    #[test]
    fn dispersion_self_residual() {
        let lim = shipped_limits();
        let nus: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.1).collect();
        for side in [Side::Plus, Side::Minus] {
            for cv in dispersion_curves(&lim, side, &nus) {
                for &(nu, s) in &cv.samples {
                    let scale = s.norm_sqr().max(1.0);
                    assert!(dispersion_residual(&lim, side, nu, s) < 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn dispersion_matches_first_order_form() {
        // s on the curve at nu implies M(s) has eigenvalue i*nu
        let lim = shipped_limits();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let nu: f64 = rng.gen_range(-4.0..4.0);
            let side = if rng.gen_bool(0.5) { Side::Plus } else { Side::Minus };
            let (s0, s1) = eig2(lim.d_matrix(side, nu));
            for s in [s0, s1] {
                let ev = eigens_4x4(&lim.m_matrix(side, s)).unwrap();
                let target = c(0.0, nu);
                let best = ev.iter().map(|l| (l - target).norm()).fold(f64::INFINITY, f64::min);
                let scale = (1.0 + nu.abs()).max(s.norm());
                assert!(best < 1e-8 * scale, "side {side:?} nu {nu} s {s}: gap {best}");
            }
        }
    }

    #[test]
    fn tangency_synthetic_parabola() {
        let samples: Vec<(f64, C)> =
            (-40..=40).map(|i| (i as f64, c(-2.0 * (0.002 * i as f64).powi(2), 0.002 * i as f64))).collect();
        let curve = SpectralCurve { branch_id: 0, side: Side::Plus, samples };
        let fit = fit_tangency(&curve, 0.1).unwrap();
        assert!((fit.kappa_fit - 2.0).abs() < 1e-8);
    }

    #[test]
    fn tangency_shipped_set() {
        let lim = shipped_limits();
        let nus: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.001).collect();
        let curves = dispersion_curves(&lim, Side::Plus, &nus);
        let crit = critical_branch(&curves).unwrap();
        let full = fit_tangency(&curves[crit], 0.1).unwrap();
        assert!(full.kappa_fit > 0.0);
        assert!((full.kappa_fit - 0.35417231).abs() < 2e-3, "kappa {}", full.kappa_fit);
        let half = fit_tangency(&curves[crit], 0.05).unwrap();
        let drift = (half.kappa_fit - full.kappa_fit).abs() / full.kappa_fit;
        assert!(drift < 0.05, "window-halving drift {drift}");
    }

    #[test]
    fn tangency_insufficient_samples() {
        let curve = SpectralCurve {
            branch_id: 0,
            side: Side::Plus,
            samples: vec![(0.0, c(-5.0, 3.0))],
        };
        assert!(matches!(
            fit_tangency(&curve, 0.1),
            Err(SpectralError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn crescent_membership() {
        let p = CrescentParams { kappa: 1.0, gamma: 0.5, rho: 0.5, delta: 0.1 };
        assert!(crescent_contains(c(0.05, 0.0), &p));
        assert!(!crescent_contains(c(0.0, 0.0), &p));
        let im = 0.02;
        assert!(!crescent_contains(c(-1.5 * p.kappa * im * im, im), &p));
        assert!(crescent_contains(c(-0.5 * p.kappa * im * im, im), &p));
        assert!(!crescent_contains(c(0.2, 0.0), &p), "outside the delta ball");
    }

    #[test]
    fn crescent_excludes_all_dispersion_samples() {
        let lim = shipped_limits();
        let nus: Vec<f64> = (-3000..=3000).map(|i| i as f64 * 0.002).collect();
        let mut curves = dispersion_curves(&lim, Side::Plus, &nus);
        curves.extend(dispersion_curves(&lim, Side::Minus, &nus));
        let p = fit_crescent(&curves, 0.1).unwrap();
        assert!(p.delta > 0.0 && p.delta < p.rho);
        assert!((p.kappa - 0.9 * 0.35417231).abs() < 2e-3);
        for cv in &curves {
            for &(_, s) in &cv.samples {
                assert!(!crescent_contains(s, &p), "sample {s} inside crescent {p:?}");
            }
        }
    }

    #[test]
    fn lambda_branch_zero_at_origin() {
        let lim = shipped_limits();
        let branch = track_lambda(&lim, &[]).unwrap();
        assert!(branch.samples[0].1.norm() < 1e-10);
    }

    #[test]
    fn lambda_derivative_oracles() {
        let lim = shipped_limits();
        let d = lambda_derivatives(&lim, 0.01).unwrap();
        assert!(d.lambda0.norm() < 1e-10);
        let expect_d1 = 1.0 / C_REF;
        assert!((d.d1 - c(expect_d1, 0.0)).norm() / expect_d1 < 1e-6, "d1 {}", d.d1);
        // second derivative 2q/c with q = -alpha1/c^2 for this real-alpha set
        let q = -0.5 / (C_REF * C_REF);
        let expect_d2 = 2.0 * q / C_REF;
        assert!(expect_d2 < 0.0);
        assert!((d.d2 - c(expect_d2, 0.0)).norm() / expect_d2.abs() < 1e-4, "d2 {}", d.d2);
    }

    #[test]
    fn parabolic_paths_stay_positive() {
        let lim = shipped_limits();
        let kappa = 0.35417231;
        let mut prev = f64::INFINITY;
        for i in 0..5 {
            let a = 0.9 * kappa * i as f64 / 4.0;
            let ratio = parabolic_ratio_min(&lim, a, 0.1, 40).unwrap();
            assert!(ratio > 0.02, "path a={a}: min ratio {ratio}");
            assert!(ratio < prev, "ratio should decrease with a");
            prev = ratio;
        }
        let straight = parabolic_ratio_min(&lim, 0.0, 0.1, 40).unwrap();
        assert!(straight > 0.3 && straight < 0.55, "imaginary-axis ratio {straight}");
    }

    #[test]
    fn branch_collision_detected() {
        let lim = shipped_limits();
        match track_lambda(&lim, &[c(2.5, 0.0)]) {
            Err(SpectralError::BranchCollision { .. }) => {}
            other => panic!("expected BranchCollision, got {other:?}"),
        }
    }

    #[test]
    fn classify_plus_minus_one() {
        for m in [2usize, 3, 5] {
            let a = DMatrix::<C>::identity(m, m);
            let b = DMatrix::<C>::zeros(m, m);
            let cm = DMatrix::<C>::identity(m, m);
            assert_eq!(classify_block_matrix(&a, &b, &cm).unwrap(), (m, 0, m));
        }
    }

    #[test]
    fn classify_single_center_mode() {
        let m = 3;
        let a = DMatrix::<C>::identity(m, m);
        let b = DMatrix::<C>::identity(m, m) * c(2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q = random_unitary(m, &mut rng);
        let d = DMatrix::<C>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(2.0, 0.0),
        ]));
        let cm = &q * d * q.adjoint();
        assert_eq!(classify_block_matrix(&a, &b, &cm).unwrap(), (m, 1, m - 1));
    }

    fn random_unitary(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<C> {
        let x = DMatrix::<C>::from_fn(m, m, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        x.qr().q()
    }

    fn hermitian_min_eig(x: &DMatrix<C>) -> f64 {
        let h = (x + x.adjoint()) * c(0.5, 0.0);
        h.eigenvalues().unwrap().iter().map(|l| l.re).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn classify_hyperbolic_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for m in [2usize, 3, 5] {
            for _ in 0..10 {
                let (a, b, cm) = sample_hyperbolic(m, &mut rng);
                assert_eq!(classify_block_matrix(&a, &b, &cm).unwrap(), (m, 0, m));
            }
        }
    }

    pub(crate) fn sample_hyperbolic(m: usize, rng: &mut ChaCha8Rng) -> (DMatrix<C>, DMatrix<C>, DMatrix<C>) {
        let rand_m = |rng: &mut ChaCha8Rng| {
            DMatrix::<C>::from_fn(m, m, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        };
        let shift = c(m as f64 + 0.5, 0.0);
        let a = rand_m(rng) + DMatrix::<C>::identity(m, m) * shift;
        let cm = rand_m(rng) + DMatrix::<C>::identity(m, m) * shift;
        let la = hermitian_min_eig(&a);
        let lc = hermitian_min_eig(&cm);
        assert!(la > 0.0 && lc > 0.0);
        // B = Hermitian part + scaled skew part obeying the spectral-gap bound
        let raw = rand_m(rng);
        let herm = (&raw + raw.adjoint()) * c(0.5, 0.0);
        let skew = (&raw - raw.adjoint()) * c(0.5, 0.0);
        let skew_norm = skew.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let target = (0.5 * 16.0 * la * lc).sqrt();
        let skew = if skew_norm > 0.0 { skew * c(target / skew_norm, 0.0) } else { skew };
        let b = herm + skew;
        (a, b, cm)
    }

    #[test]
    fn classify_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (a, b, cm) = sample_hyperbolic(3, &mut rng);
        let base = classify_block_matrix(&a, &b, &cm).unwrap();
        let q = random_unitary(3, &mut rng);
        let a2 = q.adjoint() * &a * &q;
        let b2 = q.adjoint() * &b * &q;
        let c2 = q.adjoint() * &cm * &q;
        assert_eq!(classify_block_matrix(&a2, &b2, &c2).unwrap(), base);
    }

    #[test]
    fn classify_singular_a_rejected() {
        let a = DMatrix::<C>::zeros(2, 2);
        let b = DMatrix::<C>::identity(2, 2);
        let cm = DMatrix::<C>::identity(2, 2);
        assert!(matches!(classify_block_matrix(&a, &b, &cm), Err(SpectralError::SingularA)));
    }

    #[test]
    fn operator_annihilates_constants_interior() {
        let fix = fixture();
        let u: Field = vec![[1.0, 0.0]; fix.profile.grid.n];
        let lu = fix.l.apply(&u);
        // away from boundaries, Lu = (S + Df(v_star)) u pointwise
        for &j in &[50usize, 2000, 4000] {
            let df = evaluate_df(&fix.params, fix.profile.v_star[j]);
            let s = s_omega(fix.profile.omega);
            for p in 0..2 {
                let expect = s[p][0] + df[p][0];
                assert!((lu[j][p] - expect).abs() < 1e-11, "node {j} comp {p}");
            }
        }
    }

    #[test]
    fn kernel_residual_scales_quadratically() {
        // relative kernel residual of the profile derivative is O(h^2)
        let params = ModelParams::default_set();
        let rest = solve_rest_state(&params).unwrap();
        let res_at = |n: usize| {
            let grid = Grid::new(60.0, n).unwrap();
            let problem = ProfileProblem::new(params.clone(), rest.clone(), grid);
            let prof = solve_profile(&problem, None, &SolveOptions::default()).unwrap();
            let l = assemble_l(&prof, &params);
            let vx = crate::profile::profile_derivative(&prof);
            let lvx = l.apply(&vx);
            let num = weighted_inner(&lvx, &lvx, 0.0, &grid).sqrt();
            let den = weighted_inner(&vx, &vx, 0.0, &grid).sqrt();
            num / den
        };
        let coarse = res_at(600);
        let fine = res_at(1199);
        assert!(coarse < 0.2, "coarse residual {coarse}");
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 1.2, "h^2 ratio {ratio}");
    }

    #[test]
    fn adjoint_transpose_differ_only_at_boundary() {
        let fix = fixture();
        let cmp = compare_adjoint_with_transpose(&fix.l, &fix.ladj);
        assert_eq!(cmp.max_interior_diff, 0.0);
        assert!(cmp.max_boundary_diff > 0.1, "boundary rows must differ");
    }

    #[test]
    fn psi2_properties() {
        let fix = fixture();
        let psi = &fix.psi2;
        assert!(psi.residual < 1e-6, "residual {}", psi.residual);
        assert!(psi.sigma_pair.1 > 10.0 * psi.sigma_pair.0);
        let overlap = weighted_inner(&psi.field, &fix.vx, 0.0, &fix.profile.grid);
        assert!((overlap - 1.0).abs() < 1e-10, "normalization {overlap}");
        // decays toward -inf at a rate of the minus-side limit matrix
        let left = psi.left_rate.expect("left rate");
        assert!((left - 3.1103813942621876).abs() / 3.1103813942621876 < 0.15, "left {left}");
        // bounded (in fact decaying) toward +inf
        let max_amp = psi.boundedness.iter().map(|&(_, a)| a).fold(0.0, f64::max);
        let right_station = psi.boundedness.last().unwrap().1;
        assert!(right_station <= max_amp);
    }

    #[test]
    fn projector_properties() {
        let fix = fixture();
        let grid = fix.profile.grid;
        // kernel direction reproduces itself
        let pvx = projector_pk(&fix.vx, &fix.psi2.field, &fix.vx, &grid);
        let mut sup = 0.0f64;
        for j in 0..grid.n {
            sup = sup.max((pvx[j][0] - fix.vx[j][0]).abs().max((pvx[j][1] - fix.vx[j][1]).abs()));
        }
        let amp = fix.vx.iter().map(|u| u[0].abs().max(u[1].abs())).fold(0.0, f64::max);
        assert!(sup < 1e-10 * amp.max(1.0), "P vx = vx failed: {sup}");
        // idempotent on a generic field
        let r: Field = (0..grid.n)
            .map(|j| {
                let x = grid.x(j);
                [(0.3 * x).sin() * (-x * x / 900.0).exp(), (0.2 * x).cos() * (-x * x / 400.0).exp()]
            })
            .collect();
        let pr = projector_pk(&r, &fix.psi2.field, &fix.vx, &grid);
        let ppr = projector_pk(&pr, &fix.psi2.field, &fix.vx, &grid);
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..grid.n {
            diff = diff.max((ppr[j][0] - pr[j][0]).abs().max((ppr[j][1] - pr[j][1]).abs()));
            scale = scale.max(pr[j][0].abs().max(pr[j][1].abs()));
        }
        assert!(diff <= 1e-10 * scale.max(1e-30), "idempotence {diff} vs scale {scale}");
        // Gram-Schmidt complement is annihilated
        let coef = weighted_inner(&fix.psi2.field, &r, 0.0, &grid);
        let w: Field = (0..grid.n)
            .map(|j| [r[j][0] - coef * fix.vx[j][0], r[j][1] - coef * fix.vx[j][1]])
            .collect();
        let pw = projector_pk(&w, &fix.psi2.field, &fix.vx, &grid);
        let pw_amp = pw.iter().map(|u| u[0].abs().max(u[1].abs())).fold(0.0, f64::max);
        let w_amp = w.iter().map(|u| u[0].abs().max(u[1].abs())).fold(0.0, f64::max);
        assert!(pw_amp < 1e-10 * w_amp, "complement not annihilated: {pw_amp}");
    }

    #[test]
    fn projector_commutes_with_operator_in_range() {
        let fix = fixture();
        let grid = fix.profile.grid;
        let u: Field = (0..grid.n)
            .map(|j| {
                let x = grid.x(j);
                [(-x * x / 100.0).exp(), 0.5 * (-(x - 3.0) * (x - 3.0) / 80.0).exp()]
            })
            .collect();
        let coef = weighted_inner(&fix.psi2.field, &u, 0.0, &grid);
        let qu: Field = (0..grid.n)
            .map(|j| [u[j][0] - coef * fix.vx[j][0], u[j][1] - coef * fix.vx[j][1]])
            .collect();
        let lqu = fix.l.apply(&qu);
        let plqu = projector_pk(&lqu, &fix.psi2.field, &fix.vx, &grid);
        let num = weighted_inner(&plqu, &plqu, 0.0, &grid).sqrt();
        let den = weighted_inner(&lqu, &lqu, 0.0, &grid).sqrt();
        assert!(num < 1e-4 * den, "commutator residual {num} vs {den}");
    }

    #[test]
    fn resolvent_probe_bounds() {
        let fix = fixture();
        let grid = fix.profile.grid;
        // generic localized forcing with kernel component removed
        let r0: Field = (0..grid.n)
            .map(|j| {
                let x = grid.x(j);
                [(-x * x / 64.0).exp(), (0.4 * x).sin() * (-x * x / 49.0).exp()]
            })
            .collect();
        let coef = weighted_inner(&fix.psi2.field, &r0, 0.0, &grid);
        let r: Field = (0..grid.n)
            .map(|j| [r0[j][0] - coef * fix.vx[j][0], r0[j][1] - coef * fix.vx[j][1]])
            .collect();
        let s_path: Vec<C> = (0..13).map(|i| c(10f64.powf(-3.0 + 2.0 * i as f64 / 12.0), 0.0)).collect();
        let table =
            resolvent_probe(&fix.l, &r, &s_path, 10.0, 0.25, &fix.psi2.field, &fix.vx).unwrap();
        let ratios: Vec<f64> = table.iter().map(|t| t.norm_v / t.norm_r_strong).collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 2.0, "projected forcing ratio varies {lo}..{hi}");
        // kernel-direction forcing shows the 1/|s| blow-up
        let table_k =
            resolvent_probe(&fix.l, &fix.vx, &s_path, 10.0, 0.25, &fix.psi2.field, &fix.vx).unwrap();
        let xs: Vec<f64> = table_k.iter().map(|t| t.s.norm().ln()).collect();
        let ys: Vec<f64> = table_k.iter().map(|t| t.norm_v.ln()).collect();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - (-1.0)).abs() < 0.2, "kernel forcing slope {slope}");
        // linearity
        let r2: Field = r.iter().map(|u| [2.0 * u[0], 2.0 * u[1]]).collect();
        let t1 = resolvent_probe(&fix.l, &r, &[c(0.01, 0.0)], 10.0, 0.25, &fix.psi2.field, &fix.vx)
            .unwrap();
        let t2 = resolvent_probe(&fix.l, &r2, &[c(0.01, 0.0)], 10.0, 0.25, &fix.psi2.field, &fix.vx)
            .unwrap();
        assert!((t2[0].norm_v - 2.0 * t1[0].norm_v).abs() < 1e-12 * t2[0].norm_v);
    }

    #[test]
    fn point_spectrum_kernel_report() {
        let fix = fixture();
        let lim = LimitMatrices::new(&fix.params, &solve_rest_state(&fix.params).unwrap(), fix.profile.c);
        let nus: Vec<f64> = (-1500..=1500).map(|i| i as f64 * 0.004).collect();
        let mut curves = dispersion_curves(&lim, Side::Plus, &nus);
        curves.extend(dispersion_curves(&lim, Side::Minus, &nus));
        let opts = ProbeOptions {
            re_range: (-0.25, 0.15),
            im_range: (-0.25, 0.25),
            n_re: 3,
            n_im: 3,
            ..Default::default()
        };
        let report = point_spectrum_probe(&fix.l, &curves, &opts, Some((&fix.psi2.field, &fix.vx)))
            .unwrap();
        assert_eq!(report.kernel_dims, (1, 1));
        assert!(report.kernel_sv.1 > 100.0 * report.kernel_sv.0, "{:?}", report.kernel_sv);
        assert!((report.jordan_overlap.unwrap() - 1.0).abs() < 1e-9);
        // the kernel eigenvalue shows up as a candidate at the origin
        let zero = report.candidates.iter().map(|cand| cand.s.norm()).fold(f64::INFINITY, f64::min);
        assert!(zero < 1e-6, "nearest candidate to 0: {zero}");
        // nothing with positive real part
        for cand in &report.candidates {
            assert!(cand.s.re < 1e-6, "unstable candidate {:?}", cand.s);
        }
    }

    #[test]
    fn point_spectrum_empty_far_right() {
        let fix = fixture();
        let opts = ProbeOptions {
            re_range: (50.0, 60.0),
            im_range: (-1.0, 1.0),
            n_re: 2,
            n_im: 2,
            ..Default::default()
        };
        let report = point_spectrum_probe(&fix.l, &[], &opts, None).unwrap();
        assert!(report.candidates.is_empty());
    }

    #[test]
    fn frozen_coefficient_modes_are_artifacts() {
        let lim = shipped_limits();
        let grid = Grid::new(200.0, 4096).unwrap();
        let modes: Vec<i64> = (1..=40).collect();
        let eigs = frozen_periodic_eigenvalues(&lim, Side::Plus, &grid, &modes);
        let nus: Vec<f64> = (-2000..=2000).map(|i| i as f64 * 0.002).collect();
        let curves = dispersion_curves(&lim, Side::Plus, &nus);
        for s in eigs {
            let d = dispersion_distance(s, &curves);
            assert!(d < 0.05, "frozen mode {s} off-curve by {d}");
        }
    }
}
