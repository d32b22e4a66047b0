//! Front profile computation: damped Newton on the co-moving boundary-value
//! problem with the wave speed as a bordered unknown, plus parameter
//! continuation and tail-rate diagnostics.

use crate::gridw::{Field, Grid};
use crate::linalg::{Banded, LinalgError};
use crate::model::{evaluate_df, evaluate_f, rotate, s_omega, ModelParams, RestState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("field has {got} nodes, grid has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("newton did not converge, final residual {residual:e}")]
    NewtonDiverged { residual: f64 },
    #[error("jacobian is singular (translation degeneracy or bad parameters)")]
    SingularJacobian,
    #[error("profile tails not decayed at the boundary: |v(-L+10h)|={left:e}, |v(L-10h)-v_inf|={right:e}")]
    BoundaryTooTight { left: f64, right: f64 },
    #[error("continuation stalled at t={at_fraction:.4} with {} profiles solved", family.len())]
    ContinuationStalled { at_fraction: f64, family: Vec<(ModelParams, WaveProfile)> },
    #[error("continuation needs quintic coefficients on both ends")]
    UnsupportedContinuation,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TailRates {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct WaveProfile {
    pub grid: Grid,
    pub v_star: Field,
    pub c: f64,
    pub omega: f64,
    pub v_inf: [f64; 2],
    pub residual_norm: f64,
    pub tail_rates: TailRates,
}

#[derive(Clone, Debug)]
pub struct ProfileProblem {
    pub params: ModelParams,
    pub rest: RestState,
    pub grid: Grid,
    pub v_inf: [f64; 2],
    pub template: Field,
    pub template_dx: Field,
    /// manufactured forcing subtracted from the interior residual
    pub source: Option<Field>,
}

pub fn tanh_template(grid: &Grid, v_inf: [f64; 2], ell0: f64, center: f64) -> Field {
    (0..grid.n)
        .map(|j| {
            let s = 0.5 * (1.0 + ((grid.x(j) - center) / ell0).tanh());
            [s * v_inf[0], s * v_inf[1]]
        })
        .collect()
}

impl ProfileProblem {
    pub fn new(params: ModelParams, rest: RestState, grid: Grid) -> Self {
        let v_inf = rest.v_inf;
        let template = tanh_template(&grid, v_inf, 2.0, 0.0);
        let template_dx = crate::gridw::difference_derivative(&grid, &template);
        ProfileProblem { params, rest, grid, v_inf, template, template_dx, source: None }
    }

    pub fn with_template(mut self, template: Field) -> Self {
        self.template_dx = crate::gridw::difference_derivative(&self.grid, &template);
        self.template = template;
        self
    }

    pub fn with_template_shift(self, delta: f64) -> Self {
        let t = tanh_template(&self.grid, self.v_inf, 2.0, delta);
        self.with_template(t)
    }

    /// Rotates the gauge: right boundary value and template turn by theta.
    pub fn with_gauge_rotation(mut self, theta: f64) -> Self {
        self.v_inf = rotate(theta, self.v_inf);
        let t: Field = self.template.iter().map(|u| rotate(theta, *u)).collect();
        self.with_template(t)
    }

    pub fn with_source(mut self, source: Field) -> Self {
        self.source = Some(source);
        self
    }
}

/// Interior residual of the co-moving stationary system and the phase
/// residual (v - template, template_x)_{L^2}.
pub fn assemble_profile_residual(
    v: &[[f64; 2]],
    c: f64,
    problem: &ProfileProblem,
) -> Result<(Vec<f64>, f64), ProfileError> {
    let grid = &problem.grid;
    let n = grid.n;
    if v.len() != n {
        return Err(ProfileError::DimensionMismatch { got: v.len(), want: n });
    }
    let h = grid.h();
    let a = problem.params.a_matrix();
    let s = s_omega(problem.rest.omega);
    let mut r = vec![0.0; 2 * (n - 2)];
    for j in 1..n - 1 {
        let d2 = [
            (v[j + 1][0] - 2.0 * v[j][0] + v[j - 1][0]) / (h * h),
            (v[j + 1][1] - 2.0 * v[j][1] + v[j - 1][1]) / (h * h),
        ];
        let d1 = [(v[j + 1][0] - v[j - 1][0]) / (2.0 * h), (v[j + 1][1] - v[j - 1][1]) / (2.0 * h)];
        let f = evaluate_f(&problem.params, v[j]);
        for comp in 0..2 {
            let mut val = a[comp][0] * d2[0]
                + a[comp][1] * d2[1]
                + c * d1[comp]
                + s[comp][0] * v[j][0]
                + s[comp][1] * v[j][1]
                + f[comp];
            if let Some(src) = &problem.source {
                val -= src[j][comp];
            }
            r[2 * (j - 1) + comp] = val;
        }
    }
    let mut phase = 0.0;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let d = [v[j][0] - problem.template[j][0], v[j][1] - problem.template[j][1]];
        phase += w * (d[0] * problem.template_dx[j][0] + d[1] * problem.template_dx[j][1]);
    }
    phase *= h;
    Ok((r, phase))
}

/// Banded interior Jacobian of the PDE rows with respect to interior nodes.
fn pde_jacobian(v: &[[f64; 2]], c: f64, problem: &ProfileProblem) -> Banded<f64> {
    let grid = &problem.grid;
    let n = grid.n;
    let m = 2 * (n - 2);
    let h = grid.h();
    let a = problem.params.a_matrix();
    let s = s_omega(problem.rest.omega);
    let mut bm = Banded::zero(m, 3, 3);
    for j in 1..n - 1 {
        let row0 = 2 * (j - 1);
        let df = evaluate_df(&problem.params, v[j]);
        for p in 0..2 {
            for q in 0..2 {
                let center = -2.0 * a[p][q] / (h * h) + s[p][q] + df[p][q];
                bm.add_to(row0 + p, row0 + q, center);
                if j > 1 {
                    let left = a[p][q] / (h * h) - if p == q { c / (2.0 * h) } else { 0.0 };
                    bm.add_to(row0 + p, row0 - 2 + q, left);
                }
                if j < n - 2 {
                    let right = a[p][q] / (h * h) + if p == q { c / (2.0 * h) } else { 0.0 };
                    bm.add_to(row0 + p, row0 + 2 + q, right);
                }
            }
        }
    }
    bm
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol_newton: f64,
    pub max_iter: usize,
    pub max_halvings: u32,
    pub boundary_threshold: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol_newton: 1e-10, max_iter: 80, max_halvings: 30, boundary_threshold: 1e-5 }
    }
}

fn combined_norm(r: &[f64], phase: f64) -> f64 {
    r.iter().fold(phase.abs(), |acc, v| acc.max(v.abs()))
}

/// Damped Newton on (interior v, c). Guess defaults to the template with c=1.
pub fn solve_profile(
    problem: &ProfileProblem,
    guess: Option<(&[[f64; 2]], f64)>,
    opts: &SolveOptions,
) -> Result<WaveProfile, ProfileError> {
    let grid = &problem.grid;
    let n = grid.n;
    let h = grid.h();
    let mut v: Field = match guess {
        Some((g, _)) => {
            if g.len() != n {
                return Err(ProfileError::DimensionMismatch { got: g.len(), want: n });
            }
            g.to_vec()
        }
        None => problem.template.clone(),
    };
    let mut c = guess.map_or(1.0, |(_, c0)| c0);
    v[0] = [0.0, 0.0];
    v[n - 1] = problem.v_inf;

    let mut converged = false;
    let mut norm = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (r, phase) = assemble_profile_residual(&v, c, problem)?;
        norm = combined_norm(&r, phase);
        if norm < opts.tol_newton {
            converged = true;
            break;
        }
        let bm = pde_jacobian(&v, c, problem);
        let lu = match bm.factor() {
            Ok(lu) => lu,
            Err(LinalgError::Singular { .. }) => return Err(ProfileError::SingularJacobian),
            Err(_) => return Err(ProfileError::SingularJacobian),
        };
        // bordered system: [B d; e^T 0] (dv, dc) = -(r, phase)
        let m = 2 * (n - 2);
        let mut d = vec![0.0; m];
        for j in 1..n - 1 {
            for comp in 0..2 {
                d[2 * (j - 1) + comp] = (v[j + 1][comp] - v[j - 1][comp]) / (2.0 * h);
            }
        }
        let mut e = vec![0.0; m];
        for j in 1..n - 1 {
            for comp in 0..2 {
                e[2 * (j - 1) + comp] = h * problem.template_dx[j][comp];
            }
        }
        let y = lu.solve(&r);
        let z = lu.solve(&d);
        let ez: f64 = e.iter().zip(&z).map(|(a, b)| a * b).sum();
        if ez.abs() < 1e-300 {
            return Err(ProfileError::SingularJacobian);
        }
        let ey: f64 = e.iter().zip(&y).map(|(a, b)| a * b).sum();
        let dc = (phase - ey) / ez;
        // dv = -y - z*dc
        let mut accepted = false;
        let mut t = 1.0f64;
        for _ in 0..=opts.max_halvings {
            let mut v_try = v.clone();
            for j in 1..n - 1 {
                for comp in 0..2 {
                    let dvi = -y[2 * (j - 1) + comp] - z[2 * (j - 1) + comp] * dc;
                    v_try[j][comp] += t * dvi;
                }
            }
            let c_try = c + t * dc;
            let (r_try, phase_try) = assemble_profile_residual(&v_try, c_try, problem)?;
            let norm_try = combined_norm(&r_try, phase_try);
            if norm_try.is_finite() && norm_try < (1.0 - 1e-4 * t) * norm {
                v = v_try;
                c = c_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(ProfileError::NewtonDiverged { residual: norm });
        }
    }
    if !converged {
        let (r, phase) = assemble_profile_residual(&v, c, problem)?;
        norm = combined_norm(&r, phase);
        if norm >= opts.tol_newton {
            return Err(ProfileError::NewtonDiverged { residual: norm });
        }
    }

    let left10 = (v[10][0].powi(2) + v[10][1].powi(2)).sqrt();
    let right10 = {
        let d = [v[n - 11][0] - problem.v_inf[0], v[n - 11][1] - problem.v_inf[1]];
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    };
    if left10 > opts.boundary_threshold || right10 > opts.boundary_threshold {
        return Err(ProfileError::BoundaryTooTight { left: left10, right: right10 });
    }

    let tail_rates = fit_tail_rates(grid, &v, problem.v_inf);
    Ok(WaveProfile {
        grid: *grid,
        v_star: v,
        c,
        omega: problem.rest.omega,
        v_inf: problem.v_inf,
        residual_norm: norm,
        tail_rates,
    })
}

/// Log-linear fit of the exponential tails. Regression runs over the nodes
/// whose amplitude sits in a fixed value band, clear of both the nonlinear
/// core and the floating-point floor that literal outer-fraction windows hit
/// on wide domains.
pub fn fit_tail_rates(grid: &Grid, v: &[[f64; 2]], v_inf: [f64; 2]) -> TailRates {
    let amp_left: Vec<f64> = v.iter().map(|u| (u[0] * u[0] + u[1] * u[1]).sqrt()).collect();
    let amp_right: Vec<f64> =
        v.iter().map(|u| ((u[0] - v_inf[0]).powi(2) + (u[1] - v_inf[1]).powi(2)).sqrt()).collect();
    let left = fit_one_side(grid, &amp_left, true);
    let right = fit_one_side(grid, &amp_right, false);
    TailRates { left, right }
}

fn fit_one_side(grid: &Grid, amp: &[f64], left: bool) -> Option<f64> {
    let mut hi_band = 1e-4;
    for _ in 0..3 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in 1..grid.n - 1 {
            let x = grid.x(j);
            if (left && x >= 0.0) || (!left && x <= 0.0) {
                continue;
            }
            if amp[j] > 1e-12 && amp[j] < hi_band {
                xs.push(x);
                ys.push(amp[j].ln());
            }
        }
        if xs.len() >= 8 {
            return Some(lsq_slope(&xs, &ys));
        }
        hi_band *= 100.0;
    }
    None
}

fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Linear homotopy of quintic coefficients in n_steps, re-solving with the
/// previous profile as guess; failed steps bisect down to 1/64 of a step.
pub fn continue_profile(
    problem: &ProfileProblem,
    start: &WaveProfile,
    target: &ModelParams,
    n_steps: usize,
    opts: &SolveOptions,
) -> Result<Vec<(ModelParams, WaveProfile)>, ProfileError> {
    if n_steps == 0 {
        return Ok(vec![(problem.params.clone(), start.clone())]);
    }
    let (a0, q0) = match quintic_of(&problem.params) {
        Some(v) => v,
        None => return Err(ProfileError::UnsupportedContinuation),
    };
    let (a1, q1) = match quintic_of(target) {
        Some(v) => v,
        None => return Err(ProfileError::UnsupportedContinuation),
    };
    let blend = |t: f64| {
        ModelParams::quintic(
            a0 + (a1 - a0) * t,
            q0.beta0 + (q1.beta0 - q0.beta0) * t,
            q0.beta2 + (q1.beta2 - q0.beta2) * t,
            q0.beta4 + (q1.beta4 - q0.beta4) * t,
        )
    };
    let mut family: Vec<(ModelParams, WaveProfile)> = Vec::new();
    let mut t_cur = 0.0f64;
    let mut cur = start.clone();
    let min_step = 1.0 / (64.0 * n_steps as f64);
    while t_cur < 1.0 - 1e-12 {
        let mut step = (1.0 / n_steps as f64).min(1.0 - t_cur);
        loop {
            let t_try = t_cur + step;
            let params = blend(t_try);
            let rest = match crate::model::solve_rest_state(&params) {
                Ok(r) => r,
                Err(_) => {
                    step *= 0.5;
                    if step < min_step {
                        return Err(ProfileError::ContinuationStalled { at_fraction: t_cur, family });
                    }
                    continue;
                }
            };
            let v_inf = rest.v_inf;
            let sub = ProfileProblem {
                params: params.clone(),
                rest,
                grid: problem.grid,
                v_inf,
                template: problem.template.clone(),
                template_dx: problem.template_dx.clone(),
                source: problem.source.clone(),
            };
            match solve_profile(&sub, Some((&cur.v_star, cur.c)), opts) {
                Ok(p) => {
                    t_cur = t_try;
                    cur = p.clone();
                    family.push((params, p));
                    break;
                }
                Err(_) => {
                    step *= 0.5;
                    if step < min_step {
                        return Err(ProfileError::ContinuationStalled { at_fraction: t_cur, family });
                    }
                }
            }
        }
    }
    Ok(family)
}

fn quintic_of(params: &ModelParams) -> Option<(num_complex::Complex64, crate::model::QuinticCoeffs)> {
    match &params.nonlinearity {
        crate::model::Nonlinearity::Quintic(q) => Some((params.alpha, *q)),
        crate::model::Nonlinearity::Custom(_) => None,
    }
}

/// Problem whose exact discrete solution is the given smooth front shape at
/// speed c_true: the source is the interior residual of that shape.
pub fn manufactured_problem(
    params: ModelParams,
    rest: RestState,
    grid: Grid,
    ell0: f64,
    c_true: f64,
) -> (ProfileProblem, Field, f64) {
    let v_m = tanh_template(&grid, rest.v_inf, ell0, 0.0);
    let base = ProfileProblem::new(params, rest, grid).with_template(v_m.clone());
    let (r, _) = assemble_profile_residual(&v_m, c_true, &base).unwrap();
    let mut source = vec![[0.0; 2]; grid.n];
    for j in 1..grid.n - 1 {
        source[j] = [r[2 * (j - 1)], r[2 * (j - 1) + 1]];
    }
    (base.with_source(source), v_m, c_true)
}

/// Discrete derivative of the profile, the approximate kernel element of L.
pub fn profile_derivative(profile: &WaveProfile) -> Field {
    crate::gridw::difference_derivative(&profile.grid, &profile.v_star)
}
