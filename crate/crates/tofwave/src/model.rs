//! Model definition: the quintic complex Ginzburg-Landau nonlinearity in its
//! real 2x2 system form, the rest state at +infinity, and the standing
//! assumptions the rest of the lab relies on.

use num_complex::Complex64;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Nonlinearity evaluated on r = |u|^2. Returns pairs (g1, g2) of real and
/// imaginary parts of the complex coefficient function.
pub trait GFunction: Send + Sync {
    fn g(&self, r: f64) -> (f64, f64);
    fn dg(&self, r: f64) -> (f64, f64);
    fn d2g(&self, r: f64) -> (f64, f64);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuinticCoeffs {
    pub beta0: Complex64,
    pub beta2: Complex64,
    pub beta4: Complex64,
}

impl GFunction for QuinticCoeffs {
    fn g(&self, r: f64) -> (f64, f64) {
        let v = self.beta0 + self.beta2 * r + self.beta4 * (r * r);
        (v.re, v.im)
    }
    fn dg(&self, r: f64) -> (f64, f64) {
        let v = self.beta2 + self.beta4 * (2.0 * r);
        (v.re, v.im)
    }
    fn d2g(&self, _r: f64) -> (f64, f64) {
        (2.0 * self.beta4.re, 2.0 * self.beta4.im)
    }
}

#[derive(Clone)]
pub enum Nonlinearity {
    Quintic(QuinticCoeffs),
    Custom(Arc<dyn GFunction>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Quintic(q) => write!(f, "Quintic({:?})", q),
            Nonlinearity::Custom(_) => write!(f, "Custom(g)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub alpha: Complex64,
    pub nonlinearity: Nonlinearity,
    pub description: String,
    /// upper end of the r-range scanned for rest states (custom g only)
    pub r_max: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no root of g1 with g1' < 0 in (0, {r_max}]")]
    NoStableRoot { r_max: f64 },
    #[error("alpha has nonpositive real part: {0}")]
    BadAlpha(Complex64),
}

impl ModelParams {
    pub fn quintic(alpha: Complex64, beta0: Complex64, beta2: Complex64, beta4: Complex64) -> Self {
        ModelParams {
            alpha,
            nonlinearity: Nonlinearity::Quintic(QuinticCoeffs { beta0, beta2, beta4 }),
            description: String::new(),
            r_max: 10.0,
        }
    }

    /// Default parameter set shipped with the lab. Chosen so that a front
    /// exists (c > 0), all assumption margins are comfortable, and the zero
    /// state is damped strongly enough that weighted-norm transients clear
    /// the decay-fit windows at desk scale.
    pub fn default_set() -> Self {
        let mut p = Self::quintic(
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.6, 0.5),
            Complex64::new(1.6, 1.0),
            Complex64::new(-1.0, 1.0),
        );
        p.description = "default quintic set".into();
        p
    }

    pub fn g(&self, r: f64) -> (f64, f64) {
        match &self.nonlinearity {
            Nonlinearity::Quintic(q) => q.g(r),
            Nonlinearity::Custom(c) => c.g(r),
        }
    }

    pub fn dg(&self, r: f64) -> (f64, f64) {
        match &self.nonlinearity {
            Nonlinearity::Quintic(q) => q.dg(r),
            Nonlinearity::Custom(c) => c.dg(r),
        }
    }

    pub fn d2g(&self, r: f64) -> (f64, f64) {
        match &self.nonlinearity {
            Nonlinearity::Quintic(q) => q.d2g(r),
            Nonlinearity::Custom(c) => c.d2g(r),
        }
    }

    /// A = (a1, -a2; a2, a1), the real form of complex multiplication by alpha.
    pub fn a_matrix(&self) -> [[f64; 2]; 2] {
        let (a1, a2) = (self.alpha.re, self.alpha.im);
        [[a1, -a2], [a2, a1]]
    }
}

/// S_omega = (0, -omega; omega, 0).
pub fn s_omega(omega: f64) -> [[f64; 2]; 2] {
    [[0.0, -omega], [omega, 0.0]]
}

/// f(u) = g(|u|^2) u with g acting as the 2x2 rotation-like matrix.
pub fn evaluate_f(params: &ModelParams, u: [f64; 2]) -> [f64; 2] {
    let r = u[0] * u[0] + u[1] * u[1];
    let (g1, g2) = params.g(r);
    [g1 * u[0] - g2 * u[1], g2 * u[0] + g1 * u[1]]
}

/// Df(u) = g(|u|^2) + 2 (g'(|u|^2) u) u^T, with g' acting as a complex factor.
pub fn evaluate_df(params: &ModelParams, u: [f64; 2]) -> [[f64; 2]; 2] {
    let r = u[0] * u[0] + u[1] * u[1];
    let (g1, g2) = params.g(r);
    let (g1p, g2p) = params.dg(r);
    let m = [g1p * u[0] - g2p * u[1], g2p * u[0] + g1p * u[1]];
    [
        [g1 + 2.0 * m[0] * u[0], -g2 + 2.0 * m[0] * u[1]],
        [g2 + 2.0 * m[1] * u[0], g1 + 2.0 * m[1] * u[1]],
    ]
}

#[derive(Clone, Debug)]
pub struct RestState {
    /// squared modulus |v_inf|^2
    pub r_inf: f64,
    pub v_inf: [f64; 2],
    pub omega: f64,
    pub g1p_rinf: f64,
    /// alpha1 g1'(r_inf) + alpha2 g2'(r_inf), must be negative
    pub a3_combination: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// set when several stable roots exist and the largest was picked
    pub ambiguous_roots: Vec<f64>,
}

/// Finds r_inf > 0 with g1(r_inf) = 0 and g1'(r_inf) < 0, then omega = -g2(r_inf).
/// Quintic g1 is solved by the quadratic formula; custom g by scan + bisection.
pub fn solve_rest_state(params: &ModelParams) -> Result<RestState, ModelError> {
    let mut stable: Vec<f64> = Vec::new();
    match &params.nonlinearity {
        Nonlinearity::Quintic(q) => {
            let (a, b, c) = (q.beta4.re, q.beta2.re, q.beta0.re);
            if a == 0.0 {
                if b != 0.0 {
                    let r = -c / b;
                    if r > 0.0 && params.dg(r).0 < 0.0 {
                        stable.push(r);
                    }
                }
            } else {
                let disc = b * b - 4.0 * a * c;
                if disc > 0.0 {
                    let sq = disc.sqrt();
                    for r in [(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)] {
                        if r > 0.0 && params.dg(r).0 < 0.0 {
                            stable.push(r);
                        }
                    }
                }
            }
        }
        Nonlinearity::Custom(_) => {
            // sample for sign changes, refine by bisection
            let n = 4096;
            let dr = params.r_max / n as f64;
            let mut prev = params.g(dr * 1e-6).0;
            let mut rprev = dr * 1e-6;
            for i in 1..=n {
                let r = i as f64 * dr;
                let cur = params.g(r).0;
                if prev == 0.0 {
                    if params.dg(rprev).0 < 0.0 {
                        stable.push(rprev);
                    }
                } else if prev * cur < 0.0 {
                    let (mut lo, mut hi) = (rprev, r);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if params.g(lo).0 * params.g(mid).0 <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    if params.dg(root).0 < 0.0 {
                        stable.push(root);
                    }
                }
                prev = cur;
                rprev = r;
            }
        }
    }
    if stable.is_empty() {
        return Err(ModelError::NoStableRoot { r_max: params.r_max });
    }
    stable.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let r_inf = *stable.last().unwrap();
    let ambiguous_roots = if stable.len() > 1 { stable.clone() } else { Vec::new() };
    let (_, g2v) = params.g(r_inf);
    let omega = -g2v;
    let (g1p, g2p) = params.dg(r_inf);
    Ok(RestState {
        r_inf,
        v_inf: [r_inf.sqrt(), 0.0],
        omega,
        g1p_rinf: g1p,
        a3_combination: params.alpha.re * g1p + params.alpha.im * g2p,
        sigma1: 2.0 * g1p * r_inf,
        sigma2: 2.0 * g2p * r_inf,
        ambiguous_roots,
    })
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    /// alpha1 > 0 and g1(0) < 0
    pub a1: bool,
    pub a1_alpha_margin: f64,
    pub a1_zero_damping: f64,
    /// g1'(r_inf) < 0
    pub a2: bool,
    pub a2_margin: f64,
    /// alpha1 g1'(r_inf) + alpha2 g2'(r_inf) < 0
    pub a3: bool,
    pub a3_margin: f64,
    /// point-spectrum condition, only checkable by the spectral probe
    pub a4_note: &'static str,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.a1 && self.a2 && self.a3
    }
}

pub fn validate_assumptions(params: &ModelParams, rest: &RestState) -> AssumptionReport {
    let (g10, _) = params.g(0.0);
    let a1_alpha = params.alpha.re;
    AssumptionReport {
        a1: a1_alpha > 0.0 && g10 < 0.0,
        a1_alpha_margin: a1_alpha,
        a1_zero_damping: -g10,
        a2: rest.g1p_rinf < 0.0,
        a2_margin: -rest.g1p_rinf,
        a3: rest.a3_combination < 0.0,
        a3_margin: -rest.a3_combination,
        a4_note: "requires spectral probe (point_spectrum_probe)",
    }
}

/// Rotation by angle theta, the gauge action on 2-vectors.
pub fn rotate(theta: f64, u: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * u[0] - s * u[1], s * u[0] + c * u[1]]
}
