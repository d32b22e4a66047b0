//! Uniform grids, the algebraic weight eta(x) = (x^2+1)^(1/2), discrete
//! weighted Sobolev norms, localized perturbation generators, and the decay
//! exponent bookkeeping m*.

use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Two-component field sampled on a grid, one [v1, v2] per node.
pub type Field = Vec<[f64; 2]>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 16 points, got {0}")]
    TooFew(usize),
    #[error("field has {got} nodes, grid has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("field contains non-finite values")]
    NonFiniteField,
    #[error("weighted norm spec: sobolev order {0} > 2")]
    BadOrder(u8),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self, GridError> {
        if n < 16 {
            return Err(GridError::TooFew(n));
        }
        Ok(Grid { half_width, n })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + self.h() * j as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn zero_field(&self) -> Field {
        vec![[0.0, 0.0]; self.n]
    }
}

pub fn weight_eta(x: f64) -> f64 {
    (x * x + 1.0).sqrt()
}

/// Interleaves a 2-vector field as [v1_0, v2_0, v1_1, v2_1, ...].
pub fn flatten(v: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len());
    for u in v {
        out.push(u[0]);
        out.push(u[1]);
    }
    out
}

pub fn unflatten(x: &[f64]) -> Field {
    assert!(x.len() % 2 == 0);
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct WeightedNormSpec {
    pub k: f64,
    pub sobolev_order: u8,
}

impl WeightedNormSpec {
    pub fn l2(k: f64) -> Self {
        WeightedNormSpec { k, sobolev_order: 0 }
    }
    pub fn h1(k: f64) -> Self {
        WeightedNormSpec { k, sobolev_order: 1 }
    }
}

/// Centered first difference, one-sided at the ends.
pub fn difference_derivative(grid: &Grid, v: &[[f64; 2]]) -> Field {
    let n = grid.n;
    let h = grid.h();
    let mut d = vec![[0.0; 2]; n];
    for j in 1..n - 1 {
        for c in 0..2 {
            d[j][c] = (v[j + 1][c] - v[j - 1][c]) / (2.0 * h);
        }
    }
    for c in 0..2 {
        d[0][c] = (v[1][c] - v[0][c]) / h;
        d[n - 1][c] = (v[n - 1][c] - v[n - 2][c]) / h;
    }
    d
}

/// Trapezoidal quadrature of sum_{j<=l} integral eta^{2k} |d^j v|^2, then sqrt.
pub fn weighted_norm(v: &[[f64; 2]], spec: WeightedNormSpec, grid: &Grid) -> Result<f64, GridError> {
    if v.len() != grid.n {
        return Err(GridError::DimensionMismatch { got: v.len(), want: grid.n });
    }
    if spec.sobolev_order > 2 {
        return Err(GridError::BadOrder(spec.sobolev_order));
    }
    let mut total = weighted_l2_sq(v, spec.k, grid)?;
    if spec.sobolev_order >= 1 {
        let d = difference_derivative(grid, v);
        total += weighted_l2_sq(&d, spec.k, grid)?;
        if spec.sobolev_order >= 2 {
            let d2 = difference_derivative(grid, &d);
            total += weighted_l2_sq(&d2, spec.k, grid)?;
        }
    }
    Ok(total.sqrt())
}

fn weighted_l2_sq(v: &[[f64; 2]], k: f64, grid: &Grid) -> Result<f64, GridError> {
    let h = grid.h();
    let mut sum = 0.0;
    for (j, val) in v.iter().enumerate() {
        if !(val[0].is_finite() && val[1].is_finite()) {
            return Err(GridError::NonFiniteField);
        }
        let w = weight_eta(grid.x(j)).powf(2.0 * k);
        let contrib = w * (val[0] * val[0] + val[1] * val[1]);
        // trapezoid: half weight on the two end nodes
        sum += if j == 0 || j == grid.n - 1 { 0.5 * contrib } else { contrib };
    }
    Ok(h * sum)
}

/// Weighted inner product (eta^k u, eta^k v)_{L^2}, trapezoidal.
pub fn weighted_inner(u: &[[f64; 2]], v: &[[f64; 2]], k: f64, grid: &Grid) -> f64 {
    let h = grid.h();
    let mut sum = 0.0;
    for j in 0..grid.n {
        let w = if k == 0.0 { 1.0 } else { weight_eta(grid.x(j)).powf(2.0 * k) };
        let contrib = w * (u[j][0] * v[j][0] + u[j][1] * v[j][1]);
        sum += if j == 0 || j == grid.n - 1 { 0.5 * contrib } else { contrib };
    }
    h * sum
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedShape {
    Plain,
    /// multiplied by (cos 0.7x, sin 0.7x) so the envelope is exact and the
    /// field is not accidentally orthogonal to the adjoint null vector
    Modulated,
}

/// u0 with |u0(x)| = amplitude * eta(x)^{-k_decay} exactly; the difference
/// derivative is bounded by (0.5 k_decay + 0.7) * amplitude * eta^{-k_decay}.
pub fn algebraic_perturbation(k_decay: f64, amplitude: f64, shape: SeedShape, grid: &Grid) -> Field {
    (0..grid.n)
        .map(|j| {
            let x = grid.x(j);
            let env = amplitude * weight_eta(x).powf(-k_decay);
            match shape {
                SeedShape::Plain => [env, 0.0],
                SeedShape::Modulated => {
                    let (s, c) = (0.7 * x).sin_cos();
                    [env * c, env * s]
                }
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct RateParams {
    pub m: f64,
    pub k: f64,
    pub mu: f64,
}

#[derive(Debug, Error)]
#[error("rate parameters must satisfy 9/2 < m and m + mu <= k, got m={m}, mu={mu}, k={k}")]
pub struct BadRates {
    pub m: f64,
    pub k: f64,
    pub mu: f64,
}

impl RateParams {
    pub fn new(m: f64, k: f64, mu: f64) -> Result<Self, BadRates> {
        if !(m > 4.5 && mu > 0.0 && m + mu <= k) {
            return Err(BadRates { m, k, mu });
        }
        Ok(RateParams { m, k, mu })
    }

    pub fn m_star(&self) -> f64 {
        m_star(self.m)
    }
}

/// m* = floor(m) + max(0, 2q - 1) where q = m - floor(m).
pub fn m_star(m: f64) -> f64 {
    let fl = m.floor();
    let q = m - fl;
    fl + (2.0 * q - 1.0).max(0.0)
}

/// Writes `x, v1, v2` rows with a header; floats in shortest round-trip form.
pub fn write_field_csv(path: &Path, grid: &Grid, v: &[[f64; 2]]) -> Result<(), GridError> {
    if v.len() != grid.n {
        return Err(GridError::DimensionMismatch { got: v.len(), want: grid.n });
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x,v1,v2")?;
    for (j, val) in v.iter().enumerate() {
        writeln!(f, "{},{},{}", grid.x(j), val[0], val[1])?;
    }
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<(Vec<f64>, Field), GridError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(GridError::Csv { line: i + 1, msg: format!("expected 3 columns, got {}", cols.len()) });
        }
        let parse = |s: &str| -> Result<f64, GridError> {
            s.trim().parse().map_err(|e| GridError::Csv { line: i + 1, msg: format!("{e}") })
        };
        xs.push(parse(cols[0])?);
        vals.push([parse(cols[1])?, parse(cols[2])?]);
    }
    Ok((xs, vals))
}
