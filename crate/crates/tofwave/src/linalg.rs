//! Banded LU with partial pivoting, generic over real and complex scalars,
//! plus the dense 4x4 complex eigensolver used for spatial characteristic
//! matrices.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular at column {col}")]
    Singular { col: usize },
    #[error("eigenvalue iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
}

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    /// modulus, used for pivot selection
    fn abs_val(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs_val(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs_val(self) -> f64 {
        self.norm()
    }
}

/// Band storage with room for the extra `kl` superdiagonals that partial
/// pivoting can create. Entry (i, j) lives at band row i - j + kl + ku.
#[derive(Clone, Debug)]
pub struct Banded<T> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> Banded<T> {
    pub fn zero(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        Banded { n, kl, ku, data: vec![T::zero(); rows * n] }
    }

    fn offset(&self) -> usize {
        self.kl + self.ku
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let r = i + self.offset() - j;
        r * self.n + j
    }

    fn in_stored_band(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i as isize, j as isize);
        i - j <= self.kl as isize && j - i <= (self.kl + self.ku) as isize
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i as isize, j as isize);
        i - j <= self.kl as isize && j - i <= self.ku as isize
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_stored_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band kl={} ku={}", self.kl, self.ku);
        let at = self.idx(i, j);
        self.data[at] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band kl={} ku={}", self.kl, self.ku);
        let at = self.idx(i, j);
        self.data[at] = self.data[at] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = T::zero();
            for j in lo..=hi {
                s = s + self.data[self.idx(i, j)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                y[j] = y[j] + self.data[self.idx(i, j)] * x[i];
            }
        }
        y
    }

    /// B = A^T A, bandwidth kl + ku on both sides.
    pub fn normal_matrix(&self) -> Banded<T> {
        let w = self.kl + self.ku;
        let mut b = Banded::zero(self.n, w, w);
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(self.n - 1);
            for j in lo..=hi {
                let klo = i.max(j).saturating_sub(self.ku.min(i.max(j)));
                let klo = klo.max(i.saturating_sub(self.ku)).max(j.saturating_sub(self.ku));
                let khi = (i + self.kl).min(j + self.kl).min(self.n - 1);
                let mut s = T::zero();
                for k in klo..=khi {
                    if self.in_band(k, i) && self.in_band(k, j) {
                        s = s + self.data[self.idx(k, i)] * self.data[self.idx(k, j)];
                    }
                }
                if s != T::zero() {
                    b.set(i, j, s);
                }
            }
        }
        b
    }

    /// C = self * other, with added bandwidths.
    pub fn multiply(&self, other: &Banded<T>) -> Banded<T> {
        assert_eq!(self.n, other.n);
        let mut out = Banded::zero(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            let klo = i.saturating_sub(self.kl);
            let khi = (i + self.ku).min(self.n - 1);
            for k in klo..=khi {
                let aik = self.data[self.idx(i, k)];
                if aik == T::zero() {
                    continue;
                }
                let jlo = k.saturating_sub(other.kl);
                let jhi = (k + other.ku).min(self.n - 1);
                for j in jlo..=jhi {
                    out.add_to(i, j, aik * other.data[other.idx(k, j)]);
                }
            }
        }
        out
    }

    /// LU with partial pivoting; consumes the matrix (fill rows are in place).
    pub fn factor(mut self) -> Result<BandedLu<T>, LinalgError> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let reach = kl.min(n - 1 - j);
            let mut p = 0usize;
            let mut best = self.data[self.idx(j, j)].abs_val();
            for q in 1..=reach {
                let cand = self.data[self.idx(j + q, j)].abs_val();
                if cand > best {
                    best = cand;
                    p = q;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular { col: j });
            }
            ipiv[j] = j + p;
            let row_hi = (j + kv).min(n - 1);
            if p > 0 {
                for col in j..=row_hi {
                    let a = self.idx(j, col);
                    let b = self.idx(j + p, col);
                    self.data.swap(a, b);
                }
            }
            let piv = self.data[self.idx(j, j)];
            for i in j + 1..=j + reach {
                let at = self.idx(i, j);
                let l = self.data[at] / piv;
                self.data[at] = l;
                for col in j + 1..=row_hi {
                    let f = self.data[self.idx(j, col)];
                    let target = self.idx(i, col);
                    self.data[target] = self.data[target] - l * f;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, data: self.data, ipiv })
    }
}

pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
    ipiv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    fn idx(&self, i: usize, j: usize) -> usize {
        (i + self.kl + self.ku - j) * self.n + j
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            if self.ipiv[j] != j {
                b.swap(j, self.ipiv[j]);
            }
            let reach = self.kl.min(n - 1 - j);
            let bj = b[j];
            for i in j + 1..=j + reach {
                b[i] = b[i] - self.data[self.idx(i, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            let lo = j.saturating_sub(kv);
            let x = b[j] / self.data[self.idx(j, j)];
            b[j] = x;
            for i in lo..j {
                b[i] = b[i] - self.data[self.idx(i, j)] * x;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves A^T x = b using the same factorization.
    pub fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        // U^T y = b, forward substitution
        for j in 0..n {
            let lo = j.saturating_sub(kv);
            let mut s = b[j];
            for i in lo..j {
                s = s - self.data[self.idx(i, j)] * b[i];
            }
            b[j] = s / self.data[self.idx(j, j)];
        }
        // L^T z = y with row interchanges replayed in reverse
        for j in (0..n).rev() {
            let reach = self.kl.min(n - 1 - j);
            let mut s = b[j];
            for i in j + 1..=j + reach {
                s = s - self.data[self.idx(i, j)] * b[i];
            }
            b[j] = s;
            if self.ipiv[j] != j {
                b.swap(j, self.ipiv[j]);
            }
        }
    }
}

pub type C = Complex64;

pub fn c(re: f64, im: f64) -> C {
    Complex64::new(re, im)
}

/// Characteristic polynomial coefficients of a 4x4: p(z) = z^4 - q1 z^3 - q2 z^2 - q3 z - q4.
fn char_poly_4x4(m: &[[C; 4]; 4]) -> [C; 4] {
    let mul = |a: &[[C; 4]; 4], b: &[[C; 4]; 4]| {
        let mut out = [[C::new(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut s = C::new(0.0, 0.0);
                for k in 0..4 {
                    s += a[i][k] * b[k][j];
                }
                out[i][j] = s;
            }
        }
        out
    };
    let tr = |a: &[[C; 4]; 4]| a[0][0] + a[1][1] + a[2][2] + a[3][3];
    let mut b = *m;
    let mut q = [C::new(0.0, 0.0); 4];
    for step in 0..4 {
        let a = if step == 0 { *m } else { mul(m, &b) };
        q[step] = tr(&a) / (step as f64 + 1.0);
        b = a;
        for d in 0..4 {
            b[d][d] -= q[step];
        }
    }
    q
}

fn eval_poly(q: &[C; 4], z: C) -> (C, C) {
    // p and p' via Horner on z^4 - q1 z^3 - q2 z^2 - q3 z - q4
    let coeffs = [C::new(1.0, 0.0), -q[0], -q[1], -q[2], -q[3]];
    let mut p = coeffs[0];
    let mut dp = C::new(0.0, 0.0);
    for &cf in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + cf;
    }
    (p, dp)
}

fn det_shifted(m: &[[C; 4]; 4], z: C) -> C {
    // |zI - M| by Gaussian elimination with partial pivoting
    let mut a = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = if i == j { z - m[i][j] } else { -m[i][j] };
        }
    }
    let mut det = C::new(1.0, 0.0);
    for col in 0..4 {
        let mut p = col;
        for r in col + 1..4 {
            if a[r][col].norm() > a[p][col].norm() {
                p = r;
            }
        }
        if a[p][col].norm() == 0.0 {
            return C::new(0.0, 0.0);
        }
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for cc in col..4 {
                a[r][cc] = a[r][cc] - f * a[col][cc];
            }
        }
    }
    det
}

fn frobenius(m: &[[C; 4]; 4]) -> f64 {
    m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// All four eigenvalues via Durand-Kerner on the characteristic quartic,
/// polished by Newton. Residual check |det(zI - M)| < 1e-10 * scale^4.
pub fn eigens_4x4(m: &[[C; 4]; 4]) -> Result<[C; 4], LinalgError> {
    let q = char_poly_4x4(m);
    let scale = frobenius(m).max(1.0);
    let radius = scale * 1.5 + 1.0;
    let seed = C::new(0.4, 0.9);
    let mut z = [C::new(0.0, 0.0); 4];
    let mut acc = C::new(1.0, 0.0);
    for zi in z.iter_mut() {
        acc *= seed;
        *zi = acc * radius;
    }
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..4 {
            let (p, _) = eval_poly(&q, z[i]);
            let mut denom = C::new(1.0, 0.0);
            for j in 0..4 {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                // collided iterates: nudge apart
                z[i] += C::new(1e-8 * radius, 1e-8 * radius);
                moved = f64::INFINITY;
                continue;
            }
            let step = p / denom;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * radius {
            break;
        }
    }
    // Newton polish handles clustered roots better than the simultaneous step
    for zi in z.iter_mut() {
        for _ in 0..10 {
            let (p, dp) = eval_poly(&q, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            *zi -= step;
            if step.norm() < 1e-16 * radius {
                break;
            }
        }
    }
    let tol = 1e-10 * scale.powi(4);
    let mut worst = 0.0f64;
    for &zi in z.iter() {
        worst = worst.max(det_shifted(m, zi).norm());
    }
    if worst > tol {
        return Err(LinalgError::NoConvergence { residual: worst });
    }
    z.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(z)
}

/// Null vector of (M - lambda I), by full-pivot elimination with the last
/// pivotless column as free variable.
pub fn eigenvector_4x4(m: &[[C; 4]; 4], lambda: C) -> [C; 4] {
    let mut a = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = m[i][j] - if i == j { lambda } else { C::new(0.0, 0.0) };
        }
    }
    let mut col_order = [0usize, 1, 2, 3];
    let mut rank = 0usize;
    for step in 0..3 {
        let mut best = (step, step, 0.0f64);
        for i in step..4 {
            for j in step..4 {
                let v = a[i][col_order[j]].norm();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 < 1e-13 {
            break;
        }
        a.swap(step, best.0);
        col_order.swap(step, best.1);
        for i in step + 1..4 {
            let f = a[i][col_order[step]] / a[step][col_order[step]];
            for j in step..4 {
                a[i][col_order[j]] = a[i][col_order[j]] - f * a[step][col_order[j]];
            }
        }
        rank += 1;
    }
    let mut x = [C::new(0.0, 0.0); 4];
    x[col_order[rank]] = C::new(1.0, 0.0);
    for i in (0..rank).rev() {
        let mut s = C::new(0.0, 0.0);
        for j in i + 1..4 {
            s += a[i][col_order[j]] * x[col_order[j]];
        }
        x[col_order[i]] = -s / a[i][col_order[i]];
    }
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= norm;
    }
    x
}

/// Roots of the characteristic quadratic of a complex 2x2.
pub fn eig2(m: [[C; 2]; 2]) -> (C, C) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    ((tr + disc) / 2.0, (tr - disc) / 2.0)
}

/// Smallest singular pairs of a real banded matrix by inverse iteration on
/// the normal matrix, with deflation for the second value.
pub fn smallest_singular_values(a: &Banded<f64>, count: usize, iters: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinalgError> {
    let ata = a.normal_matrix();
    let lu = ata.factor()?;
    let n = a.n;
    let mut values = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for which in 0..count {
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                // deterministic, loosely equidistributed start
                let t = (i * 2654435761usize.wrapping_add(which * 40503)) % 1000;
                t as f64 / 500.0 - 1.0 + 1e-3
            })
            .collect();
        orthogonalize(&mut x, &vectors);
        normalize(&mut x);
        for _ in 0..iters {
            let mut y = lu.solve(&x);
            orthogonalize(&mut y, &vectors);
            normalize(&mut y);
            x = y;
        }
        let ax = a.matvec(&x);
        let sigma = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.push(sigma);
        vectors.push(x);
    }
    Ok((values, vectors))
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d: f64 = x.iter().zip(b).map(|(a, c)| a * c).sum();
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi -= d * bi;
        }
    }
}

fn normalize(x: &mut [f64]) {
    let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> Banded<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Banded::zero(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
            // diagonal dominance not required, pivoting handles it; keep
            // the diagonal nonzero on average
            a.add_to(i, i, 3.0);
        }
        a
    }

    #[test]
    fn banded_solve_real() {
        let n = 200;
        let a = random_banded(n, 3, 3, 42);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x);
        let lu = a.clone().factor().unwrap();
        let got = lu.solve(&b);
        let err = got.iter().zip(&x).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn banded_solve_transpose() {
        let n = 150;
        let a = random_banded(n, 2, 4, 7);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.71).cos()).collect();
        let b = a.matvec_transpose(&x);
        let lu = a.clone().factor().unwrap();
        let mut got = b.clone();
        lu.solve_transpose_in_place(&mut got);
        let err = got.iter().zip(&x).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn banded_solve_complex() {
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Banded::<C>::zero(n, 3, 3);
        for i in 0..n {
            for j in i.saturating_sub(3)..=(i + 3).min(n - 1) {
                a.set(i, j, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
            a.add_to(i, i, c(4.0, 1.0));
        }
        let x: Vec<C> = (0..n).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
        let b = a.matvec(&x);
        let lu = a.factor().unwrap();
        let got = lu.solve(&b);
        let err = got.iter().zip(&x).map(|(g, e)| (g - e).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn singular_matrix_detected() {
        let mut a = Banded::<f64>::zero(10, 1, 1);
        for i in 0..10 {
            if i != 5 {
                a.set(i, i, 1.0);
            }
        }
        // column 5 entirely zero
        assert!(matches!(a.factor(), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut a = Banded::<f64>::zero(4, 1, 1);
        // zero diagonal but nonsingular: pairwise swaps
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(2, 3, 1.0);
        a.set(3, 2, 1.0);
        let lu = a.factor().unwrap();
        let got = lu.solve(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(got, vec![2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn multiply_matches_direct() {
        let a = random_banded(25, 2, 1, 11);
        let b = random_banded(25, 1, 3, 12);
        let ab = a.multiply(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = a.matvec(&b.matvec(&x));
        let via = ab.matvec(&x);
        for (d, v) in direct.iter().zip(&via) {
            assert!((d - v).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_matrix_matches_direct() {
        let a = random_banded(30, 2, 3, 99);
        let b = a.normal_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = a.matvec_transpose(&a.matvec(&x));
        let via = b.matvec(&x);
        for (d, v) in direct.iter().zip(&via) {
            assert!((d - v).abs() < 1e-12);
        }
    }

    #[test]
    fn eigens_diag() {
        let mut m = [[c(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            m[i][i] = c(i as f64 + 1.0, 0.0);
        }
        let ev = eigens_4x4(&m).unwrap();
        for (i, l) in ev.iter().enumerate() {
            assert!((l - c(i as f64 + 1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn eigens_limit_matrix_zero_mode() {
        // block matrix (0 I; -A^{-1}C+ -cA^{-1}) for A = alpha I with the
        // shipped sigma values; zero eigenvalue with eigenvector e2
        let (alpha, s1, s2, cc) = (0.5, -0.8, 6.0, 1.1882489824);
        let ai = 1.0 / alpha;
        let mut m = [[c(0.0, 0.0); 4]; 4];
        m[0][2] = c(1.0, 0.0);
        m[1][3] = c(1.0, 0.0);
        m[2][0] = c(-ai * s1, 0.0);
        m[3][0] = c(-ai * s2, 0.0);
        m[2][2] = c(-cc * ai, 0.0);
        m[3][3] = c(-cc * ai, 0.0);
        let ev = eigens_4x4(&m).unwrap();
        let zero = ev.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
        assert!(zero < 1e-11, "smallest |lambda| {zero}");
        let v = eigenvector_4x4(&m, c(0.0, 0.0));
        assert!((v[1].norm() - 1.0).abs() < 1e-10);
        for idx in [0, 2, 3] {
            assert!(v[idx].norm() < 1e-10);
        }
    }

    #[test]
    fn eigens_match_qr_oracle() {
        use nalgebra::DMatrix;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut m = [[c(0.0, 0.0); 4]; 4];
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                }
            }
            let ours = eigens_4x4(&m).unwrap();
            let nm = DMatrix::from_fn(4, 4, |i, j| m[i][j]);
            let mut theirs: Vec<C> = nm.eigenvalues().unwrap().iter().copied().collect();
            theirs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).norm() < 1e-8, "ours {a} theirs {b}");
            }
        }
    }

    #[test]
    fn eigens_repeated_roots() {
        // Jordan block with eigenvalue 2 repeated four times
        let mut m = [[c(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            m[i][i] = c(2.0, 0.0);
            if i + 1 < 4 {
                m[i][i + 1] = c(1.0, 0.0);
            }
        }
        let ev = eigens_4x4(&m).unwrap();
        for l in ev {
            // repeated roots are ill-conditioned; quartic root error scales
            // like residual^(1/4)
            assert!((l - c(2.0, 0.0)).norm() < 1e-2, "lambda {l}");
        }
    }

    #[test]
    fn eig2_closed_form() {
        let m = [[c(1.0, 0.0), c(2.0, 0.0)], [c(0.0, 0.0), c(3.0, 1.0)]];
        let (a, b) = eig2(m);
        let mut got = [a, b];
        got.sort_by(|p, q| (p.re, p.im).partial_cmp(&(q.re, q.im)).unwrap());
        assert!((got[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((got[1] - c(3.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn smallest_singular_of_diagonal() {
        let n = 40;
        let mut a = Banded::<f64>::zero(n, 1, 1);
        for i in 0..n {
            a.set(i, i, (i + 1) as f64 * 0.5);
        }
        let (vals, vecs) = smallest_singular_values(&a, 2, 60).unwrap();
        assert!((vals[0] - 0.5).abs() < 1e-10, "{vals:?}");
        assert!((vals[1] - 1.0).abs() < 1e-10, "{vals:?}");
        assert!((vecs[0][0].abs() - 1.0).abs() < 1e-8);
        assert!((vecs[1][1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn smallest_singular_matches_near_null() {
        // matrix with a known tiny singular value: D with one entry 1e-6
        let n = 50;
        let mut a = Banded::<f64>::zero(n, 1, 1);
        for i in 0..n {
            a.set(i, i, if i == 20 { 1e-6 } else { 1.0 + i as f64 * 0.01 });
            if i + 1 < n {
                a.set(i, i + 1, 0.2);
            }
        }
        let (vals, _) = smallest_singular_values(&a, 1, 80).unwrap();
        assert!(vals[0] < 2e-6, "{vals:?}");
    }
}
