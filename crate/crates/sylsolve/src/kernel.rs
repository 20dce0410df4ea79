//! Dense complex matrices and the factorization primitives used by the rest
//! of the crate.
//!
//! Storage is column-major. All loops are plain triple loops; no blocking.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Unit roundoff of binary64.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, " ({:.4e},{:.4e})", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds from column-major data, rejecting NaN and infinite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Dimension("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Row-major real entries; convenient in tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        Matrix::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(d: &[C64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, a: C64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b == ZERO {
                    continue;
                }
                let src = &self.data[k * self.rows..(k + 1) * self.rows];
                for (d, &a) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len());
        let mut y = vec![ZERO; self.rows];
        for (j, &b) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * b;
            }
        }
        y
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols).map(|j| self.col(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest modulus strictly below the diagonal.
    pub fn max_below_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.cols {
            for i in (j + 1)..self.rows {
                m = m.max(self[(i, j)].norm());
            }
        }
        m
    }

    pub fn max_above_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.cols {
            for i in 0..j.min(self.rows) {
                m = m.max(self[(i, j)].norm());
            }
        }
        m
    }

    pub fn zero_below_diagonal(&mut self) {
        for j in 0..self.cols {
            for i in (j + 1)..self.rows {
                self[(i, j)] = ZERO;
            }
        }
    }

    pub fn zero_above_diagonal(&mut self) {
        for j in 0..self.cols {
            for i in 0..j.min(self.rows) {
                self[(i, j)] = ZERO;
            }
        }
    }

    /// ‖A^H A − I‖_F.
    pub fn unitarity_residual(&self) -> f64 {
        self.adjoint().mul(self).sub(&Matrix::identity(self.cols)).frobenius()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// A complex plane rotation `G = [[c, s], [-conj(s), c]]` with `c` real and
/// nonnegative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneRotation {
    pub c: f64,
    pub s: C64,
}

impl PlaneRotation {
    pub const IDENTITY: PlaneRotation = PlaneRotation { c: 1.0, s: ZERO };

    /// `G * (x, y)`.
    #[inline]
    pub fn apply(&self, x: C64, y: C64) -> (C64, C64) {
        (x * self.c + self.s * y, -self.s.conj() * x + y * self.c)
    }

    /// `G^H * (x, y)`.
    #[inline]
    pub fn apply_adjoint(&self, x: C64, y: C64) -> (C64, C64) {
        (x * self.c - self.s * y, self.s.conj() * x + y * self.c)
    }

    /// Rows `p`, `q` of `m` ← G applied to them, for columns in `cols`.
    pub fn rotate_rows(&self, m: &mut Matrix, p: usize, q: usize, cols: std::ops::Range<usize>) {
        for j in cols {
            let (x, y) = self.apply(m[(p, j)], m[(q, j)]);
            m[(p, j)] = x;
            m[(q, j)] = y;
        }
    }

    /// Columns `p`, `q` of `m` ← multiplied on the right by G^H, for rows in `rows`.
    pub fn rotate_cols_adjoint(&self, m: &mut Matrix, p: usize, q: usize, rows: std::ops::Range<usize>) {
        for i in rows {
            let x = m[(i, p)];
            let y = m[(i, q)];
            m[(i, p)] = x * self.c + y * self.s.conj();
            m[(i, q)] = -x * self.s + y * self.c;
        }
    }
}

/// Rotation mapping `(a, b)` to `(r, 0)`.
pub fn make_givens(a: C64, b: C64) -> (PlaneRotation, C64) {
    if b == ZERO {
        return (PlaneRotation::IDENTITY, a);
    }
    let bn = b.norm();
    if a == ZERO {
        let s = b.conj() / bn;
        return (PlaneRotation { c: 0.0, s }, C64::new(bn, 0.0));
    }
    let an = a.norm();
    let rho = an.hypot(bn);
    let phase = a / an;
    let c = an / rho;
    let s = phase * b.conj() / rho;
    (PlaneRotation { c, s }, phase * rho)
}

/// Householder reflector `H = I − τ v v^H` with `H x = beta e_1`.
#[derive(Clone, Debug)]
pub struct Reflector {
    pub v: Vec<C64>,
    pub tau: f64,
}

impl Reflector {
    pub fn new(x: &[C64]) -> (Reflector, C64) {
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            return (Reflector { v: vec![ZERO; x.len()], tau: 0.0 }, ZERO);
        }
        let alpha = x[0];
        let an = alpha.norm();
        let phase = if an == 0.0 { ONE } else { alpha / an };
        let mut v = x.to_vec();
        v[0] = alpha + phase * xnorm;
        let tau = 1.0 / (xnorm * (xnorm + an));
        (Reflector { v, tau }, -phase * xnorm)
    }

    /// y ← H y for a slice aligned with `v`.
    #[inline]
    pub fn apply(&self, y: &mut [C64]) {
        if self.tau == 0.0 {
            return;
        }
        let mut w = ZERO;
        for (vi, yi) in self.v.iter().zip(y.iter()) {
            w += vi.conj() * yi;
        }
        let w = w * self.tau;
        for (vi, yi) in self.v.iter().zip(y.iter_mut()) {
            *yi -= vi * w;
        }
    }
}

/// Householder QR with optional column pivoting, kept in factored form.
#[derive(Clone, Debug)]
pub struct QrFactor {
    r: Matrix,
    reflectors: Vec<Reflector>,
    perm: Vec<usize>,
}

impl QrFactor {
    pub fn new(m: &Matrix, pivot: bool) -> QrFactor {
        let rows = m.rows;
        let cols = m.cols;
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..cols).collect();
        let steps = rows.min(cols);
        let mut reflectors = Vec::with_capacity(steps);
        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for j in k..cols {
                    let nrm: f64 = a.col(j)[k..].iter().map(|z| z.norm_sqr()).sum();
                    if nrm > best_norm {
                        best_norm = nrm;
                        best = j;
                    }
                }
                if best != k {
                    for i in 0..rows {
                        a.data.swap(i + k * rows, i + best * rows);
                    }
                    perm.swap(k, best);
                }
            }
            let (h, beta) = Reflector::new(&a.col(k)[k..]);
            {
                let col = a.col_mut(k);
                col[k] = beta;
                for z in col[k + 1..].iter_mut() {
                    *z = ZERO;
                }
            }
            for j in (k + 1)..cols {
                h.apply(&mut a.col_mut(j)[k..]);
            }
            reflectors.push(h);
        }
        QrFactor { r: a, reflectors, perm }
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// Column permutation: column `k` of `R` came from column `perm[k]` of the input.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// y ← Q^H y.
    pub fn apply_qh(&self, y: &mut [C64]) {
        for (k, h) in self.reflectors.iter().enumerate() {
            h.apply(&mut y[k..]);
        }
    }

    /// y ← Q y.
    pub fn apply_q(&self, y: &mut [C64]) {
        for (k, h) in self.reflectors.iter().enumerate().rev() {
            h.apply(&mut y[k..]);
        }
    }

    pub fn q(&self) -> Matrix {
        let n = self.r.rows;
        let mut q = Matrix::identity(n);
        for j in 0..n {
            self.apply_q(q.col_mut(j));
        }
        q
    }

    /// Numerical rank with threshold `tol` on |R_kk|.
    pub fn rank(&self, tol: f64) -> usize {
        let steps = self.r.rows.min(self.r.cols);
        (0..steps).take_while(|&k| self.r[(k, k)].norm() > tol).count()
    }

    pub fn min_abs_diagonal(&self) -> f64 {
        let steps = self.r.rows.min(self.r.cols);
        (0..steps).map(|k| self.r[(k, k)].norm()).fold(f64::INFINITY, f64::min)
    }

    /// Solves the square system `M x = b`; the caller has checked the rank.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.r.cols;
        assert_eq!(self.r.rows, n, "solve needs a square factor");
        let mut y = b.to_vec();
        self.apply_qh(&mut y);
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.r[(i, j)] * y[j];
            }
            y[i] = s / self.r[(i, i)];
        }
        let mut x = vec![ZERO; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Rank tolerance used throughout for "numerically invertible".
pub fn rank_tolerance(m: &Matrix, factor: f64) -> f64 {
    m.rows().max(m.cols()) as f64 * UNIT_ROUNDOFF * m.frobenius() * factor
}

/// Unpivoted Householder QR returning explicit factors.
pub fn householder_qr(m: &Matrix) -> (Matrix, Matrix) {
    let f = QrFactor::new(m, false);
    (f.q(), f.r.clone())
}

/// RQ factorization `M = R Q` of a square matrix, with `R` upper triangular.
pub fn rq(m: &Matrix) -> (Matrix, Matrix) {
    let n = m.rows();
    // (J M)^H = Q1 R1  =>  M = (J R1^H J) (J Q1^H)
    let jm_h = Matrix::from_fn(n, n, |i, j| m[(n - 1 - j, i)].conj());
    let (q1, r1) = householder_qr(&jm_h);
    let r = Matrix::from_fn(n, n, |i, j| r1[(n - 1 - j, n - 1 - i)].conj());
    let q = Matrix::from_fn(n, n, |i, j| q1[(j, n - 1 - i)].conj());
    (r, q)
}

/// Upper estimate of the spectral norm: the largest column 2-norm scaled by
/// sqrt(cols), capped by the Frobenius norm. The true norm lies within a
/// factor sqrt(cols) below the returned value.
pub fn two_norm_estimate(m: &Matrix) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let maxcol = (0..m.cols)
        .map(|j| m.col(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    (maxcol * (m.cols as f64).sqrt()).min(m.frobenius())
}

/// Euclidean norm of a slice.
pub fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        })
    }

    #[test]
    fn givens_identity_on_zero_second() {
        let (g, r) = make_givens(ONE, ZERO);
        assert_eq!(g, PlaneRotation::IDENTITY);
        assert_eq!(r, ONE);
    }

    #[test]
    fn givens_pure_swap() {
        let (g, r) = make_givens(ZERO, ONE);
        assert_eq!(g.c, 0.0);
        assert!((r.norm() - 1.0).abs() < 1e-15);
        let (x, y) = g.apply(ZERO, ONE);
        assert!((x - r).norm() < 1e-15 && y.norm() < 1e-15);
    }

    #[test]
    fn givens_three_four() {
        let (g, r) = make_givens(C64::new(3.0, 0.0), C64::new(4.0, 0.0));
        assert!((r.norm() - 5.0).abs() < 1e-14);
        let (x, y) = g.apply(C64::new(3.0, 0.0), C64::new(4.0, 0.0));
        assert!((x - r).norm() < 1e-14);
        assert!(y.norm() < 1e-14);
        assert!((g.c * g.c + g.s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn givens_complex_entries() {
        let a = C64::new(0.3, -1.2);
        let b = C64::new(-2.0, 0.7);
        let (g, r) = make_givens(a, b);
        let (x, y) = g.apply(a, b);
        assert!((x - r).norm() < 1e-14 && y.norm() < 1e-14);
        assert!(g.c >= 0.0);
        let (u, v) = g.apply_adjoint(x, y);
        assert!((u - a).norm() < 1e-14 && (v - b).norm() < 1e-14);
    }

    #[test]
    fn qr_identity_and_diagonal() {
        let (q, r) = householder_qr(&Matrix::identity(4));
        assert!(q.sub(&Matrix::identity(4)).max_abs() < 1e-15 || q.unitarity_residual() < 1e-15);
        for i in 0..4 {
            assert!((r[(i, i)].norm() - 1.0).abs() < 1e-15);
        }
        let d = Matrix::diag(&[C64::new(2.0, 0.0), C64::new(-3.0, 1.0), C64::new(0.5, 0.0)]);
        let (_, r) = householder_qr(&d);
        assert!(r.max_above_diagonal() < 1e-15);
        assert!(r.max_below_diagonal() == 0.0);
    }

    #[test]
    fn qr_random_reconstruction() {
        let m = random(5, 1);
        let (q, r) = householder_qr(&m);
        assert!(q.mul(&r).sub(&m).frobenius() <= 1e-14 * m.frobenius().max(1.0));
        assert!(q.unitarity_residual() < 1e-14);
        assert_eq!(r.max_below_diagonal(), 0.0);
    }

    #[test]
    fn qr_residuals_bounded_up_to_64() {
        let u = UNIT_ROUNDOFF;
        for (t, n) in [1usize, 2, 3, 5, 8, 13, 21, 34, 64].iter().cycle().take(100).enumerate() {
            let m = random(*n, 100 + t as u64);
            let (q, r) = householder_qr(&m);
            let nf = *n as f64;
            assert!(q.mul(&r).sub(&m).frobenius() <= 50.0 * nf * u * m.frobenius());
            assert!(q.unitarity_residual() <= 50.0 * nf * u);
        }
    }

    #[test]
    fn rq_reconstruction() {
        let m = random(6, 9);
        let (r, q) = rq(&m);
        assert_eq!(r.max_below_diagonal(), 0.0);
        assert!(r.mul(&q).sub(&m).frobenius() < 1e-13);
        assert!(q.unitarity_residual() < 1e-14);
    }

    #[test]
    fn pivoted_qr_rank_and_solve() {
        let mut m = random(4, 3);
        for i in 0..4 {
            let v = m[(i, 0)] + m[(i, 1)];
            m[(i, 3)] = v;
        }
        let f = QrFactor::new(&m, true);
        assert_eq!(f.rank(rank_tolerance(&m, 64.0)), 3);
        let a = random(4, 4);
        let x: Vec<C64> = (0..4).map(|i| C64::new(i as f64, 1.0)).collect();
        let b = a.mul_vec(&x);
        let f = QrFactor::new(&a, true);
        let y = f.solve(&b);
        for i in 0..4 {
            assert!((y[i] - x[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn two_norm_estimate_brackets() {
        assert_eq!(two_norm_estimate(&Matrix::zeros(3, 3)), 0.0);
        let e = two_norm_estimate(&Matrix::identity(5));
        assert!((1.0..=5f64.sqrt() + 1e-12).contains(&e));
        let d = Matrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]);
        let e = two_norm_estimate(&d);
        assert!((3.0..=3.0 * 3f64.sqrt() + 1e-12).contains(&e));
    }

    #[test]
    fn multiply_matches_definition() {
        let a = random(3, 5);
        let b = random(3, 6);
        let c = a.mul(&b);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = ZERO;
                for k in 0..3 {
                    s += a[(i, k)] * b[(k, j)];
                }
                assert!((s - c[(i, j)]).norm() < 1e-14);
            }
        }
    }
}
