//! Periodic Schur decomposition of signed factor sequences.
//!
//! A sequence `A_0, …, A_{p-1}` with exponents `σ_m ∈ {+1, −1}` lives on a
//! cycle of `p` spaces. Factor `m` connects space `m` and space `m+1 (mod p)`:
//!
//! * `σ_m = +1`: `T_m = U_{m+1}^H A_m U_m`,
//! * `σ_m = −1`: `T_m = U_m^H A_m U_{m+1}`,
//!
//! and every `T_m` is upper triangular. The formal product
//! `A_{p-1}^{σ_{p-1}} ⋯ A_0^{σ_0}` has eigenvalues
//! `∏_{σ=+1} (T_m)_ii / ∏_{σ=−1} (T_m)_ii`.
//!
//! The algorithm is a Hessenberg-triangular reduction followed by implicitly
//! single-shifted periodic QZ sweeps in complex arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{householder_qr, make_givens, rq, Matrix, PlaneRotation, QrFactor, C64, ONE, UNIT_ROUNDOFF, ZERO};

const EXCEPTIONAL_EVERY: usize = 10;
const ITER_PER_EIGENVALUE: usize = 30;
const SHIFT_SEED: u64 = 0x5eed_cafe;

#[derive(Clone, Debug)]
pub struct SignedSequence {
    pub factors: Vec<Matrix>,
    pub signature: Vec<i8>,
}

impl SignedSequence {
    pub fn new(factors: Vec<Matrix>, signature: Vec<i8>) -> Result<Self> {
        if factors.len() != signature.len() {
            return Err(Error::Dimension("factor and signature lengths differ".into()));
        }
        if factors.is_empty() {
            return Err(Error::Dimension("empty factor sequence".into()));
        }
        let n = factors[0].rows();
        if factors.iter().any(|f| f.rows() != n || f.cols() != n) {
            return Err(Error::Dimension("factors must be square of equal size".into()));
        }
        if signature.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Dimension("signature entries must be +1 or -1".into()));
        }
        Ok(SignedSequence { factors, signature })
    }

    /// `N_r^{-1} M_r ⋯ N_1^{-1} M_1`, stored as `[M_1, N_1, M_2, N_2, …]`.
    pub fn alternating(m: &[Matrix], n: &[Matrix]) -> Result<Self> {
        if m.len() != n.len() {
            return Err(Error::Dimension("alternating sequence needs equal counts".into()));
        }
        let mut factors = Vec::with_capacity(2 * m.len());
        let mut signature = Vec::with_capacity(2 * m.len());
        for (a, b) in m.iter().zip(n) {
            factors.push(a.clone());
            signature.push(1);
            factors.push(b.clone());
            signature.push(-1);
        }
        SignedSequence::new(factors, signature)
    }

    pub fn n(&self) -> usize {
        self.factors[0].rows()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Row and column space of factor `m`.
    pub fn spaces_of(&self, m: usize) -> (usize, usize) {
        spaces_of(&self.signature, m)
    }

    /// Regroups the sequence as `(M_k, N_k)` pairs of a product of the form
    /// `N_q^{-1} M_q ⋯ N_1^{-1} M_1`, padding with identities where two
    /// factors of equal sign are adjacent. Cyclic rotation is allowed, so
    /// only quantities invariant under it should be derived from the result.
    pub fn as_pairs(&self) -> (Vec<Matrix>, Vec<Matrix>) {
        let p = self.len();
        let n = self.n();
        let start = self.signature.iter().position(|&s| s > 0).unwrap_or(0);
        let mut ms = Vec::new();
        let mut ns = Vec::new();
        let mut j = 0;
        while j < p {
            let idx = (start + j) % p;
            if self.signature[idx] > 0 {
                ms.push(self.factors[idx].clone());
                let next = (start + j + 1) % p;
                if j + 1 < p && self.signature[next] < 0 {
                    ns.push(self.factors[next].clone());
                    j += 2;
                } else {
                    ns.push(Matrix::identity(n));
                    j += 1;
                }
            } else {
                ms.push(Matrix::identity(n));
                ns.push(self.factors[idx].clone());
                j += 1;
            }
        }
        (ms, ns)
    }
}

fn spaces_of(signature: &[i8], m: usize) -> (usize, usize) {
    let p = signature.len();
    let next = (m + 1) % p;
    if signature[m] > 0 {
        (next, m)
    } else {
        (m, next)
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicSchurForm {
    pub signature: Vec<i8>,
    /// `U_0, …, U_{p-1}`.
    pub spaces: Vec<Matrix>,
    /// Upper triangular `T_0, …, T_{p-1}`.
    pub factors: Vec<Matrix>,
    /// Frobenius norms of the input factors.
    pub norms: Vec<f64>,
    pub iterations: usize,
}

impl PeriodicSchurForm {
    pub fn n(&self) -> usize {
        self.factors.first().map(|f| f.rows()).unwrap_or(0)
    }

    pub fn spaces_of(&self, m: usize) -> (usize, usize) {
        spaces_of(&self.signature, m)
    }

    /// For an alternating sequence: `Z_k` (1-based `k`).
    pub fn z(&self, k: usize) -> &Matrix {
        let p = self.spaces.len();
        &self.spaces[(2 * (k - 1)) % p]
    }

    /// For an alternating sequence: `Q_k` (1-based `k`).
    pub fn q(&self, k: usize) -> &Matrix {
        &self.spaces[2 * (k - 1) + 1]
    }

    /// Largest `‖U_row^H A_m U_col − T_m‖_F / ‖A_m‖_F` over the sequence.
    pub fn reconstruction_residual(&self, seq: &SignedSequence) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, a) in seq.factors.iter().enumerate() {
            let (r, c) = self.spaces_of(m);
            let t = self.spaces[r].adjoint().mul(a).mul(&self.spaces[c]);
            let res = t.sub(&self.factors[m]).frobenius() / a.frobenius().max(f64::MIN_POSITIVE);
            worst = worst.max(res);
        }
        worst
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.spaces.iter().map(|u| u.unitarity_residual()).fold(0.0, f64::max)
    }

    pub fn max_subdiagonal(&self) -> f64 {
        self.factors.iter().map(|t| t.max_below_diagonal()).fold(0.0, f64::max)
    }
}

/// `m · 2^e`, kept normalized so products of many factors neither overflow
/// nor underflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub m: C64,
    pub e: i32,
}

fn frexp(x: f64) -> i32 {
    if x == 0.0 || !x.is_finite() {
        return 0;
    }
    let bits = x.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        frexp(x * 2f64.powi(54)) - 54
    } else {
        exp - 1022
    }
}

pub(crate) fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { m: ZERO, e: 0 };
    pub const ONE: Scaled = Scaled { m: ONE, e: 0 };

    pub fn new(z: C64) -> Scaled {
        Scaled { m: z, e: 0 }.normalized()
    }

    fn normalized(self) -> Scaled {
        let big = self.m.re.abs().max(self.m.im.abs());
        if big == 0.0 {
            return Scaled::ZERO;
        }
        let k = frexp(big);
        Scaled { m: C64::new(ldexp(self.m.re, -k), ldexp(self.m.im, -k)), e: self.e + k }
    }

    pub fn mul(self, o: Scaled) -> Scaled {
        Scaled { m: self.m * o.m, e: self.e + o.e }.normalized()
    }

    pub fn mul_c(self, z: C64) -> Scaled {
        self.mul(Scaled::new(z))
    }

    pub fn is_zero(self) -> bool {
        self.m == ZERO
    }

    pub fn conj(self) -> Scaled {
        Scaled { m: self.m.conj(), e: self.e }
    }

    pub fn to_c64(self) -> C64 {
        C64::new(ldexp(self.m.re, self.e), ldexp(self.m.im, self.e))
    }
}

/// Rescales a group of values to a shared exponent (the largest); tiny
/// members may flush to zero.
pub fn common_scale(vals: &[Scaled]) -> Vec<C64> {
    let emax = vals.iter().filter(|v| !v.is_zero()).map(|v| v.e).max().unwrap_or(0);
    vals.iter()
        .map(|v| C64::new(ldexp(v.m.re, v.e - emax), ldexp(v.m.im, v.e - emax)))
        .collect()
}

/// Projective pair `(num, den)` normalized to unit 2-norm.
pub fn normalize_pair(num: Scaled, den: Scaled) -> (C64, C64) {
    let v = common_scale(&[num, den]);
    let nrm = v[0].norm().hypot(v[1].norm());
    if nrm == 0.0 {
        (ZERO, ZERO)
    } else {
        (v[0] / nrm, v[1] / nrm)
    }
}

struct Engine {
    p: usize,
    n: usize,
    sig: Vec<i8>,
    f: Vec<Matrix>,
    u: Vec<Matrix>,
    tolf: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Engine {
    fn rows_of(&self, m: usize) -> usize {
        spaces_of(&self.sig, m).0
    }

    fn cols_of(&self, m: usize) -> usize {
        spaces_of(&self.sig, m).1
    }

    fn touching(&self, s: usize) -> Vec<usize> {
        if self.p == 1 {
            vec![0]
        } else {
            vec![(s + self.p - 1) % self.p, s]
        }
    }

    /// Basis change `U = G^H` on indices `(i, i+1)` of space `s`.
    fn rotate(&mut self, s: usize, i: usize, g: PlaneRotation) {
        let n = self.n;
        g.rotate_cols_adjoint(&mut self.u[s], i, i + 1, 0..n);
        for m in self.touching(s) {
            if self.rows_of(m) == s {
                g.rotate_rows(&mut self.f[m], i, i + 1, 0..n);
            }
            if self.cols_of(m) == s {
                g.rotate_cols_adjoint(&mut self.f[m], i, i + 1, 0..n);
            }
        }
    }

    fn transform_full(&mut self, s: usize, w: &Matrix) {
        self.u[s] = self.u[s].mul(w);
        for m in self.touching(s) {
            if self.rows_of(m) == s {
                self.f[m] = w.adjoint().mul(&self.f[m]);
            }
            if self.cols_of(m) == s {
                self.f[m] = self.f[m].mul(w);
            }
        }
    }

    /// Removes the entry `(i+1, i)` of factor `m` with a rotation on space `t`.
    fn eliminate(&mut self, m: usize, i: usize, t: usize) {
        let f = &self.f[m];
        let g = if self.rows_of(m) == t {
            make_givens(f[(i, i)], f[(i + 1, i)]).0
        } else {
            let x = f[(i + 1, i)];
            let y = f[(i + 1, i + 1)];
            let g0 = make_givens(y.conj(), x.conj()).0;
            PlaneRotation { c: g0.c, s: -g0.s.conj() }
        };
        self.rotate(t, i, g);
        self.f[m][(i + 1, i)] = ZERO;
    }

    /// After a rotation on space 1 at `(i, i+1)`, restores triangularity of
    /// factors `1..p` in order. Stops early once no fill appears.
    fn chase_forward(&mut self, i: usize) {
        for m in 1..self.p {
            if self.f[m][(i + 1, i)] == ZERO {
                return;
            }
            let t = (m + 1) % self.p;
            self.eliminate(m, i, t);
        }
    }

    /// After a rotation on space 0 at `(i, i+1)`, restores triangularity of
    /// factors `p-1, …, 1` in that order.
    fn chase_backward(&mut self, i: usize) {
        for m in (1..self.p).rev() {
            if self.f[m][(i + 1, i)] == ZERO {
                return;
            }
            self.eliminate(m, i, m);
        }
    }

    fn hessenberg_triangular(&mut self) {
        let (p, n) = (self.p, self.n);
        for m in (1..p).rev() {
            // act on space m, the side shared with factor m-1
            if self.cols_of(m) == m {
                let (r, q) = rq(&self.f[m]);
                let w = q.adjoint();
                self.transform_full(m, &w);
                self.f[m] = r;
            } else {
                let (q, r) = householder_qr(&self.f[m]);
                self.transform_full(m, &q);
                self.f[m] = r;
            }
        }
        let rs = 1 % p;
        for j in 0..n.saturating_sub(2) {
            for i in ((j + 2)..n).rev() {
                let h = &self.f[0];
                if h[(i, j)] == ZERO {
                    continue;
                }
                let g = make_givens(h[(i - 1, j)], h[(i, j)]).0;
                self.rotate(rs, i - 1, g);
                self.f[0][(i, j)] = ZERO;
                self.chase_forward(i - 1);
            }
        }
    }

    fn h_negligible(&self, k: usize) -> bool {
        let h = &self.f[0];
        let sub = h[(k, k - 1)].norm();
        if sub == 0.0 {
            return true;
        }
        let mut scale = h[(k - 1, k - 1)].norm() + h[(k, k)].norm();
        if scale == 0.0 {
            scale = self.tolf[0] / UNIT_ROUNDOFF / (self.n as f64);
        }
        sub <= UNIT_ROUNDOFF * scale
    }

    /// Some triangular factor of sign `sign` has a negligible `(k, k)`; it
    /// is set to an exact zero.
    fn zero_diag(&mut self, k: usize, sign: i8) -> bool {
        let mut hit = false;
        for m in 1..self.p {
            if self.sig[m] == sign {
                let v = self.f[m][(k, k)].norm();
                if v <= self.tolf[m] {
                    self.f[m][(k, k)] = ZERO;
                    hit = true;
                }
            }
        }
        hit
    }

    fn has_zero_diag(&self, k: usize, sign: i8) -> bool {
        (1..self.p).any(|m| self.sig[m] == sign && self.f[m][(k, k)].norm() <= self.tolf[m])
    }

    fn diag_ratio(&self, k: usize) -> (Scaled, Scaled) {
        let mut num = Scaled::ONE;
        let mut den = Scaled::ONE;
        for m in 1..self.p {
            if self.sig[m] > 0 {
                num = num.mul_c(self.f[m][(k, k)]);
            } else {
                den = den.mul_c(self.f[m][(k, k)]);
            }
        }
        (num, den)
    }

    /// Shift from the trailing 2x2 blocks of the factors.
    fn wilkinson(&self, hi: usize) -> (Scaled, Scaled) {
        if self.has_zero_diag(hi - 1, -1) {
            return self.rayleigh(hi);
        }
        let lo = hi - 1;
        let h = &self.f[0];
        let mut mm = [[h[(lo, lo)], h[(lo, hi)]], [h[(hi, lo)], h[(hi, hi)]]];
        let mut me = 0i32;
        let mut d = Scaled::ONE;
        for m in (1..self.p).rev() {
            let t = &self.f[m];
            let (a, b, c) = (t[(lo, lo)], t[(lo, hi)], t[(hi, hi)]);
            let blk = if self.sig[m] > 0 {
                [[a, b], [ZERO, c]]
            } else {
                d = d.mul_c(a * c);
                [[c, -b], [ZERO, a]]
            };
            let prod = [
                [mm[0][0] * blk[0][0], mm[0][0] * blk[0][1] + mm[0][1] * blk[1][1]],
                [mm[1][0] * blk[0][0], mm[1][0] * blk[0][1] + mm[1][1] * blk[1][1]],
            ];
            let big = prod.iter().flatten().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
            if big == 0.0 {
                mm = prod;
                continue;
            }
            let k = frexp(big);
            me += k;
            mm = prod.map(|row| row.map(|z| C64::new(ldexp(z.re, -k), ldexp(z.im, -k))));
        }
        if d.is_zero() {
            return self.rayleigh(hi);
        }
        let (a, b, c, dd) = (mm[0][0], mm[0][1], mm[1][0], mm[1][1]);
        let half = (a - dd) * 0.5;
        let disc = (half * half + b * c).sqrt();
        let mu1 = dd + half + disc;
        let mu2 = dd + half - disc;
        let mu = if (mu1 - dd).norm() <= (mu2 - dd).norm() { mu1 } else { mu2 };
        (Scaled { m: mu, e: me }.normalized(), d)
    }

    /// `H(hi,hi) · W(hi,hi)` as a projective pair.
    fn rayleigh(&self, hi: usize) -> (Scaled, Scaled) {
        let (num, den) = self.diag_ratio(hi);
        (num.mul_c(self.f[0][(hi, hi)]), den)
    }

    fn exceptional(&mut self, hi: usize) -> (Scaled, Scaled) {
        let (num, den) = self.rayleigh(hi);
        let r: f64 = self.rng.random_range(0.25..1.0);
        let th: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
        let z = C64::from_polar(r, th);
        if num.is_zero() || den.is_zero() {
            (Scaled::new(z), Scaled::ONE)
        } else {
            (num.mul_c(ONE + z), den)
        }
    }

    fn sweep(&mut self, lo: usize, hi: usize, shift: (Scaled, Scaled)) {
        let (mun, mud) = shift;
        let (wn, wd) = self.diag_ratio(lo);
        let h00 = self.f[0][(lo, lo)];
        let h10 = self.f[0][(lo + 1, lo)];
        let t1 = wn.mul(mud).mul_c(h00);
        let t2 = mun.mul(wd);
        let t3 = wn.mul(mud).mul_c(h10);
        let v = common_scale(&[t1, t2, t3]);
        let x0 = v[0] - v[1];
        let x1 = v[2];
        let rs = 1 % self.p;
        for k in lo..hi {
            let g = if k == lo {
                make_givens(x0, x1).0
            } else {
                let h = &self.f[0];
                make_givens(h[(k, k - 1)], h[(k + 1, k - 1)]).0
            };
            self.rotate(rs, k, g);
            if k > lo {
                self.f[0][(k + 1, k - 1)] = ZERO;
            }
            self.chase_forward(k);
        }
    }

    fn deflate_top(&mut self, lo: usize) {
        let h = &self.f[0];
        let g = make_givens(h[(lo, lo)], h[(lo + 1, lo)]).0;
        self.rotate(1 % self.p, lo, g);
        self.f[0][(lo + 1, lo)] = ZERO;
        self.chase_forward(lo);
    }

    /// Zeros `H(k+1, k)` with a rotation on space 0 and chases backwards.
    fn deflate_from_right(&mut self, k: usize) {
        let h = &self.f[0];
        let x = h[(k + 1, k)];
        let y = h[(k + 1, k + 1)];
        let g0 = make_givens(y.conj(), x.conj()).0;
        let g = PlaneRotation { c: g0.c, s: -g0.s.conj() };
        self.rotate(0, k, g);
        self.f[0][(k + 1, k)] = ZERO;
        self.chase_backward(k);
    }

    fn iterate(&mut self) -> std::result::Result<usize, (usize, usize)> {
        let n = self.n;
        if n <= 1 {
            return Ok(0);
        }
        let cap = ITER_PER_EIGENVALUE * n;
        let mut total = 0usize;
        let mut since = 0usize;
        let mut hi = n - 1;
        while hi > 0 {
            let mut lo = 0;
            for k in (1..=hi).rev() {
                if self.h_negligible(k) {
                    self.f[0][(k, k - 1)] = ZERO;
                    lo = k;
                    break;
                }
            }
            if lo == hi {
                hi -= 1;
                since = 0;
                continue;
            }
            // Exact zeros on triangular diagonals: −1 zeros leave through
            // the top, a +1 zero one above the bottom through the bottom.
            if self.zero_diag(lo, -1) {
                self.deflate_top(lo);
                continue;
            }
            if self.zero_diag(hi, -1) || self.zero_diag(hi - 1, 1) {
                self.deflate_from_right(hi - 1);
                continue;
            }
            since += 1;
            total += 1;
            if since > cap {
                return Err((total, hi + 1));
            }
            let shift = if self.zero_diag(hi, 1) {
                (Scaled::ZERO, Scaled::ONE)
            } else if since % EXCEPTIONAL_EVERY == 0 {
                self.exceptional(hi)
            } else {
                self.wilkinson(hi)
            };
            self.sweep(lo, hi, shift);
        }
        Ok(total)
    }
}

/// Hessenberg-triangular reduction plus periodic QZ.
pub fn periodic_schur(seq: &SignedSequence) -> Result<PeriodicSchurForm> {
    let p = seq.len();
    let n = seq.n();
    let norms: Vec<f64> = seq.factors.iter().map(|f| f.frobenius()).collect();

    // Work on a rotated copy whose first factor has exponent +1; an all −1
    // sequence gets a leading identity.
    let shift = seq.signature.iter().position(|&s| s > 0);
    let (factors, sig, padded) = match shift {
        Some(f) => {
            let factors: Vec<Matrix> = (0..p).map(|j| seq.factors[(j + f) % p].clone()).collect();
            let sig: Vec<i8> = (0..p).map(|j| seq.signature[(j + f) % p]).collect();
            (factors, sig, false)
        }
        None => {
            let mut factors = vec![Matrix::identity(n)];
            factors.extend(seq.factors.iter().cloned());
            let mut sig = vec![1i8];
            sig.extend(seq.signature.iter().copied());
            (factors, sig, true)
        }
    };
    let q = factors.len();
    let tolf: Vec<f64> = factors.iter().map(|f| n as f64 * UNIT_ROUNDOFF * f.frobenius()).collect();
    let mut eng = Engine {
        p: q,
        n,
        sig,
        f: factors,
        u: vec![Matrix::identity(n); q],
        tolf,
        rng: ChaCha8Rng::seed_from_u64(SHIFT_SEED),
    };
    eng.hessenberg_triangular();
    let outcome = eng.iterate();
    for t in eng.f.iter_mut() {
        if outcome.is_ok() {
            t.zero_below_diagonal();
        }
    }

    let (spaces, tri) = if padded {
        // T_0 = U_1^H U_0 is a unitary diagonal Φ; fold it into the factor
        // that uses space 0 and identify U_0 with U_1.
        let d: Vec<C64> = (0..n).map(|i| eng.f[0][(i, i)]).collect();
        let phi = Matrix::diag(&d);
        let mut spaces: Vec<Matrix> = eng.u[1..].to_vec();
        let mut tri: Vec<Matrix> = eng.f[1..].to_vec();
        let last = tri.len() - 1;
        // factor p-1 (σ = −1) has columns in space 0 = U_1 Φ
        tri[last] = tri[last].mul(&phi.adjoint());
        spaces[0] = eng.u[1].clone();
        (spaces, tri)
    } else {
        let f = shift.unwrap_or(0);
        let mut spaces = vec![Matrix::zeros(0, 0); p];
        let mut tri = vec![Matrix::zeros(0, 0); p];
        for j in 0..p {
            spaces[(j + f) % p] = eng.u[j].clone();
            tri[(j + f) % p] = eng.f[j].clone();
        }
        (spaces, tri)
    };
    let form = PeriodicSchurForm {
        signature: seq.signature.clone(),
        spaces,
        factors: tri,
        norms,
        iterations: *outcome.as_ref().unwrap_or(&0),
    };
    match outcome {
        Ok(_) => Ok(form),
        Err((iterations, remaining)) => Err(Error::NoConvergence { iterations, remaining, partial: Box::new(form) }),
    }
}

/// Projective eigenvalue pairs of a formal product or pencil.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// `(num_i, den_i)` normalized to unit 2-norm; `(0, 0)` marks a singular index.
    pub pairs: Vec<(C64, C64)>,
    pub regular: bool,
}

impl SpectrumReport {
    /// Finite eigenvalues as complex numbers, `None` for ∞ or singular pairs.
    pub fn values(&self) -> Vec<Option<C64>> {
        self.pairs
            .iter()
            .map(|&(a, b)| if b == ZERO { None } else { Some(a / b) })
            .collect()
    }
}

/// Default zero-cluster factor: a diagonal entry counts as zero when it is
/// at most `n · u · ‖A_m‖_F`.
pub const ZERO_CLUSTER_FACTOR: f64 = 1.0;

pub fn formal_eigenvalues(form: &PeriodicSchurForm) -> SpectrumReport {
    formal_eigenvalues_with(form, ZERO_CLUSTER_FACTOR)
}

pub fn formal_eigenvalues_with(form: &PeriodicSchurForm, factor: f64) -> SpectrumReport {
    let n = form.n();
    let mut pairs = Vec::with_capacity(n);
    let mut regular = true;
    for i in 0..n {
        let mut num = Scaled::ONE;
        let mut den = Scaled::ONE;
        for (m, t) in form.factors.iter().enumerate() {
            let tol = factor * n as f64 * UNIT_ROUNDOFF * form.norms[m];
            let z = t[(i, i)];
            let z = if z.norm() <= tol { ZERO } else { z };
            if form.signature[m] > 0 {
                num = num.mul_c(z);
            } else {
                den = den.mul_c(z);
            }
        }
        if num.is_zero() && den.is_zero() {
            regular = false;
            pairs.push((ZERO, ZERO));
        } else {
            pairs.push(normalize_pair(num, den));
        }
    }
    SpectrumReport { pairs, regular }
}

/// Chordal distance between two projective pairs.
pub fn chordal(a: (C64, C64), b: (C64, C64)) -> f64 {
    let na = a.0.norm().hypot(a.1.norm());
    let nb = b.0.norm().hypot(b.1.norm());
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    (a.0 * b.1 - a.1 * b.0).norm() / (na * nb)
}

/// `Q(λ) = λ·diag(M_1..M_r) − cyclic(N_1..N_r)` with `N_r` in the lower-left
/// corner, returned as `(P0, P1)` with `Q(λ) = P0 + λ P1`.
pub fn cyclic_pencil(m: &[Matrix], nn: &[Matrix]) -> (Matrix, Matrix) {
    let r = m.len();
    let n = m[0].rows();
    let mut p0 = Matrix::zeros(r * n, r * n);
    let mut p1 = Matrix::zeros(r * n, r * n);
    for k in 0..r {
        let next = (k + 1) % r;
        for j in 0..n {
            for i in 0..n {
                p1[(k * n + i, k * n + j)] += m[k][(i, j)];
                p0[(k * n + i, next * n + j)] -= nn[k][(i, j)];
            }
        }
    }
    (p0, p1)
}

/// Nonzero determinant of `P0 + λ P1` at one of a few random points.
pub fn pencil_is_regular(p0: &Matrix, p1: &Matrix) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let scale = p0.frobenius().max(p1.frobenius());
    if scale == 0.0 {
        return false;
    }
    for _ in 0..3 {
        let lam = C64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU));
        let l = p0.add(&p1.scale(lam));
        let f = QrFactor::new(&l, true);
        let tol = (l.rows() as f64) * UNIT_ROUNDOFF * l.frobenius() * 64.0;
        if f.rank(tol) == l.rows() {
            return true;
        }
    }
    false
}

/// Regularity of the formal product through its cyclic pencil.
pub fn formal_product_is_regular(seq: &SignedSequence) -> bool {
    let (ms, ns) = seq.as_pairs();
    // regularity of a pencil does not depend on which coefficient carries λ
    let (p0, p1) = cyclic_pencil(&ms, &ns);
    pencil_is_regular(&p0, &p1)
}

/// Eigenvalues of the pencil `P0 + λ P1`, i.e. of the formal product `P1^{-1}(−P0)`.
pub fn pencil_eigenvalues(p0: &Matrix, p1: &Matrix) -> Result<SpectrumReport> {
    if !pencil_is_regular(p0, p1) {
        return Err(Error::IrregularPencil);
    }
    let seq = SignedSequence::new(vec![p0.scale(C64::new(-1.0, 0.0)), p1.clone()], vec![1, -1])?;
    let form = periodic_schur(&seq)?;
    let rep = formal_eigenvalues(&form);
    if !rep.regular {
        return Err(Error::IrregularPencil);
    }
    Ok(rep)
}

/// Spectrum of a formal product; irregular products skip the iteration.
pub fn formal_spectrum(seq: &SignedSequence) -> Result<SpectrumReport> {
    if !formal_product_is_regular(seq) {
        return Ok(SpectrumReport { pairs: Vec::new(), regular: false });
    }
    let form = periodic_schur(seq)?;
    Ok(formal_eigenvalues(&form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(n, n, |_, _| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            C64::new(a, b)
        })
    }

    fn inverse(m: &Matrix) -> Matrix {
        let f = QrFactor::new(m, true);
        let n = m.rows();
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            let x = f.solve(&e);
            out.col_mut(j).copy_from_slice(&x);
        }
        out
    }

    fn explicit_product(seq: &SignedSequence) -> Matrix {
        let n = seq.n();
        let mut prod = Matrix::identity(n);
        for (f, &s) in seq.factors.iter().zip(&seq.signature) {
            let g = if s > 0 { f.clone() } else { inverse(f) };
            prod = g.mul(&prod);
        }
        prod
    }

    fn trace(m: &Matrix) -> C64 {
        (0..m.rows()).map(|i| m[(i, i)]).sum()
    }

    /// Power sums of eigenvalues against traces of powers (Newton).
    fn assert_spectrum_matches(values: &[C64], prod: &Matrix, tol: f64) {
        let n = prod.rows();
        let mut pw = Matrix::identity(n);
        for k in 1..=n {
            pw = pw.mul(prod);
            let s: C64 = values.iter().map(|v| v.powu(k as u32)).sum();
            let t = trace(&pw);
            let scale = values.iter().map(|v| v.norm().powi(k as i32)).sum::<f64>().max(1.0);
            assert!((s - t).norm() <= tol * scale, "k={} sum={} trace={}", k, s, t);
        }
    }

    fn check_form(seq: &SignedSequence, form: &PeriodicSchurForm, tol: f64) {
        assert!(form.reconstruction_residual(seq) <= tol, "recon {}", form.reconstruction_residual(seq));
        assert!(form.unitarity_residual() <= tol, "unit {}", form.unitarity_residual());
        assert_eq!(form.max_subdiagonal(), 0.0);
    }

    #[test]
    fn identity_factors() {
        for sig in [vec![1i8, -1], vec![1, 1, -1], vec![-1, -1]] {
            let n = 3;
            let seq = SignedSequence::new(vec![Matrix::identity(n); sig.len()], sig).unwrap();
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form, 1e-14);
            for t in &form.factors {
                for i in 0..n {
                    assert!((t[(i, i)].norm() - 1.0).abs() < 1e-14);
                }
            }
            let rep = formal_eigenvalues(&form);
            assert!(rep.regular);
            for v in rep.values() {
                assert!((v.unwrap() - ONE).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn triangular_input_keeps_diagonal_moduli() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = random(4, &mut rng);
        let mut b = random(4, &mut rng);
        a.zero_below_diagonal();
        b.zero_below_diagonal();
        let seq = SignedSequence::new(vec![a.clone(), b.clone()], vec![1, -1]).unwrap();
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form, 1e-13);
        let mut want: Vec<C64> = (0..4).map(|i| a[(i, i)] / b[(i, i)]).collect();
        let mut got: Vec<C64> = formal_eigenvalues(&form).values().into_iter().map(|v| v.unwrap()).collect();
        let key = |z: &C64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e6).round() as i64;
        want.sort_by_key(key);
        got.sort_by_key(key);
        for (x, y) in want.iter().zip(&got) {
            assert!((x - y).norm() < 1e-10 * x.norm().max(1.0));
        }
    }

    #[test]
    fn random_two_pairs_match_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 5] {
            let ms = vec![random(n, &mut rng), random(n, &mut rng)];
            let ns = vec![random(n, &mut rng), random(n, &mut rng)];
            let seq = SignedSequence::alternating(&ms, &ns).unwrap();
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form, 1e-13);
            let vals: Vec<C64> = formal_eigenvalues(&form).values().into_iter().map(|v| v.unwrap()).collect();
            assert_spectrum_matches(&vals, &explicit_product(&seq), 1e-9);
        }
    }

    #[test]
    fn arbitrary_signatures() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sigs: Vec<Vec<i8>> = vec![
            vec![1],
            vec![-1],
            vec![1, 1, 1],
            vec![-1, 1],
            vec![-1, -1, 1, 1],
            vec![-1, 1, -1, 1, -1, 1],
            vec![-1, -1, -1],
        ];
        for sig in sigs {
            let n = 4;
            let factors: Vec<Matrix> = sig.iter().map(|_| random(n, &mut rng)).collect();
            let seq = SignedSequence::new(factors, sig.clone()).unwrap();
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form, 1e-13);
            let vals: Vec<C64> = formal_eigenvalues(&form).values().into_iter().map(|v| v.unwrap()).collect();
            assert_spectrum_matches(&vals, &explicit_product(&seq), 1e-8);
        }
    }

    #[test]
    fn zero_denominator_factor_gives_infinite_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random(4, &mut rng);
        let seq = SignedSequence::new(vec![a, Matrix::zeros(4, 4)], vec![1, -1]).unwrap();
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form, 1e-13);
        let rep = formal_eigenvalues(&form);
        assert!(rep.regular);
        assert!(rep.values().iter().all(|v| v.is_none()));
    }

    #[test]
    fn rank_deficient_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for sig in [vec![1i8, -1, 1, -1], vec![1, 1, -1]] {
            let n = 5;
            let factors: Vec<Matrix> = sig
                .iter()
                .map(|_| {
                    // rank n-1
                    let a = random(n, &mut rng);
                    let mut b = random(n, &mut rng);
                    for i in 0..n {
                        b[(i, 0)] = ZERO;
                    }
                    a.mul(&b).mul(&random(n, &mut rng))
                })
                .collect();
            let seq = SignedSequence::new(factors, sig).unwrap();
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form, 1e-12);
        }
    }

    #[test]
    fn singular_pair_classification() {
        let mut t = Matrix::identity(3);
        t[(1, 1)] = ZERO;
        let mut r = Matrix::identity(3);
        r[(1, 1)] = ZERO;
        let form = PeriodicSchurForm {
            signature: vec![1, -1],
            spaces: vec![Matrix::identity(3); 2],
            factors: vec![t.clone(), r],
            norms: vec![3f64.sqrt(); 2],
            iterations: 0,
        };
        let rep = formal_eigenvalues(&form);
        assert!(!rep.regular);
        let form2 = PeriodicSchurForm { factors: vec![t, Matrix::identity(3)], ..form };
        let rep2 = formal_eigenvalues(&form2);
        assert!(rep2.regular);
        assert_eq!(rep2.values()[1], Some(ZERO));
    }

    #[test]
    fn pencil_examples() {
        let rep = pencil_eigenvalues(&Matrix::identity(3).scale(C64::new(-1.0, 0.0)), &Matrix::identity(3)).unwrap();
        for v in rep.values() {
            assert!((v.unwrap() - ONE).norm() < 1e-14);
        }
        let p0 = Matrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let p1 = Matrix::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let rep = pencil_eigenvalues(&p0, &p1).unwrap();
        let vals = rep.values();
        assert!(vals.contains(&None));
        assert!(vals.iter().any(|v| v.map(|z| z.norm() < 1e-15).unwrap_or(false)));
    }

    #[test]
    fn scalar_cyclic_pencil_roots() {
        let two = Matrix::from_real_rows(&[&[2.0]]);
        let one = Matrix::from_real_rows(&[&[1.0]]);
        let (p0, p1) = cyclic_pencil(&[one.clone(), one], &[two.clone(), two]);
        let rep = pencil_eigenvalues(&p0, &p1).unwrap();
        let mut v: Vec<f64> = rep.values().iter().map(|z| z.unwrap().re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] + 2.0).abs() < 1e-13 && (v[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn singular_cyclic_pencil_detected() {
        let mut m1 = Matrix::identity(2);
        m1[(1, 1)] = ZERO;
        let mut n1 = Matrix::identity(2);
        n1[(1, 1)] = ZERO;
        let (p0, p1) = cyclic_pencil(&[m1.clone(), m1], &[n1.clone(), n1]);
        assert!(matches!(pencil_eigenvalues(&p0, &p1), Err(Error::IrregularPencil)));
    }

    #[test]
    fn random_pencil_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p0 = random(6, &mut rng);
        let p1 = random(6, &mut rng);
        let rep = pencil_eigenvalues(&p0, &p1).unwrap();
        let vals: Vec<C64> = rep.values().into_iter().map(|v| v.unwrap()).collect();
        let prod = inverse(&p1).mul(&p0).scale(C64::new(-1.0, 0.0));
        assert_spectrum_matches(&vals, &prod, 1e-8);
    }

    #[test]
    fn scaled_products_do_not_overflow() {
        let big = Scaled::new(C64::new(1e300, 0.0));
        let p = big.mul(big).mul(big);
        let small = Scaled::new(C64::new(1e-300, 0.0)).mul(Scaled::new(C64::new(1e-300, 0.0)));
        let (a, b) = normalize_pair(p, small.mul(small));
        assert!((a.norm() - 1.0).abs() < 1e-15);
        assert_eq!(b, ZERO);
        let (a, b) = normalize_pair(p, p);
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn singular_factors_mixed_signatures() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..400 {
            let p = rng.random_range(1..7usize);
            let n = rng.random_range(1..10usize);
            let sig: Vec<i8> = (0..p).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
            let factors: Vec<Matrix> = (0..p)
                .map(|_| {
                    let a = random(n, &mut rng);
                    match rng.random_range(0..6) {
                        0 => Matrix::zeros(n, n),
                        1 | 2 => {
                            let rank = rng.random_range(0..n);
                            let mut b = random(n, &mut rng);
                            for i in 0..n {
                                for j in rank..n {
                                    b[(i, j)] = ZERO;
                                }
                            }
                            a.mul(&b).mul(&random(n, &mut rng))
                        }
                        _ => a,
                    }
                })
                .collect();
            let seq = SignedSequence::new(factors, sig).unwrap();
            if !formal_product_is_regular(&seq) {
                continue;
            }
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form, 1e-12);
        }
    }
}
