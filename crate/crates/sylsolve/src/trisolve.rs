//! The `O(n³r)` solver for periodic systems.
//!
//! Coefficients are first made triangular (`A_k, C_k` upper, `B_k, D_k`
//! lower) by periodic Schur forms. The entries of the unknowns are then
//! found block by block: entry pairs `(i, j)`, `(j, i)` of all `X_k` form a
//! small cyclic bidiagonal system whose right-hand side only involves
//! entries that are already known.

use crate::certify::{certify_periodic, plain_verdict, star_verdict, Certificate, Method, Reason, StarMode};
use crate::error::{Error, Result};
use crate::kernel::{make_givens, Matrix, C64, UNIT_ROUNDOFF, ZERO};
use crate::model::{apply_star, validate, PeriodicSystem, StarFlag, SylvesterSystem};
use crate::pschur::{formal_eigenvalues, periodic_schur, SignedSequence};
use crate::reduction::{reduce, Reduction};

/// Multiplier in the small-system test `|R_ll| ≤ ℓ · u · ‖M‖_F · SMALL_TOLFAC`.
pub const SMALL_TOLFAC: f64 = 64.0;

/// Unitary factors of the change of variables
/// `X_k = Zl_k X̂_k ★(Zr_k)`, `Ê_k = Ql_k^H E_k ★(Qr_k^H)`, where `★` is `H`
/// for `s = 1` and `s` otherwise.
#[derive(Clone, Debug)]
pub struct Transforms {
    pub zl: Vec<Matrix>,
    pub ql: Vec<Matrix>,
    pub zr: Vec<Matrix>,
    pub qr: Vec<Matrix>,
}

#[derive(Clone, Debug)]
pub struct TriangularPeriodicSystem {
    pub n: usize,
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub c: Vec<Matrix>,
    pub d: Vec<Matrix>,
    pub e: Vec<Matrix>,
    pub s: StarFlag,
    /// `None` when the input was already triangular.
    pub transforms: Option<Transforms>,
}

impl TriangularPeriodicSystem {
    pub fn r(&self) -> usize {
        self.a.len()
    }

    pub fn as_periodic(&self) -> PeriodicSystem {
        PeriodicSystem {
            n: self.n,
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            e: self.e.clone(),
            s: self.s,
        }
    }

    /// Wraps a system that is triangular already; no transforms are recorded.
    pub fn from_triangular(ps: &PeriodicSystem) -> Result<Self> {
        let upper = ps.a.iter().chain(&ps.c).all(|m| m.max_below_diagonal() == 0.0);
        let lower = ps.b.iter().chain(&ps.d).all(|m| m.max_above_diagonal() == 0.0);
        if !upper || !lower {
            return Err(Error::Unsupported("coefficients are not triangular".into()));
        }
        Ok(TriangularPeriodicSystem {
            n: ps.n,
            a: ps.a.clone(),
            b: ps.b.clone(),
            c: ps.c.clone(),
            d: ps.d.clone(),
            e: ps.e.clone(),
            s: ps.s,
            transforms: None,
        })
    }

    fn right_star(&self) -> StarFlag {
        if self.s.is_star() {
            self.s
        } else {
            StarFlag::ConjTranspose
        }
    }
}

/// Periodic Schur forms of `C_r^{-1}A_r⋯C_1^{-1}A_1` and of the matching
/// `B, D` product (one `4r`-factor form when `s = ⋆`).
pub fn triangularize(ps: &PeriodicSystem) -> Result<TriangularPeriodicSystem> {
    Ok(triangularize_certified(ps)?.0)
}

/// [`triangularize`], plus the formal certificate read off the diagonals of
/// the same Schur forms.
pub fn triangularize_certified(ps: &PeriodicSystem) -> Result<(TriangularPeriodicSystem, Certificate)> {
    let r = ps.r();
    let star = if ps.s.is_star() { ps.s } else { StarFlag::ConjTranspose };
    let bs: Vec<Matrix> = ps.b.iter().map(|m| apply_star(m, star)).collect();
    let ds: Vec<Matrix> = ps.d.iter().map(|m| apply_star(m, star)).collect();

    let (left, right, offset) = if ps.s.is_star() {
        let mut factors = Vec::with_capacity(4 * r);
        let mut signature = Vec::with_capacity(4 * r);
        for k in 0..r {
            factors.push(ps.a[k].clone());
            factors.push(ps.c[k].clone());
            signature.extend([1, -1]);
        }
        for k in 0..r {
            factors.push(bs[k].clone());
            factors.push(ds[k].clone());
            signature.extend([1, -1]);
        }
        let form = periodic_schur(&SignedSequence::new(factors, signature)?)?;
        (form.clone(), form, r)
    } else {
        let left = periodic_schur(&SignedSequence::alternating(&ps.a, &ps.c)?)?;
        let right = periodic_schur(&SignedSequence::alternating(&bs, &ds)?)?;
        (left, right, 0)
    };
    let cert = match StarMode::of(ps.s) {
        Some(mode) => star_verdict(&formal_eigenvalues(&left), mode),
        None => {
            // the right form holds (B_1 D_1^{-1}⋯B_r D_r^{-1})^H
            let mut rs = formal_eigenvalues(&right);
            rs.pairs = rs.pairs.iter().map(|&(a, b)| (b.conj(), a.conj())).collect();
            plain_verdict(&formal_eigenvalues(&left), &rs, Reason::ProductIrregular, Method::Formal)
        }
    };

    let mut out = TriangularPeriodicSystem {
        n: ps.n,
        a: Vec::with_capacity(r),
        b: Vec::with_capacity(r),
        c: Vec::with_capacity(r),
        d: Vec::with_capacity(r),
        e: Vec::with_capacity(r),
        s: ps.s,
        transforms: None,
    };
    let mut tr = Transforms { zl: vec![], ql: vec![], zr: vec![], qr: vec![] };
    for k in 0..r {
        let mut a = left.factors[2 * k].clone();
        let mut c = left.factors[2 * k + 1].clone();
        a.zero_below_diagonal();
        c.zero_below_diagonal();
        let mut b = apply_star(&right.factors[2 * (offset + k)], star);
        let mut d = apply_star(&right.factors[2 * (offset + k) + 1], star);
        b.zero_above_diagonal();
        d.zero_above_diagonal();
        let zl = left.z(k + 1).clone();
        let ql = left.q(k + 1).clone();
        let zr = right.z(offset + k + 1).clone();
        let qr = right.q(offset + k + 1).clone();
        out.e.push(ql.adjoint().mul(&ps.e[k]).mul(&apply_star(&qr.adjoint(), star)));
        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
        out.d.push(d);
        tr.zl.push(zl);
        tr.ql.push(ql);
        tr.zr.push(zr);
        tr.qr.push(qr);
    }
    out.transforms = Some(tr);
    Ok((out, cert))
}

/// Solution of the original system from the triangular one's.
pub fn untransform(tps: &TriangularPeriodicSystem, xhat: Vec<Matrix>) -> Vec<Matrix> {
    match &tps.transforms {
        None => xhat,
        Some(t) => {
            let star = tps.right_star();
            xhat.iter()
                .enumerate()
                .map(|(k, x)| t.zl[k].mul(x).mul(&apply_star(&t.zr[k], star)))
                .collect()
        }
    }
}

/// Entry pairs `(i, j)`, `i ≥ j`, 0-based, in the order
/// `(0,0), (1,0), (1,1), (2,0), …`; back substitution runs through it backwards.
pub fn ordering(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            out.push((i, j));
        }
    }
    out
}

/// `M` of shape `[α_0 β_0; ⋱ ⋱; β_{L-1} … α_{L-1}]`: diagonal `α`, superdiagonal
/// `β_0..β_{L-2}` and `β_{L-1}` in the lower-left corner. For `L = 1` the
/// corner coincides with the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicBidiagonal {
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
}

/// Real 2×2 block version, blocks stored row-major `[m00, m01, m10, m11]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBlockCyclic {
    pub alpha: Vec<[f64; 4]>,
    pub beta: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CyclicPart {
    Complex(CyclicBidiagonal),
    Real(RealBlockCyclic),
}

/// Diagonal block of the reordered system for the pair `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallSystem {
    pub i: usize,
    pub j: usize,
    /// Independent parts, consuming consecutive slices of the unknown vector.
    pub parts: Vec<CyclicPart>,
}

/// `z` as the real 2×2 matrix of `w ↦ z w`.
fn mat(z: C64) -> [f64; 4] {
    [z.re, -z.im, z.im, z.re]
}

/// `w ↦ z conj(w)`.
fn conj_mat(z: C64) -> [f64; 4] {
    [z.re, z.im, z.im, -z.re]
}

pub fn build_small_system(tps: &TriangularPeriodicSystem, i: usize, j: usize) -> SmallSystem {
    small_system_from(&Diagonals::of(tps), tps.s, i, j)
}

fn small_system_from(dg: &Diagonals, s: StarFlag, i: usize, j: usize) -> SmallSystem {
    let r = dg.r;
    // α for rows (p, q, k): (A_k)_pp (B_k)_qq, β: −(C_k)_pp (D_k)_qq
    let alpha = |p: usize, q: usize| dg.alpha(p, q);
    let beta = |p: usize, q: usize| dg.beta(p, q);
    let parts = match s {
        StarFlag::None => {
            let mut parts = vec![CyclicPart::Complex(CyclicBidiagonal { alpha: alpha(i, j), beta: beta(i, j) })];
            if i != j {
                parts.push(CyclicPart::Complex(CyclicBidiagonal { alpha: alpha(j, i), beta: beta(j, i) }));
            }
            parts
        }
        StarFlag::Transpose => {
            let (mut al, mut be) = (alpha(i, j), beta(i, j));
            if i != j {
                al.extend(alpha(j, i));
                be.extend(beta(j, i));
            }
            vec![CyclicPart::Complex(CyclicBidiagonal { alpha: al, beta: be })]
        }
        StarFlag::ConjTranspose => {
            let real = |al: Vec<C64>, be: Vec<C64>| -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
                let ra = al.into_iter().map(mat).collect();
                let rb = be
                    .iter()
                    .enumerate()
                    .map(|(k, &z)| if k + 1 == r { conj_mat(z) } else { mat(z) })
                    .collect();
                (ra, rb)
            };
            let (mut al, mut be) = real(alpha(i, j), beta(i, j));
            if i != j {
                let (a2, b2) = real(alpha(j, i), beta(j, i));
                al.extend(a2);
                be.extend(b2);
            }
            vec![CyclicPart::Real(RealBlockCyclic { alpha: al, beta: be })]
        }
    };
    SmallSystem { i, j, parts }
}

impl CyclicPart {
    fn len(&self) -> usize {
        match self {
            CyclicPart::Complex(c) => c.alpha.len(),
            CyclicPart::Real(c) => c.alpha.len(),
        }
    }
}

/// Pivot that failed the small-system test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallPivot {
    pub pivot: f64,
    pub tol: f64,
}

impl CyclicBidiagonal {
    pub fn dense(&self) -> Matrix {
        let l = self.alpha.len();
        let mut m = Matrix::zeros(l, l);
        for k in 0..l {
            m[(k, k)] += self.alpha[k];
            m[(k, (k + 1) % l)] += self.beta[k];
        }
        m
    }

    /// Norm of the entries before the `L = 1` case folds `β` onto the
    /// diagonal; a cancellation there is a zero pivot, not noise.
    fn frobenius(&self) -> f64 {
        self.alpha.iter().chain(&self.beta).map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// QR by `L − 1` rotations: the corner entry is chased along the last
    /// row, leaving `R` upper bidiagonal plus its last column. Returns the
    /// diagonal of `R` and, if `rhs` is given, the solution.
    pub fn factor_solve(&self, rhs: Option<&[C64]>) -> (Vec<C64>, Option<Vec<C64>>) {
        let l = self.alpha.len();
        let mut b: Vec<C64> = rhs.map(|v| v.to_vec()).unwrap_or_else(|| vec![ZERO; l]);
        let mut d = self.alpha.clone();
        let mut e = vec![ZERO; l];
        let mut f = vec![ZERO; l];
        let mut h;
        if l == 1 {
            h = self.alpha[0] + self.beta[0];
        } else {
            for k in 0..l - 1 {
                if k + 2 < l {
                    e[k] = self.beta[k];
                } else {
                    f[k] = self.beta[k];
                }
            }
            let mut g = self.beta[l - 1];
            h = self.alpha[l - 1];
            let mut bl = b[l - 1];
            for c in 0..l - 1 {
                let (rot, rr) = make_givens(d[c], g);
                d[c] = rr;
                if c + 2 < l {
                    let (x, y) = rot.apply(e[c], ZERO);
                    e[c] = x;
                    g = y;
                }
                let (x, y) = rot.apply(f[c], h);
                f[c] = x;
                h = y;
                let (x, y) = rot.apply(b[c], bl);
                b[c] = x;
                bl = y;
            }
            b[l - 1] = bl;
        }
        d[l - 1] = h;
        let x = rhs.map(|_| {
            let mut x = vec![ZERO; l];
            x[l - 1] = b[l - 1] / h;
            for k in (0..l - 1).rev() {
                let mut s = b[k] - f[k] * x[l - 1];
                if k + 2 < l {
                    s -= e[k] * x[k + 1];
                }
                x[k] = s / d[k];
            }
            x
        });
        (d, x)
    }

    pub fn determinant(&self) -> C64 {
        self.factor_solve(None).0.iter().product()
    }

    pub fn solve(&self, rhs: &[C64]) -> std::result::Result<Vec<C64>, SmallPivot> {
        let l = self.alpha.len();
        let tol = l as f64 * UNIT_ROUNDOFF * self.frobenius() * SMALL_TOLFAC;
        let (diag, x) = self.factor_solve(Some(rhs));
        let pivot = diag.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        if !(pivot > tol) {
            return Err(SmallPivot { pivot, tol });
        }
        Ok(x.expect("rhs given"))
    }
}

type Row = [f64; 7];

fn rotate(rows: &mut [Row], p: usize, q: usize, col: usize) {
    let (a, b) = (rows[p][col], rows[q][col]);
    if b == 0.0 {
        return;
    }
    let rho = a.hypot(b);
    let (c, s) = (a / rho, b / rho);
    for t in 0..7 {
        let (x, y) = (rows[p][t], rows[q][t]);
        rows[p][t] = c * x + s * y;
        rows[q][t] = -s * x + c * y;
    }
}

impl RealBlockCyclic {
    pub fn dense(&self) -> Matrix {
        let l = self.alpha.len();
        let mut m = Matrix::zeros(2 * l, 2 * l);
        for k in 0..l {
            let nk = (k + 1) % l;
            for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                m[(2 * k + u, 2 * k + v)] += C64::new(self.alpha[k][2 * u + v], 0.0);
                m[(2 * k + u, 2 * nk + v)] += C64::new(self.beta[k][2 * u + v], 0.0);
            }
        }
        m
    }

    fn frobenius(&self) -> f64 {
        self.alpha.iter().chain(&self.beta).flat_map(|m| m.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Block analogue of [`CyclicBidiagonal::factor_solve`]: five rotations
    /// per block column, plus one for the final diagonal block. Returns the
    /// `2L` diagonal entries of `R` and the solution.
    pub fn factor_solve(&self, rhs: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let l = self.alpha.len();
        let b: Vec<f64> = rhs.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; 2 * l]);
        // per block row k < L−1: [D (2) | E (2) | F (2) | rhs]
        let mut rows: Vec<[Row; 2]> = vec![[[0.0; 7]; 2]; l];
        let mut bottom: [Row; 2] = [[0.0; 7]; 2];
        for u in 0..2 {
            bottom[u][6] = b[2 * (l - 1) + u];
        }
        if l == 1 {
            for u in 0..2 {
                for v in 0..2 {
                    bottom[u][4 + v] = self.alpha[0][2 * u + v] + self.beta[0][2 * u + v];
                }
            }
        } else {
            for u in 0..2 {
                for v in 0..2 {
                    bottom[u][v] = self.beta[l - 1][2 * u + v];
                    bottom[u][4 + v] = self.alpha[l - 1][2 * u + v];
                }
            }
            for c in 0..l - 1 {
                let merged = c + 2 == l;
                let mut w: [Row; 4] = [[0.0; 7]; 4];
                for u in 0..2 {
                    for v in 0..2 {
                        w[u][v] = self.alpha[c][2 * u + v];
                        let col = if merged { 4 + v } else { 2 + v };
                        w[u][col] = self.beta[c][2 * u + v];
                    }
                    w[u][6] = b[2 * c + u];
                    // bottom: block c in cols 0..2, H in 4..6
                    w[2 + u][0] = bottom[u][0];
                    w[2 + u][1] = bottom[u][1];
                    w[2 + u][4] = bottom[u][4];
                    w[2 + u][5] = bottom[u][5];
                    w[2 + u][6] = bottom[u][6];
                }
                rotate(&mut w, 0, 1, 0);
                rotate(&mut w, 0, 2, 0);
                rotate(&mut w, 0, 3, 0);
                rotate(&mut w, 1, 2, 1);
                rotate(&mut w, 1, 3, 1);
                rows[c] = [w[0], w[1]];
                for u in 0..2 {
                    bottom[u] = [0.0; 7];
                    // the fill in block c+1 becomes the next block-c entry
                    if merged {
                        bottom[u][4] = w[2 + u][4] + w[2 + u][2];
                        bottom[u][5] = w[2 + u][5] + w[2 + u][3];
                    } else {
                        bottom[u][0] = w[2 + u][2];
                        bottom[u][1] = w[2 + u][3];
                        bottom[u][4] = w[2 + u][4];
                        bottom[u][5] = w[2 + u][5];
                    }
                    bottom[u][6] = w[2 + u][6];
                }
            }
        }
        // triangularize the last diagonal block (cols 4, 5)
        {
            let mut w: [Row; 2] = bottom;
            rotate(&mut w, 0, 1, 4);
            bottom = w;
        }
        let mut diag = Vec::with_capacity(2 * l);
        for row in rows.iter().take(l - 1) {
            diag.push(row[0][0]);
            diag.push(row[1][1]);
        }
        diag.push(bottom[0][4]);
        diag.push(bottom[1][5]);

        let x = rhs.map(|_| {
            let mut x = vec![0.0; 2 * l];
            let last = 2 * (l - 1);
            x[last + 1] = bottom[1][6] / bottom[1][5];
            x[last] = (bottom[0][6] - bottom[0][5] * x[last + 1]) / bottom[0][4];
            for c in (0..l.saturating_sub(1)).rev() {
                let merged = c + 2 == l;
                let w = &rows[c];
                for u in (0..2).rev() {
                    let mut s = w[u][6] - w[u][4] * x[last] - w[u][5] * x[last + 1];
                    if !merged {
                        s -= w[u][2] * x[2 * c + 2] + w[u][3] * x[2 * c + 3];
                    }
                    if u == 0 {
                        s -= w[0][1] * x[2 * c + 1];
                    }
                    x[2 * c + u] = s / w[u][u];
                }
            }
            x
        });
        (diag, x)
    }

    pub fn determinant(&self) -> f64 {
        self.factor_solve(None).0.iter().product()
    }

    pub fn solve(&self, rhs: &[f64]) -> std::result::Result<Vec<f64>, SmallPivot> {
        let l = self.alpha.len();
        let tol = (2 * l) as f64 * UNIT_ROUNDOFF * self.frobenius() * SMALL_TOLFAC;
        let (diag, x) = self.factor_solve(Some(rhs));
        let pivot = diag.iter().map(|z| z.abs()).fold(f64::INFINITY, f64::min);
        if !(pivot > tol) {
            return Err(SmallPivot { pivot, tol });
        }
        Ok(x.expect("rhs given"))
    }
}

/// Solves `M x = rhs` for the stacked unknowns of the pair.
pub fn solve_cyclic_qr(sys: &SmallSystem, rhs: &[C64]) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(rhs.len());
    let mut at = 0;
    for part in &sys.parts {
        let l = part.len();
        let slice = &rhs[at..at + l];
        let res = match part {
            CyclicPart::Complex(c) => c.solve(slice),
            CyclicPart::Real(c) => {
                let split: Vec<f64> = slice.iter().flat_map(|z| [z.re, z.im]).collect();
                c.solve(&split).map(|v| v.chunks(2).map(|p| C64::new(p[0], p[1])).collect())
            }
        };
        match res {
            Ok(x) => out.extend(x),
            Err(p) => {
                return Err(Error::SingularSmallSystem { i: sys.i + 1, j: sys.j + 1, pivot: p.pivot, tol: p.tol })
            }
        }
        at += l;
    }
    Ok(out)
}

/// `n` lines of length `n` for each `k`, grouped by line index first, so that
/// one line across all `k` is a single strided run of memory.
#[derive(Clone, Debug)]
struct Stack {
    n: usize,
    r: usize,
    data: Vec<C64>,
}

impl Stack {
    fn zeros(n: usize, r: usize) -> Self {
        Stack { n, r, data: vec![ZERO; n * n * r] }
    }

    /// Line `u` of each `M_k`: rows when `by_row`, columns otherwise.
    fn of(ms: &[Matrix], by_row: bool) -> Self {
        let n = ms.first().map_or(0, |m| m.rows());
        let mut st = Stack::zeros(n, ms.len());
        for (k, m) in ms.iter().enumerate() {
            for u in 0..n {
                for v in 0..n {
                    let z = if by_row { m[(u, v)] } else { m[(v, u)] };
                    st.set(u, k, v, z);
                }
            }
        }
        st
    }

    #[inline]
    fn line(&self, u: usize, k: usize) -> &[C64] {
        let at = (u * self.r + k) * self.n;
        &self.data[at..at + self.n]
    }

    #[inline]
    fn get(&self, u: usize, k: usize, v: usize) -> C64 {
        self.data[(u * self.r + k) * self.n + v]
    }

    #[inline]
    fn set(&mut self, u: usize, k: usize, v: usize, z: C64) {
        self.data[(u * self.r + k) * self.n + v] = z;
    }
}

/// Diagonals of the triangular coefficients, `p`-major.
struct Diagonals {
    r: usize,
    a: Vec<C64>,
    b: Vec<C64>,
    c: Vec<C64>,
    d: Vec<C64>,
}

impl Diagonals {
    fn of(tps: &TriangularPeriodicSystem) -> Self {
        let (n, r) = (tps.n, tps.r());
        let take = |ms: &[Matrix]| -> Vec<C64> { (0..n * r).map(|idx| ms[idx % r][(idx / r, idx / r)]).collect() };
        Diagonals { r, a: take(&tps.a), b: take(&tps.b), c: take(&tps.c), d: take(&tps.d) }
    }

    fn alpha(&self, p: usize, q: usize) -> Vec<C64> {
        let r = self.r;
        (0..r).map(|k| self.a[p * r + k] * self.b[q * r + k]).collect()
    }

    fn beta(&self, p: usize, q: usize) -> Vec<C64> {
        let r = self.r;
        (0..r).map(|k| -(self.c[p * r + k] * self.d[q * r + k])).collect()
    }
}

/// Solved entries so far, with the running products `X_k B_k` and
/// `X_{k+1} D_k` (`X_{r+1} = X_1^s`) at solved positions.
pub struct RhsState {
    n: usize,
    r: usize,
    s: StarFlag,
    /// Rows and columns of the `X_k`.
    xrow: Stack,
    xcol: Stack,
    /// Columns of `X^B`, `X^D`.
    xb: Stack,
    xd: Stack,
    arow: Stack,
    crow: Stack,
    bcol: Stack,
    dcol: Stack,
    ecol: Stack,
    diags: Diagonals,
    /// `Σ_{t>j} X_k[i,t] B_k[t,j]` and the `D` analogue from the last
    /// right-hand side, first for `(i, j)` then for `(j, i)`.
    partial_b: Vec<C64>,
    partial_d: Vec<C64>,
}

impl RhsState {
    pub fn new(tps: &TriangularPeriodicSystem) -> Self {
        let n = tps.n;
        let r = tps.r();
        RhsState {
            n,
            r,
            s: tps.s,
            xrow: Stack::zeros(n, r),
            xcol: Stack::zeros(n, r),
            xb: Stack::zeros(n, r),
            xd: Stack::zeros(n, r),
            arow: Stack::of(&tps.a, true),
            crow: Stack::of(&tps.c, true),
            bcol: Stack::of(&tps.b, false),
            dcol: Stack::of(&tps.d, false),
            ecol: Stack::of(&tps.e, false),
            diags: Diagonals::of(tps),
            partial_b: vec![ZERO; 2 * r],
            partial_d: vec![ZERO; 2 * r],
        }
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: C64) {
        self.xrow.set(i, k, j, v);
        self.xcol.set(j, k, i, v);
    }

    /// `X_k` for all `k`.
    pub fn solution(&self) -> Vec<Matrix> {
        (0..self.r).map(|k| Matrix::from_fn(self.n, self.n, |i, j| self.xrow.get(i, k, j))).collect()
    }

    /// Row `i` of `X_{k+1}` (or of `X_1^s` for the last `k`) and whether it
    /// must be conjugated.
    fn next_row(&self, k: usize, i: usize) -> (&[C64], bool) {
        if k + 1 < self.r {
            return (self.xrow.line(i, k + 1), false);
        }
        match self.s {
            StarFlag::None => (self.xrow.line(i, 0), false),
            StarFlag::Transpose => (self.xcol.line(i, 0), false),
            StarFlag::ConjTranspose => (self.xcol.line(i, 0), true),
        }
    }

    fn next_entry(&self, k: usize, i: usize, j: usize) -> C64 {
        let (row, conj) = self.next_row(k, i);
        if conj {
            row[j].conj()
        } else {
            row[j]
        }
    }
}

#[inline]
fn dot(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re - x.im * y.im;
        im += x.re * y.im + x.im * y.re;
    }
    C64::new(re, im)
}

#[inline]
fn dot_conj_first(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

/// `v_{ijk}` for all `k`: the part of equation `(i, j, k)` carried by
/// already solved entries. Partial sums are kept in `slot` for the update.
fn compute_w(st: &mut RhsState, i: usize, j: usize, slot: usize) -> Vec<C64> {
    let n = st.n;
    let r = st.r;
    let mut w = Vec::with_capacity(r);
    for k in 0..r {
        let arow = st.arow.line(i, k);
        let crow = st.crow.line(i, k);
        let bcol = &st.bcol.line(j, k)[j + 1..n];
        let sb = dot(&st.xrow.line(i, k)[j + 1..n], bcol);
        let f1 = arow[i] * sb + dot(&arow[i + 1..n], &st.xb.line(j, k)[i + 1..n]);
        let dcol = &st.dcol.line(j, k)[j + 1..n];
        let (row, conj) = st.next_row(k, i);
        let sd = if conj { dot_conj_first(&row[j + 1..n], dcol) } else { dot(&row[j + 1..n], dcol) };
        let f2 = crow[i] * sd + dot(&crow[i + 1..n], &st.xd.line(j, k)[i + 1..n]);
        st.partial_b[slot * r + k] = sb;
        st.partial_d[slot * r + k] = sd;
        w.push(f1 - f2);
    }
    w
}

/// `F_ij`: `w_ij`, followed by `w_ji` when `i ≠ j`.
pub fn compute_rhs_f(st: &mut RhsState, i: usize, j: usize) -> Vec<C64> {
    let mut f = compute_w(st, i, j, 0);
    if i != j {
        f.extend(compute_w(st, j, i, 1));
    }
    f
}

/// Stores the block solution and updates `X^B`, `X^D` at `(i, j)`, `(j, i)`.
fn store(st: &mut RhsState, i: usize, j: usize, x: &[C64]) {
    let r = st.r;
    for k in 0..r {
        st.set(k, i, j, x[k]);
        if i != j {
            st.set(k, j, i, x[r + k]);
        }
    }
    let pairs: &[(usize, usize, usize)] = if i != j { &[(i, j, 0), (j, i, 1)] } else { &[(i, j, 0)] };
    for &(p, q, slot) in pairs {
        for k in 0..r {
            let xb = st.partial_b[slot * r + k] + st.xrow.get(p, k, q) * st.bcol.get(q, k, q);
            let xd = st.partial_d[slot * r + k] + st.next_entry(k, p, q) * st.dcol.get(q, k, q);
            st.xb.set(q, k, p, xb);
            st.xd.set(q, k, p, xd);
        }
    }
    #[cfg(debug_assertions)]
    if st.n <= 32 {
        for &(p, q, _) in pairs {
            for k in 0..r {
                let full_b = dot(&st.xrow.line(p, k)[q..], &st.bcol.line(q, k)[q..]);
                let (row, conj) = st.next_row(k, p);
                let dcol = &st.dcol.line(q, k)[q..];
                let full_d = if conj { dot_conj_first(&row[q..], dcol) } else { dot(&row[q..], dcol) };
                let scale = 1.0 + full_b.norm() + full_d.norm();
                debug_assert!((full_b - st.xb.get(q, k, p)).norm() <= 1e-10 * scale);
                debug_assert!((full_d - st.xd.get(q, k, p)).norm() <= 1e-10 * scale);
            }
        }
    }
}

/// Block back substitution over the reversed ordering.
pub fn backsub_solve(tps: &TriangularPeriodicSystem) -> Result<Vec<Matrix>> {
    let n = tps.n;
    let r = tps.r();
    let mut st = RhsState::new(tps);
    for &(i, j) in ordering(n).iter().rev() {
        let f = compute_rhs_f(&mut st, i, j);
        let mut rhs = Vec::with_capacity(f.len());
        let e = st.ecol.data.chunks_exact(n).skip(j * r).take(r);
        rhs.extend(e.zip(&f).map(|(col, fk)| col[i] - fk));
        if i != j {
            let e = st.ecol.data.chunks_exact(n).skip(i * r).take(r);
            rhs.extend(e.zip(&f[r..]).map(|(col, fk)| col[j] - fk));
        }
        let sys = small_system_from(&st.diags, tps.s, i, j);
        let x = solve_cyclic_qr(&sys, &rhs)?;
        store(&mut st, i, j, &x);
    }
    Ok(st.solution())
}

/// Triangularize, certify, back substitute, undo the change of variables.
pub fn solve_periodic(ps: &PeriodicSystem) -> Result<Vec<Matrix>> {
    if ps.r() == 0 {
        return Ok(Vec::new());
    }
    let (tps, cert) = triangularize_certified(ps)?;
    if !cert.is_nonsingular() {
        return Err(Error::Singular(Box::new(cert)));
    }
    let xhat = backsub_solve(&tps)?;
    Ok(untransform(&tps, xhat))
}

/// Back substitution only; the coefficients must already be triangular.
pub fn solve_triangular(ps: &PeriodicSystem) -> Result<Vec<Matrix>> {
    backsub_solve(&TriangularPeriodicSystem::from_triangular(ps)?)
}

/// A singular small system means the periodic system is singular (or on
/// the numerical border); report it with a certificate when one agrees.
fn explain(ps: &PeriodicSystem, err: Error) -> Error {
    if let Error::SingularSmallSystem { .. } = err {
        if let Ok(cert) = certify_periodic(ps, Method::Formal) {
            if !cert.is_nonsingular() {
                return Error::Singular(Box::new(cert));
            }
        }
    }
    err
}

/// Solves a general system: reduction, periodic solves, recovery.
pub fn solve_system(sys: &SylvesterSystem) -> Result<Vec<Matrix>> {
    let violations = validate(sys);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations.iter().map(|v| v.to_string()).collect()));
    }
    let mut xs = vec![Matrix::zeros(sys.n, sys.n); sys.unknowns];
    for (idx, red) in reduce(sys)?.into_iter().enumerate() {
        let rc = match red {
            Reduction::Singular(mut cert) => {
                cert.component = Some(idx);
                return Err(Error::Singular(cert));
            }
            Reduction::Reduced(rc) => rc,
        };
        let ys = solve_periodic(&rc.periodic).map_err(|e| match explain(&rc.periodic, e) {
            Error::Singular(mut c) => {
                c.component = Some(idx);
                Error::Singular(c)
            }
            other => other,
        })?;
        let local = rc.lift(&ys)?;
        for (l, &g) in rc.component.unknowns.iter().enumerate() {
            xs[g] = local[l].clone();
        }
    }
    Ok(xs)
}
