//! Dense Kronecker reference: vectorize a system, solve it with pivoted QR,
//! measure residuals, and generate random instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{vec_norm, Matrix, QrFactor, C64, UNIT_ROUNDOFF, ZERO};
use crate::model::{Equation, PeriodicSystem, StarFlag, SylvesterSystem};

/// Largest `n²·m` the oracle will assemble.
pub const DEFAULT_CAP: usize = 4096;
/// Multiplier in the rank tolerance `rows · u · scale · RANK_TOLFAC`, where
/// `scale` is the larger of `‖M‖_F` and the norm of its uncancelled terms.
pub const RANK_TOLFAC: f64 = 64.0;

/// Flat position of `X_k(i, j)` (0-based).
pub fn layout_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    k * n * n + j * n + i
}

#[derive(Clone, Debug)]
pub struct VectorizedSystem {
    pub m: Matrix,
    pub rhs: Vec<C64>,
    pub n: usize,
    pub unknowns: usize,
    /// Rows and columns are `[Re; Im]` of the complex layout; all entries real.
    pub real_split: bool,
    /// Norm of `M` before the two terms of an equation were summed into the
    /// same block. Exact cancellation there is a rank loss, not noise.
    pub term_scale: f64,
}

/// `P` with `P · vec(X) = vec(X^⊤)` for `a × b` matrices `X`.
pub fn commutation(a: usize, b: usize) -> Matrix {
    let mut p = Matrix::zeros(a * b, a * b);
    for i in 0..a {
        for j in 0..b {
            p[(j + i * b, i + j * a)] = C64::new(1.0, 0.0);
        }
    }
    p
}

/// Adds `sign · A Y B` with `Y = X_alpha^flag` into block row `row` of `m`.
fn add_term(
    m: &mut Matrix,
    n: usize,
    row: usize,
    alpha: usize,
    flag: StarFlag,
    a: &Matrix,
    b: &Matrix,
    sign: f64,
    split: Option<usize>,
) {
    for j in 0..n {
        for i in 0..n {
            let ri = layout_index(n, i, j, row);
            for q in 0..n {
                let bq = b[(q, j)];
                if bq == ZERO {
                    continue;
                }
                for p in 0..n {
                    let kappa = a[(i, p)] * bq * sign;
                    if kappa == ZERO {
                        continue;
                    }
                    // coefficient of Y(p, q)
                    let (xi, xj) = if flag.is_star() { (q, p) } else { (p, q) };
                    let ci = layout_index(n, xi, xj, alpha);
                    match split {
                        None => m[(ri, ci)] += kappa,
                        Some(big) => {
                            let (kr, ki) = (kappa.re, kappa.im);
                            let conj = flag == StarFlag::ConjTranspose;
                            let (rr, ri_, ir, ii) = if conj { (kr, ki, ki, -kr) } else { (kr, -ki, ki, kr) };
                            m[(ri, ci)] += C64::new(rr, 0.0);
                            m[(ri, big + ci)] += C64::new(ri_, 0.0);
                            m[(big + ri, ci)] += C64::new(ir, 0.0);
                            m[(big + ri, big + ci)] += C64::new(ii, 0.0);
                        }
                    }
                }
            }
        }
    }
}

/// Kronecker form of a system. ℍ systems use the real split.
pub fn build_vectorized(sys: &SylvesterSystem, cap: usize) -> Result<VectorizedSystem> {
    let n = sys.n;
    let size = n * n * sys.unknowns;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let split = sys.star_kind()? == Some(StarFlag::ConjTranspose);
    build(sys, split)
}

/// ℍ systems as a complex system, valid only when no flag is ℍ; otherwise
/// the caller wants [`doubled_hermitian`].
pub fn build_complex(sys: &SylvesterSystem, cap: usize) -> Result<VectorizedSystem> {
    let n = sys.n;
    let size = n * n * sys.unknowns;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    if sys.star_kind()? == Some(StarFlag::ConjTranspose) {
        return Err(Error::Unsupported("conjugate transposes are not complex-linear".into()));
    }
    build(sys, false)
}

fn build(sys: &SylvesterSystem, split: bool) -> Result<VectorizedSystem> {
    let n = sys.n;
    let big = n * n * sys.unknowns;
    let dim = if split { 2 * big } else { big };
    let mut m = Matrix::zeros(dim, dim);
    let mut rhs = vec![ZERO; dim];
    let sp = if split { Some(big) } else { None };
    for (row, eq) in sys.equations.iter().enumerate() {
        add_term(&mut m, n, row, eq.alpha, eq.s, &eq.a, &eq.b, 1.0, sp);
        add_term(&mut m, n, row, eq.beta, eq.t, &eq.c, &eq.d, -1.0, sp);
        for j in 0..n {
            for i in 0..n {
                let idx = layout_index(n, i, j, row);
                let e = eq.e[(i, j)];
                if split {
                    rhs[idx] = C64::new(e.re, 0.0);
                    rhs[big + idx] = C64::new(e.im, 0.0);
                } else {
                    rhs[idx] = e;
                }
            }
        }
    }
    let term_scale = frobenius_norm_of_m(sys) * if split { std::f64::consts::SQRT_2 } else { 1.0 };
    Ok(VectorizedSystem { m, rhs, n, unknowns: sys.unknowns, real_split: split, term_scale })
}

/// Plain system in `X_1..X_{2r}` whose solutions with `X_{r+k} = X_k^H`
/// are the solutions of the periodic ℍ system.
pub fn doubled_hermitian(ps: &PeriodicSystem) -> SylvesterSystem {
    let r = ps.r();
    let mut equations = Vec::with_capacity(2 * r);
    for k in 0..r {
        equations.push(Equation {
            alpha: k,
            s: StarFlag::None,
            beta: k + 1,
            t: StarFlag::None,
            a: ps.a[k].clone(),
            b: ps.b[k].clone(),
            c: ps.c[k].clone(),
            d: ps.d[k].clone(),
            e: ps.e[k].clone(),
        });
    }
    for k in 0..r {
        equations.push(Equation {
            alpha: r + k,
            s: StarFlag::None,
            beta: (r + k + 1) % (2 * r),
            t: StarFlag::None,
            a: ps.b[k].adjoint(),
            b: ps.a[k].adjoint(),
            c: ps.d[k].adjoint(),
            d: ps.c[k].adjoint(),
            e: ps.e[k].adjoint(),
        });
    }
    SylvesterSystem { n: ps.n, unknowns: 2 * r, equations }
}

#[derive(Clone, Debug)]
pub enum BruteOutcome {
    Solved(Vec<Matrix>),
    Singular { rank: usize, size: usize },
}

impl BruteOutcome {
    pub fn is_singular(&self) -> bool {
        matches!(self, BruteOutcome::Singular { .. })
    }
}

pub fn rank_tolerance(vs: &VectorizedSystem) -> f64 {
    vs.m.rows() as f64 * UNIT_ROUNDOFF * vs.m.frobenius().max(vs.term_scale) * RANK_TOLFAC
}

pub fn brute_solve(vs: &VectorizedSystem) -> BruteOutcome {
    let size = vs.m.rows();
    let qr = QrFactor::new(&vs.m, true);
    let rank = qr.rank(rank_tolerance(vs));
    if rank < size {
        return BruteOutcome::Singular { rank, size };
    }
    let x = qr.solve(&vs.rhs);
    let n = vs.n;
    let big = n * n * vs.unknowns;
    let xs = (0..vs.unknowns)
        .map(|k| {
            Matrix::from_fn(n, n, |i, j| {
                let idx = layout_index(n, i, j, k);
                if vs.real_split {
                    C64::new(x[idx].re, x[big + idx].re)
                } else {
                    x[idx]
                }
            })
        })
        .collect();
    BruteOutcome::Solved(xs)
}

/// Vectorize and solve in one go.
pub fn oracle_solve(sys: &SylvesterSystem, cap: usize) -> Result<BruteOutcome> {
    Ok(brute_solve(&build_vectorized(sys, cap)?))
}

/// Per-equation `R_k = ‖residual_k‖_F` and `R = sqrt(Σ R_k²)`.
pub fn residuals(sys: &SylvesterSystem, xs: &[Matrix]) -> (Vec<f64>, f64) {
    let rk: Vec<f64> = sys.residuals(xs).iter().map(|m| m.frobenius()).collect();
    let total = rk.iter().map(|v| v * v).sum::<f64>().sqrt();
    (rk, total)
}

/// `sqrt(Σ_k ‖A_k‖²‖B_k‖² + ‖C_k‖²‖D_k‖²)`. This is `‖M‖_F` whenever the two
/// terms of each equation occupy different blocks of `M`, which holds for
/// every periodic system with `r ≥ 2`.
pub fn frobenius_norm_of_m(sys: &SylvesterSystem) -> f64 {
    sys.equations
        .iter()
        .map(|e| {
            let ab = e.a.frobenius() * e.b.frobenius();
            let cd = e.c.frobenius() * e.d.frobenius();
            ab * ab + cd * cd
        })
        .sum::<f64>()
        .sqrt()
}

fn stacked_norm(ms: &[Matrix]) -> f64 {
    ms.iter().map(|m| m.frobenius().powi(2)).sum::<f64>().sqrt()
}

/// `R / (‖M‖ ‖𝒳‖₂ + ‖ℰ‖₂)` where `‖M‖` is the lower bound
/// `‖M‖_F / sqrt(n² m)` of the spectral norm, so the ratio never
/// understates the spectral-norm version.
pub fn relative_residual(sys: &SylvesterSystem, xs: &[Matrix]) -> f64 {
    let (_, r) = residuals(sys, xs);
    let dim = ((sys.n * sys.n * sys.unknowns) as f64).sqrt();
    let mnorm = frobenius_norm_of_m(sys) / dim;
    let es: Vec<Matrix> = sys.equations.iter().map(|e| e.e.clone()).collect();
    let denom = mnorm * stacked_norm(xs) + stacked_norm(&es);
    if denom == 0.0 {
        r
    } else {
        r / denom
    }
}

/// `‖M𝒳 − ℰ‖₂` of an assembled system.
pub fn vectorized_residual(vs: &VectorizedSystem, xs: &[Matrix]) -> f64 {
    let n = vs.n;
    let big = n * n * vs.unknowns;
    let mut x = vec![ZERO; vs.m.cols()];
    for (k, xk) in xs.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                let idx = layout_index(n, i, j, k);
                if vs.real_split {
                    x[idx] = C64::new(xk[(i, j)].re, 0.0);
                    x[big + idx] = C64::new(xk[(i, j)].im, 0.0);
                } else {
                    x[idx] = xk[(i, j)];
                }
            }
        }
    }
    let mx = vs.m.mul_vec(&x);
    let diff: Vec<C64> = mx.iter().zip(&vs.rhs).map(|(a, b)| a - b).collect();
    vec_norm(&diff)
}

/// `γ_k = c k u / (1 − c k u)`.
#[derive(Clone, Copy, Debug)]
pub struct ErrorBudget {
    pub u: f64,
    pub c: f64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        ErrorBudget { u: UNIT_ROUNDOFF, c: 8.0 }
    }
}

impl ErrorBudget {
    /// `None` once `c k u ≥ 1`.
    pub fn gamma(&self, k: usize) -> Option<f64> {
        let x = self.c * k as f64 * self.u;
        if x >= 1.0 {
            None
        } else {
            Some(x / (1.0 - x))
        }
    }
}

/// `(g + i h)/√2` with independent standard normals.
pub fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

fn random_matrix(n: usize, rng: &mut ChaCha8Rng, keep: impl Fn(usize, usize) -> bool) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if keep(i, j) {
                m[(i, j)] = complex_normal(rng);
            }
        }
    }
    m
}

fn shift(mut m: Matrix, by: f64) -> Matrix {
    for i in 0..m.rows() {
        m[(i, i)] += C64::new(by, 0.0);
    }
    m
}

/// Random periodic system with `A_k, C_k` upper and `B_k, D_k` lower
/// triangular, `A_k, B_k` shifted by `√n I`, dense `E_k`.
pub fn gen_random(n: usize, r: usize, star: StarFlag, seed: u64) -> PeriodicSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = (n as f64).sqrt();
    let mut ps = PeriodicSystem { n, a: vec![], b: vec![], c: vec![], d: vec![], e: vec![], s: star };
    for _ in 0..r {
        ps.a.push(shift(random_matrix(n, &mut rng, |i, j| i <= j), sq));
        ps.b.push(shift(random_matrix(n, &mut rng, |i, j| i >= j), sq));
        ps.c.push(random_matrix(n, &mut rng, |i, j| i <= j));
        ps.d.push(random_matrix(n, &mut rng, |i, j| i >= j));
        ps.e.push(random_matrix(n, &mut rng, |_, _| true));
    }
    ps
}

/// Same distribution without the triangular structure.
pub fn gen_dense(n: usize, r: usize, star: StarFlag, seed: u64) -> PeriodicSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = (n as f64).sqrt();
    let mut ps = PeriodicSystem { n, a: vec![], b: vec![], c: vec![], d: vec![], e: vec![], s: star };
    for _ in 0..r {
        ps.a.push(shift(random_matrix(n, &mut rng, |_, _| true), sq));
        ps.b.push(shift(random_matrix(n, &mut rng, |_, _| true), sq));
        ps.c.push(random_matrix(n, &mut rng, |_, _| true));
        ps.d.push(random_matrix(n, &mut rng, |_, _| true));
        ps.e.push(random_matrix(n, &mut rng, |_, _| true));
    }
    ps
}

/// `E_k` recomputed so that the given matrices solve the system exactly
/// (up to rounding in the products).
pub fn with_solution(sys: &SylvesterSystem, xs: &[Matrix]) -> SylvesterSystem {
    let mut out = sys.clone();
    for eq in out.equations.iter_mut() {
        eq.e = Matrix::zeros(sys.n, sys.n);
        let r = eq.residual(xs);
        eq.e = r;
    }
    out
}
