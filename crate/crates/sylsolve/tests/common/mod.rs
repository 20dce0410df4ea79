//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sylsolve::kernel::{Matrix, QrFactor, C64};
use sylsolve::model::{apply_star, Equation, PeriodicSystem, StarFlag, SylvesterSystem};
use sylsolve::oracle::{complex_normal, gen_dense, gen_random};

pub fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| complex_normal(rng))
}

pub fn unitary(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    QrFactor::new(&random_matrix(n, rng), false).q()
}

/// The same system after `X_k = U_k Y_k V_k` and multiplying equation `k`
/// by `P_k` on the left and `S_k` on the right, all unitary. Nonsingularity
/// is unchanged.
pub fn scramble(ps: &PeriodicSystem, seed: u64) -> PeriodicSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, r) = (ps.n, ps.r());
    let mut draw = |c: usize| -> Vec<Matrix> { (0..c).map(|_| unitary(n, &mut rng)).collect() };
    let (u, v, p, s) = (draw(r), draw(r), draw(r), draw(r));
    let mut out = ps.clone();
    for k in 0..r {
        let last = k + 1 == r;
        out.a[k] = p[k].mul(&ps.a[k]).mul(&u[k]);
        out.b[k] = v[k].mul(&ps.b[k]).mul(&s[k]);
        out.e[k] = p[k].mul(&ps.e[k]).mul(&s[k]);
        if last && ps.s.is_star() {
            out.c[k] = p[k].mul(&ps.c[k]).mul(&apply_star(&v[0], ps.s));
            out.d[k] = apply_star(&u[0], ps.s).mul(&ps.d[k]).mul(&s[k]);
        } else {
            let nx = (k + 1) % r;
            out.c[k] = p[k].mul(&ps.c[k]).mul(&u[nx]);
            out.d[k] = v[nx].mul(&ps.d[k]).mul(&s[k]);
        }
    }
    out
}

/// `Π_k (A_k)_ii (B_k)_jj` and `Π_k (C_k)_ii (D_k)_jj`.
pub fn diag_products(ps: &PeriodicSystem, i: usize, j: usize) -> (C64, C64) {
    let g = (0..ps.r()).map(|k| ps.a[k][(i, i)] * ps.b[k][(j, j)]).product();
    let h = (0..ps.r()).map(|k| ps.c[k][(i, i)] * ps.d[k][(j, j)]).product();
    (g, h)
}

fn scale_a(ps: &mut PeriodicSystem, i: usize, f: C64) {
    ps.a[0][(i, i)] *= f;
}

/// Triangular instance whose small system for `(i, j)` is singular.
pub fn shared_spectra(n: usize, r: usize, i: usize, j: usize, seed: u64) -> PeriodicSystem {
    let mut ps = gen_random(n, r, StarFlag::None, seed);
    let (g, h) = diag_products(&ps, i, j);
    scale_a(&mut ps, i, h / g);
    ps
}

/// `⊤` instance with a reciprocal pair at `(i, j)` (`i = j` allowed).
pub fn transpose_reciprocal(n: usize, r: usize, i: usize, j: usize, seed: u64) -> PeriodicSystem {
    let mut ps = gen_random(n, r, StarFlag::Transpose, seed);
    let (gij, hij) = diag_products(&ps, i, j);
    if i == j {
        scale_a(&mut ps, i, hij / gij);
    } else {
        let (gji, hji) = diag_products(&ps, j, i);
        scale_a(&mut ps, i, hij * hji / (gij * gji));
    }
    ps
}

/// `⊤` instance with the eigenvalue `−1` at indices 0 and 1.
pub fn minus_one_twice(n: usize, r: usize, seed: u64) -> PeriodicSystem {
    assert!(n >= 2);
    let mut ps = gen_random(n, r, StarFlag::Transpose, seed);
    for i in 0..2 {
        let (g, h) = diag_products(&ps, i, i);
        scale_a(&mut ps, i, -h / g);
    }
    ps
}

/// `ℍ` instance with `|g_ii| = |h_ii|` and an arbitrary phase.
pub fn hermitian_unimodular(n: usize, r: usize, i: usize, seed: u64) -> PeriodicSystem {
    let mut ps = gen_random(n, r, StarFlag::ConjTranspose, seed);
    let (g, h) = diag_products(&ps, i, i);
    let phase = C64::from_polar(1.0, 0.7 + seed as f64);
    scale_a(&mut ps, i, phase * (h.norm() / g.norm()));
    ps
}

/// A nonsingular cycle plus a pendant unknown whose own coefficient is
/// rank deficient.
pub fn singular_pendant(n: usize, r: usize, star: StarFlag, seed: u64) -> SylvesterSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = gen_dense(n, r, star, seed).to_system();
    let mut a = random_matrix(n, &mut rng);
    for i in 0..n {
        a[(i, 0)] = C64::new(0.0, 0.0);
    }
    let a = a.mul(&unitary(n, &mut rng));
    let m = sys.unknowns;
    let eq = Equation {
        alpha: m,
        s: StarFlag::None,
        beta: rng.random_range(0..m),
        t: star,
        a,
        b: random_matrix(n, &mut rng),
        c: random_matrix(n, &mut rng),
        d: random_matrix(n, &mut rng),
        e: random_matrix(n, &mut rng),
    };
    sys.equations.push(eq);
    sys.unknowns += 1;
    sys
}

pub fn scalar(x: f64) -> Matrix {
    Matrix::from_real_rows(&[&[x]])
}

pub fn scalar_system(a: f64, b: f64, c: f64, d: f64, s: StarFlag) -> PeriodicSystem {
    PeriodicSystem { n: 1, a: vec![scalar(a)], b: vec![scalar(b)], c: vec![scalar(c)], d: vec![scalar(d)], e: vec![scalar(1.0)], s }
}

/// Named instances that are singular by construction.
pub fn crafted_singular() -> Vec<(String, SylvesterSystem)> {
    let mut out: Vec<(String, SylvesterSystem)> = Vec::new();
    let mut push = |name: String, ps: PeriodicSystem, seed: u64| {
        out.push((format!("{} scrambled", name), scramble(&ps, seed).to_system()));
        out.push((name, ps.to_system()));
    };
    for (t, &(n, r, i, j)) in [(1, 1, 0, 0), (3, 2, 1, 1), (4, 3, 2, 0), (5, 4, 0, 3)].iter().enumerate() {
        let seed = 100 + t as u64;
        push(format!("shared spectra n={} r={} ({},{})", n, r, i, j), shared_spectra(n, r, i, j, seed), seed);
    }
    for (t, &(n, r, i, j)) in [(2, 1, 0, 0), (3, 3, 2, 1), (4, 2, 3, 0)].iter().enumerate() {
        let seed = 200 + t as u64;
        push(format!("reciprocal pair n={} r={} ({},{})", n, r, i, j), transpose_reciprocal(n, r, i, j, seed), seed);
    }
    for (t, &(n, r)) in [(2, 1), (3, 3)].iter().enumerate() {
        let seed = 300 + t as u64;
        push(format!("minus one twice n={} r={}", n, r), minus_one_twice(n, r, seed), seed);
    }
    for (t, &(n, r, i)) in [(1, 1, 0), (3, 2, 1), (4, 4, 3)].iter().enumerate() {
        let seed = 400 + t as u64;
        push(format!("unimodular H n={} r={} i={}", n, r, i), hermitian_unimodular(n, r, i, seed), seed);
    }
    let skew = scalar_system(1.0, 1.0, 1.0, 1.0, StarFlag::Transpose);
    out.push(("x - x^T".into(), skew.to_system()));
    let re = scalar_system(1.0, 1.0, -1.0, 1.0, StarFlag::ConjTranspose);
    out.push(("x + x^H".into(), re.to_system()));
    for (t, &(n, r, star)) in
        [(2, 2, StarFlag::None), (3, 1, StarFlag::Transpose), (2, 3, StarFlag::ConjTranspose), (4, 2, StarFlag::None)]
            .iter()
            .enumerate()
    {
        out.push((format!("singular pendant n={} r={} s={}", n, r, star), singular_pendant(n, r, star, 500 + t as u64)));
    }
    out
}

/// Random connected square system: a cycle with trees attached (unless
/// `pure_cycle`), stars of one kind placed at random, labels and equation
/// order shuffled.
pub fn random_general_system(rng: &mut ChaCha8Rng, n: usize, m: usize, kind: StarFlag, pure_cycle: bool) -> SylvesterSystem {
    let cyc = if pure_cycle { m } else { rng.random_range(1..=m) };
    let mut shape = Vec::new();
    let flag = |rng: &mut ChaCha8Rng| if kind.is_star() && rng.random_bool(0.4) { kind } else { StarFlag::None };
    for k in 0..cyc {
        let (s, t) = (flag(rng), flag(rng));
        shape.push((k, s, (k + 1) % cyc, t));
    }
    for v in cyc..m {
        let p = rng.random_range(0..v);
        let (s, t) = (flag(rng), flag(rng));
        if rng.random_bool(0.5) {
            shape.push((v, s, p, t));
        } else {
            shape.push((p, s, v, t));
        }
    }
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let sq = C64::new((n as f64).sqrt() + 1.0, 0.0);
    let mut eqs: Vec<Equation> = shape
        .iter()
        .map(|&(a, s, b, t)| {
            let shifted = |rng: &mut ChaCha8Rng| random_matrix(n, rng).add(&Matrix::identity(n).scale(sq));
            Equation {
                alpha: perm[a],
                s,
                beta: perm[b],
                t,
                a: shifted(rng),
                b: shifted(rng),
                c: random_matrix(n, rng),
                d: random_matrix(n, rng),
                e: random_matrix(n, rng),
            }
        })
        .collect();
    for i in (1..eqs.len()).rev() {
        eqs.swap(i, rng.random_range(0..=i));
    }
    SylvesterSystem { n, unknowns: m, equations: eqs }
}

pub fn star_parity(sys: &SylvesterSystem) -> usize {
    sys.equations.iter().map(|e| e.s.is_star() as usize + e.t.is_star() as usize).sum::<usize>() % 2
}
