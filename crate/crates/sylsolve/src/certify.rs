//! Nonsingularity certificates from eigenvalues of formal products or of
//! block-cyclic pencils.
//!
//! All spectral comparisons are projective: eigenvalues are unit pairs
//! `(num, den)` and two values coincide when `|num_i den_j − num_j den_i|`
//! (or the product analogue for reciprocals) is at most [`tol_spec`].

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::{Matrix, C64, ONE, ZERO};
use crate::model::{apply_star, validate, PeriodicSystem, StarFlag, SylvesterSystem};
use crate::pschur::{chordal, cyclic_pencil, formal_spectrum, pencil_eigenvalues, SignedSequence, SpectrumReport};
use crate::reduction::{reduce, Reduction};

pub const DEFAULT_TOL_SPEC: f64 = 1e-8;

/// Gaps within this factor of the tolerance are reported as near misses.
pub const NEAR_MISS_FACTOR: f64 = 1e3;

/// `tol_spec`, overridable through `SYLSOLVE_TOL_SPEC`.
pub fn tol_spec() -> f64 {
    std::env::var("SYLSOLVE_TOL_SPEC")
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|t| t.is_finite() && *t >= 0.0)
        .unwrap_or(DEFAULT_TOL_SPEC)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarMode {
    Transpose,
    ConjTranspose,
}

impl StarMode {
    pub fn of(flag: StarFlag) -> Option<StarMode> {
        match flag {
            StarFlag::None => None,
            StarFlag::Transpose => Some(StarMode::Transpose),
            StarFlag::ConjTranspose => Some(StarMode::ConjTranspose),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Nonsingular,
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reason {
    ProductIrregular,
    SpectraIntersect,
    ReciprocalPair,
    MinusOneMultiplicity,
    PencilIrregular,
    RootOfUnityMultiplicity,
    EliminationSingularCoeff,
    Ok,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Formal,
    Pencil,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "formal" => Some(Method::Formal),
            "pencil" => Some(Method::Pencil),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Nonsingular => "NONSINGULAR",
            Verdict::Singular => "SINGULAR",
        })
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::ProductIrregular => "PRODUCT_IRREGULAR",
            Reason::SpectraIntersect => "SPECTRA_INTERSECT",
            Reason::ReciprocalPair => "RECIPROCAL_PAIR",
            Reason::MinusOneMultiplicity => "MINUS_ONE_MULTIPLICITY",
            Reason::PencilIrregular => "PENCIL_IRREGULAR",
            Reason::RootOfUnityMultiplicity => "ROOT_OF_UNITY_MULTIPLICITY",
            Reason::EliminationSingularCoeff => "ELIMINATION_SINGULAR_COEFF",
            Reason::Ok => "OK",
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Formal => "FORMAL",
            Method::Pencil => "PENCIL",
        })
    }
}

/// Two projective eigenvalues and the size of the test quantity that
/// separated (or failed to separate) them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub first: (C64, C64),
    pub second: (C64, C64),
    pub gap: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ {} (gap {:.3e})", show_pair(self.first), show_pair(self.second), self.gap)
    }
}

fn show_pair((a, b): (C64, C64)) -> String {
    if b == ZERO {
        "inf".to_string()
    } else {
        let z = a / b;
        format!("{:.6e}{:+.6e}i", z.re, z.im)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub verdict: Verdict,
    pub reason: Reason,
    pub method: Method,
    /// Offending pairs for a singular verdict.
    pub witnesses: Vec<Witness>,
    /// Pairs that passed, but only barely.
    pub near_misses: Vec<Witness>,
    /// 0-based component the verdict refers to.
    pub component: Option<usize>,
    pub detail: String,
}

impl Certificate {
    pub fn ok(method: Method) -> Self {
        Certificate {
            verdict: Verdict::Nonsingular,
            reason: Reason::Ok,
            method,
            witnesses: Vec::new(),
            near_misses: Vec::new(),
            component: None,
            detail: String::new(),
        }
    }

    pub fn singular(reason: Reason, method: Method) -> Self {
        Certificate { verdict: Verdict::Singular, reason, ..Certificate::ok(method) }
    }

    pub fn is_nonsingular(&self) -> bool {
        self.verdict == Verdict::Nonsingular
    }

    fn with_witness(mut self, w: Witness) -> Self {
        self.witnesses.push(w);
        self
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.verdict, self.reason)?;
        if let Some(c) = self.component {
            write!(f, " (component {})", c + 1)?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

fn near(gap: f64, tol: f64) -> bool {
    gap > tol && gap <= NEAR_MISS_FACTOR * tol.max(f64::MIN_POSITIVE)
}

/// Result of a set test: the first violation, plus borderline passes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SetTest {
    pub violation: Option<Witness>,
    pub near_misses: Vec<Witness>,
}

impl SetTest {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

fn unit(p: (C64, C64)) -> (C64, C64) {
    let s = p.0.norm().hypot(p.1.norm());
    if s == 0.0 {
        p
    } else {
        (p.0 / s, p.1 / s)
    }
}

fn excluded(p: (C64, C64), exclusions: &[(C64, C64)], tol: f64) -> bool {
    exclusions.iter().any(|&x| chordal(p, x) <= tol)
}

/// Reciprocal-freeness of a multiset of projective eigenvalues. Pairs
/// `(i, j)` with `i = j` are tested too; entries within `tol` of an
/// exclusion are skipped.
pub fn is_reciprocal_free(pairs: &[(C64, C64)], mode: StarMode, exclusions: &[(C64, C64)], tol: f64) -> SetTest {
    let kept: Vec<(C64, C64)> =
        pairs.iter().map(|&p| unit(p)).filter(|&p| !excluded(p, exclusions, tol)).collect();
    let mut out = SetTest::default();
    for i in 0..kept.len() {
        for j in i..kept.len() {
            let (ni, di) = kept[i];
            let (nj, dj) = kept[j];
            let gap = match mode {
                StarMode::Transpose => (ni * nj - di * dj).norm(),
                StarMode::ConjTranspose => (ni * nj.conj() - di * dj.conj()).norm(),
            };
            let w = Witness { first: kept[i], second: kept[j], gap };
            if gap <= tol {
                if out.violation.is_none() {
                    out.violation = Some(w);
                }
            } else if near(gap, tol) {
                out.near_misses.push(w);
            }
        }
    }
    out
}

/// No value of `a` coincides with a value of `b`.
pub fn are_disjoint(a: &[(C64, C64)], b: &[(C64, C64)], tol: f64) -> SetTest {
    let mut out = SetTest::default();
    for &p in a {
        for &q in b {
            let (p, q) = (unit(p), unit(q));
            let gap = (p.0 * q.1 - q.0 * p.1).norm();
            let w = Witness { first: p, second: q, gap };
            if gap <= tol {
                if out.violation.is_none() {
                    out.violation = Some(w);
                }
            } else if near(gap, tol) {
                out.near_misses.push(w);
            }
        }
    }
    out
}

/// Eigenvalues within chordal distance `tol` of `target`, plus near misses.
pub fn cluster_at(pairs: &[(C64, C64)], target: (C64, C64), tol: f64) -> (Vec<(C64, C64)>, Vec<Witness>) {
    let mut hits = Vec::new();
    let mut close = Vec::new();
    for &p in pairs {
        let gap = chordal(p, target);
        if gap <= tol {
            hits.push(unit(p));
        } else if near(gap, tol) {
            close.push(Witness { first: unit(p), second: target, gap });
        }
    }
    (hits, close)
}

/// The `p`-th roots of unity as projective pairs.
pub fn roots_of_unity(p: usize) -> Vec<(C64, C64)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..p)
        .map(|k| (C64::from_polar(s, std::f64::consts::TAU * k as f64 / p as f64), C64::new(s, 0.0)))
        .collect()
}

fn minus_one() -> (C64, C64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (C64::new(-s, 0.0), C64::new(s, 0.0))
}

fn neg(m: &Matrix) -> Matrix {
    m.scale(C64::new(-1.0, 0.0))
}

/// `C_r^{-1}A_r⋯C_1^{-1}A_1`.
pub fn left_product(ps: &PeriodicSystem) -> Result<SignedSequence> {
    SignedSequence::alternating(&ps.a, &ps.c)
}

/// `D_r B_r^{-1}⋯D_1 B_1^{-1}`.
pub fn right_product(ps: &PeriodicSystem) -> Result<SignedSequence> {
    let mut factors = Vec::with_capacity(2 * ps.r());
    let mut signature = Vec::with_capacity(2 * ps.r());
    for k in 0..ps.r() {
        factors.push(ps.b[k].clone());
        signature.push(-1);
        factors.push(ps.d[k].clone());
        signature.push(1);
    }
    SignedSequence::new(factors, signature)
}

/// `D_r^{-⋆}B_r^⋆⋯D_1^{-⋆}B_1^⋆ C_r^{-1}A_r⋯C_1^{-1}A_1`.
pub fn star_product(ps: &PeriodicSystem) -> Result<SignedSequence> {
    let r = ps.r();
    let mut factors = Vec::with_capacity(4 * r);
    let mut signature = Vec::with_capacity(4 * r);
    for k in 0..r {
        factors.push(ps.a[k].clone());
        signature.push(1);
        factors.push(ps.c[k].clone());
        signature.push(-1);
    }
    for k in 0..r {
        factors.push(apply_star(&ps.b[k], ps.s));
        signature.push(1);
        factors.push(apply_star(&ps.d[k], ps.s));
        signature.push(-1);
    }
    SignedSequence::new(factors, signature)
}

/// `Q(λ) = P0 + λ P1` of size `2rn`: `λA_k` then `λB_k^⋆` on the diagonal,
/// `C_1..C_r, D_1^⋆..D_{r−1}^⋆` on the superdiagonal and `−D_r^⋆` in the corner.
pub fn star_pencil(ps: &PeriodicSystem) -> (Matrix, Matrix) {
    let r = ps.r();
    let n = ps.n;
    let size = 2 * r * n;
    let mut p0 = Matrix::zeros(size, size);
    let mut p1 = Matrix::zeros(size, size);
    let put = |m: &mut Matrix, bi: usize, bj: usize, x: &Matrix, sign: f64| {
        for j in 0..n {
            for i in 0..n {
                m[(bi * n + i, bj * n + j)] += x[(i, j)] * sign;
            }
        }
    };
    for k in 0..r {
        put(&mut p1, k, k, &ps.a[k], 1.0);
        put(&mut p1, r + k, r + k, &apply_star(&ps.b[k], ps.s), 1.0);
        put(&mut p0, k, k + 1, &ps.c[k], 1.0);
        let dk = apply_star(&ps.d[k], ps.s);
        if k + 1 < r {
            put(&mut p0, r + k, r + k + 1, &dk, 1.0);
        } else {
            put(&mut p0, 2 * r - 1, 0, &dk, -1.0);
        }
    }
    (p0, p1)
}

/// The two `rn` pencils `λ·diag(A) + cyclic(C)` and `λ·diag(D) + cyclic(B)`.
/// In the second, block row `k` holds `λD_k` and `B_{k+1}`: its `r`-th
/// powers are then tied to `D_r B_r^{-1}⋯D_1 B_1^{-1}`. Pairing `D_k` with
/// `B_k` instead gives a different product once `r ≥ 2`.
pub fn plain_pencils(ps: &PeriodicSystem) -> ((Matrix, Matrix), (Matrix, Matrix)) {
    let (l0, l1) = cyclic_pencil(&ps.a, &ps.c);
    let mut shifted = ps.b.clone();
    shifted.rotate_left(1);
    let (r0, r1) = cyclic_pencil(&ps.d, &shifted);
    ((neg(&l0), l1), (neg(&r0), r1))
}

fn from_test(test: SetTest, reason: Reason, method: Method) -> Certificate {
    let mut cert = match test.violation {
        Some(w) => Certificate::singular(reason, method).with_witness(w),
        None => Certificate::ok(method),
    };
    cert.near_misses = test.near_misses;
    cert
}

fn merge(first: Certificate, second: Certificate) -> Certificate {
    if !first.is_nonsingular() {
        return first;
    }
    let mut out = second;
    let mut near = first.near_misses;
    near.append(&mut out.near_misses);
    out.near_misses = near;
    out
}

fn require_star(ps: &PeriodicSystem) -> Result<StarMode> {
    StarMode::of(ps.s).ok_or_else(|| Error::Unsupported("expected a starred periodic system".into()))
}

fn require_plain(ps: &PeriodicSystem) -> Result<()> {
    if ps.s.is_star() {
        return Err(Error::Unsupported("expected a star-free periodic system".into()));
    }
    Ok(())
}

/// Both formal products regular with disjoint spectra.
pub fn check_plain_periodic(ps: &PeriodicSystem) -> Result<Certificate> {
    require_plain(ps)?;
    let left = formal_spectrum(&left_product(ps)?)?;
    let right = formal_spectrum(&right_product(ps)?)?;
    Ok(plain_verdict(&left, &right, Reason::ProductIrregular, Method::Formal))
}

/// Verdict from the spectra of the left and right products.
pub fn plain_verdict(left: &SpectrumReport, right: &SpectrumReport, irregular: Reason, method: Method) -> Certificate {
    if !left.regular || !right.regular {
        let mut cert = Certificate::singular(irregular, method);
        cert.detail = if left.regular { "right factor irregular" } else { "left factor irregular" }.into();
        return cert;
    }
    from_test(are_disjoint(&left.pairs, &right.pairs, tol_spec()), Reason::SpectraIntersect, method)
}

/// ⊤: `Λ(Π)∖{−1}` reciprocal free and `−1` at most simple. ℍ: `Λ(Π)`
/// ℍ-reciprocal free.
pub fn check_star_periodic(ps: &PeriodicSystem) -> Result<Certificate> {
    let mode = require_star(ps)?;
    let spectrum = formal_spectrum(&star_product(ps)?)?;
    Ok(star_verdict(&spectrum, mode))
}

/// Verdict from the spectrum of the `4r`-factor star product.
pub fn star_verdict(spectrum: &SpectrumReport, mode: StarMode) -> Certificate {
    if !spectrum.regular {
        return Certificate::singular(Reason::ProductIrregular, Method::Formal);
    }
    let tol = tol_spec();
    match mode {
        StarMode::ConjTranspose => from_test(
            is_reciprocal_free(&spectrum.pairs, mode, &[], tol),
            Reason::ReciprocalPair,
            Method::Formal,
        ),
        StarMode::Transpose => {
            let m1 = minus_one();
            let (hits, close) = cluster_at(&spectrum.pairs, m1, tol);
            let mut mult = if hits.len() > 1 {
                let mut c = Certificate::singular(Reason::MinusOneMultiplicity, Method::Formal);
                c.witnesses = hits.iter().map(|&h| Witness { first: h, second: m1, gap: chordal(h, m1) }).collect();
                c.detail = format!("eigenvalue -1 has multiplicity {}", hits.len());
                c
            } else {
                Certificate::ok(Method::Formal)
            };
            mult.near_misses = close;
            let free = is_reciprocal_free(&spectrum.pairs, mode, &[m1], tol);
            merge(from_test(free, Reason::ReciprocalPair, Method::Formal), mult)
        }
    }
}

/// The same conditions read off the eigenvalues of the `2rn` pencil.
pub fn check_star_pencil(ps: &PeriodicSystem) -> Result<Certificate> {
    let mode = require_star(ps)?;
    let (p0, p1) = star_pencil(ps);
    let spectrum = match pencil_eigenvalues(&p0, &p1) {
        Ok(s) => s,
        Err(Error::IrregularPencil) => return Ok(Certificate::singular(Reason::PencilIrregular, Method::Pencil)),
        Err(e) => return Err(e),
    };
    let tol = tol_spec();
    Ok(match mode {
        StarMode::ConjTranspose => from_test(
            is_reciprocal_free(&spectrum.pairs, mode, &[], tol),
            Reason::ReciprocalPair,
            Method::Pencil,
        ),
        StarMode::Transpose => {
            let roots = roots_of_unity(2 * ps.r());
            let mut mult = Certificate::ok(Method::Pencil);
            for &xi in &roots {
                let (hits, mut close) = cluster_at(&spectrum.pairs, xi, tol);
                mult.near_misses.append(&mut close);
                if hits.len() > 1 && mult.is_nonsingular() {
                    let near = std::mem::take(&mut mult.near_misses);
                    mult = Certificate::singular(Reason::RootOfUnityMultiplicity, Method::Pencil);
                    mult.near_misses = near;
                    mult.witnesses =
                        hits.iter().map(|&h| Witness { first: h, second: xi, gap: chordal(h, xi) }).collect();
                    mult.detail = format!("root of unity has multiplicity {}", hits.len());
                }
            }
            let free = is_reciprocal_free(&spectrum.pairs, mode, &roots, tol);
            merge(from_test(free, Reason::ReciprocalPair, Method::Pencil), mult)
        }
    })
}

/// Both block-cyclic pencils regular with disjoint spectra.
pub fn check_plain_pencil(ps: &PeriodicSystem) -> Result<Certificate> {
    require_plain(ps)?;
    let ((l0, l1), (r0, r1)) = plain_pencils(ps);
    let spectrum = |p0: &Matrix, p1: &Matrix| match pencil_eigenvalues(p0, p1) {
        Ok(s) => Ok(s),
        Err(Error::IrregularPencil) => Ok(SpectrumReport { pairs: Vec::new(), regular: false }),
        Err(e) => Err(e),
    };
    let left = spectrum(&l0, &l1)?;
    let right = spectrum(&r0, &r1)?;
    Ok(plain_verdict(&left, &right, Reason::PencilIrregular, Method::Pencil))
}

pub fn certify_periodic(ps: &PeriodicSystem, method: Method) -> Result<Certificate> {
    match (ps.s.is_star(), method) {
        (false, Method::Formal) => check_plain_periodic(ps),
        (false, Method::Pencil) => check_plain_pencil(ps),
        (true, Method::Formal) => check_star_periodic(ps),
        (true, Method::Pencil) => check_star_pencil(ps),
    }
}

/// Certificate for a whole system; the first singular component decides.
pub fn certify_system(sys: &SylvesterSystem, method: Method) -> Result<Certificate> {
    let violations = validate(sys);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations.iter().map(|v| v.to_string()).collect()));
    }
    let mut out = Certificate::ok(method);
    for (idx, red) in reduce(sys)?.into_iter().enumerate() {
        let mut cert = match red {
            Reduction::Singular(c) => *c,
            Reduction::Reduced(rc) => certify_periodic(&rc.periodic, method)?,
        };
        cert.method = method;
        if !cert.is_nonsingular() {
            cert.component = Some(idx);
            return Ok(cert);
        }
        out.near_misses.append(&mut cert.near_misses);
    }
    Ok(out)
}

/// `(num, den)` from a finite value; handy for building test sets.
pub fn pair_of(z: C64) -> (C64, C64) {
    unit((z, ONE))
}

/// The point at infinity.
pub fn infinity() -> (C64, C64) {
    (ONE, ZERO)
}

/// `−S`.
pub fn negated(pairs: &[(C64, C64)]) -> Vec<(C64, C64)> {
    pairs.iter().map(|&(a, b)| (-a, b)).collect()
}

/// `S^{-1}`, swapping 0 and ∞.
pub fn inverted(pairs: &[(C64, C64)]) -> Vec<(C64, C64)> {
    pairs.iter().map(|&(a, b)| (b, a)).collect()
}

/// All `p`-th roots of every element; 0 and ∞ are their own roots.
pub fn root_closure(pairs: &[(C64, C64)], p: usize) -> Vec<(C64, C64)> {
    let inv = 1.0 / p as f64;
    let mut out = Vec::with_capacity(pairs.len() * p);
    for &(a, b) in pairs {
        let (ra, rb) = (a.powf(inv), b.powf(inv));
        for k in 0..p {
            out.push(unit((ra * C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / p as f64), rb)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Matrix;
    use crate::oracle::{gen_dense, gen_random, oracle_solve, BruteOutcome, DEFAULT_CAP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = DEFAULT_TOL_SPEC;

    fn scalar(x: f64) -> Matrix {
        Matrix::from_real_rows(&[&[x]])
    }

    fn scalar_system(a: f64, b: f64, c: f64, d: f64, s: StarFlag) -> PeriodicSystem {
        PeriodicSystem {
            n: 1,
            a: vec![scalar(a)],
            b: vec![scalar(b)],
            c: vec![scalar(c)],
            d: vec![scalar(d)],
            e: vec![scalar(1.0)],
            s,
        }
    }

    fn oracle_nonsingular(ps: &PeriodicSystem) -> bool {
        matches!(oracle_solve(&ps.to_system(), DEFAULT_CAP).unwrap(), BruteOutcome::Solved(_))
    }

    fn pairs(zs: &[C64]) -> Vec<(C64, C64)> {
        zs.iter().map(|&z| pair_of(z)).collect()
    }

    #[test]
    fn reciprocal_free_examples() {
        let t = StarMode::Transpose;
        let h = StarMode::ConjTranspose;
        assert!(is_reciprocal_free(&pairs(&[C64::new(2.0, 0.0), C64::new(3.0, 0.0)]), t, &[], TOL).passed());
        let one = is_reciprocal_free(&pairs(&[C64::new(1.0, 0.0)]), t, &[], TOL);
        let w = one.violation.unwrap();
        assert_eq!(w.first, w.second);
        let i = pairs(&[C64::new(0.0, 1.0)]);
        assert!(is_reciprocal_free(&i, t, &[], TOL).passed());
        assert!(!is_reciprocal_free(&i, h, &[], TOL).passed());
        // 0 and ∞ are reciprocal to each other
        let zi = vec![pair_of(ZERO), infinity()];
        assert!(!is_reciprocal_free(&zi, t, &[], TOL).passed());
        assert!(is_reciprocal_free(&zi[..1], t, &[], TOL).passed());
    }

    #[test]
    fn set_transforms() {
        let s = vec![pair_of(C64::new(4.0, 0.0)), pair_of(ZERO), infinity()];
        let roots = root_closure(&s, 2);
        assert_eq!(roots.len(), 6);
        assert!(chordal(roots[0], pair_of(C64::new(2.0, 0.0))) < 1e-15);
        assert!(chordal(roots[1], pair_of(C64::new(-2.0, 0.0))) < 1e-15);
        assert!(chordal(roots[2], pair_of(ZERO)) < 1e-15);
        assert!(chordal(roots[5], infinity()) < 1e-15);
        assert!(chordal(inverted(&s)[1], infinity()) < 1e-15);
        assert!(chordal(negated(&s)[0], pair_of(C64::new(-4.0, 0.0))) < 1e-15);
        // 0 and ∞ are reciprocal
        for mode in [StarMode::Transpose, StarMode::ConjTranspose] {
            assert!(!is_reciprocal_free(&s, mode, &[], TOL).passed());
            for t in [negated(&s), inverted(&s), root_closure(&s, 3)] {
                assert!(!is_reciprocal_free(&t, mode, &[], TOL).passed());
            }
        }
    }

    #[test]
    fn exclusions_and_clusters() {
        let s = pairs(&[C64::new(-1.0, 0.0), C64::new(2.0, 0.0)]);
        assert!(!is_reciprocal_free(&s, StarMode::Transpose, &[], TOL).passed());
        assert!(is_reciprocal_free(&s, StarMode::Transpose, &[minus_one()], TOL).passed());
        let (hits, _) = cluster_at(&s, minus_one(), TOL);
        assert_eq!(hits.len(), 1);
        let close = pairs(&[C64::new(-1.0 + 1e-7, 0.0)]);
        let (hits, near) = cluster_at(&close, minus_one(), TOL);
        assert!(hits.is_empty());
        assert_eq!(near.len(), 1);
    }

    #[test]
    fn plain_scalar_examples() {
        let ok = scalar_system(2.0, 1.0, 1.0, 1.0, StarFlag::None);
        assert!(check_plain_periodic(&ok).unwrap().is_nonsingular());
        assert!(check_plain_pencil(&ok).unwrap().is_nonsingular());
        let bad = scalar_system(1.0, 1.0, 1.0, 1.0, StarFlag::None);
        let c = check_plain_periodic(&bad).unwrap();
        assert_eq!(c.reason, Reason::SpectraIntersect);
        assert_eq!(c.witnesses.len(), 1);
        assert_eq!(check_plain_pencil(&bad).unwrap().reason, Reason::SpectraIntersect);
    }

    #[test]
    fn identity_cycle_is_singular() {
        let id = Matrix::identity(2);
        let ps = PeriodicSystem {
            n: 2,
            a: vec![id.clone(); 2],
            b: vec![id.clone(); 2],
            c: vec![id.clone(); 2],
            d: vec![id.clone(); 2],
            e: vec![id.clone(); 2],
            s: StarFlag::None,
        };
        assert_eq!(check_plain_pencil(&ps).unwrap().reason, Reason::SpectraIntersect);
        assert_eq!(check_plain_periodic(&ps).unwrap().reason, Reason::SpectraIntersect);
    }

    #[test]
    fn star_scalar_examples() {
        // x + x^T = 2x
        let t = scalar_system(1.0, 1.0, -1.0, 1.0, StarFlag::Transpose);
        assert!(check_star_periodic(&t).unwrap().is_nonsingular());
        assert!(check_star_pencil(&t).unwrap().is_nonsingular());
        let (p0, p1) = star_pencil(&t);
        // Q(λ) = [[λ, −1], [−1, λ]]
        assert_eq!(p0, Matrix::from_real_rows(&[&[0.0, -1.0], &[-1.0, 0.0]]));
        assert_eq!(p1, Matrix::identity(2));

        let h = scalar_system(1.0, 1.0, -1.0, 1.0, StarFlag::ConjTranspose);
        let c = check_star_periodic(&h).unwrap();
        assert_eq!(c.reason, Reason::ReciprocalPair);
        assert_eq!(check_star_pencil(&h).unwrap().reason, Reason::ReciprocalPair);

        // x − x^T is singular
        let skew = scalar_system(1.0, 1.0, 1.0, 1.0, StarFlag::Transpose);
        assert!(!check_star_periodic(&skew).unwrap().is_nonsingular());
        assert!(!check_star_pencil(&skew).unwrap().is_nonsingular());
        assert!(!oracle_nonsingular(&skew));
    }

    #[test]
    fn minus_one_twice() {
        // r = 1, n = 2: Π = −I has −1 with multiplicity 2
        let id = Matrix::identity(2);
        let ps = PeriodicSystem {
            n: 2,
            a: vec![id.clone()],
            b: vec![id.clone()],
            c: vec![id.scale(C64::new(-1.0, 0.0))],
            d: vec![id.clone()],
            e: vec![id.clone()],
            s: StarFlag::Transpose,
        };
        let c = check_star_periodic(&ps).unwrap();
        assert_eq!(c.reason, Reason::MinusOneMultiplicity);
        assert_eq!(c.witnesses.len(), 2);
        assert_eq!(check_star_pencil(&ps).unwrap().reason, Reason::RootOfUnityMultiplicity);
        assert!(!oracle_nonsingular(&ps));
    }

    #[test]
    fn root_map_between_methods() {
        // Λ(Q) consists of the 2r-th roots of −Λ(Π)^{-1}
        for seed in 0..6 {
            let ps = gen_dense(2, 2, StarFlag::Transpose, 40 + seed);
            let pi = formal_spectrum(&star_product(&ps).unwrap()).unwrap();
            let (p0, p1) = star_pencil(&ps);
            let q = pencil_eigenvalues(&p0, &p1).unwrap();
            assert_eq!(q.pairs.len(), 4 * pi.pairs.len());
            for &(a, b) in &q.pairs {
                let z = a / b;
                let pow = z.powi(4);
                let best = pi
                    .values()
                    .iter()
                    .map(|v| (pow + 1.0 / v.unwrap()).norm() / pow.norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8, "seed {} best {}", seed, best);
            }
        }
    }

    #[test]
    fn right_pencil_tracks_right_product() {
        for seed in 0..6 {
            let r = 2 + seed as usize % 3;
            let ps = gen_dense(2, r, StarFlag::None, 90 + seed);
            let nu = formal_spectrum(&right_product(&ps).unwrap()).unwrap();
            let (_, (p0, p1)) = plain_pencils(&ps);
            let q = pencil_eigenvalues(&p0, &p1).unwrap();
            // λ^r = (−1)^r / ν
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            for &(a, b) in &q.pairs {
                let lam = (b.powi(r as i32) * sign, a.powi(r as i32));
                let best = nu.pairs.iter().map(|&v| chordal(lam, v)).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8, "seed {} best {}", seed, best);
            }
        }
    }

    #[test]
    fn agrees_with_oracle_on_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..90 {
            let star = [StarFlag::None, StarFlag::Transpose, StarFlag::ConjTranspose][trial % 3];
            let n = rng.random_range(1..4);
            let r = rng.random_range(1..4);
            let ps = if trial % 2 == 0 { gen_random(n, r, star, trial as u64) } else { gen_dense(n, r, star, trial as u64) };
            let want = oracle_nonsingular(&ps);
            for method in [Method::Formal, Method::Pencil] {
                let cert = certify_periodic(&ps, method).unwrap();
                assert_eq!(cert.is_nonsingular(), want, "trial {} {:?}: {}", trial, method, cert);
            }
        }
    }

    #[test]
    fn hermitian_sign_flip() {
        for seed in 0..10 {
            let ps = gen_dense(2, 2, StarFlag::ConjTranspose, seed);
            let mut flipped = ps.clone();
            let last = ps.r() - 1;
            flipped.c[last] = neg(&ps.c[last]);
            assert_eq!(
                check_star_periodic(&ps).unwrap().verdict,
                check_star_periodic(&flipped).unwrap().verdict
            );
        }
        // the singular scalar example stays singular
        let h = scalar_system(1.0, 1.0, 1.0, 1.0, StarFlag::ConjTranspose);
        let f = scalar_system(1.0, 1.0, -1.0, 1.0, StarFlag::ConjTranspose);
        assert_eq!(check_star_periodic(&h).unwrap().verdict, check_star_periodic(&f).unwrap().verdict);
    }

    #[test]
    fn system_level() {
        let empty = SylvesterSystem { n: 2, unknowns: 0, equations: Vec::new() };
        assert!(certify_system(&empty, Method::Formal).unwrap().is_nonsingular());

        let good = scalar_system(2.0, 1.0, 1.0, 1.0, StarFlag::None).to_system();
        let bad = scalar_system(1.0, 1.0, 1.0, 1.0, StarFlag::None).to_system();
        let mut both = good.clone();
        let mut e = bad.equations[0].clone();
        e.alpha = 1;
        e.beta = 1;
        both.equations.push(e);
        both.unknowns = 2;
        let c = certify_system(&both, Method::Formal).unwrap();
        assert_eq!(c.reason, Reason::SpectraIntersect);
        assert_eq!(c.component, Some(1));
        assert!(c.to_string().starts_with("SINGULAR / SPECTRA_INTERSECT (component 2)"));

        // pendant X_2 with a singular coefficient on its side
        let mut pend = good.clone();
        let mut e = good.equations[0].clone();
        e.alpha = 1;
        e.beta = 0;
        e.a = scalar(0.0);
        pend.equations.push(e);
        pend.unknowns = 2;
        assert_eq!(certify_system(&pend, Method::Formal).unwrap().reason, Reason::EliminationSingularCoeff);
    }

    #[test]
    fn env_override() {
        assert_eq!(DEFAULT_TOL_SPEC, 1e-8);
        assert!(tol_spec() > 0.0);
    }
}
