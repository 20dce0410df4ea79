//! System types, the text format, and well-formedness checks.
//!
//! File format (1-based indices, `#` starts a comment):
//!
//! ```text
//! n=<int> r=<int> [m=<int>]
//! eq alpha=<int> s=<1|T|H> beta=<int> t=<1|T|H>
//! A
//! <n lines of n "re im" pairs>
//! B
//! ...
//! E
//! ...
//! ```
//!
//! `r` is the number of equations and `m` the number of unknowns (default `r`).

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::kernel::{Matrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StarFlag {
    None,
    Transpose,
    ConjTranspose,
}

impl StarFlag {
    pub fn is_star(self) -> bool {
        self != StarFlag::None
    }

    pub fn symbol(self) -> &'static str {
        match self {
            StarFlag::None => "1",
            StarFlag::Transpose => "T",
            StarFlag::ConjTranspose => "H",
        }
    }

    pub fn parse(s: &str) -> Option<StarFlag> {
        match s {
            "1" | "N" | "none" => Some(StarFlag::None),
            "T" | "t" => Some(StarFlag::Transpose),
            "H" | "h" => Some(StarFlag::ConjTranspose),
            _ => None,
        }
    }

    /// Flag of `(Y^self)^other` when both flags are drawn from {1, ⋆} for one ⋆.
    pub fn compose(self, other: StarFlag) -> StarFlag {
        match (self, other) {
            (StarFlag::None, f) | (f, StarFlag::None) => f,
            _ => StarFlag::None,
        }
    }

    /// Toggles between `1` and the star `kind`.
    pub fn toggle(self, kind: StarFlag) -> StarFlag {
        if self.is_star() {
            StarFlag::None
        } else {
            kind
        }
    }
}

impl fmt::Display for StarFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `M^flag`.
pub fn apply_star(m: &Matrix, flag: StarFlag) -> Matrix {
    match flag {
        StarFlag::None => m.clone(),
        StarFlag::Transpose => m.transpose(),
        StarFlag::ConjTranspose => m.adjoint(),
    }
}

/// `(M^flag)^H`: `M` for ℍ, `conj(M)` for ⊤ and `M^H` for 1.
pub fn star_then_adjoint(m: &Matrix, flag: StarFlag) -> Matrix {
    match flag {
        StarFlag::None => m.adjoint(),
        StarFlag::Transpose => m.conj(),
        StarFlag::ConjTranspose => m.clone(),
    }
}

/// `A X_alpha^s B − C X_beta^t D = E`; indices are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Equation {
    pub alpha: usize,
    pub s: StarFlag,
    pub beta: usize,
    pub t: StarFlag,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub e: Matrix,
}

impl Equation {
    pub fn matrices(&self) -> [(&'static str, &Matrix); 5] {
        [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d), ("E", &self.e)]
    }

    /// The same equation written with the roles of the two unknowns exchanged.
    pub fn swapped(&self) -> Equation {
        Equation {
            alpha: self.beta,
            s: self.t,
            beta: self.alpha,
            t: self.s,
            a: self.c.clone(),
            b: self.d.clone(),
            c: self.a.clone(),
            d: self.b.clone(),
            e: self.e.scale(C64::new(-1.0, 0.0)),
        }
    }

    /// Residual `A X_alpha^s B − C X_beta^t D − E`.
    pub fn residual(&self, xs: &[Matrix]) -> Matrix {
        let left = self.a.mul(&apply_star(&xs[self.alpha], self.s)).mul(&self.b);
        let right = self.c.mul(&apply_star(&xs[self.beta], self.t)).mul(&self.d);
        left.sub(&right).sub(&self.e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SylvesterSystem {
    pub n: usize,
    pub unknowns: usize,
    pub equations: Vec<Equation>,
}

/// `A_k X_k B_k − C_k X_{k+1} D_k = E_k`, with `X_{r+1} = X_1^s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSystem {
    pub n: usize,
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub c: Vec<Matrix>,
    pub d: Vec<Matrix>,
    pub e: Vec<Matrix>,
    pub s: StarFlag,
}

impl PeriodicSystem {
    pub fn r(&self) -> usize {
        self.a.len()
    }

    pub fn to_system(&self) -> SylvesterSystem {
        let r = self.r();
        let equations = (0..r)
            .map(|k| Equation {
                alpha: k,
                s: StarFlag::None,
                beta: (k + 1) % r,
                t: if k + 1 == r { self.s } else { StarFlag::None },
                a: self.a[k].clone(),
                b: self.b[k].clone(),
                c: self.c[k].clone(),
                d: self.d[k].clone(),
                e: self.e[k].clone(),
            })
            .collect();
        SylvesterSystem { n: self.n, unknowns: r, equations }
    }

    /// `(X_1, …, X_r)` residual matrices of every equation.
    pub fn residuals(&self, xs: &[Matrix]) -> Vec<Matrix> {
        let r = self.r();
        (0..r)
            .map(|k| {
                let next = if k + 1 == r { apply_star(&xs[0], self.s) } else { xs[k + 1].clone() };
                let l = self.a[k].mul(&xs[k]).mul(&self.b[k]);
                let rr = self.c[k].mul(&next).mul(&self.d[k]);
                l.sub(&rr).sub(&self.e[k])
            })
            .collect()
    }
}

impl SylvesterSystem {
    pub fn r(&self) -> usize {
        self.equations.len()
    }

    /// The single star kind in use, if any; `Err` when ⊤ and ℍ are mixed.
    pub fn star_kind(&self) -> Result<Option<StarFlag>> {
        let mut kind = None;
        for eq in &self.equations {
            for f in [eq.s, eq.t] {
                if f.is_star() {
                    match kind {
                        None => kind = Some(f),
                        Some(k) if k != f => {
                            return Err(Error::Unsupported("system mixes T and H flags".into()))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(kind)
    }

    pub fn residuals(&self, xs: &[Matrix]) -> Vec<Matrix> {
        self.equations.iter().map(|eq| eq.residual(xs)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    UnusedUnknown,
    CountMismatch,
    Shape,
    IndexOutOfRange,
    MixedStars,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ViolationKind::UnusedUnknown => "unused unknown",
            ViolationKind::CountMismatch => "count mismatch",
            ViolationKind::Shape => "shape",
            ViolationKind::IndexOutOfRange => "index out of range",
            ViolationKind::MixedStars => "mixed star types",
        };
        write!(f, "{}: {}", tag, self.detail)
    }
}

/// Number of occurrences of each unknown (a self loop counts twice).
pub fn occurrence_counts(sys: &SylvesterSystem) -> Vec<usize> {
    let mut counts = vec![0; sys.unknowns];
    for eq in &sys.equations {
        for idx in [eq.alpha, eq.beta] {
            if idx < counts.len() {
                counts[idx] += 1;
            }
        }
    }
    counts
}

pub fn validate(sys: &SylvesterSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = sys.n;
    for (k, eq) in sys.equations.iter().enumerate() {
        for (name, m) in eq.matrices() {
            if m.rows() != n || m.cols() != n {
                out.push(Violation {
                    kind: ViolationKind::Shape,
                    detail: format!("equation {} matrix {} is {}x{}, expected {}x{}", k + 1, name, m.rows(), m.cols(), n, n),
                });
            }
        }
        for (label, idx) in [("alpha", eq.alpha), ("beta", eq.beta)] {
            if idx >= sys.unknowns {
                out.push(Violation {
                    kind: ViolationKind::IndexOutOfRange,
                    detail: format!("equation {} {}={} exceeds {} unknowns", k + 1, label, idx + 1, sys.unknowns),
                });
            }
        }
    }
    for (j, &c) in occurrence_counts(sys).iter().enumerate() {
        if c == 0 {
            out.push(Violation {
                kind: ViolationKind::UnusedUnknown,
                detail: format!("X{} appears in 0 equations", j + 1),
            });
        }
    }
    if sys.equations.len() != sys.unknowns {
        out.push(Violation {
            kind: ViolationKind::CountMismatch,
            detail: format!("{} equations for {} unknowns", sys.equations.len(), sys.unknowns),
        });
    }
    if sys.star_kind().is_err() {
        out.push(Violation { kind: ViolationKind::MixedStars, detail: "both T and H flags appear".into() });
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with comments stripped, with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn key_values(line: &str, lineno: usize) -> Result<Vec<(&str, &str)>> {
    line.split_whitespace()
        .map(|tok| tok.split_once('=').ok_or_else(|| perr(lineno, format!("expected key=value, got '{}'", tok))))
        .collect()
}

fn parse_usize(v: &str, key: &str, lineno: usize) -> Result<usize> {
    v.parse::<usize>().map_err(|_| perr(lineno, format!("invalid integer for {}: '{}'", key, v)))
}

pub fn parse_system(text: &str) -> Result<SylvesterSystem> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing header line"))?;
    let mut n = None;
    let mut r = None;
    let mut m = None;
    for (k, v) in key_values(header, hl)? {
        match k {
            "n" => n = Some(parse_usize(v, k, hl)?),
            "r" => r = Some(parse_usize(v, k, hl)?),
            "m" => m = Some(parse_usize(v, k, hl)?),
            _ => return Err(perr(hl, format!("unknown header key '{}'", k))),
        }
    }
    let n = n.ok_or_else(|| perr(hl, "header lacks n="))?;
    let r = r.ok_or_else(|| perr(hl, "header lacks r="))?;
    let unknowns = m.unwrap_or(r);
    if n == 0 && r > 0 {
        return Err(perr(hl, "n must be positive"));
    }

    let mut equations = Vec::with_capacity(r);
    for k in 0..r {
        let (el, line) = lines
            .next()
            .ok_or_else(|| perr(lines.last + 1, format!("missing equation {} of {}", k + 1, r)))?;
        let rest = line
            .strip_prefix("eq")
            .filter(|s| s.is_empty() || s.starts_with(char::is_whitespace))
            .ok_or_else(|| perr(el, format!("expected 'eq' line, got '{}'", line)))?;
        let mut alpha = None;
        let mut beta = None;
        let mut s = None;
        let mut t = None;
        for (key, v) in key_values(rest, el)? {
            match key {
                "alpha" => alpha = Some(parse_usize(v, key, el)?),
                "beta" => beta = Some(parse_usize(v, key, el)?),
                "s" => s = Some(StarFlag::parse(v).ok_or_else(|| perr(el, format!("invalid flag s={}", v)))?),
                "t" => t = Some(StarFlag::parse(v).ok_or_else(|| perr(el, format!("invalid flag t={}", v)))?),
                _ => return Err(perr(el, format!("unknown key '{}'", key))),
            }
        }
        let alpha = alpha.ok_or_else(|| perr(el, "missing alpha"))?;
        let beta = beta.ok_or_else(|| perr(el, "missing beta"))?;
        for (name, idx) in [("alpha", alpha), ("beta", beta)] {
            if idx == 0 || idx > unknowns {
                return Err(perr(el, format!("{}={} out of range 1..={}", name, idx, unknowns)));
            }
        }
        let mut blocks: Vec<Matrix> = Vec::with_capacity(5);
        for label in ["A", "B", "C", "D", "E"] {
            let (ll, line) = match lines.next() {
                Some(x) => x,
                None => return Err(perr(lines.last + 1, format!("missing block {}", label))),
            };
            if line != label {
                if line.starts_with("eq") || matches!(line, "A" | "B" | "C" | "D" | "E") {
                    return Err(perr(ll, format!("missing block {}", label)));
                }
                return Err(perr(ll, format!("expected block label {}, got '{}'", label, line)));
            }
            let mut data = vec![C64::new(0.0, 0.0); n * n];
            for i in 0..n {
                let (rl, row) = lines
                    .next()
                    .ok_or_else(|| perr(lines.last + 1, format!("block {} has fewer than {} rows", label, n)))?;
                let nums: Vec<&str> = row.split_whitespace().collect();
                if nums.len() != 2 * n {
                    return Err(perr(
                        rl,
                        format!("block {} row {} has {} numbers, expected {}", label, i + 1, nums.len(), 2 * n),
                    ));
                }
                for j in 0..n {
                    let re: f64 = nums[2 * j]
                        .parse()
                        .map_err(|_| perr(rl, format!("invalid number '{}'", nums[2 * j])))?;
                    let im: f64 = nums[2 * j + 1]
                        .parse()
                        .map_err(|_| perr(rl, format!("invalid number '{}'", nums[2 * j + 1])))?;
                    if !re.is_finite() || !im.is_finite() {
                        return Err(perr(rl, "non-finite entry"));
                    }
                    data[i + j * n] = C64::new(re, im);
                }
            }
            blocks.push(Matrix::from_col_major(n, n, data)?);
        }
        let mut it = blocks.into_iter();
        equations.push(Equation {
            alpha: alpha - 1,
            s: s.unwrap_or(StarFlag::None),
            beta: beta - 1,
            t: t.unwrap_or(StarFlag::None),
            a: it.next().unwrap(),
            b: it.next().unwrap(),
            c: it.next().unwrap(),
            d: it.next().unwrap(),
            e: it.next().unwrap(),
        });
    }
    if let Some((l, line)) = lines.next() {
        return Err(perr(l, format!("unexpected trailing content '{}'", line)));
    }
    Ok(SylvesterSystem { n, unknowns, equations })
}

fn write_matrix(out: &mut String, label: &str, m: &Matrix) {
    out.push_str(label);
    out.push('\n');
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(' ');
            }
            let z = m[(i, j)];
            let _ = write!(out, "{:.16e} {:.16e}", z.re, z.im);
        }
        out.push('\n');
    }
}

pub fn serialize_system(sys: &SylvesterSystem) -> String {
    let mut out = String::new();
    let _ = write!(out, "n={} r={}", sys.n, sys.equations.len());
    if sys.unknowns != sys.equations.len() {
        let _ = write!(out, " m={}", sys.unknowns);
    }
    out.push('\n');
    for eq in &sys.equations {
        let _ = writeln!(out, "eq alpha={} s={} beta={} t={}", eq.alpha + 1, eq.s, eq.beta + 1, eq.t);
        for (label, m) in eq.matrices() {
            write_matrix(&mut out, label, m);
        }
    }
    out
}

/// Solution matrices `X_1..X_m` in the same entry format.
pub fn serialize_solution(xs: &[Matrix]) -> String {
    let mut out = String::new();
    let n = xs.first().map(|x| x.rows()).unwrap_or(0);
    let _ = writeln!(out, "n={} m={}", n, xs.len());
    for (k, x) in xs.iter().enumerate() {
        write_matrix(&mut out, &format!("X{}", k + 1), x);
    }
    out
}
