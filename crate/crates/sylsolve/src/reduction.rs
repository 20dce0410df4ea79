//! From a general system to independent periodic cores.
//!
//! Each connected component of the unknown/equation multigraph is handled
//! separately. Unknowns that occur once are peeled off (they are recovered
//! afterwards from their single equation), what remains is one cycle, which
//! is relabelled into periodic order and rewritten so that at most the last
//! equation carries a ⋆.

use std::collections::VecDeque;

use crate::certify::{Certificate, Method, Reason};
use crate::error::{Error, Result};
use crate::kernel::{Matrix, QrFactor, UNIT_ROUNDOFF};
use crate::model::{apply_star, Equation, PeriodicSystem, StarFlag, SylvesterSystem};

/// Multiplier in the invertibility test `|R_nn| ≤ n · u · ‖M‖_F · INVERT_TOLFAC`.
pub const INVERT_TOLFAC: f64 = 64.0;

/// Undirected multigraph: one edge per equation, self loops allowed.
#[derive(Clone, Debug)]
pub struct SystemGraph {
    pub nodes: usize,
    /// `(alpha, beta, equation)`.
    pub edges: Vec<(usize, usize, usize)>,
}

impl SystemGraph {
    pub fn of(sys: &SylvesterSystem) -> SystemGraph {
        SystemGraph {
            nodes: sys.unknowns,
            edges: sys.equations.iter().enumerate().map(|(k, e)| (e.alpha, e.beta, k)).collect(),
        }
    }

    /// Occurrences per node; a self loop counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes];
        for &(a, b, _) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes == 0 {
            return true;
        }
        let mut uf = UnionFind::new(self.nodes);
        for &(a, b, _) in &self.edges {
            uf.union(a, b);
        }
        let root = uf.find(0);
        (0..self.nodes).all(|v| uf.find(v) == root)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.rank[ra] < self.rank[rb] {
            self.parent[ra] = rb;
        } else if self.rank[ra] > self.rank[rb] {
            self.parent[rb] = ra;
        } else {
            self.parent[rb] = ra;
            self.rank[ra] += 1;
        }
    }
}

/// An irreducible subsystem with its local-to-global index maps.
#[derive(Clone, Debug)]
pub struct Component {
    pub system: SylvesterSystem,
    pub unknowns: Vec<usize>,
    pub equations: Vec<usize>,
}

pub fn split_irreducible(sys: &SylvesterSystem) -> Vec<Component> {
    let mut uf = UnionFind::new(sys.unknowns);
    for e in &sys.equations {
        uf.union(e.alpha, e.beta);
    }
    let mut slot = vec![usize::MAX; sys.unknowns];
    let mut comps: Vec<Component> = Vec::new();
    let mut local = vec![0usize; sys.unknowns];
    for v in 0..sys.unknowns {
        let root = uf.find(v);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Component {
                system: SylvesterSystem { n: sys.n, unknowns: 0, equations: Vec::new() },
                unknowns: Vec::new(),
                equations: Vec::new(),
            });
        }
        let c = &mut comps[slot[root]];
        local[v] = c.unknowns.len();
        c.unknowns.push(v);
        c.system.unknowns += 1;
    }
    for (k, e) in sys.equations.iter().enumerate() {
        let c = &mut comps[slot[uf.find(e.alpha)]];
        let mut le = e.clone();
        le.alpha = local[e.alpha];
        le.beta = local[e.beta];
        c.system.equations.push(le);
        c.equations.push(k);
    }
    comps
}

/// `X_unknown` is recovered from `equation`, written with `alpha = unknown`.
#[derive(Clone, Debug)]
pub struct EliminationRecord {
    pub unknown: usize,
    pub equation: Equation,
}

/// `Some(|R_nn|)` when `m` fails the invertibility test.
pub fn numerically_singular(m: &Matrix) -> Option<f64> {
    let n = m.rows();
    if n == 0 {
        return None;
    }
    let qr = QrFactor::new(m, true);
    let tol = n as f64 * UNIT_ROUNDOFF * m.frobenius() * INVERT_TOLFAC;
    let min = qr.min_abs_diagonal();
    if min <= tol {
        Some(min)
    } else {
        None
    }
}

/// Removes every unknown that occurs once, deepest first. The remaining
/// core of a square irreducible system is a single cycle.
pub fn eliminate_chains(sys: &SylvesterSystem) -> Result<(SylvesterSystem, Vec<usize>, Vec<EliminationRecord>)> {
    let m = sys.unknowns;
    if sys.equations.len() != m {
        return Err(Error::Dimension(format!(
            "elimination needs as many equations ({}) as unknowns ({})",
            sys.equations.len(),
            m
        )));
    }
    let graph = SystemGraph::of(sys);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(a, b, k) in &graph.edges {
        incident[a].push(k);
        if b != a {
            incident[b].push(k);
        }
    }
    // peel leaves to find the cycle
    let mut deg = graph.degrees();
    let mut removed_eq = vec![false; sys.equations.len()];
    let mut on_cycle = vec![true; m];
    let mut queue: VecDeque<usize> = (0..m).filter(|&v| deg[v] == 1).collect();
    while let Some(v) = queue.pop_front() {
        if !on_cycle[v] || deg[v] != 1 {
            continue;
        }
        on_cycle[v] = false;
        let k = incident[v].iter().copied().find(|&k| !removed_eq[k]).expect("leaf has an edge");
        removed_eq[k] = true;
        deg[v] -= 1;
        let e = &sys.equations[k];
        let other = if e.alpha == v { e.beta } else { e.alpha };
        deg[other] -= 1;
        if deg[other] == 1 {
            queue.push_back(other);
        }
    }
    if on_cycle.iter().any(|&c| c) && (0..m).any(|v| on_cycle[v] && deg[v] != 2) {
        return Err(Error::Dimension("component core is not a single cycle".into()));
    }

    // BFS outward from the cycle along tree edges
    let mut seen = on_cycle.clone();
    let mut parent_eq = vec![usize::MAX; m];
    let mut order = Vec::new();
    let mut bfs: VecDeque<usize> = (0..m).filter(|&v| on_cycle[v]).collect();
    while let Some(v) = bfs.pop_front() {
        for &k in &incident[v] {
            let e = &sys.equations[k];
            let w = if e.alpha == v { e.beta } else { e.alpha };
            if !seen[w] {
                seen[w] = true;
                parent_eq[w] = k;
                order.push(w);
                bfs.push_back(w);
            }
        }
    }

    let mut stack = Vec::with_capacity(order.len());
    for &v in order.iter().rev() {
        let e = &sys.equations[parent_eq[v]];
        let eq = if e.alpha == v { e.clone() } else { e.swapped() };
        stack.push(EliminationRecord { unknown: v, equation: eq });
    }

    let core_unknowns: Vec<usize> = (0..m).filter(|&v| on_cycle[v]).collect();
    let mut pos = vec![usize::MAX; m];
    for (i, &v) in core_unknowns.iter().enumerate() {
        pos[v] = i;
    }
    let equations = sys
        .equations
        .iter()
        .enumerate()
        .filter(|(k, _)| !parent_eq.contains(k))
        .map(|(_, e)| {
            let mut e = e.clone();
            e.alpha = pos[e.alpha];
            e.beta = pos[e.beta];
            e
        })
        .collect();
    let core = SylvesterSystem { n: sys.n, unknowns: core_unknowns.len(), equations };
    Ok((core, core_unknowns, stack))
}

/// First failing coefficient among the records, as a certificate.
pub fn check_eliminations(stack: &[EliminationRecord]) -> Option<Certificate> {
    for rec in stack {
        for (name, m) in [("A", &rec.equation.a), ("B", &rec.equation.b)] {
            if let Some(pivot) = numerically_singular(m) {
                let mut cert = Certificate::singular(Reason::EliminationSingularCoeff, Method::Formal);
                cert.detail = format!(
                    "coefficient {} of the equation eliminating unknown {} is singular (|r| = {:.3e})",
                    name,
                    rec.unknown + 1,
                    pivot
                );
                return Some(cert);
            }
        }
    }
    None
}

/// Relabels a cycle so equation `k` links unknown `k` to unknown `k+1 (mod r)`.
/// Returns the system and, for each new unknown, its old index.
pub fn canonicalize_cycle(core: &SylvesterSystem) -> (SylvesterSystem, Vec<usize>) {
    let r = core.equations.len();
    if r == 0 {
        return (core.clone(), Vec::new());
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); core.unknowns];
    for (k, e) in core.equations.iter().enumerate() {
        incident[e.alpha].push(k);
        if e.beta != e.alpha {
            incident[e.beta].push(k);
        }
    }
    let mut eqs = Vec::with_capacity(r);
    let mut order = Vec::with_capacity(r);
    let mut used = vec![false; r];
    let mut cur = 0usize;
    let mut at = core.equations[0].alpha;
    for _ in 0..r {
        used[cur] = true;
        let e = &core.equations[cur];
        let e = if e.alpha == at { e.clone() } else { e.swapped() };
        order.push(at);
        at = e.beta;
        eqs.push(e);
        if let Some(&next) = incident[at].iter().find(|&&k| !used[k]) {
            cur = next;
        }
    }
    let mut pos = vec![usize::MAX; core.unknowns];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    for e in eqs.iter_mut() {
        e.alpha = pos[e.alpha];
        e.beta = pos[e.beta];
    }
    (SylvesterSystem { n: core.n, unknowns: r, equations: eqs }, order)
}

/// `X_k = Y_k^{u_k}` and the star left on `X_1` in the last equation.
#[derive(Clone, Debug, PartialEq)]
pub struct StarNormalizationTrace {
    pub u: Vec<StarFlag>,
    pub s: StarFlag,
}

fn flush(e: &Equation, kind: StarFlag) -> Equation {
    Equation {
        alpha: e.alpha,
        s: StarFlag::None,
        beta: e.beta,
        t: e.t.toggle(kind),
        a: apply_star(&e.b, kind),
        b: apply_star(&e.a, kind),
        c: apply_star(&e.d, kind),
        d: apply_star(&e.c, kind),
        e: apply_star(&e.e, kind),
    }
}

pub fn normalize_stars(core: &SylvesterSystem) -> Result<(PeriodicSystem, StarNormalizationTrace)> {
    let r = core.equations.len();
    let kind = core.star_kind()?.unwrap_or(StarFlag::None);
    let mut u = vec![StarFlag::None; r];
    let mut ps = PeriodicSystem { n: core.n, a: vec![], b: vec![], c: vec![], d: vec![], e: vec![], s: StarFlag::None };
    for k in 0..r {
        let mut e = core.equations[k].clone();
        if u[k].is_star() {
            e.s = e.s.toggle(kind);
        }
        if e.s.is_star() {
            e = flush(&e, kind);
        }
        if k + 1 < r {
            u[k + 1] = e.t;
        } else {
            ps.s = e.t;
        }
        ps.a.push(e.a);
        ps.b.push(e.b);
        ps.c.push(e.c);
        ps.d.push(e.d);
        ps.e.push(e.e);
    }
    let s = ps.s;
    Ok((ps, StarNormalizationTrace { u, s }))
}

/// `M^{-1} R` by pivoted QR, column by column.
pub fn left_divide(m: &Matrix, r: &Matrix) -> Matrix {
    let qr = QrFactor::new(m, true);
    let mut out = Matrix::zeros(m.cols(), r.cols());
    for j in 0..r.cols() {
        let x = qr.solve(r.col(j));
        out.col_mut(j).copy_from_slice(&x);
    }
    out
}

/// `R M^{-1}`, via `(M^H)^{-1} R^H`.
pub fn right_divide(r: &Matrix, m: &Matrix) -> Matrix {
    left_divide(&m.adjoint(), &r.adjoint()).adjoint()
}

/// Fills in eliminated unknowns, last eliminated first.
pub fn recover_eliminated(stack: &[EliminationRecord], xs: &mut [Matrix]) -> Result<()> {
    for rec in stack.iter().rev() {
        let e = &rec.equation;
        for m in [&e.a, &e.b] {
            if numerically_singular(m).is_some() {
                return Err(Error::Unsupported(format!(
                    "cannot recover unknown {}: singular coefficient",
                    rec.unknown + 1
                )));
            }
        }
        let rhs = e.c.mul(&apply_star(&xs[e.beta], e.t)).mul(&e.d).add(&e.e);
        let y = right_divide(&left_divide(&e.a, &rhs), &e.b);
        xs[rec.unknown] = apply_star(&y, e.s);
    }
    Ok(())
}

/// A component after all reduction steps.
#[derive(Clone, Debug)]
pub struct ReducedComponent {
    pub component: Component,
    pub stack: Vec<EliminationRecord>,
    /// Component-local unknown for each periodic position.
    pub cycle: Vec<usize>,
    pub periodic: PeriodicSystem,
    pub trace: StarNormalizationTrace,
}

impl ReducedComponent {
    /// Component-local solution from the periodic unknowns `Y_k`.
    pub fn lift(&self, ys: &[Matrix]) -> Result<Vec<Matrix>> {
        let n = self.periodic.n;
        let mut xs = vec![Matrix::zeros(n, n); self.component.system.unknowns];
        for (k, y) in ys.iter().enumerate() {
            xs[self.cycle[k]] = apply_star(y, self.trace.u[k]);
        }
        recover_eliminated(&self.stack, &mut xs)?;
        Ok(xs)
    }
}

pub enum Reduction {
    Reduced(ReducedComponent),
    Singular(Box<Certificate>),
}

/// Reduces one irreducible component.
pub fn reduce_component(comp: Component) -> Result<Reduction> {
    let sys = &comp.system;
    if sys.equations.len() != sys.unknowns {
        let mut cert = Certificate::singular(Reason::ProductIrregular, Method::Formal);
        cert.detail = format!(
            "component has {} equations but {} unknowns",
            sys.equations.len(),
            sys.unknowns
        );
        return Ok(Reduction::Singular(Box::new(cert)));
    }
    let (core, core_map, stack) = eliminate_chains(sys)?;
    if let Some(cert) = check_eliminations(&stack) {
        return Ok(Reduction::Singular(Box::new(cert)));
    }
    let (canon, order) = canonicalize_cycle(&core);
    let (periodic, trace) = normalize_stars(&canon)?;
    let cycle = order.iter().map(|&v| core_map[v]).collect();
    Ok(Reduction::Reduced(ReducedComponent { component: comp, stack, cycle, periodic, trace }))
}

pub fn reduce(sys: &SylvesterSystem) -> Result<Vec<Reduction>> {
    sys.star_kind()?;
    split_irreducible(sys).into_iter().map(reduce_component).collect()
}
