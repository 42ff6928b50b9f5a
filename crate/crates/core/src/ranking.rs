//! Lexicographic global ranking functions over variable differences.
//!
//! A fully elaborated system is extended with one variable per pair of
//! original variables, standing for their (non-negative) difference. The
//! construction then alternates between finding a singleton thread
//! preserver and freezing it into a residual system.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{component_ids, scc};
use crate::mc::{entails_in, saturate, Atom, Edge, Invariant, Mc, Mcs, Relation, VarNode, GE, GT, NO};
use crate::transform::{fully_elaborate, fully_elaborate_rooted, refine, restrict_to, Ordering};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RankError {
    #[error("point {0} is not fully elaborated")]
    NotElaborated(String),
    #[error("no freezers are associated with the system")]
    NoFreezers,
    #[error("unknown root point {0}")]
    UnknownRoot(usize),
    #[error("no ranking function: the system is not terminating")]
    NonTerminating,
}

/// Index of the difference `x_hi - x_lo` of the elaborated (ascending) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiffIndex {
    pub lo: usize,
    pub hi: usize,
}

impl DiffIndex {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo < hi, "difference index needs lo < hi");
        DiffIndex { lo, hi }
    }

    /// Interval containment: `other` lies inside `self`.
    pub fn contains(self, other: DiffIndex) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn join(self, other: DiffIndex) -> DiffIndex {
        DiffIndex { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// All difference indices for `n` variables, in lexicographic order.
pub fn diff_indices(n: usize) -> Vec<DiffIndex> {
    (0..n).flat_map(|lo| (lo + 1..n).map(move |hi| DiffIndex { lo, hi })).collect()
}

fn rel_arcs(a: usize, rel: Relation, b: usize) -> [(usize, usize, u8); 2] {
    match rel {
        Relation::Gt => [(a, b, GT), (a, b, GT)],
        Relation::Ge => [(a, b, GE), (a, b, GE)],
        Relation::Eq => [(a, b, GE), (b, a, GE)],
        Relation::Le => [(b, a, GE), (b, a, GE)],
        Relation::Lt => [(b, a, GT), (b, a, GT)],
    }
}

fn put(m: &mut [u8], k: usize, a: usize, rel: Relation, b: usize) {
    for (u, v, s) in rel_arcs(a, rel, b) {
        let e = &mut m[u * k + v];
        *e = (*e).max(s);
    }
}

fn strength(m: &[u8], k: usize, a: usize, b: usize) -> u8 {
    if a == b {
        GE
    } else {
        m[a * k + b]
    }
}

/// Adds the difference relations implied componentwise by the plain
/// variables. `m` is square over `sides` blocks of `n + terms.len()` nodes,
/// and `terms[p] = (lo, hi)` stands for `x_hi - x_lo`.
fn derive(m: &mut [u8], sides: usize, n: usize, terms: &[(usize, usize)]) {
    let w = n + terms.len();
    let k = sides * w;
    for s in 0..sides {
        for (p, &(plo, phi)) in terms.iter().enumerate() {
            for t in 0..sides {
                for (q, &(qlo, qhi)) in terms.iter().enumerate() {
                    if s == t && p == q {
                        continue;
                    }
                    let hi = strength(m, k, s * w + phi, t * w + qhi);
                    let lo = strength(m, k, t * w + qlo, s * w + plo);
                    if hi != NO && lo != NO {
                        let e = &mut m[(s * w + n + p) * k + t * w + n + q];
                        *e = (*e).max(hi.max(lo));
                    }
                }
            }
        }
    }
}

/// Copies a matrix over `sides` blocks of `n` nodes into blocks of `w`.
fn embed(small: &[u8], n: usize, sides: usize, w: usize) -> Vec<u8> {
    let k = sides * w;
    let sk = sides * n;
    let mut m = vec![NO; k * k];
    for u in 0..sk {
        for v in 0..sk {
            m[((u / n) * w + u % n) * k + (v / n) * w + v % n] = small[u * sk + v];
        }
    }
    m
}

/// A difference atom introduced when a point is split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffGuard {
    pub lhs: DiffIndex,
    pub rel: Relation,
    pub rhs: DiffIndex,
}

/// An MCS over the original variables and their differences.
#[derive(Clone, Debug)]
pub struct DifferenceMcs {
    pub n: usize,
    pub pairs: Vec<DiffIndex>,
    pub sys: Mcs,
    /// Elaborated point each point descends from.
    pub origin: Vec<usize>,
    /// Difference atoms added by splitting, per point.
    pub guards: Vec<Vec<DiffGuard>>,
    /// Each freezer names one original variable per point.
    pub freezers: Vec<Vec<usize>>,
}

impl DifferenceMcs {
    /// Variable index of a difference.
    pub fn var(&self, d: DiffIndex) -> usize {
        self.n + self.pairs.binary_search(&d).expect("difference index in range")
    }

    fn terms(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|d| (d.lo, d.hi)).collect()
    }

    pub fn is_vacant(&self) -> bool {
        self.sys.edges.is_empty()
    }

    /// Whether edge `e` entails `x_a >= x_b'`.
    pub fn preserves(&self, e: usize, a: DiffIndex, b: DiffIndex) -> bool {
        self.sys.edges[e].mc.strength(VarNode::src(self.var(a)), VarNode::tgt(self.var(b))) >= GE
    }

    /// Whether edge `e` entails `x_a > x_b'`.
    pub fn decreases(&self, e: usize, a: DiffIndex, b: DiffIndex) -> bool {
        self.sys.edges[e].mc.strength(VarNode::src(self.var(a)), VarNode::tgt(self.var(b))) == GT
    }

    /// Whether edge `e` entails `x_a >= x_b'` through its endpoints alone:
    /// `x_a.lo <= x_b.lo'` and `x_a.hi >= x_b.hi'`.
    pub fn componentwise(&self, e: usize, a: DiffIndex, b: DiffIndex) -> bool {
        let mc = &self.sys.edges[e].mc;
        mc.strength(VarNode::tgt(b.lo), VarNode::src(a.lo)) >= GE
            && mc.strength(VarNode::src(a.hi), VarNode::tgt(b.hi)) >= GE
    }

    /// Freezers whose equality `x_C(f) = x_C(g)'` holds on every edge.
    pub fn valid_freezers(&self) -> Vec<&[usize]> {
        self.freezers
            .iter()
            .filter(|c| {
                self.sys.edges.iter().all(|e| {
                    let (f, g) = (e.mc.src(), e.mc.tgt());
                    e.mc.entails(&Atom::new(VarNode::src(c[f]), Relation::Eq, VarNode::tgt(c[g])))
                })
            })
            .map(|c| c.as_slice())
            .collect()
    }

    fn atom(&self, g: &DiffGuard) -> Atom {
        Atom::new(VarNode::src(self.var(g.lhs)), g.rel, VarNode::src(self.var(g.rhs)))
    }

    /// Re-derives difference relations after plain constraints changed.
    fn rederive(&self, mc: &Mc) -> Mc {
        let Some(m) = mc.matrix() else { return mc.clone() };
        let mut m = m.to_vec();
        derive(&mut m, 2, self.n, &self.terms());
        let (f, g) = (mc.src(), mc.tgt());
        Mc::from_matrix(self.sys.n(), f, g, m).close(&self.sys.points[f].inv, &self.sys.points[g].inv)
    }

    fn with_system(&self, sys: Mcs, parent: &[usize], extra: Vec<Vec<DiffGuard>>) -> DifferenceMcs {
        let guards = parent
            .iter()
            .zip(extra)
            .map(|(&p, more)| {
                let mut g = self.guards[p].clone();
                g.extend(more);
                g
            })
            .collect();
        DifferenceMcs {
            n: self.n,
            pairs: self.pairs.clone(),
            sys,
            origin: parent.iter().map(|&p| self.origin[p]).collect(),
            guards,
            freezers: self.freezers.iter().map(|c| parent.iter().map(|&p| c[p]).collect()).collect(),
        }
    }

    /// The subsystem on the kept points, with the parent of each new point.
    fn restricted(&self, keep: &[bool]) -> (DifferenceMcs, Vec<usize>) {
        let (sys, map) = restrict_to(&self.sys, keep);
        let parent: Vec<usize> = map.points.iter().map(|p| p.orig).collect();
        let extra = vec![Vec::new(); parent.len()];
        (self.with_system(sys, &parent, extra), parent)
    }
}

/// The initial difference MCS of a fully elaborated system.
pub fn build_difference_mcs(elab: &Mcs) -> Result<DifferenceMcs, RankError> {
    let n = elab.n();
    for p in &elab.points {
        if (0..n).any(|i| (i + 1..n).any(|j| !p.inv.entails(i, Relation::Le, j))) {
            return Err(RankError::NotElaborated(p.name.clone()));
        }
    }
    let pairs = diff_indices(n);
    let terms: Vec<(usize, usize)> = pairs.iter().map(|d| (d.lo, d.hi)).collect();
    let w = n + pairs.len();
    let mut vars = elab.vars.clone();
    vars.extend(pairs.iter().map(|d| format!("d{}_{}", d.lo, d.hi)));
    let mut sys = Mcs::new(vars);
    for p in &elab.points {
        let mut m = embed(p.inv.matrix(), n, 1, w);
        derive(&mut m, 1, n, &terms);
        let inv = Invariant::from_matrix(w, m).expect("elaborated invariants are satisfiable");
        sys.add_point(p.name.clone(), inv);
    }
    for e in &elab.edges {
        let Some(small) = e.mc.matrix() else { continue };
        let mut m = embed(small, n, 2, w);
        derive(&mut m, 2, n, &terms);
        let mc = Mc::from_matrix(w, e.mc.src(), e.mc.tgt(), m);
        if mc.is_satisfiable() {
            sys.add_edge(e.name.clone(), mc);
        }
    }
    let points = sys.points.len();
    Ok(DifferenceMcs {
        n,
        pairs,
        sys,
        origin: (0..points).collect(),
        guards: vec![Vec::new(); points],
        freezers: Vec::new(),
    })
}

/// Greatest thread preserver contained in `t`.
pub fn mtp(ds: &DifferenceMcs, t: &[Vec<DiffIndex>]) -> Vec<Vec<DiffIndex>> {
    let mut p = t.to_vec();
    loop {
        let mut changed = false;
        for (e, edge) in ds.sys.edges.iter().enumerate() {
            let (f, g) = (edge.mc.src(), edge.mc.tgt());
            let targets = p[g].clone();
            let before = p[f].len();
            p[f].retain(|&a| targets.iter().any(|&b| ds.preserves(e, a, b)));
            changed |= p[f].len() != before;
        }
        if !changed {
            return p;
        }
    }
}

/// Elements of `set` that may hold the smallest value under `inv`; of
/// several provably equal ones only the lowest index is kept.
fn minimal_candidates(ds: &DifferenceMcs, inv: &Invariant, set: &[DiffIndex]) -> Vec<DiffIndex> {
    let le = |a: DiffIndex, b: DiffIndex| a == b || inv.get(ds.var(b), ds.var(a)) >= GE;
    set.iter()
        .copied()
        .filter(|&a| !set.iter().any(|&b| b != a && le(b, a) && (!le(a, b) || b < a)))
        .collect()
}

/// Outcome of a successful [`singleton_tp`] call.
#[derive(Clone, Debug)]
pub struct SingletonTp {
    pub system: DifferenceMcs,
    /// Chosen difference per point of `system`.
    pub choice: Vec<DiffIndex>,
    /// Point of the input system each point of `system` copies.
    pub parent: Vec<usize>,
}

/// Finds a singleton thread preserver within `t`, splitting points whose
/// minimum is not determined by their invariant.
pub fn singleton_tp(ds: &DifferenceMcs, t: &[Vec<DiffIndex>]) -> Option<SingletonTp> {
    let p = mtp(ds, t);
    if p.iter().any(Vec::is_empty) {
        return None;
    }
    let mut pts = Vec::new();
    let mut choice = Vec::new();
    let mut extra = Vec::new();
    let mut split = false;
    for (f, set) in p.iter().enumerate() {
        let inv = &ds.sys.points[f].inv;
        let cands = minimal_candidates(ds, inv, set);
        if cands.len() == 1 {
            pts.push((f, inv.clone()));
            choice.push(cands[0]);
            extra.push(Vec::new());
            continue;
        }
        split = true;
        for (i, &a) in cands.iter().enumerate() {
            let atoms: Vec<DiffGuard> = cands
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &b)| DiffGuard { lhs: a, rel: if j < i { Relation::Lt } else { Relation::Le }, rhs: b })
                .collect();
            let raw: Vec<Atom> = atoms.iter().map(|g| ds.atom(g)).collect();
            if let Some(case) = inv.with_atoms(&raw) {
                pts.push((f, case));
                choice.push(a);
                extra.push(atoms);
            }
        }
    }
    let parent: Vec<usize> = pts.iter().map(|(f, _)| *f).collect();
    let system = if split {
        let (sys, _) = refine(&ds.sys, &pts);
        ds.with_system(sys, &parent, extra)
    } else {
        ds.clone()
    };
    debug_assert!(system.sys.edges.iter().enumerate().all(|(e, edge)| {
        system.preserves(e, choice[edge.mc.src()], choice[edge.mc.tgt()])
    }));
    Some(SingletonTp { system, choice, parent })
}

/// Deletes edges on which the preserver strictly decreases, pins it on the
/// rest, and records its two endpoint threads as freezers.
pub fn freeze_residual(ds: &DifferenceMcs, p: &[DiffIndex]) -> DifferenceMcs {
    let mut sys = Mcs::new(ds.sys.vars.clone());
    sys.points = ds.sys.points.clone();
    for (e, edge) in ds.sys.edges.iter().enumerate() {
        let (a, b) = (p[edge.mc.src()], p[edge.mc.tgt()]);
        if ds.decreases(e, a, b) {
            continue;
        }
        let mut atoms = vec![Atom::new(VarNode::src(ds.var(a)), Relation::Eq, VarNode::tgt(ds.var(b)))];
        if ds.componentwise(e, a, b) {
            atoms.push(Atom::new(VarNode::src(a.lo), Relation::Eq, VarNode::tgt(b.lo)));
            atoms.push(Atom::new(VarNode::src(a.hi), Relation::Eq, VarNode::tgt(b.hi)));
        }
        let h = ds.rederive(&edge.mc.with_atoms(&atoms));
        if h.is_satisfiable() {
            sys.edges.push(Edge { name: edge.name.clone(), mc: h });
        }
    }
    let mut out = DifferenceMcs { sys, ..ds.clone() };
    out.freezers.push(p.iter().map(|d| d.lo).collect());
    out.freezers.push(p.iter().map(|d| d.hi).collect());
    out
}

/// Per-point search regions delimited by the lowest and highest freezers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Regions {
    pub d0: Vec<Vec<DiffIndex>>,
    pub d1l: Vec<Vec<DiffIndex>>,
    pub d1h: Vec<Vec<DiffIndex>>,
    pub d2: Vec<Vec<DiffIndex>>,
}

pub fn regions(ds: &DifferenceMcs) -> Result<Regions, RankError> {
    let fr = ds.valid_freezers();
    if fr.is_empty() {
        return Err(RankError::NoFreezers);
    }
    let mut r = Regions { d0: Vec::new(), d1l: Vec::new(), d1h: Vec::new(), d2: Vec::new() };
    for f in 0..ds.sys.points.len() {
        let frozen: Vec<usize> = fr.iter().map(|c| c[f]).collect();
        let cl = *frozen.iter().min().unwrap();
        let ch = *frozen.iter().max().unwrap();
        let free = |i: usize| !frozen.contains(&i);
        r.d0.push(ds.pairs.iter().copied().filter(|d| d.hi <= cl).collect());
        r.d2.push(ds.pairs.iter().copied().filter(|d| d.lo >= ch).collect());
        r.d1l.push((cl + 1..ch).filter(|&j| free(j)).map(|j| DiffIndex::new(cl, j)).collect());
        r.d1h.push((cl + 1..ch).filter(|&i| free(i)).map(|i| DiffIndex::new(i, ch)).collect());
    }
    Ok(r)
}

/// A slot of a vector under construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankEntry {
    Const(u64),
    Var(DiffIndex),
}

/// The vector of one final point, located in the system it was built for.
#[derive(Clone, Debug)]
pub struct Piece {
    pub point: usize,
    pub origin: usize,
    pub guards: Vec<DiffGuard>,
    pub vector: Vec<RankEntry>,
}

fn piece(ds: &DifferenceMcs, f: usize, vector: Vec<RankEntry>) -> Piece {
    Piece { point: f, origin: ds.origin[f], guards: ds.guards[f].clone(), vector }
}

/// Ranking for a strongly connected, non-vacant difference system.
pub fn rank_scc(ds: &DifferenceMcs) -> Option<Vec<Piece>> {
    rank_scc_at(ds, 0)
}

/// Ranking for an arbitrary difference system: SCC index first, then the
/// fragment of the point's component.
pub fn rank_system(ds: &DifferenceMcs) -> Option<Vec<Piece>> {
    rank_system_at(ds, 0)
}

fn rank_scc_at(ds: &DifferenceMcs, depth: usize) -> Option<Vec<Piece>> {
    if depth > ds.pairs.len() {
        return None;
    }
    let all: Vec<Vec<DiffIndex>> = vec![ds.pairs.clone(); ds.sys.points.len()];
    let searches = match regions(ds) {
        Ok(r) => vec![r.d1l, r.d1h, r.d0, r.d2],
        Err(_) => vec![all],
    };
    for t in searches {
        let Some(tp) = singleton_tp(ds, &t) else { continue };
        let residual = freeze_residual(&tp.system, &tp.choice);
        let tail = if residual.is_vacant() {
            (0..residual.sys.points.len()).map(|f| piece(&residual, f, Vec::new())).collect()
        } else {
            rank_system_at(&residual, depth + 1)?
        };
        return Some(
            tail.into_iter()
                .map(|mut p| {
                    p.vector.insert(0, RankEntry::Var(tp.choice[p.point]));
                    p.point = tp.parent[p.point];
                    p
                })
                .collect(),
        );
    }
    None
}

fn rank_system_at(ds: &DifferenceMcs, depth: usize) -> Option<Vec<Piece>> {
    let pts = ds.sys.points.len();
    let mut adj = vec![Vec::new(); pts];
    for e in &ds.sys.edges {
        adj[e.mc.src()].push(e.mc.tgt());
    }
    let comps = scc(&adj);
    let id = component_ids(&comps, pts);
    let mut out = Vec::new();
    for (kappa, comp) in comps.iter().enumerate() {
        let k = RankEntry::Const(kappa as u64);
        let internal = ds.sys.edges.iter().any(|e| id[e.mc.src()] == kappa && id[e.mc.tgt()] == kappa);
        if !internal {
            out.extend(comp.iter().map(|&f| piece(ds, f, vec![k])));
            continue;
        }
        let mut keep = vec![false; pts];
        for &f in comp {
            keep[f] = true;
        }
        let (sub, parent) = ds.restricted(&keep);
        for mut p in rank_scc_at(&sub, depth)? {
            p.point = parent[p.point];
            p.vector.insert(0, k);
            out.push(p);
        }
    }
    out.sort_by_key(|p| p.point);
    Some(out)
}

/// The difference `x_hi - x_lo` over original variable indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diff {
    pub hi: usize,
    pub lo: usize,
}

impl Diff {
    pub fn value(self, s: &[i64]) -> i64 {
        s[self.hi] - s[self.lo]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Const(u64),
    Var(Diff),
}

/// One atom of a case guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    Order(usize, Relation, usize),
    Diff(Diff, Relation, Diff),
}

impl Guard {
    pub fn holds(&self, s: &[i64]) -> bool {
        match *self {
            Guard::Order(a, rel, b) => rel.holds(s[a], s[b]),
            Guard::Diff(a, rel, b) => rel.holds(a.value(s), b.value(s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankCase {
    pub guard: Vec<Guard>,
    pub vector: Vec<Slot>,
}

impl RankCase {
    pub fn applies(&self, s: &[i64]) -> bool {
        self.guard.iter().all(|g| g.holds(s))
    }

    pub fn value(&self, s: &[i64]) -> Vec<i64> {
        self.vector
            .iter()
            .map(|slot| match *slot {
                Slot::Const(c) => c as i64,
                Slot::Var(d) => d.value(s),
            })
            .collect()
    }

    pub fn variables(&self) -> usize {
        self.vector.iter().filter(|s| matches!(s, Slot::Var(_))).count()
    }
}

/// A guarded case list per flow point of the original system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingFunction {
    pub vars: Vec<String>,
    pub points: Vec<String>,
    pub root: Option<usize>,
    pub cases: Vec<Vec<RankCase>>,
}

impl RankingFunction {
    /// Largest number of difference variables in any vector.
    pub fn max_variables(&self) -> usize {
        self.cases.iter().flatten().map(RankCase::variables).max().unwrap_or(0)
    }

    pub fn render_diff(&self, d: Diff) -> String {
        format!("{} - {}", self.vars[d.hi], self.vars[d.lo])
    }

    pub fn render_slot(&self, s: &Slot) -> String {
        match *s {
            Slot::Const(c) => c.to_string(),
            Slot::Var(d) => self.render_diff(d),
        }
    }

    pub fn render_guard(&self, g: &Guard) -> String {
        match *g {
            Guard::Order(a, rel, b) => format!("{} {} {}", self.vars[a], rel.symbol(), self.vars[b]),
            Guard::Diff(a, rel, b) => {
                format!("({}) {} ({})", self.render_diff(a), rel.symbol(), self.render_diff(b))
            }
        }
    }

    pub fn render_vector(&self, v: &[Slot]) -> String {
        let parts: Vec<String> = v.iter().map(|s| self.render_slot(s)).collect();
        format!("<{}>", parts.join(", "))
    }
}

impl fmt::Display for RankingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, cases) in self.cases.iter().enumerate() {
            if cases.is_empty() {
                continue;
            }
            writeln!(f, "rho({}) =", self.points[p])?;
            for c in cases {
                let v = self.render_vector(&c.vector);
                if c.guard.is_empty() {
                    writeln!(f, "    {v}")?;
                } else {
                    let g: Vec<String> = c.guard.iter().map(|g| self.render_guard(g)).collect();
                    writeln!(f, "    {v}  if {}", g.join(" and "))?;
                }
            }
        }
        Ok(())
    }
}

/// Full pipeline: elaborate, build the difference system, rank it, and
/// express the result over the original variables.
pub fn synthesize_ranking(sys: &Mcs, root: Option<usize>) -> Result<RankingFunction, RankError> {
    let (elab, map) = match root {
        None => fully_elaborate(sys),
        Some(r) => fully_elaborate_rooted(sys, r).map_err(|_| RankError::UnknownRoot(r))?,
    };
    let ds = build_difference_mcs(&elab)?;
    let pieces = rank_system(&ds).ok_or(RankError::NonTerminating)?;
    let mut cases = vec![Vec::new(); sys.points.len()];
    for piece in pieces {
        let origin = &map.points[piece.origin];
        let perm = &origin.perm;
        let diff = |d: DiffIndex| Diff { hi: perm[d.hi], lo: perm[d.lo] };
        let order = Ordering::from_invariant(&elab.points[piece.origin].inv)
            .expect("elaborated points are totally ordered");
        let mut guard: Vec<Guard> = order
            .atoms()
            .iter()
            .map(|a| Guard::Order(perm[a.lhs.index], a.rel, perm[a.rhs.index]))
            .collect();
        guard.extend(piece.guards.iter().map(|g| Guard::Diff(diff(g.lhs), g.rel, diff(g.rhs))));
        let vector = piece
            .vector
            .iter()
            .map(|e| match *e {
                RankEntry::Const(c) => Slot::Const(c),
                RankEntry::Var(d) => Slot::Var(diff(d)),
            })
            .collect();
        cases[origin.orig].push(RankCase { guard, vector });
    }
    Ok(RankingFunction {
        vars: sys.vars.clone(),
        points: sys.points.iter().map(|p| p.name.clone()).collect(),
        root,
        cases,
    })
}

/// Why a ranking function was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    IllFormed(String),
    Negative { point: usize, case: usize },
    Overlap { point: usize, cases: (usize, usize) },
    Uncovered { point: usize },
    NoDecrease { edge: usize, from: usize, to: usize },
    Concrete { edge: usize, source: Vec<i64>, target: Vec<i64> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IllFormed(why) => write!(f, "ill-formed ranking: {why}"),
            Violation::Negative { point, case } => {
                write!(f, "case {case} at point {point} uses a possibly negative difference")
            }
            Violation::Overlap { point, cases } => {
                write!(f, "cases {} and {} at point {point} overlap", cases.0, cases.1)
            }
            Violation::Uncovered { point } => write!(f, "cases at point {point} leave states uncovered"),
            Violation::NoDecrease { edge, from, to } => {
                write!(f, "edge {edge} from case {from} to case {to} is not shown to decrease")
            }
            Violation::Concrete { edge, source, target } => {
                write!(f, "edge {edge}: transition {source:?} -> {target:?} does not decrease")
            }
        }
    }
}

/// Node layout for symbolic checks: plain variables then difference terms.
struct Space {
    n: usize,
    terms: Vec<Diff>,
}

impl Space {
    fn new<'a>(n: usize, cases: impl IntoIterator<Item = &'a RankCase>) -> Space {
        let mut terms = Vec::new();
        for c in cases {
            for g in &c.guard {
                if let Guard::Diff(a, _, b) = *g {
                    terms.extend([a, b]);
                }
            }
            for s in &c.vector {
                if let Slot::Var(d) = *s {
                    terms.push(d);
                }
            }
        }
        terms.sort_unstable();
        terms.dedup();
        Space { n, terms }
    }

    fn w(&self) -> usize {
        self.n + self.terms.len()
    }

    fn term(&self, d: Diff) -> usize {
        self.n + self.terms.binary_search(&d).expect("term registered")
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        self.terms.iter().map(|d| (d.lo, d.hi)).collect()
    }

    fn guard_nodes(&self, g: &Guard) -> (usize, Relation, usize) {
        match *g {
            Guard::Order(a, rel, b) => (a, rel, b),
            Guard::Diff(a, rel, b) => (self.term(a), rel, self.term(b)),
        }
    }

    /// Adds guards on the given sides, derives differences, and closes;
    /// `None` when unsatisfiable.
    fn settle(&self, mut m: Vec<u8>, sides: usize, guards: &[(usize, &[Guard])]) -> Option<Vec<u8>> {
        let w = self.w();
        let k = sides * w;
        for &(s, gs) in guards {
            for g in gs {
                if let Guard::Order(a, rel, b) = *g {
                    put(&mut m, k, s * w + a, rel, s * w + b);
                }
            }
        }
        if !saturate(&mut m, k) {
            return None;
        }
        derive(&mut m, sides, self.n, &self.pairs());
        for &(s, gs) in guards {
            for g in gs {
                if let Guard::Diff(..) = g {
                    let (a, rel, b) = self.guard_nodes(g);
                    put(&mut m, k, s * w + a, rel, s * w + b);
                }
            }
        }
        saturate(&mut m, k).then_some(m)
    }

    fn entailed(&self, m: &[u8], g: &Guard) -> bool {
        let k = self.w();
        let (a, rel, b) = self.guard_nodes(g);
        entails_in(strength(m, k, a, b), strength(m, k, b, a), rel)
    }

    /// Whether the cases jointly cover the one-sided region `m`.
    fn covers(&self, m: &[u8], cases: &[&RankCase]) -> bool {
        let live: Vec<&RankCase> = cases
            .iter()
            .copied()
            .filter(|c| self.settle(m.to_vec(), 1, &[(0, &c.guard)]).is_some())
            .collect();
        if live.is_empty() {
            return false;
        }
        if live.iter().any(|c| c.guard.iter().all(|g| self.entailed(m, g))) {
            return true;
        }
        for c in &live {
            for g in &c.guard {
                if self.entailed(m, g) {
                    continue;
                }
                let split = |rel: Relation| match *g {
                    Guard::Order(a, _, b) => Guard::Order(a, rel, b),
                    Guard::Diff(a, _, b) => Guard::Diff(a, rel, b),
                };
                return [Relation::Lt, Relation::Eq, Relation::Gt].into_iter().all(|rel| {
                    match self.settle(m.to_vec(), 1, &[(0, &[split(rel)])]) {
                        None => true,
                        Some(sub) => self.covers(&sub, cases),
                    }
                });
            }
        }
        false
    }
}

fn point_matrix(space: &Space, inv: &Invariant) -> Vec<u8> {
    embed(inv.matrix(), space.n, 1, space.w())
}

fn edge_matrix(space: &Space, mc: &Mc) -> Option<Vec<u8>> {
    mc.matrix().map(|m| embed(m, space.n, 2, space.w()))
}

/// Strength of `u >= v` for vector entries on opposite sides.
fn entry_strength(space: &Space, m: &[u8], u: &Slot, v: &Slot) -> u8 {
    let w = space.w();
    let k = 2 * w;
    let ge = |c: bool| if c { GE } else { NO };
    match (*u, *v) {
        (Slot::Const(a), Slot::Const(b)) => {
            if a > b {
                GT
            } else {
                ge(a == b)
            }
        }
        (Slot::Var(a), Slot::Var(b)) => strength(m, k, space.term(a), w + space.term(b)),
        (Slot::Var(a), Slot::Const(0)) => strength(m, k, a.hi, a.lo),
        (Slot::Var(_), Slot::Const(_)) => NO,
        (Slot::Const(c), Slot::Var(b)) => {
            let zero = strength(m, k, w + b.lo, w + b.hi) >= GE;
            match (zero, c) {
                (false, _) => NO,
                (true, 0) => GE,
                (true, _) => GT,
            }
        }
    }
}

/// Symbolic lexicographic decrease; a target that is a proper prefix of the
/// source counts as smaller.
fn decreases(space: &Space, m: &[u8], src: &[Slot], tgt: &[Slot]) -> bool {
    for (u, v) in src.iter().zip(tgt) {
        match entry_strength(space, m, u, v) {
            GT => return true,
            GE => continue,
            _ => return false,
        }
    }
    src.len() > tgt.len()
}

fn well_formed(sys: &Mcs, rho: &RankingFunction) -> Result<(), Violation> {
    let n = sys.n();
    if rho.cases.len() != sys.points.len() || rho.vars.len() != n {
        return Err(Violation::IllFormed("shape does not match the system".into()));
    }
    let diff_ok = |d: Diff| d.hi < n && d.lo < n && d.hi != d.lo;
    for c in rho.cases.iter().flatten() {
        for g in &c.guard {
            let ok = match *g {
                Guard::Order(a, _, b) => a < n && b < n && a != b,
                Guard::Diff(a, _, b) => diff_ok(a) && diff_ok(b) && a != b,
            };
            if !ok {
                return Err(Violation::IllFormed("bad guard atom".into()));
            }
        }
        if c.vector.iter().any(|s| matches!(*s, Slot::Var(d) if !diff_ok(d))) {
            return Err(Violation::IllFormed("bad vector variable".into()));
        }
    }
    Ok(())
}

/// The symbolic half of [`verify_ranking`].
pub fn check_symbolic(sys: &Mcs, rho: &RankingFunction) -> Result<(), Violation> {
    well_formed(sys, rho)?;
    let n = sys.n();
    for (f, cases) in rho.cases.iter().enumerate() {
        let inv = &sys.points[f].inv;
        for (ci, c) in cases.iter().enumerate() {
            let space = Space::new(n, [c]);
            let Some(m) = space.settle(point_matrix(&space, inv), 1, &[(0, &c.guard)]) else { continue };
            for s in &c.vector {
                if let Slot::Var(d) = *s {
                    if strength(&m, space.w(), d.hi, d.lo) < GE {
                        return Err(Violation::Negative { point: f, case: ci });
                    }
                }
            }
        }
        for a in 0..cases.len() {
            for b in a + 1..cases.len() {
                let space = Space::new(n, [&cases[a], &cases[b]]);
                let g = [(0, cases[a].guard.as_slice()), (0, cases[b].guard.as_slice())];
                if space.settle(point_matrix(&space, inv), 1, &g).is_some() {
                    return Err(Violation::Overlap { point: f, cases: (a, b) });
                }
            }
        }
    }
    let covered = |f: usize, region: Option<(&Space, Vec<u8>)>| -> Result<(), Violation> {
        let cases: Vec<&RankCase> = rho.cases[f].iter().collect();
        let ok = match region {
            None => {
                let space = Space::new(n, cases.iter().copied());
                match space.settle(point_matrix(&space, &sys.points[f].inv), 1, &[]) {
                    None => true,
                    Some(m) => space.covers(&m, &cases),
                }
            }
            Some((space, m)) => space.covers(&m, &cases),
        };
        if ok {
            Ok(())
        } else {
            Err(Violation::Uncovered { point: f })
        }
    };
    match rho.root {
        None => {
            for f in 0..sys.points.len() {
                covered(f, None)?;
            }
        }
        Some(r) => {
            if r >= sys.points.len() {
                return Err(Violation::IllFormed("root out of range".into()));
            }
            covered(r, None)?;
            for edge in &sys.edges {
                let (f, g) = (edge.mc.src(), edge.mc.tgt());
                for c in &rho.cases[f] {
                    let space = Space::new(n, std::iter::once(c).chain(&rho.cases[g]));
                    let Some(m) = edge_matrix(&space, &edge.mc) else { continue };
                    let Some(m) = space.settle(m, 2, &[(0, &c.guard)]) else { continue };
                    let w = space.w();
                    let mut tgt = vec![NO; w * w];
                    for u in 0..w {
                        for v in 0..w {
                            tgt[u * w + v] = m[(w + u) * 2 * w + w + v];
                        }
                    }
                    covered(g, Some((&space, tgt)))?;
                }
            }
        }
    }
    for (e, edge) in sys.edges.iter().enumerate() {
        let (f, g) = (edge.mc.src(), edge.mc.tgt());
        for (ci, c) in rho.cases[f].iter().enumerate() {
            for (di, d) in rho.cases[g].iter().enumerate() {
                let space = Space::new(n, [c, d]);
                let Some(m) = edge_matrix(&space, &edge.mc) else { continue };
                let Some(m) = space.settle(m, 2, &[(0, &c.guard), (1, &d.guard)]) else { continue };
                if !decreases(&space, &m, &c.vector, &d.vector) {
                    return Err(Violation::NoDecrease { edge: e, from: ci, to: di });
                }
            }
        }
    }
    Ok(())
}

/// The unique case applying to `s`; `Err` when zero or several apply.
fn select<'a>(cases: &'a [RankCase], s: &[i64]) -> Result<&'a RankCase, usize> {
    let mut hit = cases.iter().filter(|c| c.applies(s));
    match (hit.next(), hit.next()) {
        (Some(c), None) => Ok(c),
        (None, _) => Err(0),
        _ => Err(2),
    }
}

/// Randomized concrete check over values in `[-bound, bound]`.
pub fn check_sampled(
    sys: &Mcs,
    rho: &RankingFunction,
    bound: i64,
    tries: usize,
    seed: u64,
) -> Result<(), Violation> {
    well_formed(sys, rho)?;
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = |rng: &mut ChaCha8Rng, near: Option<&[i64]>| -> Vec<i64> {
        (0..n)
            .map(|_| match near {
                Some(s) if n > 0 && rng.gen_bool(0.7) => {
                    (s[rng.gen_range(0..n)] + rng.gen_range(-1..=1)).clamp(-bound, bound)
                }
                _ => rng.gen_range(-bound..=bound),
            })
            .collect()
    };
    if rho.root.is_none() {
        for (f, p) in sys.points.iter().enumerate() {
            for _ in 0..tries {
                let s = state(&mut rng, None);
                if p.inv.holds(&s) && select(&rho.cases[f], &s).is_err() {
                    return Err(Violation::Uncovered { point: f });
                }
            }
        }
    }
    for (e, edge) in sys.edges.iter().enumerate() {
        let (f, g) = (edge.mc.src(), edge.mc.tgt());
        for _ in 0..tries {
            let s = state(&mut rng, None);
            let t = state(&mut rng, Some(&s));
            if !(sys.points[f].inv.holds(&s) && sys.points[g].inv.holds(&t) && edge.mc.holds(&s, &t)) {
                continue;
            }
            let bad = || Violation::Concrete { edge: e, source: s.clone(), target: t.clone() };
            let cs = match select(&rho.cases[f], &s) {
                Ok(c) => c,
                Err(0) if rho.root.is_some() => continue,
                Err(_) => return Err(bad()),
            };
            let ct = select(&rho.cases[g], &t).map_err(|_| bad())?;
            let (vs, vt) = (cs.value(&s), ct.value(&t));
            if vs.iter().chain(&vt).any(|&x| x < 0) || vs <= vt {
                return Err(bad());
            }
        }
    }
    Ok(())
}

/// Sampling bound used by [`verify_ranking`].
pub const SAMPLE_BOUND: i64 = 12;
const SAMPLE_TRIES: usize = 3000;
const SAMPLE_SEED: u64 = 0x5eed;

/// Symbolic check followed by a sampled concrete check.
pub fn check_ranking(sys: &Mcs, rho: &RankingFunction) -> Result<(), Violation> {
    check_symbolic(sys, rho)?;
    check_sampled(sys, rho, SAMPLE_BOUND, SAMPLE_TRIES, SAMPLE_SEED)
}

pub fn verify_ranking(sys: &Mcs, rho: &RankingFunction) -> bool {
    check_ranking(sys, rho).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::Point;

    fn s(i: usize) -> VarNode {
        VarNode::src(i)
    }
    fn t(i: usize) -> VarNode {
        VarNode::tgt(i)
    }

    fn single(vars: &[&str], atoms: &[Atom]) -> Mcs {
        let mut sys = Mcs::new(vars.iter().map(|v| v.to_string()).collect());
        sys.add_point("f", Invariant::top(vars.len()));
        sys.add_edge("g", Mc::new(vars.len(), 0, 0, atoms));
        sys
    }

    #[test]
    fn transition_rule_gives_strict_difference() {
        let mut elab = Mcs::new(vec!["a".into(), "b".into()]);
        let inv = Invariant::new(2, &[Atom::new(s(0), Relation::Lt, s(1))]).unwrap();
        elab.points.push(Point { name: "f".into(), inv });
        elab.add_edge(
            "g",
            Mc::new(2, 0, 0, &[Atom::new(s(0), Relation::Lt, t(0)), Atom::new(s(1), Relation::Eq, t(1))]),
        );
        let ds = build_difference_mcs(&elab).unwrap();
        let d = DiffIndex::new(0, 1);
        assert!(ds.decreases(0, d, d));
    }

    #[test]
    fn identity_keeps_differences() {
        let mut elab = Mcs::new(vec!["a".into(), "b".into(), "c".into()]);
        let inv = Invariant::new(3, &[Atom::new(s(0), Relation::Le, s(1)), Atom::new(s(1), Relation::Le, s(2))])
            .unwrap();
        elab.points.push(Point { name: "f".into(), inv });
        let eq: Vec<Atom> = (0..3).map(|i| Atom::new(s(i), Relation::Eq, t(i))).collect();
        elab.add_edge("g", Mc::new(3, 0, 0, &eq));
        let ds = build_difference_mcs(&elab).unwrap();
        for d in diff_indices(3) {
            let mc = &ds.sys.edges[0].mc;
            assert!(mc.entails(&Atom::new(s(ds.var(d)), Relation::Eq, t(ds.var(d)))));
        }
    }

    #[test]
    fn unelaborated_input_rejected() {
        let sys = single(&["x", "y"], &[]);
        assert!(matches!(build_difference_mcs(&sys), Err(RankError::NotElaborated(_))));
    }

    #[test]
    fn counting_loop_ranked_by_gap() {
        // while (x < y) x = x + 1
        let sys = single(
            &["x", "y"],
            &[
                Atom::new(s(0), Relation::Lt, s(1)),
                Atom::new(s(0), Relation::Lt, t(0)),
                Atom::new(s(1), Relation::Eq, t(1)),
            ],
        );
        let rho = synthesize_ranking(&sys, None).unwrap();
        assert!(verify_ranking(&sys, &rho), "{}", check_ranking(&sys, &rho).unwrap_err());
        assert!(rho.max_variables() <= 1);
        let gap = Slot::Var(Diff { hi: 1, lo: 0 });
        assert!(rho.cases[0].iter().any(|c| c.vector.contains(&gap)));
    }

    #[test]
    fn non_strict_loop_has_no_ranking() {
        let sys = single(&["x"], &[Atom::new(s(0), Relation::Ge, t(0))]);
        assert_eq!(synthesize_ranking(&sys, None), Err(RankError::NonTerminating));
    }

    #[test]
    fn acyclic_system_ranked_by_components() {
        let mut sys = Mcs::new(vec!["x".into()]);
        sys.add_point("a", Invariant::top(1));
        sys.add_point("b", Invariant::top(1));
        sys.add_edge("e", Mc::new(1, 0, 1, &[]));
        let rho = synthesize_ranking(&sys, None).unwrap();
        assert_eq!(rho.cases[0][0].vector, vec![Slot::Const(1)]);
        assert_eq!(rho.cases[1][0].vector, vec![Slot::Const(0)]);
        assert!(verify_ranking(&sys, &rho));
    }

    #[test]
    fn weakened_guard_rejected() {
        let sys = single(
            &["x", "y"],
            &[
                Atom::new(s(0), Relation::Lt, s(1)),
                Atom::new(s(0), Relation::Lt, t(0)),
                Atom::new(s(1), Relation::Eq, t(1)),
            ],
        );
        let mut rho = synthesize_ranking(&sys, None).unwrap();
        for c in rho.cases[0].iter_mut() {
            for s in c.vector.iter_mut() {
                if let Slot::Var(d) = *s {
                    *s = Slot::Var(Diff { hi: d.lo, lo: d.hi });
                }
            }
        }
        assert!(!verify_ranking(&sys, &rho));
    }

    #[test]
    fn mtp_keeps_preserved_outer_difference() {
        let mut elab = Mcs::new(vec!["a".into(), "b".into(), "c".into()]);
        let inv = Invariant::new(3, &[Atom::new(s(0), Relation::Lt, s(1)), Atom::new(s(1), Relation::Lt, s(2))])
            .unwrap();
        elab.points.push(Point { name: "f".into(), inv });
        elab.add_edge(
            "g",
            Mc::new(3, 0, 0, &[Atom::new(s(0), Relation::Le, t(0)), Atom::new(s(2), Relation::Ge, t(2))]),
        );
        let ds = build_difference_mcs(&elab).unwrap();
        let p = mtp(&ds, std::slice::from_ref(&ds.pairs));
        assert!(p[0].contains(&DiffIndex::new(0, 2)));
    }

    #[test]
    fn regions_split_at_single_freezer() {
        let mut elab = Mcs::new(vec!["a".into(), "b".into(), "c".into()]);
        let inv = Invariant::new(3, &[Atom::new(s(0), Relation::Lt, s(1)), Atom::new(s(1), Relation::Lt, s(2))])
            .unwrap();
        elab.points.push(Point { name: "f".into(), inv });
        elab.add_edge("g", Mc::new(3, 0, 0, &[Atom::new(s(1), Relation::Eq, t(1))]));
        let mut ds = build_difference_mcs(&elab).unwrap();
        ds.freezers.push(vec![1]);
        let r = regions(&ds).unwrap();
        assert_eq!(r.d0[0], vec![DiffIndex::new(0, 1)]);
        assert_eq!(r.d2[0], vec![DiffIndex::new(1, 2)]);
        assert!(r.d1l[0].is_empty() && r.d1h[0].is_empty());
    }
}
