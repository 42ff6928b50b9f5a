//! Closure sets, local termination tests, and the decision procedures.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{component_ids, reachability, scc};
use crate::mc::{Mc, Mcs, VarNode, GE, GT, NO};
use crate::transform::{reachable_points, restrict_to, stabilize, PointMapping};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TestError {
    #[error("constraint is not cyclic")]
    NotCyclic,
    #[error("constraint is not idempotent")]
    NotIdempotent,
}

/// A closure-set member with one CFG path realising it.
#[derive(Clone, Debug)]
pub struct Member {
    pub mc: Mc,
    pub path: Vec<usize>,
}

/// All satisfiable collapses of finite multipaths, keyed canonically.
#[derive(Clone, Debug, Default)]
pub struct ClosureSet {
    pub members: Vec<Member>,
    index: HashMap<(usize, usize, Vec<u8>), usize>,
}

impl ClosureSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, mc: &Mc) -> bool {
        self.index.contains_key(&(mc.src(), mc.tgt(), mc.canonical_key()))
    }

    pub fn cyclic(&self) -> impl Iterator<Item = &Member> {
        self.members.iter().filter(|m| m.mc.is_cyclic())
    }

    fn insert(&mut self, mc: Mc, path: Vec<usize>) -> bool {
        if mc.is_bottom() {
            return false;
        }
        let key = (mc.src(), mc.tgt(), mc.canonical_key());
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.members.len());
        self.members.push(Member { mc, path });
        true
    }
}

/// Least composition-closed set containing every satisfiable edge.
pub fn closure_set(sys: &Mcs) -> ClosureSet {
    let mut set = ClosureSet::default();
    let points = sys.points.len();
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); points];
    let mut by_tgt: Vec<Vec<usize>> = vec![Vec::new(); points];
    let mut next = 0;
    let push = |set: &mut ClosureSet, by_src: &mut Vec<Vec<usize>>, by_tgt: &mut Vec<Vec<usize>>, mc: Mc, path: Vec<usize>| {
        let (s, t) = (mc.src(), mc.tgt());
        if set.insert(mc, path) {
            let k = set.members.len() - 1;
            by_src[s].push(k);
            by_tgt[t].push(k);
        }
    };
    for (e, edge) in sys.edges.iter().enumerate() {
        push(&mut set, &mut by_src, &mut by_tgt, edge.mc.clone(), vec![e]);
    }
    while next < set.members.len() {
        let cur = set.members[next].clone();
        next += 1;
        let after: Vec<usize> = by_src[cur.mc.tgt()].clone();
        for j in after {
            let other = &set.members[j];
            let c = cur.mc.compose(&other.mc).expect("chained");
            let path = [cur.path.as_slice(), other.path.as_slice()].concat();
            push(&mut set, &mut by_src, &mut by_tgt, c, path);
        }
        let before: Vec<usize> = by_tgt[cur.mc.src()].clone();
        for j in before {
            let other = &set.members[j];
            let c = other.mc.compose(&cur.mc).expect("chained");
            let path = [other.path.as_slice(), cur.path.as_slice()].concat();
            push(&mut set, &mut by_src, &mut by_tgt, c, path);
        }
    }
    set
}

/// A cyclic MC with the shortcut edges `x_i <-> x_i'`.
#[derive(Clone, Debug)]
pub struct CircularVariant {
    pub base: Mc,
}

/// An edge of a circular variant; `shift` is +1 for a shortcut traversed
/// forward (`x -> x'`), -1 backward, 0 for a base arc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CvEdge {
    pub from: usize,
    pub to: usize,
    pub strict: bool,
    pub shift: i32,
}

impl CircularVariant {
    pub fn new(base: &Mc) -> Result<Self, TestError> {
        if !base.is_cyclic() {
            return Err(TestError::NotCyclic);
        }
        Ok(CircularVariant { base: base.clone() })
    }

    pub fn nodes(&self) -> usize {
        2 * self.base.n()
    }

    /// Base arcs followed by the `2n` shortcut arcs.
    pub fn edges(&self) -> Vec<CvEdge> {
        let n = self.base.n();
        let mut out: Vec<CvEdge> = self
            .base
            .arcs()
            .into_iter()
            .map(|a| CvEdge { from: a.from.slot(n), to: a.to.slot(n), strict: a.strict, shift: 0 })
            .collect();
        for i in 0..n {
            out.push(CvEdge { from: i, to: n + i, strict: false, shift: 1 });
            out.push(CvEdge { from: n + i, to: i, strict: false, shift: -1 });
        }
        out
    }
}

pub fn circular_variant(g: &Mc) -> Result<CircularVariant, TestError> {
    CircularVariant::new(g)
}

struct CycleClasses {
    comps: Vec<Vec<usize>>,
    /// Contains a shortcut arc.
    looping: Vec<bool>,
    strict: Vec<bool>,
}

fn classify(k: usize, edges: &[CvEdge]) -> CycleClasses {
    let mut adj = vec![Vec::new(); k];
    for e in edges {
        adj[e.from].push(e.to);
    }
    let comps = scc(&adj);
    let id = component_ids(&comps, k);
    let mut looping = vec![false; comps.len()];
    let mut strict = vec![false; comps.len()];
    for e in edges {
        if id[e.from] == id[e.to] {
            if e.shift != 0 {
                looping[id[e.from]] = true;
            }
            if e.strict {
                strict[id[e.from]] = true;
            }
        }
    }
    CycleClasses { comps, looping, strict }
}

/// Local test for stable systems: a forward cycle and a backward cycle,
/// one strict, with an arc of `g` from the first to the second.
pub fn ltts(g: &Mc) -> bool {
    if g.is_bottom() {
        return true;
    }
    debug_assert!(g.is_cyclic());
    let cv = CircularVariant { base: g.clone() };
    let k = cv.nodes();
    let all = cv.edges();
    let fwd: Vec<CvEdge> = all.iter().copied().filter(|e| e.shift <= 0).collect();
    let bwd: Vec<CvEdge> = all.iter().copied().filter(|e| e.shift >= 0).collect();
    let f = classify(k, &fwd);
    let b = classify(k, &bwd);
    for (fi, fc) in f.comps.iter().enumerate() {
        if !f.looping[fi] {
            continue;
        }
        for (bi, bc) in b.comps.iter().enumerate() {
            if !b.looping[bi] || !(f.strict[fi] || b.strict[bi]) {
                continue;
            }
            let linked = fc.iter().any(|&u| {
                bc.iter().any(|&v| u == v || g.slot_strength(u, v) >= GE)
            });
            if linked {
                return true;
            }
        }
    }
    false
}

pub fn is_idempotent(g: &Mc) -> bool {
    g.is_cyclic() && g.compose(g).map(|c| c == *g).unwrap_or(false)
}

/// Some power `g^k` with `g^k ; g^k = g^k`.
pub fn idempotent_power(g: &Mc) -> Mc {
    idempotent_power_with_exponent(g).0
}

pub fn idempotent_power_with_exponent(g: &Mc) -> (Mc, usize) {
    let mut p = g.clone();
    let mut k = 1;
    loop {
        if p.is_bottom() {
            return (p, k);
        }
        let sq = p.compose(&p).expect("cyclic");
        if sq == p {
            return (p, k);
        }
        p = p.compose(g).expect("cyclic");
        k += 1;
    }
}

/// Local test for idempotent MCs.
pub fn ltt1(g: &Mc) -> Result<bool, TestError> {
    if !g.is_cyclic() {
        return Err(TestError::NotCyclic);
    }
    if !is_idempotent(g) {
        return Err(TestError::NotIdempotent);
    }
    if g.is_bottom() {
        return Ok(true);
    }
    let n = g.n();
    for l in 0..n {
        let up = g.strength(VarNode::tgt(l), VarNode::src(l));
        if up == NO {
            continue;
        }
        for h in 0..n {
            let down = g.strength(VarNode::src(h), VarNode::tgt(h));
            if down == NO || (up != GT && down != GT) {
                continue;
            }
            if l == h || g.strength(VarNode::src(h), VarNode::src(l)) >= GE {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Least balanced strengthening and the number of rounds that changed it.
pub fn balanced_extension(g: &Mc) -> (Mc, usize) {
    let mut cur = g.clone();
    let mut rounds = 0;
    loop {
        let Some(m) = cur.matrix() else { return (cur, rounds) };
        let n = cur.n();
        let k = 2 * n;
        let mut next = m.to_vec();
        for i in 0..n {
            for j in 0..n {
                let (s, t) = (m[i * k + j], m[(n + i) * k + n + j]);
                let best = s.max(t);
                next[i * k + j] = best;
                next[(n + i) * k + n + j] = best;
            }
        }
        if next == m {
            return (cur, rounds);
        }
        rounds += 1;
        cur = Mc::from_matrix(n, cur.src(), cur.tgt(), next);
    }
}

fn balance_extremes(nodes: &[usize], edges: &[CvEdge], k: usize) -> (bool, bool) {
    const INF: i64 = i64::MAX / 4;
    let inside: Vec<bool> = (0..k).map(|v| nodes.contains(&v)).collect();
    let mut lo = vec![INF; k * k];
    let mut hi = vec![-INF; k * k];
    for e in edges {
        if inside[e.from] && inside[e.to] {
            let w = e.shift as i64;
            let c = e.from * k + e.to;
            lo[c] = lo[c].min(w);
            hi[c] = hi[c].max(w);
        }
    }
    for &via in nodes {
        for &u in nodes {
            for &w in nodes {
                let (a, b) = (lo[u * k + via], lo[via * k + w]);
                if a < INF && b < INF {
                    let c = (a + b).max(-INF / 2);
                    if c < lo[u * k + w] {
                        lo[u * k + w] = c;
                    }
                }
                let (a, b) = (hi[u * k + via], hi[via * k + w]);
                if a > -INF && b > -INF {
                    let c = (a + b).min(INF / 2);
                    if c > hi[u * k + w] {
                        hi[u * k + w] = c;
                    }
                }
            }
        }
    }
    let neg = nodes.iter().any(|&v| lo[v * k + v] < 0);
    let pos = nodes.iter().any(|&v| hi[v * k + v] > 0 && hi[v * k + v] < INF);
    (neg, pos)
}

/// Whether the circular variant has a strict closed walk of net shortcut
/// balance zero whose running balance stays within `[-window, window]`.
pub fn has_balanced_strict_cycle(g: &Mc, window: i32) -> bool {
    let Ok(cv) = CircularVariant::new(g) else { return false };
    let k = cv.nodes();
    let edges = cv.edges();
    let width = (2 * window + 1) as usize;
    let node = |v: usize, b: i32| v * width + (b + window) as usize;
    let mut adj = vec![Vec::new(); k * width];
    for e in &edges {
        for b in -window..=window {
            let nb = b + e.shift;
            if nb.abs() <= window {
                adj[node(e.from, b)].push(node(e.to, nb));
            }
        }
    }
    let comps = scc(&adj);
    let id = component_ids(&comps, adj.len());
    edges.iter().filter(|e| e.strict).any(|e| {
        (-window..=window).any(|b| id[node(e.from, b)] == id[node(e.to, b)])
    })
}

/// Local test for the general case.
pub fn ltt_general(g: &Mc) -> bool {
    if g.is_bottom() {
        return true;
    }
    let n = g.n();
    if has_balanced_strict_cycle(g, 2 * n as i32) {
        return true;
    }
    let cv = CircularVariant { base: g.clone() };
    let k = cv.nodes();
    let edges = cv.edges();
    let cls = classify(k, &edges);
    let mut adj = vec![Vec::new(); k];
    for e in &edges {
        adj[e.from].push(e.to);
    }
    let reach = reachability(&adj);
    let ext: Vec<(bool, bool)> =
        cls.comps.iter().map(|c| balance_extremes(c, &edges, k)).collect();
    for (a, ca) in cls.comps.iter().enumerate() {
        if !ext[a].0 {
            continue;
        }
        for (b, cb) in cls.comps.iter().enumerate() {
            if !ext[b].1 || !(cls.strict[a] || cls.strict[b]) {
                continue;
            }
            if reach[ca[0]][cb[0]] {
                return true;
            }
        }
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    StableClosure,
    Idempotent,
    General,
    Cls,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::StableClosure, Algorithm::Idempotent, Algorithm::General, Algorithm::Cls];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::StableClosure => "stable-closure",
            Algorithm::Idempotent => "idempotent",
            Algorithm::General => "general",
            Algorithm::Cls => "cls",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// The cyclic member that failed its local test.
#[derive(Clone, Debug)]
pub struct Failure {
    pub mc: Mc,
    /// Realising cycle as edge indices of the input system.
    pub cycle: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub terminating: bool,
    pub algorithm: Algorithm,
    pub rooted: Option<usize>,
    pub failure: Option<Failure>,
}

/// The system an algorithm analyses, with its mapping back to the input.
pub fn prepared(sys: &Mcs, stable: bool, root: Option<usize>) -> (Mcs, PointMapping) {
    if !stable && root.is_none() {
        return (sys.clone(), PointMapping::identity(sys));
    }
    let (st, map) = stabilize(sys);
    match root {
        None => (st, map),
        Some(r) => {
            let roots: Vec<usize> =
                (0..st.points.len()).filter(|&p| map.points[p].orig == r).collect();
            let keep = reachable_points(&st, &roots);
            let (sub, sub_map) = restrict_to(&st, &keep);
            (sub, sub_map.then(&map))
        }
    }
}

fn local_test(alg: Algorithm, g: &Mc) -> Option<bool> {
    match alg {
        Algorithm::StableClosure => Some(ltts(g)),
        Algorithm::Idempotent => is_idempotent(g).then(|| ltt1(g).unwrap_or(true)),
        Algorithm::General => Some(ltt_general(g)),
        Algorithm::Cls => Some(ltts(&balanced_extension(g).0)),
    }
}

/// Decides termination with the chosen algorithm. Rooted analysis
/// stabilizes first for every algorithm, then drops unreachable points.
pub fn decide(sys: &Mcs, alg: Algorithm, root: Option<usize>) -> Verdict {
    let stable = matches!(alg, Algorithm::StableClosure | Algorithm::Idempotent);
    let (work, map) = prepared(sys, stable, root);
    let clos = closure_set(&work);
    for m in clos.cyclic() {
        if local_test(alg, &m.mc) == Some(false) {
            return Verdict {
                terminating: false,
                algorithm: alg,
                rooted: root,
                failure: Some(Failure {
                    mc: m.mc.clone(),
                    cycle: m.path.iter().map(|&e| map.edges[e]).collect(),
                }),
            };
        }
    }
    Verdict { terminating: true, algorithm: alg, rooted: root, failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{Atom, Invariant, Relation};

    fn s(i: usize) -> VarNode {
        VarNode::src(i)
    }
    fn t(i: usize) -> VarNode {
        VarNode::tgt(i)
    }
    fn mc(n: usize, atoms: &[(VarNode, Relation, VarNode)]) -> Mc {
        let atoms: Vec<Atom> = atoms.iter().map(|&(a, r, b)| Atom::new(a, r, b)).collect();
        Mc::new(n, 0, 0, &atoms)
    }
    fn single(g: Mc) -> Mcs {
        let mut sys = Mcs::new((0..g.n()).map(|i| format!("x{i}")).collect());
        sys.add_point("f", Invariant::top(g.n()));
        sys.add_edge("g", g);
        sys
    }

    #[test]
    fn ltt1_pattern_passes() {
        let g = mc(
            2,
            &[
                (s(0), Relation::Le, s(1)),
                (s(0), Relation::Eq, t(0)),
                (s(1), Relation::Gt, t(1)),
                (t(1), Relation::Ge, t(0)),
            ],
        );
        let g = idempotent_power(&g);
        assert!(ltt1(&g).unwrap());
        assert!(ltts(&g));
    }

    #[test]
    fn non_strict_loop_fails() {
        let g = mc(1, &[(s(0), Relation::Ge, t(0))]);
        assert!(!ltts(&g));
        assert!(!ltt1(&g).unwrap());
        assert!(!ltt_general(&g));
        for alg in Algorithm::ALL {
            assert!(!decide(&single(g.clone()), alg, None).terminating, "{alg}");
        }
    }

    #[test]
    fn decreasing_alone_is_not_enough() {
        let g = mc(1, &[(s(0), Relation::Gt, t(0))]);
        assert!(!ltts(&g));
        assert!(!ltt_general(&g));
    }

    #[test]
    fn idempotence_checks() {
        assert!(is_idempotent(&mc(1, &[(s(0), Relation::Eq, t(0))])));
        let g = mc(2, &[(s(0), Relation::Gt, t(1)), (s(1), Relation::Gt, t(0))]);
        assert!(!is_idempotent(&g));
        assert!(is_idempotent(&idempotent_power(&g)));
        assert_eq!(ltt1(&g), Err(TestError::NotIdempotent));
    }

    #[test]
    fn balancing_copies_relations() {
        let g = mc(2, &[(s(0), Relation::Gt, s(1))]);
        let (b, rounds) = balanced_extension(&g);
        assert!(b.entails(&Atom::new(t(0), Relation::Gt, t(1))));
        assert_eq!(rounds, 1);
        assert_eq!(balanced_extension(&b).1, 0);
    }

    #[test]
    fn circular_variant_counts() {
        let g = mc(1, &[(s(0), Relation::Gt, t(0))]);
        let cv = circular_variant(&g).unwrap();
        assert_eq!(cv.nodes(), 2);
        assert_eq!(cv.edges().len(), g.arcs().len() + 2);
        assert!(circular_variant(&Mc::new(1, 0, 1, &[])).is_err());
    }

    #[test]
    fn closure_set_two_edges() {
        let mut sys = Mcs::new(vec!["x".into()]);
        sys.add_point("f", Invariant::top(1));
        sys.add_point("g", Invariant::top(1));
        sys.add_edge("a", Mc::new(1, 0, 1, &[Atom::new(s(0), Relation::Gt, t(0))]));
        sys.add_edge("b", Mc::new(1, 1, 0, &[Atom::new(s(0), Relation::Ge, t(0))]));
        let c = closure_set(&sys);
        assert_eq!(c.len(), 5);
        assert!(c.members.iter().all(|m| m.mc.is_satisfiable()));
    }
}
