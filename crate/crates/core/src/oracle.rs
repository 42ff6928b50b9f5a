//! Brute-force oracles and cross-validation used by tests and `selfcheck`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::reachability;
use crate::mc::{Atom, Invariant, Mc, Mcs, Relation, VarNode, GE, GT, NO};
use crate::ranking::{build_difference_mcs, check_ranking, synthesize_ranking, Guard, RankingFunction, Slot};
use crate::termination::{closure_set, decide, Algorithm, CircularVariant, CvEdge};
use crate::transform::fully_elaborate;
use crate::witness::{find_witness, unroll};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("corpus bound exceeded: {0}")]
    Bounds(&'static str),
}

/// Parameters of a seeded random corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
    pub max_vars: usize,
    pub max_points: usize,
    pub max_mcs: usize,
    /// Probability that a pair of nodes of an MC is related.
    pub density: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { seed: 1, count: 1000, max_vars: 3, max_points: 2, max_mcs: 3, density: 0.3 }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.max_vars == 0 || self.max_vars > 3 {
            return Err(OracleError::Bounds("variables must be 1..=3"));
        }
        if self.max_points == 0 || self.max_points > 2 {
            return Err(OracleError::Bounds("points must be 1..=2"));
        }
        if self.max_mcs == 0 || self.max_mcs > 3 {
            return Err(OracleError::Bounds("MCs must be 1..=3"));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(OracleError::Bounds("density must lie in [0, 1]"));
        }
        Ok(())
    }
}

const RELATIONS: [Relation; 5] = [Relation::Lt, Relation::Le, Relation::Eq, Relation::Ge, Relation::Gt];

fn random_system(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Mcs {
    let n = rng.gen_range(1..=spec.max_vars);
    let names = ["x", "y", "z"];
    let mut sys = Mcs::new(names[..n].iter().map(|s| s.to_string()).collect());
    let points = rng.gen_range(1..=spec.max_points);
    for p in 0..points {
        let mut inv = Invariant::top(n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(spec.density / 3.0) {
                    let rel = RELATIONS[rng.gen_range(0..5)];
                    if let Some(next) = inv.with_atoms(&[Atom::new(VarNode::src(i), rel, VarNode::src(j))]) {
                        inv = next;
                    }
                }
            }
        }
        sys.add_point(format!("p{p}"), inv);
    }
    let mcs = rng.gen_range(1..=spec.max_mcs);
    let nodes: Vec<VarNode> = (0..n).map(VarNode::src).chain((0..n).map(VarNode::tgt)).collect();
    for e in 0..mcs {
        let (f, g) = (rng.gen_range(0..points), rng.gen_range(0..points));
        let mut atoms = Vec::new();
        for (a, &u) in nodes.iter().enumerate() {
            for &v in &nodes[a + 1..] {
                let cross = u.side != v.side;
                let p = if cross { spec.density } else { spec.density / 3.0 };
                if rng.gen_bool(p) {
                    atoms.push(Atom::new(u, RELATIONS[rng.gen_range(0..5)], v));
                }
            }
        }
        sys.add_edge(format!("g{e}"), Mc::new(n, f, g, &atoms));
    }
    sys
}

/// A reproducible corpus; system `i` depends only on the seed and `i`.
pub fn random_corpus(spec: &CorpusSpec) -> Result<Vec<Mcs>, OracleError> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
            random_system(spec, &mut rng)
        })
        .collect())
}

/// Collapses keyed by source, target and canonical key.
pub type CollapseSet = BTreeMap<(usize, usize, Vec<u8>), Mc>;

/// Collapses of all paths of length `1..=max_len`, keyed by endpoints and
/// canonical key, plus whether the last length added nothing new.
pub fn enumerate_collapses(sys: &Mcs, max_len: usize) -> (CollapseSet, bool) {
    let mut all = BTreeMap::new();
    let mut level: HashMap<(usize, usize, Vec<u8>), Mc> = HashMap::new();
    for e in &sys.edges {
        if e.mc.is_satisfiable() {
            level.insert((e.mc.src(), e.mc.tgt(), e.mc.canonical_key()), e.mc.clone());
        }
    }
    let mut saturated = level.is_empty();
    for len in 1..=max_len {
        let fresh = level.keys().filter(|k| !all.contains_key(*k)).count();
        if len == max_len || fresh == 0 {
            saturated = fresh == 0;
        }
        for (k, mc) in &level {
            all.entry(k.clone()).or_insert_with(|| mc.clone());
        }
        if fresh == 0 || len == max_len {
            break;
        }
        let mut next = HashMap::new();
        for mc in level.values() {
            for e in &sys.edges {
                if e.mc.src() != mc.tgt() {
                    continue;
                }
                let c = mc.compose(&e.mc).expect("paths chain");
                if c.is_satisfiable() {
                    next.insert((c.src(), c.tgt(), c.canonical_key()), c);
                }
            }
        }
        level = next;
    }
    (all, saturated)
}

/// Whether the closure set and the enumeration agree; `None` when the
/// enumeration did not saturate within `max_len`.
pub fn closure_matches_enumeration(sys: &Mcs, max_len: usize) -> Option<bool> {
    let (enumerated, saturated) = enumerate_collapses(sys, max_len);
    if !saturated {
        return None;
    }
    let clos = closure_set(sys);
    let keys: HashSet<(usize, usize, Vec<u8>)> =
        clos.members.iter().map(|m| (m.mc.src(), m.mc.tgt(), m.mc.canonical_key())).collect();
    Some(keys.len() == enumerated.len() && enumerated.keys().all(|k| keys.contains(k)))
}

/// Cycle kinds found by exhaustive closed-walk enumeration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WalkReport {
    /// Some forward and some backward cycle, one of them strict, joined
    /// by an arc of the constraint.
    pub stable_pass: bool,
    /// A strict closed walk with zero net balance.
    pub balanced_strict: bool,
    /// A negative and a positive closed walk, one strict, the first
    /// connected to the second.
    pub general_pass: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct WalkState {
    node: usize,
    balance: i32,
    strict: bool,
    shortcut: bool,
    mask: u32,
}

/// Signatures `(node mask, strict, shortcut used, net balance)` of closed
/// walks of length `1..=max_len` over the allowed edges.
fn closed_walks(k: usize, edges: &[CvEdge], max_len: usize) -> HashSet<(u32, bool, bool, i32)> {
    let mut out = HashSet::new();
    let mut adj = vec![Vec::new(); k];
    for e in edges {
        adj[e.from].push(*e);
    }
    for start in 0..k {
        let mut layer: HashSet<WalkState> = HashSet::new();
        layer.insert(WalkState { node: start, balance: 0, strict: false, shortcut: false, mask: 1 << start });
        for _ in 0..max_len {
            let mut next = HashSet::new();
            for st in &layer {
                for e in &adj[st.node] {
                    let s = WalkState {
                        node: e.to,
                        balance: st.balance + e.shift,
                        strict: st.strict || e.strict,
                        shortcut: st.shortcut || e.shift != 0,
                        mask: st.mask | 1 << e.to,
                    };
                    if s.node == start {
                        out.insert((s.mask, s.strict, s.shortcut, s.balance));
                    }
                    next.insert(s);
                }
            }
            layer = next;
        }
    }
    out
}

/// Exhaustive closed-walk search over the circular variant of `g`.
pub fn walk_oracle(g: &Mc, max_len: usize) -> WalkReport {
    if g.is_bottom() {
        return WalkReport { stable_pass: true, balanced_strict: true, general_pass: true };
    }
    let Ok(cv) = CircularVariant::new(g) else { return WalkReport::default() };
    let k = cv.nodes();
    let edges = cv.edges();
    let nodes = |mask: u32| (0..k).filter(move |v| mask >> v & 1 == 1);
    let fwd: Vec<CvEdge> = edges.iter().copied().filter(|e| e.shift <= 0).collect();
    let bwd: Vec<CvEdge> = edges.iter().copied().filter(|e| e.shift >= 0).collect();
    let fw: Vec<_> = closed_walks(k, &fwd, max_len).into_iter().filter(|w| w.2).collect();
    let bw: Vec<_> = closed_walks(k, &bwd, max_len).into_iter().filter(|w| w.2).collect();
    let stable_pass = fw.iter().any(|a| {
        bw.iter().any(|b| {
            (a.1 || b.1)
                && nodes(a.0).any(|u| nodes(b.0).any(|v| u == v || g.slot_strength(u, v) >= GE))
        })
    });
    let all = closed_walks(k, &edges, max_len);
    let balanced_strict = all.iter().any(|w| w.1 && w.3 == 0);
    let mut adj = vec![Vec::new(); k];
    for e in &edges {
        adj[e.from].push(e.to);
    }
    let reach = reachability(&adj);
    let neg: Vec<_> = all.iter().filter(|w| w.3 < 0).collect();
    let pos: Vec<_> = all.iter().filter(|w| w.3 > 0).collect();
    let general_pass = balanced_strict
        || neg.iter().any(|a| {
            pos.iter().any(|b| {
                (a.1 || b.1) && nodes(a.0).any(|u| nodes(b.0).any(|v| reach[u][v]))
            })
        });
    WalkReport { stable_pass, balanced_strict, general_pass }
}

/// Size-change graph over difference variables: `w x w` arcs `a -> b'`.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Scg {
    src: usize,
    tgt: usize,
    m: Vec<u8>,
}

fn scg_compose(a: &Scg, b: &Scg, w: usize) -> Scg {
    let mut m = vec![NO; w * w];
    for i in 0..w {
        for j in 0..w {
            let x = a.m[i * w + j];
            if x == NO {
                continue;
            }
            for l in 0..w {
                let y = b.m[j * w + l];
                if y != NO {
                    m[i * w + l] = m[i * w + l].max(x.max(y));
                }
            }
        }
    }
    Scg { src: a.src, tgt: b.tgt, m }
}

/// Termination through size-change analysis of the difference variables
/// of the full elaboration: every idempotent cyclic graph of the
/// composition closure needs a strict self-arc.
pub fn sct_difference_oracle(sys: &Mcs) -> bool {
    let (elab, _) = fully_elaborate(sys);
    let ds = build_difference_mcs(&elab).expect("full elaboration");
    let w = ds.pairs.len();
    let base: Vec<Scg> = ds
        .sys
        .edges
        .iter()
        .filter(|e| e.mc.is_satisfiable())
        .map(|e| {
            let mut m = vec![NO; w * w];
            for i in 0..w {
                for j in 0..w {
                    m[i * w + j] = e.mc.strength(VarNode::src(ds.n + i), VarNode::tgt(ds.n + j));
                }
            }
            Scg { src: e.mc.src(), tgt: e.mc.tgt(), m }
        })
        .collect();
    let mut seen: HashSet<Scg> = HashSet::new();
    let mut all: Vec<Scg> = Vec::new();
    for g in base.iter() {
        if seen.insert(g.clone()) {
            all.push(g.clone());
        }
    }
    let mut next = 0;
    while next < all.len() {
        let cur = all[next].clone();
        next += 1;
        for b in &base {
            if b.src != cur.tgt {
                continue;
            }
            let c = scg_compose(&cur, b, w);
            if seen.insert(c.clone()) {
                all.push(c);
            }
        }
    }
    all.iter().filter(|g| g.src == g.tgt).all(|g| {
        let sq = scg_compose(g, g, w);
        sq != *g || (0..w).any(|i| g.m[i * w + i] == GT)
    })
}

/// Whether `a` is a run along the multipath `mp`.
pub fn concrete_prefix_check(mp: &[usize], sys: &Mcs, a: &[Vec<i64>]) -> bool {
    if mp.is_empty() {
        return true;
    }
    if a.len() != mp.len() + 1 || a.iter().any(|s| s.len() != sys.n()) {
        return false;
    }
    if mp.windows(2).any(|w| sys.edges[w[0]].mc.tgt() != sys.edges[w[1]].mc.src()) {
        return false;
    }
    mp.iter().enumerate().all(|(t, &e)| {
        let mc = &sys.edges[e].mc;
        sys.points[mc.src()].inv.holds(&a[t]) && sys.points[mc.tgt()].inv.holds(&a[t + 1]) && mc.holds(&a[t], &a[t + 1])
    })
}

/// Every state and transition of a system over `[-bound, bound]`.
pub struct ConcreteModel {
    pub states: Vec<Vec<Vec<i64>>>,
    /// Per edge, pairs of state indices at its source and target points.
    pub transitions: Vec<Vec<(usize, usize)>>,
}

impl ConcreteModel {
    pub fn new(sys: &Mcs, bound: i64) -> ConcreteModel {
        let n = sys.n();
        let mut all: Vec<Vec<i64>> = vec![Vec::new()];
        for _ in 0..n {
            all = all
                .into_iter()
                .flat_map(|s| {
                    (-bound..=bound).map(move |v| {
                        let mut t = s.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
        }
        let states: Vec<Vec<Vec<i64>>> =
            sys.points.iter().map(|p| all.iter().filter(|s| p.inv.holds(s)).cloned().collect()).collect();
        let transitions = sys
            .edges
            .iter()
            .map(|e| {
                let (f, g) = (e.mc.src(), e.mc.tgt());
                let mut out = Vec::new();
                for (i, s) in states[f].iter().enumerate() {
                    for (j, t) in states[g].iter().enumerate() {
                        if e.mc.holds(s, t) {
                            out.push((i, j));
                        }
                    }
                }
                out
            })
            .collect();
        ConcreteModel { states, transitions }
    }

    /// A concrete reason why `rho` is not a ranking function, if any.
    pub fn violation(&self, sys: &Mcs, rho: &RankingFunction) -> Option<String> {
        let pick = |f: usize, s: &[i64]| -> Result<Option<Vec<i64>>, String> {
            let hits: Vec<_> = rho.cases[f].iter().filter(|c| c.applies(s)).collect();
            match hits.len() {
                0 => Ok(None),
                1 => {
                    let v = hits[0].value(s);
                    if v.iter().any(|&x| x < 0) {
                        Err(format!("negative component at {} {s:?}", rho.points[f]))
                    } else {
                        Ok(Some(v))
                    }
                }
                _ => Err(format!("overlapping cases at {} {s:?}", rho.points[f])),
            }
        };
        let mut values: Vec<Vec<Option<Vec<i64>>>> = Vec::new();
        for (f, states) in self.states.iter().enumerate() {
            let mut row = Vec::new();
            for s in states {
                let v = match pick(f, s) {
                    Ok(v) => v,
                    Err(why) => return Some(why),
                };
                if v.is_none() && rho.root.is_none() {
                    return Some(format!("uncovered state {s:?} at {}", rho.points[f]));
                }
                row.push(v);
            }
            values.push(row);
        }
        if let Some(r) = rho.root {
            if values[r].iter().any(Option::is_none) {
                return Some(format!("uncovered root state at {}", rho.points[r]));
            }
        }
        for (e, pairs) in self.transitions.iter().enumerate() {
            let (f, g) = (sys.edges[e].mc.src(), sys.edges[e].mc.tgt());
            for &(i, j) in pairs {
                let Some(vs) = &values[f][i] else { continue };
                let Some(vt) = &values[g][j] else {
                    return Some(format!("successor {:?} of {:?} is uncovered", self.states[g][j], self.states[f][i]));
                };
                if vs <= vt {
                    return Some(format!(
                        "edge {} does not decrease on {:?} -> {:?}",
                        sys.edges[e].name, self.states[f][i], self.states[g][j]
                    ));
                }
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MutationKind {
    DroppedStrictness,
    SwappedSlots,
    OffByOne,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [MutationKind::DroppedStrictness, MutationKind::SwappedSlots, MutationKind::OffByOne];

    pub fn name(self) -> &'static str {
        match self {
            MutationKind::DroppedStrictness => "dropped-strictness",
            MutationKind::SwappedSlots => "swapped-slots",
            MutationKind::OffByOne => "off-by-one",
        }
    }
}

/// Every single-site mutation of the given kind, in a fixed order.
pub fn mutations(rho: &RankingFunction, kind: MutationKind) -> Vec<RankingFunction> {
    let mut out = Vec::new();
    for (f, cases) in rho.cases.iter().enumerate() {
        for (c, case) in cases.iter().enumerate() {
            let mut push = |edit: &dyn Fn(&mut crate::ranking::RankCase)| {
                let mut m = rho.clone();
                edit(&mut m.cases[f][c]);
                out.push(m);
            };
            match kind {
                MutationKind::DroppedStrictness => {
                    for (k, g) in case.guard.iter().enumerate() {
                        let weak = |r: Relation| match r {
                            Relation::Lt => Some(Relation::Le),
                            Relation::Gt => Some(Relation::Ge),
                            _ => None,
                        };
                        let replaced = match *g {
                            Guard::Order(a, r, b) => weak(r).map(|r| Guard::Order(a, r, b)),
                            Guard::Diff(a, r, b) => weak(r).map(|r| Guard::Diff(a, r, b)),
                        };
                        if let Some(ng) = replaced {
                            push(&|rc| rc.guard[k] = ng);
                        }
                    }
                }
                MutationKind::SwappedSlots => {
                    for k in 0..case.vector.len().saturating_sub(1) {
                        if case.vector[k] != case.vector[k + 1] {
                            push(&|rc| rc.vector.swap(k, k + 1));
                        }
                    }
                }
                MutationKind::OffByOne => {
                    for (k, s) in case.vector.iter().enumerate() {
                        if let Slot::Const(v) = *s {
                            push(&|rc| rc.vector[k] = Slot::Const(v + 1));
                            if v > 0 {
                                push(&|rc| rc.vector[k] = Slot::Const(v - 1));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Value bound of the concrete oracle used to decide whether a mutation
/// actually breaks the ranking function.
pub const MUTATION_BOUND: i64 = 3;

/// Per kind, the first mutation with a concrete counterexample, or `None`
/// when no site of that kind breaks the function within the bound.
pub fn defined_mutations(
    sys: &Mcs,
    rho: &RankingFunction,
    model: &ConcreteModel,
) -> Vec<(MutationKind, Option<RankingFunction>)> {
    MutationKind::ALL
        .iter()
        .map(|&kind| (kind, mutations(rho, kind).into_iter().find(|m| model.violation(sys, m).is_some())))
        .collect()
}

/// Outcome of cross-validating one system.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SystemCheck {
    pub terminating: bool,
    pub problems: Vec<String>,
}

/// Length of the witness prefixes checked by [`check_system`].
pub const WITNESS_STEPS: usize = 100;

/// Four-way agreement, the difference oracle, closure against
/// enumeration, and a verified certificate for the verdict.
pub fn check_system(sys: &Mcs) -> SystemCheck {
    let mut problems = Vec::new();
    let verdicts: Vec<bool> = Algorithm::ALL.iter().map(|&a| decide(sys, a, None).terminating).collect();
    let terminating = verdicts[0];
    for (a, v) in Algorithm::ALL.iter().zip(&verdicts) {
        if *v != terminating {
            problems.push(format!("{} disagrees", a.name()));
        }
    }
    if sct_difference_oracle(sys) != terminating {
        problems.push("difference oracle disagrees".into());
    }
    if closure_matches_enumeration(sys, 10) == Some(false) {
        problems.push("closure differs from enumeration".into());
    }
    if terminating {
        match synthesize_ranking(sys, None) {
            Ok(rho) => {
                if let Err(v) = check_ranking(sys, &rho) {
                    problems.push(format!("ranking rejected: {v}"));
                }
                if rho.max_variables() + 1 > sys.n().max(1) {
                    problems.push("ranking exceeds the variable bound".into());
                }
            }
            Err(e) => problems.push(format!("no ranking: {e}")),
        }
    } else {
        match find_witness(sys, None, WITNESS_STEPS) {
            Some(w) => {
                if !concrete_prefix_check(&unroll(&w.cycle, WITNESS_STEPS), sys, &w.prefix) {
                    problems.push("witness prefix fails".into());
                }
            }
            None => problems.push("no witness".into()),
        }
    }
    SystemCheck { terminating, problems }
}
