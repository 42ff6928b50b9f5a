//! Stabilization, full and partial elaboration, and reachability restriction.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::mc::{Atom, Invariant, Mc, Mcs, Relation, VarNode, GE, GT, NO};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("unknown point index {0}")]
    UnknownPoint(usize),
    #[error("case {0} does not extend the point invariant")]
    CaseWeaker(usize),
    #[error("cases {0} and {1} are not mutually exclusive")]
    CasesOverlap(usize, usize),
    #[error("cases do not cover the point invariant")]
    CasesIncomplete,
}

/// An ordered partition of the variable indices; blocks are equality
/// classes listed by ascending value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ordering {
    pub blocks: Vec<Vec<usize>>,
}

impl Ordering {
    /// Sorted position to original index; ties by original index.
    pub fn psi(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    /// Atoms over original indices stating this ordering.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for w in b.windows(2) {
                out.push(Atom::new(VarNode::src(w[0]), Relation::Eq, VarNode::src(w[1])));
            }
        }
        for w in self.blocks.windows(2) {
            out.push(Atom::new(VarNode::src(w[0][0]), Relation::Lt, VarNode::src(w[1][0])));
        }
        out
    }

    pub fn invariant(&self, n: usize) -> Invariant {
        Invariant::new(n, &self.atoms()).expect("orderings are satisfiable")
    }

    /// The ordering a total-preorder invariant describes, if it is total.
    pub fn from_invariant(inv: &Invariant) -> Option<Ordering> {
        let n = inv.n();
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j && inv.get(i, j) == NO && inv.get(j, i) == NO {
                    return None;
                }
            }
        }
        idx.sort_by(|&a, &b| {
            if inv.get(b, a) == GT {
                std::cmp::Ordering::Less
            } else if inv.get(a, b) == GT {
                std::cmp::Ordering::Greater
            } else {
                a.cmp(&b)
            }
        });
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in idx {
            match blocks.last_mut() {
                Some(b) if inv.get(b[0], i) == GE && inv.get(i, b[0]) == GE => b.push(i),
                _ => blocks.push(vec![i]),
            }
        }
        Some(Ordering { blocks })
    }
}

/// All ordered partitions of `{0..n}`.
pub fn enumerate_orderings(n: usize) -> Vec<Ordering> {
    fn go(rest: &[usize], acc: &mut Vec<Vec<usize>>, out: &mut Vec<Ordering>) {
        if rest.is_empty() {
            out.push(Ordering { blocks: acc.clone() });
            return;
        }
        let k = rest.len();
        // Every nonempty subset of `rest` may form the next block.
        for mask in 1u32..(1 << k) {
            let block: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| rest[b]).collect();
            let remaining: Vec<usize> =
                (0..k).filter(|b| mask >> b & 1 == 0).map(|b| rest[b]).collect();
            acc.push(block);
            go(&remaining, acc, out);
            acc.pop();
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    go(&all, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointOrigin {
    pub orig: usize,
    /// `perm[k]` is the original index of variable `k` at this point.
    pub perm: Vec<usize>,
}

/// Correspondence between a transformed system and its input.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PointMapping {
    pub points: Vec<PointOrigin>,
    pub edges: Vec<usize>,
}

impl PointMapping {
    pub fn identity(sys: &Mcs) -> Self {
        let n = sys.n();
        PointMapping {
            points: (0..sys.points.len())
                .map(|orig| PointOrigin { orig, perm: (0..n).collect() })
                .collect(),
            edges: (0..sys.edges.len()).collect(),
        }
    }

    /// Composes `self` (from an intermediate system) with the mapping of that
    /// intermediate system back to the original.
    pub fn then(&self, earlier: &PointMapping) -> PointMapping {
        PointMapping {
            points: self
                .points
                .iter()
                .map(|p| {
                    let base = &earlier.points[p.orig];
                    PointOrigin { orig: base.orig, perm: p.perm.iter().map(|&k| base.perm[k]).collect() }
                })
                .collect(),
            edges: self.edges.iter().map(|&e| earlier.edges[e]).collect(),
        }
    }
}

fn unique_names(base: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    base.iter()
        .map(|b| {
            let mut name = b.clone();
            while !seen.insert(name.clone()) {
                name.push('_');
            }
            name
        })
        .collect()
}

/// Assembles a system from refined points; every pair of refined points is
/// joined by every compatible original edge, closed, unsatisfiable dropped.
fn assemble(
    sys: &Mcs,
    pts: &[(usize, Invariant)],
    tag: &str,
) -> (Mcs, PointMapping) {
    let n = sys.n();
    let mut counts = vec![0usize; sys.points.len()];
    for (o, _) in pts {
        counts[*o] += 1;
    }
    let mut seen = vec![0usize; sys.points.len()];
    let names: Vec<String> = pts
        .iter()
        .map(|(o, _)| {
            let k = seen[*o];
            seen[*o] += 1;
            if counts[*o] == 1 {
                sys.points[*o].name.clone()
            } else {
                format!("{}_{}{}", sys.points[*o].name, tag, k)
            }
        })
        .collect();
    let names = unique_names(&names);
    let mut out = Mcs::new(sys.vars.clone());
    let mut map = PointMapping::default();
    for ((o, inv), name) in pts.iter().zip(names) {
        out.add_point(name, inv.clone());
        map.points.push(PointOrigin { orig: *o, perm: (0..n).collect() });
    }
    let mut edge_names = Vec::new();
    let mut mcs = Vec::new();
    for (e, edge) in sys.edges.iter().enumerate() {
        let mut k = 0;
        for (p, (po, pinv)) in pts.iter().enumerate() {
            if *po != edge.mc.src() {
                continue;
            }
            for (q, (qo, qinv)) in pts.iter().enumerate() {
                if *qo != edge.mc.tgt() {
                    continue;
                }
                let h = edge.mc.close(pinv, qinv);
                if h.is_bottom() {
                    continue;
                }
                edge_names.push(format!("{}_{}", edge.name, k));
                k += 1;
                mcs.push(h.relabel(p, q));
                map.edges.push(e);
            }
        }
    }
    // Keep original edge names when an edge survives exactly once.
    let mut per_edge = vec![0usize; sys.edges.len()];
    for &e in &map.edges {
        per_edge[e] += 1;
    }
    let edge_names: Vec<String> = edge_names
        .into_iter()
        .zip(&map.edges)
        .map(|(nm, &e)| if per_edge[e] == 1 { sys.edges[e].name.clone() } else { nm })
        .collect();
    for (nm, mc) in unique_names(&edge_names).into_iter().zip(mcs) {
        out.edges.push(crate::mc::Edge { name: nm, mc });
    }
    out.root = sys.root.and_then(|r| {
        let hits: Vec<usize> = (0..pts.len()).filter(|&p| pts[p].0 == r).collect();
        (hits.len() == 1).then(|| hits[0])
    });
    (out, map)
}

/// A pair of source nodes on which `strong` says more than `weak`.
fn stronger_pair(strong: &Invariant, weak: &Invariant) -> Option<(usize, usize)> {
    let n = weak.n();
    for i in 0..n {
        for j in 0..n {
            if i != j && strong.get(i, j) > weak.get(i, j) {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

fn trichotomy(inv: &Invariant, i: usize, j: usize) -> Vec<Invariant> {
    [Relation::Lt, Relation::Eq, Relation::Gt]
        .into_iter()
        .filter_map(|r| inv.with_atoms(&[Atom::new(VarNode::src(i), r, VarNode::src(j))]))
        .collect()
}

/// Whether every MC is satisfiable and adds no endpoint-local relation.
pub fn is_stable(sys: &Mcs) -> bool {
    sys.edges.iter().all(|e| {
        let (Some(sp), Some(tp)) = (e.mc.source_projection(), e.mc.target_projection()) else {
            return false;
        };
        sys.points[e.mc.src()].inv.implies(&sp) && sys.points[e.mc.tgt()].inv.implies(&tp)
    })
}

/// Refines flow points until every MC is satisfiable and its endpoint
/// projections are entailed by the endpoint invariants.
pub fn stabilize(sys: &Mcs) -> (Mcs, PointMapping) {
    let mut pts: Vec<(usize, Invariant)> =
        sys.points.iter().enumerate().map(|(i, p)| (i, p.inv.clone())).collect();
    let mut alive: Vec<bool> = vec![true; pts.len()];
    let mut queue: VecDeque<usize> = (0..pts.len()).collect();
    let mut by_orig: Vec<Vec<usize>> = (0..sys.points.len()).map(|i| vec![i]).collect();
    let out_edges = sys.successors();
    let mut in_edges = vec![Vec::new(); sys.points.len()];
    for (k, e) in sys.edges.iter().enumerate() {
        in_edges[e.mc.tgt()].push(k);
    }

    while let Some(p) = queue.pop_front() {
        if !alive[p] {
            continue;
        }
        let (po, _) = pts[p].clone();
        let mut split: Option<(usize, usize, usize)> = None;
        'scan: for &(forward, edges) in &[(true, &out_edges[po]), (false, &in_edges[po])] {
            for &e in edges.iter() {
                let mc = &sys.edges[e].mc;
                let other = if forward { mc.tgt() } else { mc.src() };
                for &q in &by_orig[other] {
                    let (s, t) = if forward { (p, q) } else { (q, p) };
                    let h = mc.close(&pts[s].1, &pts[t].1);
                    let (Some(sp), Some(tp)) = (h.source_projection(), h.target_projection())
                    else {
                        continue;
                    };
                    if let Some((i, j)) = stronger_pair(&sp, &pts[s].1) {
                        split = Some((s, i, j));
                        break 'scan;
                    }
                    if let Some((i, j)) = stronger_pair(&tp, &pts[t].1) {
                        split = Some((t, i, j));
                        break 'scan;
                    }
                }
            }
        }
        if let Some((victim, i, j)) = split {
            let (vo, vinv) = pts[victim].clone();
            alive[victim] = false;
            by_orig[vo].retain(|&x| x != victim);
            for inv in trichotomy(&vinv, i, j) {
                pts.push((vo, inv));
                alive.push(true);
                let id = pts.len() - 1;
                by_orig[vo].push(id);
                queue.push_back(id);
            }
            // Neighbours checked against the victim must be rechecked.
            if victim != p && alive[p] {
                queue.push_back(p);
            }
        }
    }

    let mut order: Vec<usize> = (0..pts.len()).filter(|&p| alive[p]).collect();
    order.sort_by_key(|&p| (pts[p].0, p));
    let finals: Vec<(usize, Invariant)> = order.into_iter().map(|p| pts[p].clone()).collect();
    assemble(sys, &finals, "s")
}

/// Splits every point by every total preorder of the variables and
/// re-indexes variables into ascending order of value.
pub fn fully_elaborate(sys: &Mcs) -> (Mcs, PointMapping) {
    elaborate_from(sys, None)
}

/// Full elaboration restricted to points reachable from the root's
/// elaborations, generated by forward exploration.
pub fn fully_elaborate_rooted(sys: &Mcs, root: usize) -> Result<(Mcs, PointMapping), TransformError> {
    if root >= sys.points.len() {
        return Err(TransformError::UnknownPoint(root));
    }
    Ok(elaborate_from(sys, Some(root)))
}

fn elaborate_from(sys: &Mcs, root: Option<usize>) -> (Mcs, PointMapping) {
    let n = sys.n();
    let orderings = enumerate_orderings(n);
    // Candidate points: (orig point, ordering index) with consistent invariant.
    let mut cand: Vec<Vec<usize>> = vec![Vec::new(); sys.points.len()];
    for (f, p) in sys.points.iter().enumerate() {
        for (k, o) in orderings.iter().enumerate() {
            if p.inv.with_atoms(&o.atoms()).is_some() {
                cand[f].push(k);
            }
        }
    }
    let ord_inv: Vec<Invariant> = orderings.iter().map(|o| o.invariant(n)).collect();
    let succ = sys.successors();

    let mut keep: Vec<(usize, usize)> = Vec::new();
    match root {
        None => {
            for (f, ks) in cand.iter().enumerate() {
                for &k in ks {
                    keep.push((f, k));
                }
            }
        }
        Some(r) => {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<(usize, usize)> = cand[r].iter().rev().map(|&k| (r, k)).collect();
            while let Some((f, k)) = stack.pop() {
                if !seen.insert((f, k)) {
                    continue;
                }
                keep.push((f, k));
                let inv_f = sys.points[f].inv.with_atoms(&orderings[k].atoms()).unwrap();
                for &e in &succ[f] {
                    let mc = &sys.edges[e].mc;
                    let g = mc.tgt();
                    for &l in cand[g].iter().rev() {
                        if seen.contains(&(g, l)) {
                            continue;
                        }
                        let inv_g = sys.points[g].inv.with_atoms(&orderings[l].atoms()).unwrap();
                        if mc.close(&inv_f, &inv_g).is_satisfiable() {
                            stack.push((g, l));
                        }
                    }
                }
            }
            keep.sort();
        }
    }

    let mut out = Mcs::new(sys.vars.clone());
    let mut map = PointMapping::default();
    let mut names = Vec::new();
    let mut index_of = std::collections::BTreeMap::new();
    for (idx, &(f, k)) in keep.iter().enumerate() {
        let psi = orderings[k].psi();
        let mut pos = vec![0; n];
        for (new, &old) in psi.iter().enumerate() {
            pos[old] = new;
        }
        let reindexed = Mc::from_matrix(n, 0, 0, {
            let m = Mc::from_arcs(
                n,
                0,
                0,
                orderings[k].atoms().iter().flat_map(|a| a.arcs()),
            );
            m.rename(&pos, &pos).matrix().unwrap().to_vec()
        });
        let inv = reindexed.source_projection().unwrap();
        names.push(format!("{}_e{}", sys.points[f].name, k));
        out.points.push(crate::mc::Point { name: String::new(), inv });
        map.points.push(PointOrigin { orig: f, perm: psi });
        index_of.insert((f, k), idx);
    }
    for (p, nm) in out.points.iter_mut().zip(unique_names(&names)) {
        p.name = nm;
    }
    let mut edge_names = Vec::new();
    for (e, edge) in sys.edges.iter().enumerate() {
        let (f, g) = (edge.mc.src(), edge.mc.tgt());
        let mut c = 0;
        for &k in &cand[f] {
            let Some(&p) = index_of.get(&(f, k)) else { continue };
            for &l in &cand[g] {
                let Some(&q) = index_of.get(&(g, l)) else { continue };
                let h = edge.mc.close(&ord_inv[k], &ord_inv[l]);
                if h.is_bottom() {
                    continue;
                }
                let pos = |perm: &[usize]| {
                    let mut v = vec![0; n];
                    for (new, &old) in perm.iter().enumerate() {
                        v[old] = new;
                    }
                    v
                };
                let renamed = h.rename(&pos(&map.points[p].perm), &pos(&map.points[q].perm));
                out.edges.push(crate::mc::Edge { name: String::new(), mc: renamed.relabel(p, q) });
                map.edges.push(e);
                edge_names.push(format!("{}_{}", edge.name, c));
                c += 1;
            }
        }
    }
    for (edge, nm) in out.edges.iter_mut().zip(unique_names(&edge_names)) {
        edge.name = nm;
    }
    (out, map)
}

/// Whether every case of `cases` that mentions an unresolved pair can be
/// decided; `true` iff the disjunction of the cases covers `inv`.
fn covers(inv: &Invariant, cases: &[Invariant]) -> bool {
    if cases.iter().any(|c| inv.implies(c)) {
        return true;
    }
    let n = inv.n();
    let live: Vec<&Invariant> =
        cases.iter().filter(|c| inv.with_atoms(&c.atoms()).is_some()).collect();
    if live.is_empty() {
        return false;
    }
    for c in &live {
        for i in 0..n {
            for j in i + 1..n {
                let mentioned = c.get(i, j) != NO || c.get(j, i) != NO;
                let open = inv.get(i, j) == NO || inv.get(j, i) == NO;
                let decided = inv.get(i, j) == GT || inv.get(j, i) == GT;
                if mentioned && open && !decided {
                    return trichotomy(inv, i, j).iter().all(|sub| covers(sub, cases));
                }
            }
        }
    }
    false
}

/// Splits point `point` into one copy per case; incident MCs are
/// replicated, re-closed, and dropped when unsatisfiable.
pub fn partial_elaborate(
    sys: &Mcs,
    point: usize,
    cases: &[Invariant],
) -> Result<(Mcs, PointMapping), TransformError> {
    let base = &sys.points.get(point).ok_or(TransformError::UnknownPoint(point))?.inv;
    for (k, c) in cases.iter().enumerate() {
        if !c.implies(base) {
            return Err(TransformError::CaseWeaker(k));
        }
    }
    for a in 0..cases.len() {
        for b in a + 1..cases.len() {
            if cases[a].with_atoms(&cases[b].atoms()).is_some() {
                return Err(TransformError::CasesOverlap(a, b));
            }
        }
    }
    if !covers(base, cases) {
        return Err(TransformError::CasesIncomplete);
    }
    Ok(split_point(sys, point, cases))
}

/// Partial elaboration without the case checks.
pub(crate) fn split_point(sys: &Mcs, point: usize, cases: &[Invariant]) -> (Mcs, PointMapping) {
    let mut pts = Vec::new();
    for (f, p) in sys.points.iter().enumerate() {
        if f == point {
            for c in cases {
                pts.push((f, c.clone()));
            }
        } else {
            pts.push((f, p.inv.clone()));
        }
    }
    assemble(sys, &pts, "c")
}

/// Rebuilds the system over the listed refined points, in order.
pub(crate) fn refine(sys: &Mcs, pts: &[(usize, Invariant)]) -> (Mcs, PointMapping) {
    assemble(sys, pts, "c")
}

/// Points reachable from any of `roots` along satisfiable edges.
pub fn reachable_points(sys: &Mcs, roots: &[usize]) -> Vec<bool> {
    let succ = sys.successors();
    let mut seen = vec![false; sys.points.len()];
    let mut stack: Vec<usize> = roots.to_vec();
    while let Some(f) = stack.pop() {
        if std::mem::replace(&mut seen[f], true) {
            continue;
        }
        for &e in &succ[f] {
            if sys.edges[e].mc.is_satisfiable() {
                stack.push(sys.edges[e].mc.tgt());
            }
        }
    }
    seen
}

/// The subsystem induced by points reachable from `root`.
pub fn restrict_reachable(sys: &Mcs, root: usize) -> Result<(Mcs, PointMapping), TransformError> {
    if root >= sys.points.len() {
        return Err(TransformError::UnknownPoint(root));
    }
    Ok(restrict_to(sys, &reachable_points(sys, &[root])))
}

pub(crate) fn restrict_to(sys: &Mcs, keep: &[bool]) -> (Mcs, PointMapping) {
    let n = sys.n();
    let mut index = vec![usize::MAX; sys.points.len()];
    let mut out = Mcs::new(sys.vars.clone());
    let mut map = PointMapping::default();
    for (f, p) in sys.points.iter().enumerate() {
        if keep[f] {
            index[f] = out.points.len();
            out.points.push(p.clone());
            map.points.push(PointOrigin { orig: f, perm: (0..n).collect() });
        }
    }
    for (e, edge) in sys.edges.iter().enumerate() {
        let (f, g) = (edge.mc.src(), edge.mc.tgt());
        if keep[f] && keep[g] {
            out.edges.push(crate::mc::Edge {
                name: edge.name.clone(),
                mc: edge.mc.relabel(index[f], index[g]),
            });
            map.edges.push(e);
        }
    }
    out.root = sys.root.filter(|&r| keep[r]).map(|r| index[r]);
    (out, map)
}

/// `G ⊢ x_i >= x_j'` implies `G ⊢ x_i >= x_k'` for every `k < j`.
pub fn has_downward_closure(sys: &Mcs) -> bool {
    let n = sys.n();
    sys.edges.iter().all(|e| {
        (0..n).all(|i| {
            (0..n).all(|j| {
                let s = e.mc.strength(VarNode::src(i), VarNode::tgt(j));
                s == NO || (0..j).all(|k| e.mc.strength(VarNode::src(i), VarNode::tgt(k)) >= GE)
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::Atom;

    fn s(i: usize) -> VarNode {
        VarNode::src(i)
    }
    fn t(i: usize) -> VarNode {
        VarNode::tgt(i)
    }

    #[test]
    fn ordering_counts() {
        let counts: Vec<usize> = (1..=5).map(|n| enumerate_orderings(n).len()).collect();
        assert_eq!(counts, vec![1, 3, 13, 75, 541]);
    }

    #[test]
    fn orderings_are_distinct() {
        let all = enumerate_orderings(4);
        let set: BTreeSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
    }

    #[test]
    fn psi_breaks_ties_by_index() {
        let o = Ordering { blocks: vec![vec![2], vec![0, 1]] };
        assert_eq!(o.psi(), vec![2, 0, 1]);
        let back = Ordering::from_invariant(&o.invariant(3)).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn elaborate_empty_point() {
        let mut sys = Mcs::new(vec!["a".into(), "b".into(), "c".into()]);
        sys.add_point("f", Invariant::top(3));
        let (el, map) = fully_elaborate(&sys);
        assert_eq!(el.points.len(), 13);
        assert_eq!(map.points.len(), 13);
    }

    #[test]
    fn stabilize_splits_on_target_relation() {
        let mut sys = Mcs::new(vec!["a".into(), "b".into()]);
        sys.add_point("f", Invariant::top(2));
        sys.add_edge(
            "g",
            Mc::new(2, 0, 0, &[Atom::new(s(0), Relation::Gt, s(1)), Atom::new(t(0), Relation::Lt, t(1))]),
        );
        assert!(!is_stable(&sys));
        let (st, _) = stabilize(&sys);
        assert!(is_stable(&st));
        assert!(st.points.len() > 1);
    }

    #[test]
    fn partial_elaboration_trichotomy() {
        let mut sys = Mcs::new(vec!["a".into(), "b".into()]);
        sys.add_point("f", Invariant::top(2));
        sys.add_edge(
            "id",
            Mc::new(2, 0, 0, &[Atom::new(s(0), Relation::Eq, t(0)), Atom::new(s(1), Relation::Eq, t(1))]),
        );
        let cases = trichotomy(&Invariant::top(2), 0, 1);
        let (out, _) = partial_elaborate(&sys, 0, &cases).unwrap();
        assert_eq!(out.points.len(), 3);
        assert_eq!(out.edges.len(), 3);
        assert!(out.edges.iter().all(|e| e.mc.is_cyclic()));
        assert_eq!(
            partial_elaborate(&sys, 0, &cases[..2]),
            Err(TransformError::CasesIncomplete)
        );
    }

    #[test]
    fn isolated_point_removed() {
        let mut sys = Mcs::new(vec!["a".into()]);
        sys.add_point("f", Invariant::top(1));
        sys.add_point("g", Invariant::top(1));
        sys.add_edge("l", Mc::new(1, 0, 0, &[]));
        let (r, _) = restrict_reachable(&sys, 0).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(restrict_reachable(&sys, 5).is_err());
    }
}
