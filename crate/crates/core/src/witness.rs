//! Non-termination witnesses: concrete run prefixes for failing cycles.

use thiserror::Error;

use crate::mc::{collapse, Assignment, Mc, Mcs, GE, GT, NO};
use crate::termination::{
    closure_set, idempotent_power_with_exponent, is_idempotent, ltts, prepared,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WitnessError {
    #[error("constraint must be cyclic, satisfiable and idempotent")]
    BadConstraint,
    #[error("constraint passes the local test")]
    PassesTest,
    #[error("zero line could not be related to every node")]
    ZeroLine,
    #[error("inner assignment does not satisfy the collapsed cycle")]
    InnerMismatch,
    #[error("cycle is empty or does not close")]
    BadCycle,
    #[error("lifted assignment disagrees with the boundary at position {0}")]
    Boundary(usize),
    #[error("unrolled constraints contain a strict cycle")]
    StrictCycle,
}

/// A cycle of the input system and a run prefix following it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub cycle: Vec<usize>,
    pub prefix: Vec<Vec<i64>>,
}

fn add(m: &mut [u8], k: usize, u: usize, v: usize, s: u8) {
    let e = &mut m[u * k + v];
    *e = (*e).max(s);
}

/// Extends `g` with a zero-line variable: variables at or above some
/// increasing variable lie strictly above it, all others strictly below.
fn zero_line(g: &Mc) -> Result<Mc, WitnessError> {
    let n = g.n();
    let w = n + 1;
    let k = 2 * w;
    let src = |i: usize| i;
    let tgt = |i: usize| w + i;
    let mut m = vec![NO; k * k];
    let gm = g.matrix().ok_or(WitnessError::BadConstraint)?;
    for u in 0..2 * n {
        for v in 0..2 * n {
            let pu = if u < n { src(u) } else { tgt(u - n) };
            let pv = if v < n { src(v) } else { tgt(v - n) };
            m[pu * k + pv] = gm[u * 2 * n + v];
        }
    }
    let z = n;
    add(&mut m, k, src(z), tgt(z), GE);
    add(&mut m, k, tgt(z), src(z), GE);
    let up: Vec<usize> = (0..n).filter(|&j| g.slot_strength(n + j, j) == GT).collect();
    let at_least = |a: usize, b: usize| a == b || g.slot_strength(a, b) >= GE;
    for i in 0..n {
        let above = up.iter().any(|&j| [i, n + i].iter().any(|&a| [j, n + j].iter().any(|&b| at_least(a, b))));
        for (x, y) in [(src(i), src(z)), (tgt(i), tgt(z))] {
            if above {
                add(&mut m, k, x, y, GT);
            } else {
                add(&mut m, k, y, x, GT);
            }
        }
    }
    let hat = Mc::from_matrix(w, g.src(), g.tgt(), m);
    if hat.is_bottom() {
        return Err(WitnessError::ZeroLine);
    }
    Ok(hat)
}

/// Longest strict-arc counts along arcs `u -> v` towards `targets`.
fn longest(
    nodes: usize,
    arcs: &[(usize, usize, u8)],
    targets: &[usize],
    reverse: bool,
) -> Result<Vec<Option<i64>>, WitnessError> {
    let mut d: Vec<Option<i64>> = vec![None; nodes];
    for &t in targets {
        d[t] = Some(0);
    }
    for _ in 0..=nodes {
        let mut changed = false;
        for &(u, v, s) in arcs {
            let (from, to) = if reverse { (u, v) } else { (v, u) };
            if let Some(dv) = d[from] {
                let cand = dv + i64::from(s == GT);
                if d[to].is_none_or(|x| cand > x) {
                    d[to] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(d);
        }
    }
    Err(WitnessError::StrictCycle)
}

/// Unrolled arcs of `copies` consecutive MCs over `w` variables per layer.
fn unrolled(mcs: &[&Mc], w: usize) -> Vec<(usize, usize, u8)> {
    let mut arcs = Vec::new();
    for (t, g) in mcs.iter().enumerate() {
        let Some(m) = g.matrix() else { continue };
        let k = 2 * w;
        for u in 0..k {
            for v in 0..k {
                let s = m[u * k + v];
                if s != NO {
                    arcs.push((t * w + u, t * w + v, s));
                }
            }
        }
    }
    arcs
}

/// A run prefix of `(g)^periods` for an idempotent `g` that fails the
/// stable local test: `periods + 1` states.
pub fn witness_assignment(g: &Mc, periods: usize) -> Result<Assignment, WitnessError> {
    if !g.is_cyclic() || g.is_bottom() || !is_idempotent(g) {
        return Err(WitnessError::BadConstraint);
    }
    if ltts(g) {
        return Err(WitnessError::PassesTest);
    }
    let hat = zero_line(g)?;
    let n = g.n();
    let w = n + 1;
    let copies: Vec<&Mc> = std::iter::repeat_n(&hat, periods).collect();
    let arcs = unrolled(&copies, w);
    let nodes = (periods + 1) * w;
    let zeros: Vec<usize> = (0..=periods).map(|t| t * w + n).collect();
    let below = longest(nodes, &arcs, &zeros, false)?;
    let above = longest(nodes, &arcs, &zeros, true)?;
    let mut values = Vec::with_capacity(periods + 1);
    for t in 0..=periods {
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            let v = t * w + i;
            let val = match (below[v], above[v]) {
                (Some(d), _) => d,
                (None, Some(d)) => -d,
                (None, None) => return Err(WitnessError::ZeroLine),
            };
            row.push(val);
        }
        values.push(row);
    }
    Ok(Assignment { values })
}

/// Lifts an assignment of `(collapse cycle)^periods` to the unrolled
/// multipath `(cycle)^periods`, keeping scaled boundary values.
pub fn witness_extend(
    cycle: &[usize],
    sys: &Mcs,
    inner: &Assignment,
    periods: usize,
) -> Result<Assignment, WitnessError> {
    let g = collapse(cycle, sys).map_err(|_| WitnessError::BadCycle)?;
    if !g.is_cyclic() || inner.len() != periods + 1 {
        return Err(WitnessError::BadCycle);
    }
    for p in 0..periods {
        if !g.holds(&inner.values[p], &inner.values[p + 1]) {
            return Err(WitnessError::InnerMismatch);
        }
    }
    let n = sys.n();
    let l = cycle.len();
    let scale = (n.max(1) * (l + 1)) as i64;
    let mut values = vec![vec![0i64; n]; periods * l + 1];
    for (p, row) in inner.values.iter().enumerate() {
        for (v, x) in values[p * l].iter_mut().zip(row) {
            *v = scale * x;
        }
    }
    let copy: Vec<&Mc> = cycle.iter().map(|&e| &sys.edges[e].mc).collect();
    let arcs = unrolled(&copy, n);
    let nodes = (l + 1) * n;
    for p in 0..periods {
        let boundary = |v: usize| v < n || v >= l * n;
        let first = values[p * l].clone();
        let last = values[(p + 1) * l].clone();
        let sigma = |v: usize| if v < n { first[v] } else { last[v - l * n] };
        let mu = (0..nodes).filter(|&v| boundary(v)).map(sigma).max().unwrap_or(0);
        // Bellman-Ford from the auxiliary node: d(v) <= d(u) + w for arc u -> v.
        let mut d: Vec<i64> = (0..nodes)
            .map(|v| if boundary(v) { sigma(v) } else { mu + scale })
            .collect();
        let mut settled = false;
        for _ in 0..=nodes {
            let mut changed = false;
            for &(u, v, s) in &arcs {
                let cand = d[u] - i64::from(s == GT);
                if cand < d[v] {
                    d[v] = cand;
                    changed = true;
                }
            }
            if !changed {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(WitnessError::StrictCycle);
        }
        for v in 0..nodes {
            if boundary(v) && d[v] != sigma(v) {
                return Err(WitnessError::Boundary(p * l + v / n));
            }
            values[p * l + v / n][v % n] = d[v];
        }
    }
    Ok(Assignment { values })
}

/// Builds a verified run prefix of `len` states for a non-terminating
/// system, or `None` when the system terminates.
pub fn find_witness(sys: &Mcs, root: Option<usize>, len: usize) -> Option<Witness> {
    let (st, map) = prepared(sys, true, root);
    let clos = closure_set(&st);
    let mut candidates: Vec<(Mc, Vec<usize>)> = Vec::new();
    for m in clos.cyclic() {
        if ltts(&m.mc) {
            continue;
        }
        let (h, k) = idempotent_power_with_exponent(&m.mc);
        if !h.is_bottom() && !ltts(&h) {
            candidates.push((h, m.path.repeat(k)));
            break;
        }
    }
    if candidates.is_empty() {
        for m in clos.cyclic() {
            if is_idempotent(&m.mc) && !ltts(&m.mc) {
                candidates.push((m.mc.clone(), m.path.clone()));
                break;
            }
        }
    }
    let (h, path) = candidates.into_iter().next()?;
    let l = path.len();
    let steps = len.saturating_sub(1);
    let periods = steps.div_ceil(l).max(1);
    let inner = witness_assignment(&h, periods).ok()?;
    let full = witness_extend(&path, &st, &inner, periods).ok()?;
    let mut prefix = full.values;
    prefix.truncate(len);
    let cycle: Vec<usize> = path.iter().map(|&e| map.edges[e]).collect();
    Some(Witness { cycle, prefix })
}

/// Edge sequence followed by a prefix of `states` states along `cycle`.
pub fn unroll(cycle: &[usize], states: usize) -> Vec<usize> {
    if cycle.is_empty() {
        return Vec::new();
    }
    (0..states.saturating_sub(1)).map(|t| cycle[t % cycle.len()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{Atom, Invariant, Relation, VarNode};

    fn one(rel: Relation) -> Mcs {
        let mut sys = Mcs::new(vec!["x".into()]);
        sys.add_point("f", Invariant::top(1));
        sys.add_edge("g", Mc::new(1, 0, 0, &[Atom::new(VarNode::src(0), rel, VarNode::tgt(0))]));
        sys
    }

    fn check(sys: &Mcs, path: &[usize], a: &[Vec<i64>]) -> bool {
        path.iter().enumerate().all(|(t, &e)| sys.edges[e].mc.holds(&a[t], &a[t + 1]))
    }

    #[test]
    fn constant_run_for_non_strict_loop() {
        let sys = one(Relation::Ge);
        let a = witness_assignment(&sys.edges[0].mc, 100).unwrap();
        assert_eq!(a.len(), 101);
        assert!(a.values.iter().all(|r| r[0] == a.values[0][0]));
        assert!(check(&sys, &vec![0; 100], &a.values));
    }

    #[test]
    fn growing_run() {
        let sys = one(Relation::Lt);
        let a = witness_assignment(&sys.edges[0].mc, 50).unwrap();
        assert!(a.values.windows(2).all(|w| w[0][0] < w[1][0]));
    }

    #[test]
    fn passing_constraint_rejected() {
        let g = Mc::new(
            2,
            0,
            0,
            &[
                Atom::new(VarNode::src(0), Relation::Le, VarNode::src(1)),
                Atom::new(VarNode::src(0), Relation::Eq, VarNode::tgt(0)),
                Atom::new(VarNode::src(1), Relation::Gt, VarNode::tgt(1)),
            ],
        );
        let g = crate::termination::idempotent_power(&g);
        assert_eq!(witness_assignment(&g, 3), Err(WitnessError::PassesTest));
    }

    #[test]
    fn two_edge_cycle_lifted() {
        let mut sys = Mcs::new(vec!["x".into()]);
        sys.add_point("f", Invariant::top(1));
        sys.add_point("g", Invariant::top(1));
        let ge = [Atom::new(VarNode::src(0), Relation::Ge, VarNode::tgt(0))];
        sys.add_edge("a", Mc::new(1, 0, 1, &ge));
        sys.add_edge("b", Mc::new(1, 1, 0, &ge));
        let w = find_witness(&sys, None, 20).unwrap();
        assert_eq!(w.prefix.len(), 20);
        assert!(check(&sys, &unroll(&w.cycle, 20), &w.prefix));
    }
}
