//! Monotonicity constraints as closed weighted digraphs.
//!
//! An MC over `n` variables has `2n` nodes: sources `0..n` and primed
//! targets `n..2n`. Entry `(u, v)` of the relation matrix records the
//! strongest entailed relation `u >= v` or `u > v`. Every [`Mc`] value is
//! kept consequence-closed, or is the distinguished unsatisfiable value.

use std::fmt;

use thiserror::Error;

/// No entailed relation.
pub(crate) const NO: u8 = 0;
/// Non-strict arc, weight 0.
pub(crate) const GE: u8 = 1;
/// Strict arc, weight -1.
pub(crate) const GT: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum McError {
    #[error("cannot compose: target point {0} differs from source point {1}")]
    EndpointMismatch(usize, usize),
    #[error("multipath is empty")]
    EmptyMultipath,
    #[error("edge index {0} out of range")]
    UnknownEdge(usize),
    #[error("constraint arity {0} does not match {1}")]
    Arity(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Source,
    Target,
}

/// A variable occurrence: `x_i` or `x_i'` (0-based index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarNode {
    pub index: usize,
    pub side: Side,
}

impl VarNode {
    pub fn src(index: usize) -> Self {
        VarNode { index, side: Side::Source }
    }

    pub fn tgt(index: usize) -> Self {
        VarNode { index, side: Side::Target }
    }

    /// Position among the `2n` nodes of an MC.
    pub fn slot(self, n: usize) -> usize {
        match self.side {
            Side::Source => self.index,
            Side::Target => n + self.index,
        }
    }

    pub fn from_slot(slot: usize, n: usize) -> Self {
        if slot < n {
            VarNode::src(slot)
        } else {
            VarNode::tgt(slot - n)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }

    pub fn flip(self) -> Relation {
        match self {
            Relation::Lt => Relation::Gt,
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ge => Relation::Le,
            Relation::Gt => Relation::Lt,
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Relation::Lt => a < b,
            Relation::Le => a <= b,
            Relation::Eq => a == b,
            Relation::Ge => a >= b,
            Relation::Gt => a > b,
        }
    }
}

/// An order relation between two nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub lhs: VarNode,
    pub rel: Relation,
    pub rhs: VarNode,
}

impl Atom {
    pub fn new(lhs: VarNode, rel: Relation, rhs: VarNode) -> Self {
        Atom { lhs, rel, rhs }
    }

    /// Arcs `(from, to, strength)` encoding this atom.
    pub fn arcs(&self) -> Vec<(VarNode, VarNode, u8)> {
        let (a, b) = (self.lhs, self.rhs);
        match self.rel {
            Relation::Gt => vec![(a, b, GT)],
            Relation::Ge => vec![(a, b, GE)],
            Relation::Eq => vec![(a, b, GE), (b, a, GE)],
            Relation::Le => vec![(b, a, GE)],
            Relation::Lt => vec![(b, a, GT)],
        }
    }
}

/// An explicit arc of a closed MC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arc {
    pub from: VarNode,
    pub to: VarNode,
    pub strict: bool,
    pub no_change: bool,
}

#[inline]
pub(crate) fn chain(a: u8, b: u8) -> u8 {
    if a == NO || b == NO {
        NO
    } else {
        a.max(b)
    }
}

/// Closes a `k x k` relation matrix in place. Returns `false` when a
/// strict cycle exists. The diagonal is cleared on success.
pub(crate) fn saturate(m: &mut [u8], k: usize) -> bool {
    debug_assert_eq!(m.len(), k * k);
    for via in 0..k {
        for u in 0..k {
            let uv = m[u * k + via];
            if uv == NO {
                continue;
            }
            for w in 0..k {
                let c = chain(uv, m[via * k + w]);
                if c > m[u * k + w] {
                    m[u * k + w] = c;
                }
            }
        }
    }
    if (0..k).any(|v| m[v * k + v] == GT) {
        return false;
    }
    for v in 0..k {
        m[v * k + v] = NO;
    }
    true
}

/// A closed, satisfiable conjunction of source-side atoms for a flow point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Invariant {
    n: usize,
    m: Vec<u8>,
}

impl Invariant {
    pub fn top(n: usize) -> Self {
        Invariant { n, m: vec![NO; n * n] }
    }

    /// Closes the given atoms; `None` if they are contradictory. Atoms must
    /// be over source nodes.
    pub fn new(n: usize, atoms: &[Atom]) -> Option<Self> {
        let mut m = vec![NO; n * n];
        for atom in atoms {
            for (a, b, s) in atom.arcs() {
                debug_assert!(a.side == Side::Source && b.side == Side::Source);
                let e = &mut m[a.index * n + b.index];
                *e = (*e).max(s);
            }
        }
        saturate(&mut m, n).then_some(Invariant { n, m })
    }

    pub fn from_matrix(n: usize, mut m: Vec<u8>) -> Option<Self> {
        saturate(&mut m, n).then_some(Invariant { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Strength of `x_i >= x_j` (0 none, 1 non-strict, 2 strict).
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.m[i * self.n + j]
    }

    pub fn matrix(&self) -> &[u8] {
        &self.m
    }

    pub fn entails(&self, i: usize, rel: Relation, j: usize) -> bool {
        entails_in(self.get(i, j), self.get(j, i), rel)
    }

    /// Conjoins extra atoms; `None` if the result is unsatisfiable.
    pub fn with_atoms(&self, atoms: &[Atom]) -> Option<Self> {
        let mut m = self.m.clone();
        for atom in atoms {
            for (a, b, s) in atom.arcs() {
                let e = &mut m[a.index * self.n + b.index];
                *e = (*e).max(s);
            }
        }
        Invariant::from_matrix(self.n, m)
    }

    /// Whether every relation of `other` is entailed here.
    pub fn implies(&self, other: &Invariant) -> bool {
        self.m.iter().zip(&other.m).all(|(a, b)| a >= b)
    }

    /// Atoms describing this invariant, one per related pair (`i < j`).
    pub fn atoms(&self) -> Vec<Atom> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if let Some(rel) = pair_relation(self.get(i, j), self.get(j, i)) {
                    out.push(Atom::new(VarNode::src(i), rel, VarNode::src(j)));
                }
            }
        }
        out
    }

    pub fn holds(&self, values: &[i64]) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (0..n).all(|j| match self.get(i, j) {
                GT => values[i] > values[j],
                GE => values[i] >= values[j],
                _ => true,
            })
        })
    }
}

pub(crate) fn entails_in(uv: u8, vu: u8, rel: Relation) -> bool {
    match rel {
        Relation::Gt => uv == GT,
        Relation::Ge => uv >= GE,
        Relation::Eq => uv >= GE && vu >= GE,
        Relation::Le => vu >= GE,
        Relation::Lt => vu == GT,
    }
}

/// The single atom summarising the relations `u ? v` given both arc strengths.
pub(crate) fn pair_relation(uv: u8, vu: u8) -> Option<Relation> {
    match (uv, vu) {
        (GT, _) => Some(Relation::Gt),
        (_, GT) => Some(Relation::Lt),
        (GE, GE) => Some(Relation::Eq),
        (GE, _) => Some(Relation::Ge),
        (_, GE) => Some(Relation::Le),
        _ => None,
    }
}

/// A closed monotonicity constraint between two flow points, or `⊥`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mc {
    n: usize,
    src: usize,
    tgt: usize,
    m: Option<Vec<u8>>,
}

impl fmt::Debug for Mc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mc({}->{}: ", self.src, self.tgt)?;
        if self.is_bottom() {
            return write!(f, "⊥)");
        }
        let names: Vec<String> = (0..self.n).map(|i| format!("x{}", i + 1)).collect();
        let atoms: Vec<String> = self.atoms().iter().map(|a| render_atom(a, &names)).collect();
        write!(f, "{})", atoms.join(", "))
    }
}

pub fn render_node(node: VarNode, names: &[String]) -> String {
    match node.side {
        Side::Source => names[node.index].clone(),
        Side::Target => format!("{}'", names[node.index]),
    }
}

pub fn render_atom(atom: &Atom, names: &[String]) -> String {
    format!(
        "{} {} {}",
        render_node(atom.lhs, names),
        atom.rel.symbol(),
        render_node(atom.rhs, names)
    )
}

impl Mc {
    /// Closure of the given atoms with no endpoint invariants.
    pub fn new(n: usize, src: usize, tgt: usize, atoms: &[Atom]) -> Self {
        Self::from_arcs(n, src, tgt, atoms.iter().flat_map(|a| a.arcs()))
    }

    pub fn from_arcs(
        n: usize,
        src: usize,
        tgt: usize,
        arcs: impl IntoIterator<Item = (VarNode, VarNode, u8)>,
    ) -> Self {
        let k = 2 * n;
        let mut m = vec![NO; k * k];
        for (a, b, s) in arcs {
            let e = &mut m[a.slot(n) * k + b.slot(n)];
            *e = (*e).max(s);
        }
        Self::from_matrix(n, src, tgt, m)
    }

    /// Closes a raw `2n x 2n` matrix.
    pub fn from_matrix(n: usize, src: usize, tgt: usize, mut m: Vec<u8>) -> Self {
        let ok = saturate(&mut m, 2 * n);
        Mc { n, src, tgt, m: ok.then_some(m) }
    }

    pub fn bottom(n: usize, src: usize, tgt: usize) -> Self {
        Mc { n, src, tgt, m: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn src(&self) -> usize {
        self.src
    }

    pub fn tgt(&self) -> usize {
        self.tgt
    }

    pub fn is_cyclic(&self) -> bool {
        self.src == self.tgt
    }

    pub fn is_bottom(&self) -> bool {
        self.m.is_none()
    }

    pub fn is_satisfiable(&self) -> bool {
        self.m.is_some()
    }

    pub(crate) fn matrix(&self) -> Option<&[u8]> {
        self.m.as_deref()
    }

    /// Arc strength between two slots; `⊥` reports strict everywhere.
    pub fn strength(&self, u: VarNode, v: VarNode) -> u8 {
        match &self.m {
            None => GT,
            Some(m) => m[u.slot(self.n) * 2 * self.n + v.slot(self.n)],
        }
    }

    pub(crate) fn slot_strength(&self, u: usize, v: usize) -> u8 {
        match &self.m {
            None => GT,
            Some(m) => m[u * 2 * self.n + v],
        }
    }

    pub fn entails(&self, atom: &Atom) -> bool {
        if self.is_bottom() {
            return true;
        }
        if atom.lhs == atom.rhs {
            return matches!(atom.rel, Relation::Ge | Relation::Le | Relation::Eq);
        }
        entails_in(
            self.strength(atom.lhs, atom.rhs),
            self.strength(atom.rhs, atom.lhs),
            atom.rel,
        )
    }

    /// Every arc of the closed graph. Empty for `⊥`.
    pub fn arcs(&self) -> Vec<Arc> {
        let Some(m) = &self.m else { return Vec::new() };
        let k = 2 * self.n;
        let mut out = Vec::new();
        for u in 0..k {
            for v in 0..k {
                let s = m[u * k + v];
                if s != NO {
                    out.push(Arc {
                        from: VarNode::from_slot(u, self.n),
                        to: VarNode::from_slot(v, self.n),
                        strict: s == GT,
                        no_change: s == GE && m[v * k + u] == GE,
                    });
                }
            }
        }
        out
    }

    /// One atom per related node pair, in slot order.
    pub fn atoms(&self) -> Vec<Atom> {
        let Some(m) = &self.m else { return Vec::new() };
        let k = 2 * self.n;
        let mut out = Vec::new();
        for u in 0..k {
            for v in u + 1..k {
                if let Some(rel) = pair_relation(m[u * k + v], m[v * k + u]) {
                    out.push(Atom::new(
                        VarNode::from_slot(u, self.n),
                        rel,
                        VarNode::from_slot(v, self.n),
                    ));
                }
            }
        }
        out
    }

    /// Conjoins the endpoint invariants and re-closes.
    pub fn close(&self, src_inv: &Invariant, tgt_inv: &Invariant) -> Mc {
        let Some(m) = &self.m else { return self.clone() };
        let n = self.n;
        let k = 2 * n;
        let mut m = m.clone();
        for i in 0..n {
            for j in 0..n {
                let s = src_inv.get(i, j);
                if s > m[i * k + j] {
                    m[i * k + j] = s;
                }
                let t = tgt_inv.get(i, j);
                if t > m[(n + i) * k + n + j] {
                    m[(n + i) * k + n + j] = t;
                }
            }
        }
        Mc::from_matrix(n, self.src, self.tgt, m)
    }

    /// Conjoins extra atoms and re-closes.
    pub fn with_atoms(&self, atoms: &[Atom]) -> Mc {
        let Some(m) = &self.m else { return self.clone() };
        let n = self.n;
        let k = 2 * n;
        let mut m = m.clone();
        for atom in atoms {
            for (a, b, s) in atom.arcs() {
                let e = &mut m[a.slot(n) * k + b.slot(n)];
                *e = (*e).max(s);
            }
        }
        Mc::from_matrix(n, self.src, self.tgt, m)
    }

    /// Same constraint with new endpoint labels.
    pub fn relabel(&self, src: usize, tgt: usize) -> Mc {
        Mc { n: self.n, src, tgt, m: self.m.clone() }
    }

    /// Renames variables: source variable `i` becomes `src_map[i]`, target
    /// variable `i` becomes `tgt_map[i]`.
    pub fn rename(&self, src_map: &[usize], tgt_map: &[usize]) -> Mc {
        let Some(m) = &self.m else { return self.clone() };
        let n = self.n;
        let k = 2 * n;
        let place = |slot: usize| if slot < n { src_map[slot] } else { n + tgt_map[slot - n] };
        let mut out = vec![NO; k * k];
        for u in 0..k {
            for v in 0..k {
                out[place(u) * k + place(v)] = m[u * k + v];
            }
        }
        Mc { n, src: self.src, tgt: self.tgt, m: Some(out) }
    }

    /// Relations among source nodes only.
    pub fn source_projection(&self) -> Option<Invariant> {
        self.project(0)
    }

    /// Relations among target nodes, expressed over unprimed indices.
    pub fn target_projection(&self) -> Option<Invariant> {
        self.project(self.n)
    }

    fn project(&self, offset: usize) -> Option<Invariant> {
        let m = self.m.as_ref()?;
        let n = self.n;
        let k = 2 * n;
        let mut out = vec![NO; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(offset + i) * k + offset + j];
            }
        }
        Some(Invariant { n, m: out })
    }

    /// Relational composition `self ; other`, closed.
    pub fn compose(&self, other: &Mc) -> Result<Mc, McError> {
        if self.n != other.n {
            return Err(McError::Arity(self.n, other.n));
        }
        if self.tgt != other.src {
            return Err(McError::EndpointMismatch(self.tgt, other.src));
        }
        let n = self.n;
        let (Some(a), Some(b)) = (&self.m, &other.m) else {
            return Ok(Mc::bottom(n, self.src, other.tgt));
        };
        // Layers: 0 = source, 1 = middle, 2 = final target.
        let k = 3 * n;
        let two = 2 * n;
        let mut m = vec![NO; k * k];
        for u in 0..two {
            for v in 0..two {
                m[u * k + v] = a[u * two + v];
            }
        }
        for u in 0..two {
            for v in 0..two {
                let (pu, pv) = (n + u, n + v);
                let s = b[u * two + v];
                if s > m[pu * k + pv] {
                    m[pu * k + pv] = s;
                }
            }
        }
        if !saturate(&mut m, k) {
            return Ok(Mc::bottom(n, self.src, other.tgt));
        }
        let keep = |slot: usize| if slot < n { slot } else { slot + n };
        let mut out = vec![NO; two * two];
        for u in 0..two {
            for v in 0..two {
                out[u * two + v] = m[keep(u) * k + keep(v)];
            }
        }
        Ok(Mc { n, src: self.src, tgt: other.tgt, m: Some(out) })
    }

    /// Sorted arc encoding; `⊥` has a reserved key.
    pub fn canonical_key(&self) -> Vec<u8> {
        match &self.m {
            None => vec![0xff],
            Some(m) => {
                let mut key = Vec::with_capacity(m.len() / 4 + 1);
                key.push(0);
                for chunk in m.chunks(4) {
                    let mut byte = 0u8;
                    for (i, s) in chunk.iter().enumerate() {
                        byte |= s << (2 * i);
                    }
                    key.push(byte);
                }
                key
            }
        }
    }

    /// Whether `self` entails every relation of `other` (same endpoints).
    pub fn at_least_as_strong(&self, other: &Mc) -> bool {
        match (&self.m, &other.m) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a.iter().zip(b).all(|(x, y)| x >= y),
        }
    }

    /// Checks the constraint on concrete source and target values.
    pub fn holds(&self, s: &[i64], t: &[i64]) -> bool {
        let Some(m) = &self.m else { return false };
        let n = self.n;
        let k = 2 * n;
        let val = |slot: usize| if slot < n { s[slot] } else { t[slot - n] };
        for u in 0..k {
            for v in 0..k {
                match m[u * k + v] {
                    GT if val(u) <= val(v) => return false,
                    GE if val(u) < val(v) => return false,
                    _ => {}
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    pub name: String,
    pub inv: Invariant,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub mc: Mc,
}

/// A monotonicity constraint transition system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mcs {
    pub vars: Vec<String>,
    pub points: Vec<Point>,
    pub edges: Vec<Edge>,
    pub root: Option<usize>,
}

impl Mcs {
    pub fn new(vars: Vec<String>) -> Self {
        Mcs { vars, points: Vec::new(), edges: Vec::new(), root: None }
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn add_point(&mut self, name: impl Into<String>, inv: Invariant) -> usize {
        self.points.push(Point { name: name.into(), inv });
        self.points.len() - 1
    }

    /// Adds an edge, closing it with the endpoint invariants.
    pub fn add_edge(&mut self, name: impl Into<String>, mc: Mc) -> usize {
        let closed = mc.close(&self.points[mc.src()].inv, &self.points[mc.tgt()].inv);
        self.edges.push(Edge { name: name.into(), mc: closed });
        self.edges.len() - 1
    }

    pub fn point_index(&self, name: &str) -> Option<usize> {
        self.points.iter().position(|p| p.name == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    /// Outgoing edge indices per point.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.points.len()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.mc.src()].push(k);
        }
        out
    }
}

/// A sequence of edge indices forming a CFG path.
pub type Multipath = Vec<usize>;

/// Left fold of composition over a multipath.
pub fn collapse(mp: &[usize], sys: &Mcs) -> Result<Mc, McError> {
    let (&first, rest) = mp.split_first().ok_or(McError::EmptyMultipath)?;
    let mut acc = sys.edges.get(first).ok_or(McError::UnknownEdge(first))?.mc.clone();
    for &e in rest {
        let next = &sys.edges.get(e).ok_or(McError::UnknownEdge(e))?.mc;
        acc = acc.compose(next)?;
    }
    Ok(acc)
}

/// Values of the variables at each position of a multipath.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub values: Vec<Vec<i64>>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize, i: usize) -> i64 {
        self.values[t][i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: usize) -> VarNode {
        VarNode::src(i)
    }
    fn t(i: usize) -> VarNode {
        VarNode::tgt(i)
    }
    fn a(l: VarNode, r: Relation, h: VarNode) -> Atom {
        Atom::new(l, r, h)
    }

    #[test]
    fn strict_cycle_is_bottom() {
        let g = Mc::new(2, 0, 0, &[a(s(0), Relation::Gt, s(1)), a(s(1), Relation::Gt, s(0))]);
        assert!(g.is_bottom());
        assert!(!g.is_satisfiable());
    }

    #[test]
    fn equality_plus_strict_is_bottom() {
        let g = Mc::new(2, 0, 0, &[a(s(0), Relation::Eq, s(1)), a(s(0), Relation::Gt, s(1))]);
        assert!(g.is_bottom());
    }

    #[test]
    fn transitivity_added() {
        let g = Mc::new(3, 0, 0, &[a(s(0), Relation::Ge, s(1)), a(s(1), Relation::Ge, s(2))]);
        assert!(g.entails(&a(s(0), Relation::Ge, s(2))));
        assert!(!g.entails(&a(s(0), Relation::Gt, s(2))));
    }

    #[test]
    fn entailment_basics() {
        let g = Mc::new(2, 0, 0, &[a(s(0), Relation::Gt, t(1))]);
        assert!(g.entails(&a(s(0), Relation::Ge, t(1))));
        let h = Mc::new(2, 0, 0, &[a(s(0), Relation::Ge, t(1))]);
        assert!(!h.entails(&a(s(0), Relation::Gt, t(1))));
        let b = Mc::bottom(2, 0, 0);
        assert!(b.entails(&a(s(0), Relation::Gt, s(0))));
    }

    #[test]
    fn compose_strictness() {
        let g = Mc::new(1, 0, 0, &[a(s(0), Relation::Gt, t(0))]);
        let h = Mc::new(1, 0, 0, &[a(s(0), Relation::Ge, t(0))]);
        let c = g.compose(&h).unwrap();
        assert_eq!(c.canonical_key(), g.canonical_key());
        let c3 = collapse(&[0, 0, 0], &{
            let mut sys = Mcs::new(vec!["x".into()]);
            sys.add_point("f", Invariant::top(1));
            sys.add_edge("g", g.clone());
            sys
        })
        .unwrap();
        assert_eq!(c3, g);
    }

    #[test]
    fn compose_endpoint_mismatch() {
        let g = Mc::new(1, 0, 1, &[]);
        let h = Mc::new(1, 0, 0, &[]);
        assert_eq!(g.compose(&h), Err(McError::EndpointMismatch(1, 0)));
    }

    #[test]
    fn keys_distinguish_strictness() {
        let g = Mc::new(2, 0, 0, &[a(s(0), Relation::Gt, t(1))]);
        let h = Mc::new(2, 0, 0, &[a(s(0), Relation::Ge, t(1))]);
        assert_ne!(g.canonical_key(), h.canonical_key());
        let b = Mc::bottom(2, 0, 0);
        assert_eq!(b.canonical_key(), vec![0xff]);
        let g2 = Mc::new(2, 0, 0, &[a(t(1), Relation::Lt, s(0))]);
        assert_eq!(g.canonical_key(), g2.canonical_key());
    }

    #[test]
    fn no_change_flags_derived() {
        let g = Mc::new(1, 0, 0, &[a(s(0), Relation::Eq, t(0))]);
        let arcs = g.arcs();
        assert_eq!(arcs.len(), 2);
        assert!(arcs.iter().all(|a| a.no_change && !a.strict));
    }

    #[test]
    fn invariant_closes_mc() {
        let inv = Invariant::new(2, &[a(s(0), Relation::Gt, s(1))]).unwrap();
        let g = Mc::new(2, 0, 0, &[a(s(0), Relation::Eq, t(0)), a(s(1), Relation::Eq, t(1))]);
        let c = g.close(&inv, &inv);
        assert!(c.entails(&a(t(0), Relation::Gt, t(1))));
        assert!(c.entails(&a(s(0), Relation::Gt, t(1))));
    }
}
