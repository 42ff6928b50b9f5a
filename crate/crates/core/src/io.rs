//! The `.mcs` text format and analysis reports.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::mc::{render_atom, Atom, Invariant, Mc, Mcs, Relation, VarNode};
use crate::ranking::{RankingFunction, Slot};
use crate::termination::Verdict;
use crate::transform::PointMapping;
use crate::witness::Witness;

/// Line and column, both starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{pos}: {kind}")]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    BadChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("primed variable `{0}'` in an invariant")]
    PrimedInInvariant(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("point `{0}` declared twice")]
    DuplicatePoint(String),
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
    #[error("root declared twice")]
    DuplicateRoot,
    #[error("variables declared after use")]
    LateVars,
    #[error("invariant of `{0}` is unsatisfiable")]
    UnsatisfiableInvariant(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Prime,
    Rel(Relation),
    LBrace,
    RBrace,
    Comma,
    Arrow,
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Prime => f.write_str("`'`"),
            Tok::Rel(r) => write!(f, "`{}`", r.symbol()),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    bump(&mut chars);
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if !(c.is_ascii_alphanumeric() || c == '_') {
                        break;
                    }
                    s.push(c);
                    bump(&mut chars);
                }
                out.push((Tok::Ident(s), pos));
            }
            '\'' | '{' | '}' | ',' | ';' | '=' => {
                bump(&mut chars);
                let t = match c {
                    '\'' => Tok::Prime,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    _ => Tok::Rel(Relation::Eq),
                };
                out.push((t, pos));
            }
            '<' | '>' => {
                bump(&mut chars);
                let eq = chars.peek() == Some(&'=');
                if eq {
                    bump(&mut chars);
                }
                let rel = match (c, eq) {
                    ('<', false) => Relation::Lt,
                    ('<', true) => Relation::Le,
                    ('>', false) => Relation::Gt,
                    _ => Relation::Ge,
                };
                out.push((Tok::Rel(rel), pos));
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'>') {
                    bump(&mut chars);
                    out.push((Tok::Arrow, pos));
                } else {
                    return Err(ParseError { pos, kind: ParseErrorKind::BadChar('-') });
                }
            }
            other => return Err(ParseError { pos, kind: ParseErrorKind::BadChar(other) }),
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// Where each point and edge was introduced.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SourceMap {
    pub points: Vec<Pos>,
    pub edges: Vec<Pos>,
}

/// A parsed system with source locations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McsDocument {
    pub system: Mcs,
    pub locations: SourceMap,
}

type RawAtom = ((String, bool, Pos), Relation, (String, bool, Pos));

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &'static str) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            kind: ParseErrorKind::Unexpected { expected, found: self.peek().to_string() },
        })
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<(String, Pos), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.pos();
                self.next();
                Ok((s, pos))
            }
            _ => self.fail(expected),
        }
    }

    fn term(&mut self) -> Result<(String, bool, Pos), ParseError> {
        let (name, pos) = self.ident("a variable")?;
        let primed = *self.peek() == Tok::Prime;
        if primed {
            self.next();
        }
        Ok((name, primed, pos))
    }

    fn atoms(&mut self) -> Result<Vec<RawAtom>, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RBrace {
            self.next();
            return Ok(out);
        }
        loop {
            let lhs = self.term()?;
            let rel = match self.peek() {
                Tok::Rel(r) => *r,
                _ => return self.fail("a relation"),
            };
            self.next();
            let rhs = self.term()?;
            out.push((lhs, rel, rhs));
            match self.peek() {
                Tok::Comma => {
                    self.next();
                }
                Tok::RBrace => {
                    self.next();
                    return Ok(out);
                }
                _ => return self.fail("`,` or `}`"),
            }
        }
    }
}

fn is_keyword(t: &Tok, kw: &str) -> bool {
    matches!(t, Tok::Ident(s) if s == kw)
}

/// Parses a system in the `.mcs` format.
pub fn parse_mcs(text: &str) -> Result<McsDocument, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let mut vars: Vec<String> = Vec::new();
    let mut used = false;
    let mut points: Vec<(String, Option<Vec<RawAtom>>, Pos)> = Vec::new();
    let mut edges: Vec<(usize, usize, Vec<RawAtom>, Pos)> = Vec::new();
    let mut root: Option<(String, Pos)> = None;
    let err = |pos: Pos, kind: ParseErrorKind| ParseError { pos, kind };
    let intern = |points: &mut Vec<(String, Option<Vec<RawAtom>>, Pos)>, name: &str, pos: Pos| {
        points.iter().position(|q| q.0 == name).unwrap_or_else(|| {
            points.push((name.to_string(), None, pos));
            points.len() - 1
        })
    };
    loop {
        let start = p.pos();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Semi => {
                p.next();
            }
            t if is_keyword(&t, "vars") => {
                p.next();
                if used {
                    return Err(err(start, ParseErrorKind::LateVars));
                }
                let mut any = false;
                while let Tok::Ident(s) = p.peek().clone() {
                    if ["vars", "point", "edge", "root"].contains(&s.as_str()) {
                        break;
                    }
                    let pos = p.pos();
                    if vars.contains(&s) {
                        return Err(err(pos, ParseErrorKind::DuplicateVariable(s)));
                    }
                    vars.push(s);
                    p.next();
                    any = true;
                }
                if !any {
                    return p.fail("a variable name");
                }
            }
            t if is_keyword(&t, "point") => {
                p.next();
                let (name, pos) = p.ident("a point name")?;
                let inv = if is_keyword(p.peek(), "invariant") {
                    p.next();
                    used = true;
                    Some(p.atoms()?)
                } else {
                    None
                };
                match points.iter_mut().find(|q| q.0 == name) {
                    Some(q) if q.1.is_some() => return Err(err(pos, ParseErrorKind::DuplicatePoint(name))),
                    Some(q) => q.1 = Some(inv.unwrap_or_default()),
                    None => points.push((name, Some(inv.unwrap_or_default()), pos)),
                }
            }
            t if is_keyword(&t, "edge") => {
                p.next();
                let (f, fpos) = p.ident("a point name")?;
                p.expect(Tok::Arrow, "`->`")?;
                let (g, gpos) = p.ident("a point name")?;
                used = true;
                let atoms = p.atoms()?;
                let fi = intern(&mut points, &f, fpos);
                let gi = intern(&mut points, &g, gpos);
                edges.push((fi, gi, atoms, start));
            }
            t if is_keyword(&t, "root") => {
                p.next();
                let (name, pos) = p.ident("a point name")?;
                if root.is_some() {
                    return Err(err(start, ParseErrorKind::DuplicateRoot));
                }
                root = Some((name, pos));
            }
            _ => return p.fail("`vars`, `point`, `edge` or `root`"),
        }
    }
    let var = |name: &str, primed: bool, pos: Pos| -> Result<VarNode, ParseError> {
        let i = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| err(pos, ParseErrorKind::UnknownVariable(name.to_string())))?;
        Ok(if primed { VarNode::tgt(i) } else { VarNode::src(i) })
    };
    let n = vars.len();
    let mut sys = Mcs::new(vars.clone());
    let mut locations = SourceMap::default();
    for (name, raw, pos) in &points {
        let mut atoms = Vec::new();
        for ((a, ap, apos), rel, (b, bp, bpos)) in raw.iter().flatten() {
            for (v, primed, vpos) in [(a, ap, apos), (b, bp, bpos)] {
                if *primed {
                    return Err(err(*vpos, ParseErrorKind::PrimedInInvariant(v.clone())));
                }
            }
            atoms.push(Atom::new(var(a, false, *apos)?, *rel, var(b, false, *bpos)?));
        }
        let inv = Invariant::new(n, &atoms)
            .ok_or_else(|| err(*pos, ParseErrorKind::UnsatisfiableInvariant(name.clone())))?;
        sys.add_point(name.clone(), inv);
        locations.points.push(*pos);
    }
    for (k, (f, g, raw, pos)) in edges.iter().enumerate() {
        let mut atoms = Vec::new();
        for ((a, ap, apos), rel, (b, bp, bpos)) in raw {
            atoms.push(Atom::new(var(a, *ap, *apos)?, *rel, var(b, *bp, *bpos)?));
        }
        sys.add_edge(format!("G{}", k + 1), Mc::new(n, *f, *g, &atoms));
        locations.edges.push(*pos);
    }
    if let Some((name, pos)) = root {
        sys.root = Some(sys.point_index(&name).ok_or_else(|| err(pos, ParseErrorKind::UnknownPoint(name)))?);
    }
    Ok(McsDocument { system: sys, locations })
}

fn push_atoms(out: &mut String, atoms: &[Atom], names: &[String]) {
    let parts: Vec<String> = atoms.iter().map(|a| render_atom(a, names)).collect();
    if parts.is_empty() {
        out.push_str("{ }");
    } else {
        let _ = write!(out, "{{ {} }}", parts.join(", "));
    }
}

fn edge_atoms(mc: &Mc) -> Vec<Atom> {
    if mc.is_bottom() {
        let x = VarNode::src(0);
        return vec![Atom::new(x, Relation::Lt, x)];
    }
    mc.atoms()
}

/// Prints a system in the `.mcs` format; parsing the output yields the
/// same system up to edge names.
pub fn print_mcs(sys: &Mcs) -> String {
    let mut out = String::new();
    if !sys.vars.is_empty() {
        let _ = writeln!(out, "vars {}", sys.vars.join(" "));
    }
    for p in &sys.points {
        let atoms = p.inv.atoms();
        if atoms.is_empty() {
            let _ = writeln!(out, "point {}", p.name);
        } else {
            let _ = write!(out, "point {} invariant ", p.name);
            push_atoms(&mut out, &atoms, &sys.vars);
            out.push('\n');
        }
    }
    for e in &sys.edges {
        let _ = write!(out, "edge {} -> {} ", sys.points[e.mc.src()].name, sys.points[e.mc.tgt()].name);
        push_atoms(&mut out, &edge_atoms(&e.mc), &sys.vars);
        out.push('\n');
    }
    if let Some(r) = sys.root {
        let _ = writeln!(out, "root {}", sys.points[r].name);
    }
    out
}

/// A transformed system with every point's variables put back in the
/// original order, so it can be printed with the original names.
pub fn in_original_order(sys: &Mcs, map: &PointMapping) -> Mcs {
    let n = sys.n();
    let mut out = Mcs::new(sys.vars.clone());
    for (p, point) in sys.points.iter().enumerate() {
        let perm = &map.points[p].perm;
        let atoms: Vec<Atom> = point
            .inv
            .atoms()
            .iter()
            .map(|a| Atom::new(VarNode::src(perm[a.lhs.index]), a.rel, VarNode::src(perm[a.rhs.index])))
            .collect();
        let inv = Invariant::new(n, &atoms).expect("a renamed invariant stays satisfiable");
        out.add_point(point.name.clone(), inv);
    }
    for e in &sys.edges {
        let mc = e.mc.rename(&map.points[e.mc.src()].perm, &map.points[e.mc.tgt()].perm);
        out.add_edge(e.name.clone(), mc);
    }
    out.root = sys.root;
    out
}

#[derive(Serialize)]
struct WitnessJson {
    cycle: Vec<usize>,
    prefix: Vec<Vec<i64>>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum SlotJson {
    Const(u64),
    Var(String),
}

#[derive(Serialize)]
struct CaseJson {
    guard: Vec<String>,
    vector: Vec<SlotJson>,
}

#[derive(Serialize)]
struct PointJson {
    point: String,
    cases: Vec<CaseJson>,
}

#[derive(Serialize)]
struct ReportJson {
    verdict: &'static str,
    algorithm: String,
    rooted: Option<String>,
    witness: Option<WitnessJson>,
    ranking: Option<Vec<PointJson>>,
}

/// Everything a command reports about one system.
pub struct Report<'a> {
    pub system: &'a Mcs,
    pub verdict: &'a Verdict,
    pub witness: Option<&'a Witness>,
    pub ranking: Option<&'a RankingFunction>,
}

impl Report<'_> {
    fn verdict_word(&self) -> &'static str {
        if self.verdict.terminating {
            "terminating"
        } else {
            "nonterminating"
        }
    }

    /// Compact JSON with a fixed field order.
    pub fn to_json(&self) -> String {
        let sys = self.system;
        let ranking = self.ranking.map(|rho| {
            rho.cases
                .iter()
                .enumerate()
                .map(|(p, cases)| PointJson {
                    point: rho.points[p].clone(),
                    cases: cases
                        .iter()
                        .map(|c| CaseJson {
                            guard: c.guard.iter().map(|g| rho.render_guard(g)).collect(),
                            vector: c
                                .vector
                                .iter()
                                .map(|s| match *s {
                                    Slot::Const(v) => SlotJson::Const(v),
                                    Slot::Var(d) => SlotJson::Var(rho.render_diff(d)),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect()
        });
        let report = ReportJson {
            verdict: self.verdict_word(),
            algorithm: self.verdict.algorithm.name().to_string(),
            rooted: self.verdict.rooted.map(|r| sys.points[r].name.clone()),
            witness: self.witness.map(|w| WitnessJson { cycle: w.cycle.clone(), prefix: w.prefix.clone() }),
            ranking,
        };
        let mut s = serde_json::to_string(&report).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let sys = self.system;
        let mut out = String::new();
        let _ = write!(out, "{} ({})", self.verdict_word(), self.verdict.algorithm.name());
        if let Some(r) = self.verdict.rooted {
            let _ = write!(out, " from {}", sys.points[r].name);
        }
        out.push('\n');
        if let Some(f) = &self.verdict.failure {
            let names: Vec<&str> = f.cycle.iter().map(|&e| sys.edges[e].name.as_str()).collect();
            let _ = writeln!(out, "failing cycle: {}", names.join(" "));
        }
        if let Some(w) = self.witness {
            let names: Vec<&str> = w.cycle.iter().map(|&e| sys.edges[e].name.as_str()).collect();
            let _ = writeln!(out, "witness cycle: {}", names.join(" "));
            for (t, state) in w.prefix.iter().enumerate() {
                let vals: Vec<String> = sys.vars.iter().zip(state).map(|(v, x)| format!("{v}={x}")).collect();
                let _ = writeln!(out, "  {t:>4}: {}", vals.join(" "));
            }
        }
        if let Some(rho) = self.ranking {
            let _ = write!(out, "{rho}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descent_in_a_difference() {
        let doc = parse_mcs("vars m n; edge f -> f { m > n, n = n', m > m' }").unwrap();
        let sys = doc.system;
        assert_eq!(sys.points.len(), 1);
        assert_eq!(sys.edges.len(), 1);
        assert!(sys.edges[0].mc.entails(&Atom::new(VarNode::src(0), Relation::Gt, VarNode::tgt(1))));
    }

    #[test]
    fn empty_file() {
        let sys = parse_mcs("# nothing here\n").unwrap().system;
        assert_eq!(sys.n(), 0);
        assert!(sys.points.is_empty() && sys.edges.is_empty());
    }

    #[test]
    fn double_prime_points_at_second_prime() {
        let e = parse_mcs("vars x y\nedge f -> f { x'' > y }").unwrap_err();
        assert_eq!(e.pos, Pos { line: 2, col: 17 });
    }

    #[test]
    fn primed_invariant_rejected() {
        let e = parse_mcs("vars x y\npoint f invariant { x < y' }").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::PrimedInInvariant(_)));
        assert_eq!(e.pos, Pos { line: 2, col: 25 });
    }

    #[test]
    fn unknown_variable_rejected() {
        let e = parse_mcs("vars x\nedge f -> f { x > z' }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownVariable("z".into()));
        assert_eq!(e.pos, Pos { line: 2, col: 19 });
    }

    #[test]
    fn point_declared_after_use_keeps_invariant() {
        let sys = parse_mcs("vars x y\nedge f -> f { x > x' }\npoint f invariant { x < y }\nroot f").unwrap().system;
        assert!(sys.points[0].inv.entails(0, Relation::Lt, 1));
        assert!(sys.edges[0].mc.entails(&Atom::new(VarNode::tgt(0), Relation::Lt, VarNode::tgt(1))));
        assert_eq!(sys.root, Some(0));
    }

    #[test]
    fn print_round_trip() {
        let text = "vars x y\npoint f invariant { x <= y }\nedge f -> g { x > x', y = y' }\nedge g -> f { x < x }\nroot g\n";
        let sys = parse_mcs(text).unwrap().system;
        let printed = print_mcs(&sys);
        let again = parse_mcs(&printed).unwrap().system;
        assert_eq!(sys, again);
        assert_eq!(printed, print_mcs(&again));
    }
}
