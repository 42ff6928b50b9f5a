//! Termination analysis for monotonicity constraint transition systems over
//! the integers: decision procedures, non-termination witnesses, and
//! lexicographic ranking functions over variable differences.

pub mod graph;
pub mod io;
pub mod mc;
pub mod oracle;
pub mod ranking;
pub mod termination;
pub mod transform;
pub mod witness;

pub use mc::{collapse, Arc, Assignment, Atom, Edge, Invariant, Mc, McError, Mcs, Multipath, Point, Relation, Side, VarNode};
