use proptest::prelude::*;

use mcs_term::io::{parse_mcs, print_mcs};
use mcs_term::oracle::{
    closure_matches_enumeration, concrete_prefix_check, random_corpus, sct_difference_oracle, walk_oracle, CorpusSpec,
};
use mcs_term::ranking::{
    build_difference_mcs, diff_indices, freeze_residual, mtp, singleton_tp, synthesize_ranking, verify_ranking,
    DiffIndex, DifferenceMcs,
};
use mcs_term::termination::{balanced_extension, closure_set, decide, ltt_general, ltts, prepared, Algorithm};
use mcs_term::transform::{enumerate_orderings, fully_elaborate};
use mcs_term::witness::{find_witness, unroll};
use mcs_term::{Atom, Invariant, Mc, Mcs, Relation, VarNode};

fn system(seed: u64, density: f64) -> Mcs {
    let spec = CorpusSpec { seed, count: 1, density, ..CorpusSpec::default() };
    random_corpus(&spec).unwrap().remove(0)
}

fn arb_system() -> impl Strategy<Value = Mcs> {
    (any::<u64>(), 0.15f64..0.6).prop_map(|(s, d)| system(s, d))
}

/// A single-point system over four variables with random edges.
fn arb_wide_system() -> impl Strategy<Value = Mcs> {
    let atom = (0usize..8, 0usize..5, 0usize..8);
    prop::collection::vec(prop::collection::vec(atom, 0..7), 1..3).prop_map(|edges| {
        let rels = [Relation::Lt, Relation::Le, Relation::Eq, Relation::Ge, Relation::Gt];
        let mut sys = Mcs::new(["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect());
        sys.add_point("f", Invariant::top(4));
        for (k, atoms) in edges.into_iter().enumerate() {
            let atoms: Vec<Atom> = atoms
                .into_iter()
                .filter(|(u, _, v)| u != v)
                .map(|(u, r, v)| Atom::new(VarNode::from_slot(u, 4), rels[r], VarNode::from_slot(v, 4)))
                .collect();
            sys.add_edge(format!("g{k}"), Mc::new(4, 0, 0, &atoms));
        }
        sys
    })
}

fn difference_system(sys: &Mcs) -> DifferenceMcs {
    build_difference_mcs(&fully_elaborate(sys).0).unwrap()
}

fn is_thread_preserver(ds: &DifferenceMcs, p: &[Vec<DiffIndex>]) -> bool {
    ds.sys.edges.iter().enumerate().all(|(e, edge)| {
        let (f, g) = (edge.mc.src(), edge.mc.tgt());
        p[f].iter().all(|&a| p[g].iter().any(|&b| ds.preserves(e, a, b)))
    })
}

fn subset(p: &[Vec<DiffIndex>], q: &[Vec<DiffIndex>]) -> bool {
    p.iter().zip(q).all(|(a, b)| a.iter().all(|d| b.contains(d)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, ..ProptestConfig::default() })]

    #[test]
    fn algorithms_and_difference_oracle_agree(sys in arb_system()) {
        let want = decide(&sys, Algorithm::StableClosure, None).terminating;
        for alg in Algorithm::ALL {
            prop_assert_eq!(decide(&sys, alg, None).terminating, want, "{}", alg);
        }
        prop_assert_eq!(sct_difference_oracle(&sys), want);
    }

    #[test]
    fn rooted_verdicts_agree(sys in arb_system()) {
        let want = decide(&sys, Algorithm::StableClosure, Some(0)).terminating;
        for alg in Algorithm::ALL {
            prop_assert_eq!(decide(&sys, alg, Some(0)).terminating, want, "{}", alg);
        }
        if decide(&sys, Algorithm::StableClosure, None).terminating {
            prop_assert!(want);
        }
    }

    #[test]
    fn closure_matches_bounded_enumeration(sys in arb_system()) {
        prop_assert_ne!(closure_matches_enumeration(&sys, 10), Some(false));
    }

    #[test]
    fn closure_members_are_satisfiable_and_closed_under_composition(sys in arb_system()) {
        let clos = closure_set(&sys);
        for a in &clos.members {
            prop_assert!(a.mc.is_satisfiable());
            for b in clos.members.iter().filter(|b| b.mc.src() == a.mc.tgt()) {
                let c = a.mc.compose(&b.mc).unwrap();
                prop_assert!(!c.is_satisfiable() || clos.contains(&c));
            }
        }
    }

    #[test]
    fn verdicts_come_with_verified_certificates(sys in arb_system()) {
        let terminating = decide(&sys, Algorithm::StableClosure, None).terminating;
        match synthesize_ranking(&sys, None) {
            Ok(rho) => {
                prop_assert!(terminating);
                prop_assert!(verify_ranking(&sys, &rho));
                prop_assert!(rho.max_variables() < sys.n().max(1));
            }
            Err(_) => {
                prop_assert!(!terminating);
                let w = find_witness(&sys, None, 40).expect("witness");
                prop_assert_eq!(w.prefix.len(), 40);
                prop_assert!(concrete_prefix_check(&unroll(&w.cycle, 40), &sys, &w.prefix));
            }
        }
    }

    #[test]
    fn rooted_certificates(sys in arb_system()) {
        let terminating = decide(&sys, Algorithm::StableClosure, Some(0)).terminating;
        match synthesize_ranking(&sys, Some(0)) {
            Ok(rho) => {
                prop_assert!(terminating);
                prop_assert!(verify_ranking(&sys, &rho));
            }
            Err(_) => {
                prop_assert!(!terminating);
                let w = find_witness(&sys, Some(0), 30).expect("witness");
                prop_assert!(concrete_prefix_check(&unroll(&w.cycle, 30), &sys, &w.prefix));
            }
        }
    }

    #[test]
    fn mtp_is_the_greatest_preserver(sys in arb_system(), picks in prop::collection::vec(any::<u16>(), 8)) {
        let ds = difference_system(&sys);
        let all: Vec<Vec<DiffIndex>> = vec![ds.pairs.clone(); ds.sys.points.len()];
        let p = mtp(&ds, &all);
        prop_assert!(is_thread_preserver(&ds, &p));
        prop_assert!(subset(&p, &all));
        prop_assert_eq!(mtp(&ds, &p), p.clone());
        let q: Vec<Vec<DiffIndex>> = (0..ds.sys.points.len())
            .map(|f| {
                let mask = picks[f % picks.len()];
                ds.pairs.iter().enumerate().filter(|(i, _)| mask >> (i % 16) & 1 == 1).map(|(_, d)| *d).collect()
            })
            .collect();
        let mq = mtp(&ds, &q);
        prop_assert!(is_thread_preserver(&ds, &mq));
        prop_assert!(subset(&mq, &q));
        prop_assert!(subset(&mq, &p));
    }

    #[test]
    fn singleton_preserver_holds_and_freezing_adds_freezers(sys in arb_system()) {
        let ds = difference_system(&sys);
        let all: Vec<Vec<DiffIndex>> = vec![ds.pairs.clone(); ds.sys.points.len()];
        if let Some(tp) = singleton_tp(&ds, &all) {
            let s = &tp.system;
            for (e, edge) in s.sys.edges.iter().enumerate() {
                prop_assert!(s.preserves(e, tp.choice[edge.mc.src()], tp.choice[edge.mc.tgt()]));
            }
            let residual = freeze_residual(s, &tp.choice);
            prop_assert_eq!(residual.freezers.len(), s.freezers.len() + 2);
            prop_assert!(residual.sys.edges.len() <= s.sys.edges.len());
        }
    }

    #[test]
    fn difference_lattice_laws(sys in arb_system()) {
        lattice_laws(&difference_system(&sys))?;
    }

    #[test]
    fn difference_lattice_laws_four_variables(sys in arb_wide_system()) {
        lattice_laws(&difference_system(&sys))?;
    }

    #[test]
    fn balanced_extension_round_bound(sys in arb_system()) {
        let (st, _) = prepared(&sys, true, None);
        let n = sys.n();
        for m in closure_set(&st).cyclic() {
            let (_, rounds) = balanced_extension(&m.mc);
            prop_assert!(rounds <= 4 * n * n.saturating_sub(1), "{} rounds for n = {}", rounds, n);
        }
    }

    #[test]
    fn walk_oracle_matches_local_tests(sys in arb_system()) {
        let (st, _) = prepared(&sys, true, None);
        for m in closure_set(&st).cyclic() {
            let walks = walk_oracle(&m.mc, 8);
            prop_assert_eq!(walks.stable_pass, ltts(&m.mc), "{:?}", m.mc);
            if walks.general_pass {
                prop_assert!(ltt_general(&m.mc), "{:?}", m.mc);
            }
        }
    }

    #[test]
    fn print_parse_round_trip(sys in arb_system()) {
        let text = print_mcs(&sys);
        let back = parse_mcs(&text).unwrap().system;
        prop_assert_eq!(&back.vars, &sys.vars);
        prop_assert_eq!(&back.points, &sys.points);
        let a: Vec<&Mc> = back.edges.iter().map(|e| &e.mc).collect();
        let b: Vec<&Mc> = sys.edges.iter().map(|e| &e.mc).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(print_mcs(&back), text);
    }
}

fn lattice_laws(ds: &DifferenceMcs) -> Result<(), TestCaseError> {
    let pairs = &ds.pairs;
    for e in 0..ds.sys.edges.len() {
        for &a in pairs {
            for &b in pairs {
                if !ds.preserves(e, a, b) {
                    continue;
                }
                for &g in pairs.iter().filter(|g| g.contains(a)) {
                    prop_assert!(ds.preserves(e, g, b), "edge {} {:?} {:?} {:?}", e, a, g, b);
                }
                for &c in pairs.iter().filter(|&&c| ds.preserves(e, a, c)) {
                    prop_assert!(ds.preserves(e, a, b.join(c)), "edge {} {:?} {:?} {:?}", e, a, b, c);
                }
            }
        }
    }
    Ok(())
}

fn ordered_bell(n: usize) -> u64 {
    let mut binom = vec![vec![0u64; n + 1]; n + 1];
    for i in 0..=n {
        binom[i][0] = 1;
        for k in 1..=i {
            binom[i][k] = binom[i - 1][k - 1] + if k < i { binom[i - 1][k] } else { 0 };
        }
    }
    let mut a = vec![1u64; n + 1];
    for m in 1..=n {
        a[m] = (1..=m).map(|k| binom[m][k] * a[m - k]).sum();
    }
    a[n]
}

#[test]
fn ordering_counts_follow_ordered_bell_numbers() {
    let expected = [1, 3, 13, 75, 541];
    for n in 1..=5 {
        let orders = enumerate_orderings(n);
        assert_eq!(orders.len() as u64, expected[n - 1]);
        assert_eq!(orders.len() as u64, ordered_bell(n));
        let distinct: std::collections::HashSet<_> = orders.iter().map(|o| o.invariant(n).matrix().to_vec()).collect();
        assert_eq!(distinct.len(), orders.len());
    }
}

#[test]
fn diff_indices_are_lexicographic() {
    let d = diff_indices(4);
    assert_eq!(d.len(), 6);
    assert!(d.windows(2).all(|w| w[0] < w[1]));
}
