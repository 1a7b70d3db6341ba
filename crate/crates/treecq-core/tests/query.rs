use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecq_core::random::{random_query, QueryShape};
use treecq_core::succinct::gen_diamond;
use treecq_core::{Atom, Axis, ConjunctiveQuery, PositiveQuery, QueryError};

fn q(s: &str) -> ConjunctiveQuery {
    ConjunctiveQuery::parse(s).unwrap()
}

/// Shadow-graph forest test by union-find: a self-loop or an edge joining two
/// already connected variables closes a cycle.
fn shadow_is_forest(query: &ConjunctiveQuery) -> bool {
    let vars = query.variables();
    let index: BTreeMap<&String, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for (_, x, y) in query.binary_atoms() {
        let (a, b) = (find(&mut parent, index[x]), find(&mut parent, index[y]));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

#[test]
fn parse_examples() {
    let a = q("q() :- A(x), child(x,y), B(y).");
    assert!(a.is_boolean());
    assert_eq!(a.unary_atoms().count(), 2);
    assert_eq!(a.binary_count(), 1);
    let intro = q("q(z) :- A(x), child(x,y), B(y), following(x,z), C(z).");
    assert_eq!(intro.head, ["z"]);
    assert_eq!(intro.signature(), BTreeSet::from([Axis::Child, Axis::Following]));
    let star = q("q(x,y) :- child*(x,y), nextsib*(x,y).");
    assert_eq!(star.binary_count(), 2);
    assert_eq!(star.unary_atoms().count(), 0);
    assert!(q("q() :- A(x).").signature().is_empty());
    assert_eq!(gen_diamond(3).unwrap().signature(), BTreeSet::from([Axis::ChildPlus]));
}

#[test]
fn unary_atoms_dedup_binary_atoms_do_not() {
    let d = q("q() :- A(x), A(x), child(x,y), child(x,y).");
    assert_eq!(d.unary_atoms().count(), 1);
    assert_eq!(d.binary_count(), 2);
    assert!(!d.is_acyclic());
    assert_eq!(d.size(), 3);
}

#[test]
fn parse_errors() {
    assert!(matches!(ConjunctiveQuery::parse("q() :- child(x)."), Err(QueryError::Arity { .. })));
    assert!(matches!(ConjunctiveQuery::parse("q() :- A(x,y)."), Err(QueryError::Arity { .. })));
    assert_eq!(ConjunctiveQuery::parse("q(z) :- A(x)."), Err(QueryError::UnsafeHead("z".into())));
    assert!(matches!(ConjunctiveQuery::parse("q() :- A(x)"), Err(QueryError::Syntax { .. })));
    assert!(matches!(ConjunctiveQuery::parse("q() A(x)."), Err(QueryError::Syntax { .. })));
    assert!(matches!(PositiveQuery::parse("q(x) :- A(x).\nq() :- B(y)."), Err(QueryError::HeadMismatch)));
}

#[test]
fn node_atom_round_trips() {
    let n = q("q(x) :- node(x).");
    assert_eq!(n.to_string(), "q(x) :- node(x).");
    assert_eq!(n.atoms(), [Atom::node("x")]);
}

#[test]
fn directed_cycle_examples() {
    let two = q("q() :- child(x,y), child(y,x).");
    assert_eq!(two.find_directed_cycle(), Some(vec![0, 1]));
    assert_eq!(q("q() :- child(x,y), child(y,z).").find_directed_cycle(), None);
    let self_loop = q("q(x,y) :- nextsib*(x,y), child+(x,x).");
    assert_eq!(self_loop.find_directed_cycle(), Some(vec![1]));
}

#[test]
fn undirected_cycle_examples() {
    let diamond = q("q() :- child(x,z), nextsib(y,z), child+(w,x), child+(w,y).");
    let (z, e1, e2) = diamond.find_undirected_cycle().unwrap().unwrap();
    assert_eq!(z, "z");
    assert_eq!(BTreeSet::from([e1, e2]), BTreeSet::from([0, 1]));
    assert_eq!(q("q() :- child(x,y), child(x,z), child+(z,w).").find_undirected_cycle(), Ok(None));
    let d1 = gen_diamond(1).unwrap();
    let (z, e1, e2) = d1.find_undirected_cycle().unwrap().unwrap();
    assert_eq!(z, "y2");
    let shown: BTreeSet<String> = [e1, e2].iter().map(|&i| d1.atoms()[i].to_string()).collect();
    assert_eq!(shown, BTreeSet::from(["child+(x1,y2)".to_string(), "child+(x'1,y2)".to_string()]));
    assert_eq!(q("q() :- child(x,y), child(y,x).").find_undirected_cycle(), Err(QueryError::DirectedCycle));
}

#[test]
fn positive_query_parse() {
    let p = PositiveQuery::parse("q(x) :- A(x).\nq(y) :- child(y,z), B(z).\n").unwrap();
    assert_eq!(p.disjuncts.len(), 2);
    assert_eq!(p.arity(), Some(1));
    assert!(p.is_apq());
    assert_eq!(p.total_atoms(), 3);
}

fn any_query(seed: u64, arity: usize) -> ConjunctiveQuery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_query(&mut rng, &QueryShape::new(&Axis::ALL, 7, 5, &["A", "B"]).with_arity(arity))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn acyclicity_matches_union_find(seed in any::<u64>()) {
        let query = any_query(seed, 0);
        prop_assert_eq!(query.is_acyclic(), shadow_is_forest(&query));
        if !query.has_directed_cycle() {
            prop_assert_eq!(query.find_undirected_cycle().unwrap().is_none(), query.is_acyclic());
        }
    }

    #[test]
    fn text_round_trip(seed in any::<u64>(), arity in 0usize..3) {
        let query = any_query(seed, arity);
        let back = ConjunctiveQuery::parse(&query.to_string()).unwrap();
        prop_assert_eq!(back.canonical_key(), query.canonical_key());
        prop_assert_eq!(back, query);
    }

    #[test]
    fn directed_cycles_are_cycles(seed in any::<u64>()) {
        let query = any_query(seed, 0);
        if let Some(c) = query.find_directed_cycle() {
            let ends: Vec<(String, String)> = c
                .iter()
                .map(|&i| match &query.atoms()[i] {
                    Atom::Binary(_, x, y) => (x.clone(), y.clone()),
                    other => panic!("unary atom {other} in a cycle"),
                })
                .collect();
            for k in 0..ends.len() {
                prop_assert_eq!(&ends[k].1, &ends[(k + 1) % ends.len()].0);
            }
        }
    }

    #[test]
    fn renaming_preserves_canonical_key(seed in any::<u64>()) {
        let query = any_query(seed, 1);
        let mut renamed = query.clone();
        for v in query.variables() {
            renamed = renamed.substitute(&v, &format!("r_{v}"));
        }
        prop_assert_eq!(renamed.canonical_key(), query.canonical_key());
    }
}
