use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecq_core::eval::{eval_backtracking, find_valuation};
use treecq_core::gadgets::{
    brute_1in3, canonical_instances, clause_gadget, clause_positions, nand, nand_table, random_instance,
    reduce_tau6_with, OneInThreeInstance, Target,
};
use treecq_core::Axis;

/// Independent 1-in-3 check: recursive assignment with early clause pruning.
fn one_in_three(inst: &OneInThreeInstance) -> bool {
    fn go(inst: &OneInThreeInstance, assign: &mut Vec<bool>) -> bool {
        let n = assign.len();
        for c in &inst.clauses {
            let decided = c.iter().filter(|&&v| v < n).count();
            let trues = c.iter().filter(|&&v| v < n && assign[v]).count();
            if trues > 1 || (decided == 3 && trues != 1) {
                return false;
            }
        }
        if n == inst.num_vars {
            return true;
        }
        for b in [false, true] {
            assign.push(b);
            if go(inst, assign) {
                return true;
            }
            assign.pop();
        }
        false
    }
    go(inst, &mut Vec::new())
}

fn inst(num_vars: usize, clauses: &[[usize; 3]]) -> OneInThreeInstance {
    OneInThreeInstance::new(num_vars, clauses.to_vec()).unwrap()
}

#[test]
fn nand_table_matches_published_values() {
    let expected = [[10, 13, 18], [5, 8, 13], [2, 5, 10]];
    assert_eq!(nand_table(Target::Tau6), Some(expected));
    assert_eq!(nand(1, 3), 18);
    assert_eq!(nand(3, 1), 2);
    assert_eq!(nand_table(Target::Tau7), Some(expected));
    assert_eq!(nand_table(Target::Tau8), Some(expected));
    assert_eq!(nand_table(Target::Tau4), None);
}

#[test]
fn clause_gadgets_admit_exactly_one_top_per_answer() {
    // Positions 1..7 as (label, index in document order); a clause admits
    // (1,4,7), (2,3,7) and (2,5,6).
    let allowed = [[0, 1, 1], [1, 0, 1], [1, 2, 0]];
    for t in [Target::Tau6, Target::Tau7, Target::Tau8, Target::Tau15] {
        let (tree, q) = clause_gadget(t).unwrap();
        let pos = clause_positions(t).unwrap();
        assert_eq!(pos.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 3, 2]);
        let expected: BTreeSet<Vec<usize>> = allowed.iter().map(|a| (0..3).map(|k| pos[k][a[k]]).collect()).collect();
        let got: BTreeSet<Vec<usize>> = eval_backtracking(&tree, &q).into_iter().collect();
        assert_eq!(got, expected, "{t}");
        for a in &got {
            let tops = (0..3).filter(|&k| a[k] == pos[k][0]).count();
            assert_eq!(tops, 1, "{t}: {a:?}");
        }
    }
}

#[test]
fn reductions_use_only_their_signature() {
    let i = inst(5, &[[0, 1, 2], [2, 3, 4]]);
    for t in Target::ALL {
        let g = t.reduce(&i);
        assert!(g.query.signature().is_subset(&t.axes()), "{t}");
        assert!(g.query.head.is_empty());
    }
}

#[test]
fn brute_force_examples() {
    assert!(brute_1in3(&inst(0, &[])).unwrap());
    assert!(brute_1in3(&inst(3, &[[0, 1, 2]])).unwrap());
    assert!(brute_1in3(&inst(4, &[[0, 1, 2], [1, 2, 3]])).unwrap());
    let hard = inst(5, &[[0, 1, 2], [0, 1, 3], [2, 3, 4]]);
    assert_eq!(brute_1in3(&hard).unwrap(), one_in_three(&hard));
    let unsat = inst(4, &[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
    assert!(!brute_1in3(&unsat).unwrap());
    assert!(!one_in_three(&unsat));
    assert!(brute_1in3(&inst(30, &[])).is_err());
}

#[test]
fn canonical_enumeration_is_closed_and_mixed() {
    let all = canonical_instances(4, 5);
    assert!(all.iter().all(|i| i.canonical() == *i));
    assert_eq!(all.len(), all.iter().collect::<BTreeSet<_>>().len());
    assert!(all.iter().any(|i| !one_in_three(i)));
    assert!(all.iter().any(|i| i.clauses.is_empty()));
}

fn sweep(t: Target, instances: &[OneInThreeInstance]) {
    for i in instances {
        let g = t.reduce(i);
        assert_eq!(find_valuation(&g.tree, &g.query).is_some(), one_in_three(i), "{t} on\n{i}");
    }
}

fn corpus() -> Vec<OneInThreeInstance> {
    let mut all = canonical_instances(4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        all.push(random_instance(&mut rng, 7, 5));
    }
    all
}

#[test]
fn tau4_is_sound() {
    sweep(Target::Tau4, &corpus());
}

#[test]
fn tau5_is_sound() {
    sweep(Target::Tau5, &corpus());
}

#[test]
fn tau6_is_sound() {
    sweep(Target::Tau6, &corpus());
}

#[test]
fn tau6_with_transitive_child_is_sound() {
    for axis in [Axis::ChildPlus, Axis::ChildStar] {
        for i in canonical_instances(4, 5) {
            let g = reduce_tau6_with(&i, axis);
            assert_eq!(g.query.signature().contains(&axis), !i.clauses.is_empty());
            assert_eq!(find_valuation(&g.tree, &g.query).is_some(), one_in_three(&i), "{axis} on\n{i}");
        }
    }
}

#[test]
fn tau15_is_sound() {
    sweep(Target::Tau15, &corpus());
}
