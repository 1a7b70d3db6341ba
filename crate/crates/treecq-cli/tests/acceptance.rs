//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecq_core::eval::{eval_backtracking, find_valuation, Compiled, Index, DEFAULT_BUDGET};
use treecq_core::gadgets::{brute_1in3, canonical_instances, random_instance, OneInThreeInstance, Target};
use treecq_core::random::{random_query, QueryShape};
use treecq_core::rewrite::{
    eliminate_following, is_equivalent_sampled, is_satisfiable, rewrite_to_apq, table_entries, LifterTable, Mode,
    SampleOptions,
};
use treecq_core::succinct::{
    bits_of, blowup_experiment, example_forest_query, gen_diamond, gen_ps, is_k_scattered, separating_structure,
    DiamondCheck,
};
use treecq_core::tree::{enumerate_trees, random_tree};
use treecq_core::xbar::{check_xbar, check_xbar_inverse, classify, classify_cell, OrderTag, Verdict};
use treecq_core::{Atom, Axis, ConjunctiveQuery, PositiveQuery, Tree, Unary};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Queries drawn per tractable family.
const QUERIES_PER_FAMILY: usize = 500;
/// Tree size bound for exhaustive evaluation checks.
const EVAL_TREE_NODES: usize = 6;
/// Random trees for the X-underbar suite, and their size bound.
const XBAR_TREES: usize = 200;
const XBAR_TREE_NODES: usize = 60;
/// Tree size bound for the lifter check.
const LIFTER_TREE_NODES: usize = 5;
/// Random queries for the rewrite check.
const REWRITE_QUERIES: usize = 500;
/// Random gadget instances beyond the exhaustive set.
const GADGET_RANDOM: usize = 30;

fn q(s: &str) -> ConjunctiveQuery {
    ConjunctiveQuery::parse(s).expect("valid query")
}

/// Atom-by-atom check of a valuation given as a node per compiled variable.
fn satisfied(tree: &Tree, query: &ConjunctiveQuery, vars: &[String], val: &[usize]) -> bool {
    let at: BTreeMap<&String, usize> = vars.iter().zip(val.iter().copied()).collect();
    query.atoms().iter().all(|a| match a {
        Atom::Unary(Unary::Node, _) => true,
        Atom::Unary(Unary::Label(l), x) => tree.has_label(at[x], l),
        Atom::Binary(axis, x, y) => tree.axis_holds(*axis, at[x], at[y]),
    })
}

fn tractable_evaluation() -> Outcome {
    let families: [(&[Axis], OrderTag); 3] = [
        (&[Axis::Child, Axis::NextSibling, Axis::NextSiblingStar, Axis::NextSiblingPlus], OrderTag::Bflr),
        (&[Axis::ChildPlus, Axis::ChildStar], OrderTag::Pre),
        (&[Axis::Following], OrderTag::Post),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut queries: Vec<(ConjunctiveQuery, Compiled, OrderTag)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (axes, order) in families {
        for _ in 0..QUERIES_PER_FAMILY {
            let query = random_query(&mut rng, &QueryShape::new(axes, 5, 4, &["A", "B"]));
            if classify(&query.signature()) != Verdict::Tractable(order) && !query.signature().is_empty() {
                return Err(format!("{query} is not classified under {order}"));
            }
            // Identical queries give identical answers; each is evaluated once.
            if seen.insert((query.canonical_key(), order)) {
                let c = Compiled::new(&query);
                queries.push((query, c, order));
            }
        }
    }
    let mut trees = 0;
    let mut checks = 0u64;
    for tree in enumerate_trees(EVAL_TREE_NODES, &["A", "B"]) {
        trees += 1;
        let index = Index::new(&tree);
        for (query, c, order) in &queries {
            let fast = index.eval_xbar(c, *order).map_err(|e| format!("{query}: {e}"))?;
            let brute = index.answers_bruteforce(c, DEFAULT_BUDGET).map_err(|e| format!("{query}: {e}"))?;
            if fast.is_some() != !brute.is_empty() {
                return Err(format!("{query} on {tree}: xbar {} brute {}", fast.is_some(), !brute.is_empty()));
            }
            if let Some(v) = fast {
                if !satisfied(&tree, query, c.variables(), &v) {
                    return Err(format!("{query} on {tree}: minimum valuation {v:?} is not a model"));
                }
            }
            checks += 1;
        }
    }
    Ok(format!(
        "{} queries ({} distinct), {trees} trees, {checks} comparisons, 0 mismatches",
        3 * QUERIES_PER_FAMILY,
        queries.len()
    ))
}

fn xbar_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(Axis, OrderTag)> =
        OrderTag::ALL.iter().flat_map(|&o| o.family().iter().map(move |&a| (a, o))).collect();
    if pairs.len() != 7 {
        return Err(format!("{} asserted pairs", pairs.len()));
    }
    for _ in 0..XBAR_TREES {
        let n = rng.gen_range(1..=XBAR_TREE_NODES);
        let t = random_tree(&mut rng, n, &[], 0.0);
        for &(a, o) in &pairs {
            if let Some(w) = check_xbar(&t, a, o) {
                return Err(format!("{a} under {o} violated on {t} at {w:?}"));
            }
        }
    }
    let fa = Tree::parse("(- (A (B) (C)) (D (E)))").expect("tree");
    if check_xbar(&fa, Axis::Following, OrderTag::Pre).is_none() {
        return Err("following under pre shows no violation".into());
    }
    let fb = Tree::parse("(- (-) (- (-) (-)))").expect("tree");
    if check_xbar_inverse(&fb, Axis::ChildPlus, OrderTag::Post).is_none() {
        return Err("inverse child+ under post shows no violation".into());
    }
    Ok(format!("7 pairs clean on {XBAR_TREES} trees; both negatives reproduce"))
}

/// The expected grid, in Axis::ALL order, upper triangle.
const EXPECTED_TABLE: [[&str; 7]; 7] = [
    ["in P (4.4)", "NP-hard (5.1)", "NP-hard (5.1)", "in P (4.4)", "in P (4.4)", "in P (4.4)", "NP-hard (5.2)"],
    ["", "in P (4.2)", "in P (4.2)", "NP-hard (5.7)", "NP-hard (5.7)", "NP-hard (5.7)", "NP-hard (5.3)"],
    ["", "", "in P (4.2)", "NP-hard (5.5)", "NP-hard (5.4)", "NP-hard (5.6)", "NP-hard (5.3)"],
    ["", "", "", "in P (4.4)", "in P (4.4)", "in P (4.4)", "NP-hard (5.8)"],
    ["", "", "", "", "in P (4.4)", "in P (4.4)", "NP-hard (5.8)"],
    ["", "", "", "", "", "in P (4.4)", "NP-hard (5.8)"],
    ["", "", "", "", "", "", "in P (4.3)"],
];

fn table_conformance() -> Outcome {
    let mut cells = 0;
    for (i, &a) in Axis::ALL.iter().enumerate() {
        for (j, &b) in Axis::ALL.iter().enumerate().skip(i) {
            let got = classify_cell(a, b).to_string();
            if got != EXPECTED_TABLE[i][j] {
                return Err(format!("{a} / {b}: {got}, expected {}", EXPECTED_TABLE[i][j]));
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} cells identical"))
}

fn lifter_contract() -> Outcome {
    let trees: Vec<Tree> = enumerate_trees(LIFTER_TREE_NODES, &[]).collect();
    let mut lifters = 0;
    for table in [LifterTable::Basic, LifterTable::Following] {
        for l in table_entries(table) {
            lifters += 1;
            for t in &trees {
                for a in t.nodes() {
                    for b in t.nodes() {
                        for c in t.nodes() {
                            let join = t.axis_holds(l.r, a, c) && t.axis_holds(l.s, b, c);
                            if join != l.holds(t, a, b, c) {
                                return Err(format!("{l} on {t} at ({a},{b},{c})"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{lifters} lifters exact on {} trees", trees.len()))
}

fn rewrite_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = SampleOptions { max_enum_nodes: 6, trials: 50, max_random_nodes: 12, seed: 5 };
    let mut disjuncts = 0;
    for k in 0..REWRITE_QUERIES {
        let shape = QueryShape::new(&Axis::ALL, 6, 4, &["A", "B"]).with_arity(k % 2);
        let input = random_query(&mut rng, &shape);
        let r = rewrite_to_apq(&input, Mode::Full).map_err(|e| format!("{input}: {e}"))?;
        let mut bound = input.signature();
        bound.extend([Axis::ChildPlus, Axis::NextSiblingPlus]);
        for d in &r.apq.disjuncts {
            if !d.is_acyclic() {
                return Err(format!("{input} gave cyclic {d}"));
            }
            if !d.signature().is_subset(&bound) {
                return Err(format!("{input} gave {d} outside the signature bound"));
            }
        }
        disjuncts += r.apq.disjuncts.len();
        let verdict = is_equivalent_sampled(&PositiveQuery::single(input.clone()), &r.apq, &opts);
        if !verdict.holds() {
            return Err(format!("{input}: {verdict:?}"));
        }
    }
    Ok(format!("{REWRITE_QUERIES} queries, {disjuncts} disjuncts, 0 differences"))
}

fn worked_examples() -> Outcome {
    let r = rewrite_to_apq(&q("q(x,y) :- child*(x,y), nextsib*(x,y)."), Mode::Full).map_err(|e| e.to_string())?;
    let sat: Vec<&ConjunctiveQuery> = r.apq.disjuncts.iter().filter(|d| is_satisfiable(d)).collect();
    if sat.len() != 1 || sat[0].canonical_key() != q("q(x,x) :- node(x).").canonical_key() {
        return Err(format!("reflexive cycle example gave {}", r.apq));
    }
    let collapsed = sat[0].to_string();
    let intro = q("q(z) :- S(x), child+(x,y), NP(y), child+(x,z), PP(z), following(y,z).");
    let r = rewrite_to_apq(&eliminate_following(&intro), Mode::NoFollowing).map_err(|e| e.to_string())?;
    let sat: Vec<&ConjunctiveQuery> = r.apq.disjuncts.iter().filter(|d| is_satisfiable(d)).collect();
    if sat.len() != 1 || !sat[0].is_acyclic() {
        return Err(format!("introduction query gave {} satisfiable disjuncts", sat.len()));
    }
    let full = rewrite_to_apq(&intro, Mode::Full).map_err(|e| e.to_string())?;
    let opts = SampleOptions { max_enum_nodes: 5, trials: 200, max_random_nodes: 14, seed: 1 };
    if !full.apq.is_apq() || !is_equivalent_sampled(&PositiveQuery::single(intro.clone()), &full.apq, &opts).holds() {
        return Err("introduction query full-mode rewrite is not an equivalent APQ".into());
    }
    let forest = example_forest_query();
    let m = separating_structure(&forest, &["X'1".to_string(), "X'2".to_string()]).map_err(|e| e.to_string())?;
    let d2 = gen_diamond(2).map_err(|e| e.to_string())?;
    let tree = m.tree();
    if find_valuation(&tree, &forest).is_none() || find_valuation(&tree, &d2).is_some() {
        return Err(format!("structure {m} does not separate the forest query from the 2-diamond"));
    }
    Ok(format!(
        "{collapsed}; introduction query -> 1 satisfiable acyclic disjunct ({} in mode 610); M = {m}",
        full.apq.disjuncts.len()
    ))
}

fn gadget_soundness() -> Outcome {
    let mut instances: Vec<OneInThreeInstance> = canonical_instances(4, 5);
    let exhaustive = instances.len();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..GADGET_RANDOM {
        instances.push(random_instance(&mut rng, 8, 6));
    }
    for target in Target::ALL {
        for inst in &instances {
            let g = target.reduce(inst);
            let truth = !eval_backtracking(&g.tree, &g.query).is_empty();
            let sat = brute_1in3(inst).map_err(|e| e.to_string())?;
            if truth != sat {
                return Err(format!("{target}: query {truth}, instance {sat} on\n{inst}"));
            }
        }
    }
    Ok(format!(
        "{} targets x ({exhaustive} exhaustive + {GADGET_RANDOM} random) instances, 0 mismatches",
        Target::ALL.len()
    ))
}

fn succinctness_lab() -> Outcome {
    let mut structures = 0;
    for n in 1..=4 {
        let d = gen_diamond(n).map_err(|e| e.to_string())?;
        for p in [1, 4 * n + 6] {
            for mask in 0..1u64 << n {
                let ps = gen_ps(n, p, &bits_of(mask, n)).map_err(|e| e.to_string())?;
                if find_valuation(&ps.tree(), &d).is_none() {
                    return Err(format!("D{n} false on {ps}"));
                }
                if !is_k_scattered(&ps, p) {
                    return Err(format!("{ps} is not {p}-scattered"));
                }
                structures += 1;
            }
        }
    }
    let report = blowup_experiment(3, Mode::Full, &DiamondCheck::default()).map_err(|e| e.to_string())?;
    print!("{}", report.to_text());
    if let Some(r) = report.rows.iter().find(|r| !r.all_acyclic || !r.equivalent) {
        return Err(format!("blowup row {r:?}"));
    }
    let atoms: Vec<String> = report.rows.iter().map(|r| r.total_atoms.to_string()).collect();
    Ok(format!("{structures} path structures; blowup n<=3 total atoms {}", atoms.join(", ")))
}

fn run_cli(args: &[&str]) -> (Vec<u8>, Option<i32>) {
    let out = Command::new(env!("CARGO_BIN_EXE_treecq")).args(args).output().expect("spawn treecq");
    let mut bytes = out.stdout;
    bytes.extend_from_slice(b"\n--stderr--\n");
    bytes.extend_from_slice(&out.stderr);
    (bytes, out.status.code())
}

fn cli_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("treecq-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let file = |name: &str, text: &str| -> Result<String, String> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| e.to_string())?;
        Ok(p.to_string_lossy().into_owned())
    };
    let tree = file("t.sexp", "(- (A (B) (C)) (D (E)))\n")?;
    let query = file("q.cq", "q(z) :- A(x), child(x,y), B(y), following(x,z), D(z).\n")?;
    let boolean = file("b.cq", "q() :- A(x), child(x,y), B(y), following(y,z).\n")?;
    let inst = file("i.txt", "1 2 3\n2 3 4\n1 4 5\n")?;
    let invocations: Vec<Vec<&str>> = vec![
        vec!["classify", "--axes", "child,child+"],
        vec!["table1"],
        vec!["table1", "--format", "csv"],
        vec!["eval", "--tree", &tree, "--query", &boolean],
        vec!["eval", "--tree", &tree, "--query", &query, "--strategy", "brute"],
        vec!["rewrite", "--query", &query, "--mode", "610"],
        vec!["xbar-check", "--trees", "30", "--seed", "7"],
        vec!["gadget", "--instance", &inst, "--target", "tau15", "--verify"],
        vec!["gadget", "--random-clauses", "4", "--target", "tau6", "--seed", "9"],
        vec!["diamond", "--n", "3"],
        vec!["ps", "--n", "2", "--p", "3", "--check"],
        vec!["blowup", "--n-max", "2", "--format", "csv", "--seed", "4"],
        vec!["eval", "--tree", "/nonexistent", "--query", &query],
    ];
    let mut summary = Vec::new();
    for args in &invocations {
        let first = run_cli(args);
        let second = run_cli(args);
        if first != second {
            return Err(format!("treecq {} differs between runs", args.join(" ")));
        }
        summary.push(first.1.map_or("signal".to_string(), |c| c.to_string()));
    }
    let classify = run_cli(&invocations[0]);
    if !classify.0.starts_with(b"NP-hard (Table I: 5.1)\n") || classify.1 != Some(1) {
        return Err("classify child,child+ output or exit status".into());
    }
    let _ = std::fs::remove_dir_all(Path::new(&dir));
    Ok(format!("{} invocations byte-identical across runs (exit codes {})", invocations.len(), summary.join(",")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 tractable evaluation matches brute force", tractable_evaluation),
        ("2 X-underbar suite", xbar_suite),
        ("3 complexity table", table_conformance),
        ("4 lifter contract", lifter_contract),
        ("5 rewrite equivalence", rewrite_equivalence),
        ("6 worked examples", worked_examples),
        ("7 gadget soundness", gadget_soundness),
        ("8 succinctness lab", succinctness_lab),
        ("9 CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
