//! Diamond queries, scattered path structures, variable- and label-paths, the
//! path-structure counterexample builder, and the APQ blowup experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::eval::{Compiled, Index};
use crate::query::{Atom, ConjunctiveQuery, PositiveQuery, Unary, Var};
use crate::rewrite::{rewrite_to_apq, Mode, RewriteError};
use crate::tree::{path_tree, Axis, Tree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuccinctError {
    #[error("diamond size must be at least 1")]
    EmptyDiamond,
    #[error("gap length must be at least 1")]
    EmptyGap,
    #[error("expected {expected} order bits, got {got}")]
    BitsLength { expected: usize, got: usize },
    #[error("query graph has a directed cycle")]
    DirectedCycle,
    #[error("axis {0} is outside child* and child+")]
    Axis(Axis),
    #[error("variable-path {0} carries every label of the chosen set")]
    Precondition(String),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

/// A tree whose Child relation is a single path, stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathStructure {
    pub nodes: Vec<BTreeSet<String>>,
}

/// Per-node label sets of a variable-path.
pub type LabelPath = PathStructure;

impl PathStructure {
    pub fn new(nodes: Vec<BTreeSet<String>>) -> PathStructure {
        PathStructure { nodes }
    }

    /// Reads a tree back as a path structure; `None` if some node has two children.
    pub fn from_tree(t: &Tree) -> Option<PathStructure> {
        let mut nodes = Vec::new();
        let mut v = t.root();
        loop {
            nodes.push(t.labels(v).iter().cloned().collect());
            match t.children(v) {
                [] => return Some(PathStructure { nodes }),
                [c] => v = *c,
                _ => return None,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Panics on the empty structure.
    pub fn tree(&self) -> Tree {
        let labels: Vec<Vec<String>> = self.nodes.iter().map(|s| s.iter().cloned().collect()).collect();
        path_tree(&labels)
    }

    pub fn contains_label(&self, l: &str) -> bool {
        self.nodes.iter().any(|s| s.contains(l))
    }

    fn labelled_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.nodes[i].is_empty()).collect()
    }
}

/// Nodes top to bottom separated by `.`; `_` is an unlabeled node, `A,B` a node with two labels.
impl fmt::Display for PathStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            if s.is_empty() {
                f.write_str("_")?;
            } else {
                let parts: Vec<&str> = s.iter().map(String::as_str).collect();
                f.write_str(&parts.join(","))?;
            }
        }
        Ok(())
    }
}

pub fn y_label(i: usize) -> String {
    format!("Y{i}")
}

pub fn x_label(i: usize) -> String {
    format!("X{i}")
}

pub fn x_prime_label(i: usize) -> String {
    format!("X'{i}")
}

/// The Boolean query `D_n`: a chain of `n` Child+ diamonds from `y1` to `y(n+1)`
/// with sides `xi` and `x'i`.
pub fn gen_diamond(n: usize) -> Result<ConjunctiveQuery, SuccinctError> {
    if n == 0 {
        return Err(SuccinctError::EmptyDiamond);
    }
    let mut atoms = vec![Atom::label(&y_label(1), "y1")];
    for i in 1..=n {
        let (y, y_next, x, xp) = (format!("y{i}"), format!("y{}", i + 1), format!("x{i}"), format!("x'{i}"));
        atoms.push(Atom::binary(Axis::ChildPlus, &y, &x));
        atoms.push(Atom::label(&x_label(i), &x));
        atoms.push(Atom::binary(Axis::ChildPlus, &x, &y_next));
        atoms.push(Atom::binary(Axis::ChildPlus, &y, &xp));
        atoms.push(Atom::label(&x_prime_label(i), &xp));
        atoms.push(Atom::binary(Axis::ChildPlus, &xp, &y_next));
        atoms.push(Atom::label(&y_label(i + 1), &y_next));
    }
    Ok(ConjunctiveQuery::new("d", Vec::new(), atoms))
}

/// `s.Y1.s.(X1.s.X'1 | X'1.s.X1).s.Y2 ... s.Y(n+1).s` with `s` a run of `p`
/// unlabeled nodes; `bits[i]` puts `X'(i+1)` first.
pub fn gen_ps(n: usize, p: usize, bits: &[bool]) -> Result<PathStructure, SuccinctError> {
    if n == 0 {
        return Err(SuccinctError::EmptyDiamond);
    }
    if p == 0 {
        return Err(SuccinctError::EmptyGap);
    }
    if bits.len() != n {
        return Err(SuccinctError::BitsLength { expected: n, got: bits.len() });
    }
    let mut nodes = Vec::new();
    let gap = |nodes: &mut Vec<BTreeSet<String>>| nodes.extend(std::iter::repeat_n(BTreeSet::new(), p));
    let single = |l: String| BTreeSet::from([l]);
    gap(&mut nodes);
    nodes.push(single(y_label(1)));
    for (i, &swap) in bits.iter().enumerate() {
        let (a, b) = if swap { (x_prime_label(i + 1), x_label(i + 1)) } else { (x_label(i + 1), x_prime_label(i + 1)) };
        gap(&mut nodes);
        nodes.push(single(a));
        gap(&mut nodes);
        nodes.push(single(b));
        gap(&mut nodes);
        nodes.push(single(y_label(i + 2)));
    }
    gap(&mut nodes);
    Ok(PathStructure { nodes })
}

/// All `2^n` order choices of [`gen_ps`].
pub fn all_ps(n: usize, p: usize) -> Result<Vec<PathStructure>, SuccinctError> {
    (0..1u64 << n).map(|mask| gen_ps(n, p, &bits_of(mask, n))).collect()
}

pub fn bits_of(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// At least `k` nodes, at most one label per node, no repeated label, and every
/// labeled node at distance at least `k` from the top, the bottom and every other
/// labeled node.
pub fn is_k_scattered(ps: &PathStructure, k: usize) -> bool {
    if ps.len() < k || ps.nodes.iter().any(|s| s.len() > 1) {
        return false;
    }
    let mut seen = BTreeSet::new();
    if !ps.nodes.iter().flatten().all(|l| seen.insert(l)) {
        return false;
    }
    let labelled = ps.labelled_positions();
    let last = ps.len() - 1;
    for &v in &labelled {
        let mut others: Vec<usize> = labelled.iter().copied().filter(|&w| w != v).collect();
        others.extend([0, last].into_iter().filter(|&w| w != v));
        if others.iter().any(|&w| v.abs_diff(w) < k) {
            return false;
        }
    }
    true
}

fn edges(q: &ConjunctiveQuery) -> BTreeMap<Var, BTreeSet<Var>> {
    let mut out: BTreeMap<Var, BTreeSet<Var>> = q.variables().into_iter().map(|v| (v, BTreeSet::new())).collect();
    for (_, x, y) in q.binary_atoms() {
        out.get_mut(x).expect("known variable").insert(y.clone());
    }
    out
}

/// All maximal directed paths from in-degree-zero to out-degree-zero variables, sorted.
pub fn variable_paths(q: &ConjunctiveQuery) -> Result<Vec<Vec<Var>>, SuccinctError> {
    if q.has_directed_cycle() {
        return Err(SuccinctError::DirectedCycle);
    }
    let succ = edges(q);
    let targets: BTreeSet<&Var> = succ.values().flatten().collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<Var>> = succ.keys().filter(|v| !targets.contains(v)).map(|v| vec![v.clone()]).collect();
    while let Some(path) = stack.pop() {
        let next = &succ[path.last().expect("nonempty path")];
        if next.is_empty() {
            out.insert(path);
            continue;
        }
        for w in next {
            let mut longer = path.clone();
            longer.push(w.clone());
            stack.push(longer);
        }
    }
    Ok(out.into_iter().collect())
}

fn labels_of(q: &ConjunctiveQuery) -> BTreeMap<&Var, BTreeSet<String>> {
    let mut out: BTreeMap<&Var, BTreeSet<String>> = BTreeMap::new();
    for (u, x) in q.unary_atoms() {
        if let Unary::Label(l) = u {
            out.entry(x).or_default().insert(l.clone());
        }
    }
    out
}

/// The label-path of each variable-path, in the same order.
pub fn label_paths(q: &ConjunctiveQuery, paths: &[Vec<Var>]) -> Vec<LabelPath> {
    let labels = labels_of(q);
    paths
        .iter()
        .map(|p| PathStructure { nodes: p.iter().map(|x| labels.get(x).cloned().unwrap_or_default()).collect() })
        .collect()
}

/// For a query over Child* and Child+ with no variable-path carrying all of
/// `gamma = E1..Em`, the path structure `LC(!E1).LC(E1 & !E2)...LC(E1 & ... & !Em)`,
/// where each block concatenates the distinct matching label-paths in
/// lexicographic order of their rendering.
pub fn separating_structure(q: &ConjunctiveQuery, gamma: &[String]) -> Result<PathStructure, SuccinctError> {
    if let Some(a) = q.signature().into_iter().find(|a| !matches!(a, Axis::ChildStar | Axis::ChildPlus)) {
        return Err(SuccinctError::Axis(a));
    }
    let paths = variable_paths(q)?;
    let lps = label_paths(q, &paths);
    if let Some(lp) = lps.iter().find(|lp| gamma.iter().all(|e| lp.contains_label(e))) {
        return Err(SuccinctError::Precondition(lp.to_string()));
    }
    let mut nodes = Vec::new();
    for j in 0..gamma.len() {
        let block: BTreeSet<String> = lps
            .iter()
            .filter(|lp| gamma[..j].iter().all(|e| lp.contains_label(e)) && !lp.contains_label(&gamma[j]))
            .map(|lp| lp.to_string())
            .collect();
        for key in block {
            let lp = lps.iter().find(|lp| lp.to_string() == key).expect("rendered from this set");
            nodes.extend(lp.nodes.iter().cloned());
        }
    }
    Ok(PathStructure { nodes })
}

/// Forest query whose label-paths are `Y1.X1.Y2.X2.Y3`, `Y1.X1.Y2.X'2.Y3` and
/// `Y1.X'1.Y2.X2.Y3`, all edges Child+; contained in no path is both `X'1` and `X'2`.
pub fn example_forest_query() -> ConjunctiveQuery {
    ConjunctiveQuery::parse(
        "q() :- Y1(y1), child+(y1,x1), X1(x1), child+(x1,y2), Y2(y2), \
         child+(y2,x2), X2(x2), child+(x2,y3), Y3(y3), \
         child+(y2,xp2), X'2(xp2), child+(xp2,y3b), Y3(y3b), \
         child+(y1,xp1), X'1(xp1), child+(xp1,z2), Y2(z2), child+(z2,z3), X2(z3), child+(z3,z4), Y3(z4).",
    )
    .expect("well-formed query")
}

/// One row of the blowup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlowupRow {
    pub n: usize,
    pub input_atoms: usize,
    pub disjuncts_before_merge: usize,
    pub atoms_before_merge: usize,
    pub disjuncts: usize,
    pub total_atoms: usize,
    pub max_atoms: usize,
    pub all_acyclic: bool,
    /// Structures on which the rewrite and `D_n` were compared.
    pub checked: usize,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlowupReport {
    pub mode: Mode,
    pub rows: Vec<BlowupRow>,
}

const COLUMNS: [&str; 10] = [
    "n",
    "input_atoms",
    "disjuncts_raw",
    "atoms_raw",
    "disjuncts",
    "total_atoms",
    "max_atoms",
    "acyclic",
    "checked",
    "equivalent",
];

impl BlowupRow {
    fn cells(&self) -> [String; 10] {
        [
            self.n.to_string(),
            self.input_atoms.to_string(),
            self.disjuncts_before_merge.to_string(),
            self.atoms_before_merge.to_string(),
            self.disjuncts.to_string(),
            self.total_atoms.to_string(),
            self.max_atoms.to_string(),
            self.all_acyclic.to_string(),
            self.checked.to_string(),
            self.equivalent.to_string(),
        ]
    }
}

impl BlowupReport {
    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.cells().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 10]> = self.rows.iter().map(BlowupRow::cells).collect();
        let width: Vec<usize> = (0..COLUMNS.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([COLUMNS[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: Vec<&str>| -> String {
            let padded: Vec<String> = cells.iter().zip(&width).map(|(s, w)| format!("{s:>w$}")).collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = format!("mode {}\n", self.mode.tag());
        out.push_str(&line(COLUMNS.to_vec()));
        for r in &rows {
            out.push_str(&line(r.iter().map(String::as_str).collect()));
        }
        out
    }
}

/// Options for comparing a rewrite of `D_n` with `D_n`.
#[derive(Debug, Clone)]
pub struct DiamondCheck {
    /// Random trees carrying each diamond label once.
    pub random_trees: usize,
    pub max_extra_nodes: usize,
    pub seed: u64,
}

impl Default for DiamondCheck {
    fn default() -> DiamondCheck {
        DiamondCheck { random_trees: 200, max_extra_nodes: 6, seed: 0 }
    }
}

/// `PS(n,1)` extended by a third choice per diamond: `Xi` and `X'i` on one node.
/// `choice[i]` is 0 for `Xi` first, 1 for `X'i` first, 2 for merged.
pub fn merged_ps(choice: &[u8]) -> PathStructure {
    let n = choice.len();
    let mut ps = gen_ps(n, 1, &choice.iter().map(|&c| c == 1).collect::<Vec<_>>()).expect("n >= 1");
    for (i, _) in choice.iter().enumerate().filter(|(_, &c)| c == 2) {
        let xp = ps.nodes.iter().position(|s| s.contains(&x_prime_label(i + 1))).expect("present");
        let x = ps.nodes.iter().position(|s| s.contains(&x_label(i + 1))).expect("present");
        let moved = std::mem::take(&mut ps.nodes[xp]);
        ps.nodes[x].extend(moved);
    }
    ps
}

/// Structures that separate near misses of `D_n`: every [`merged_ps`], each of
/// them with two labeled nodes swapped or merged or one label removed, and random
/// trees in which every label of `D_n` occurs once, possibly several on one node.
pub fn diamond_test_trees(n: usize, opts: &DiamondCheck) -> Result<Vec<Tree>, SuccinctError> {
    if n == 0 {
        return Err(SuccinctError::EmptyDiamond);
    }
    let mut structures = BTreeSet::new();
    for code in 0..3usize.pow(n as u32) {
        let choice: Vec<u8> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as u8).collect();
        let ps = merged_ps(&choice);
        let pos = ps.labelled_positions();
        for (i, &a) in pos.iter().enumerate() {
            for l in &ps.nodes[a] {
                let mut dropped = ps.clone();
                dropped.nodes[a].remove(l);
                structures.insert(dropped);
            }
            for &b in &pos[i + 1..] {
                let mut swapped = ps.clone();
                swapped.nodes.swap(a, b);
                structures.insert(swapped);
                for (keep, gone) in [(a, b), (b, a)] {
                    let mut merged = ps.clone();
                    let moved = std::mem::take(&mut merged.nodes[gone]);
                    merged.nodes[keep].extend(moved);
                    structures.insert(merged);
                }
            }
        }
        structures.insert(ps);
    }
    let mut out: Vec<Tree> = structures.iter().map(PathStructure::tree).collect();
    let mut labels = vec![y_label(1)];
    for i in 1..=n {
        labels.extend([x_label(i), x_prime_label(i), y_label(i + 1)]);
    }
    let mut rng = StdRng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_trees {
        let size = labels.len() + rng.gen_range(0..=opts.max_extra_nodes);
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); size];
        for v in 1..size {
            // Deep trees are the interesting ones: prefer the previous node as parent.
            let parent = if rng.gen_bool(0.7) { v - 1 } else { rng.gen_range(0..v) };
            children[parent].push(v);
        }
        let mut slots: Vec<usize> = (0..size).collect();
        slots.shuffle(&mut rng);
        let mut node_labels = vec![Vec::new(); size];
        for (l, &v) in labels.iter().zip(&slots) {
            let v = if rng.gen_bool(0.2) { rng.gen_range(0..size) } else { v };
            node_labels[v].push(l.clone());
        }
        out.push(Tree::from_children(0, &children, &node_labels));
    }
    Ok(out)
}

fn union_holds(parts: &[Compiled], index: &Index<'_>) -> bool {
    parts.iter().any(|c| index.holds(c))
}

/// Counts the test trees and reports whether the union agrees with `D_n` on all of them.
pub fn check_diamond_rewrite(
    n: usize,
    apq: &PositiveQuery,
    opts: &DiamondCheck,
) -> Result<(usize, bool), SuccinctError> {
    let d = Compiled::new(&gen_diamond(n)?);
    let parts: Vec<Compiled> = apq.disjuncts.iter().map(Compiled::new).collect();
    let trees = diamond_test_trees(n, opts)?;
    let agree = trees.iter().all(|t| {
        let index = Index::new(t);
        index.holds(&d) == union_holds(&parts, &index)
    });
    Ok((trees.len(), agree))
}

/// Rewrites `D_1..D_{n_max}` into APQs and records their sizes.
pub fn blowup_experiment(n_max: usize, mode: Mode, opts: &DiamondCheck) -> Result<BlowupReport, SuccinctError> {
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let d = gen_diamond(n)?;
        let r = rewrite_to_apq(&d, mode)?;
        let (checked, equivalent) = check_diamond_rewrite(n, &r.apq, opts)?;
        rows.push(BlowupRow {
            n,
            input_atoms: d.size(),
            disjuncts_before_merge: r.stats.disjuncts_before_merge,
            atoms_before_merge: r.stats.atoms_before_merge,
            disjuncts: r.apq.disjuncts.len(),
            total_atoms: r.apq.total_atoms(),
            max_atoms: r.apq.max_atoms(),
            all_acyclic: r.apq.is_apq(),
            checked,
            equivalent,
        });
    }
    Ok(BlowupReport { mode, rows })
}
