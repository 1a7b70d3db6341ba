//! Reductions from positive 1-in-3 SAT to Boolean query evaluation on fixed trees.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::query::{Atom, ConjunctiveQuery, Var};
use crate::tree::{Axis, NodeId, Tree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("clause {clause} repeats a literal")]
    RepeatedLiteral { clause: usize },
    #[error("clause {clause} mentions variable {var} outside 0..{num_vars}")]
    VariableRange { clause: usize, var: usize, num_vars: usize },
    #[error("{num_vars} variables exceed the brute-force limit of {limit}")]
    TooLarge { num_vars: usize, limit: usize },
}

/// Clauses of three distinct positive literals over variables `0..num_vars`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OneInThreeInstance {
    pub num_vars: usize,
    pub clauses: Vec<[usize; 3]>,
}

pub const BRUTE_FORCE_LIMIT: usize = 24;

impl OneInThreeInstance {
    pub fn new(num_vars: usize, clauses: Vec<[usize; 3]>) -> Result<OneInThreeInstance, InstanceError> {
        for (i, c) in clauses.iter().enumerate() {
            if let Some(&var) = c.iter().find(|&&v| v >= num_vars) {
                return Err(InstanceError::VariableRange { clause: i, var, num_vars });
            }
            if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
                return Err(InstanceError::RepeatedLiteral { clause: i });
            }
        }
        Ok(OneInThreeInstance { num_vars, clauses })
    }

    /// One clause per line, three 1-based variable numbers; `c` or `%` lines are comments.
    pub fn parse(text: &str) -> Result<OneInThreeInstance, InstanceError> {
        let mut clauses = Vec::new();
        let mut num_vars = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') || line.starts_with('c') {
                continue;
            }
            let nums: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse::<usize>).collect();
            let nums = nums.map_err(|e| InstanceError::Syntax { line: i + 1, msg: e.to_string() })?;
            if nums.len() != 3 || nums.contains(&0) {
                return Err(InstanceError::Syntax { line: i + 1, msg: "expected three positive integers".into() });
            }
            num_vars = num_vars.max(*nums.iter().max().unwrap());
            clauses.push([nums[0] - 1, nums[1] - 1, nums[2] - 1]);
        }
        OneInThreeInstance::new(num_vars, clauses)
    }

    /// Variables actually mentioned.
    pub fn used_vars(&self) -> BTreeSet<usize> {
        self.clauses.iter().flatten().copied().collect()
    }

    /// Representative up to variable renaming, clause order and literal order.
    pub fn canonical(&self) -> OneInThreeInstance {
        let used: Vec<usize> = self.used_vars().into_iter().collect();
        let mut best: Option<Vec<[usize; 3]>> = None;
        let mut perm: Vec<usize> = (0..used.len()).collect();
        loop {
            let map = |v: usize| perm[used.binary_search(&v).unwrap()];
            let mut cs: Vec<[usize; 3]> = self
                .clauses
                .iter()
                .map(|c| {
                    let mut t = c.map(map);
                    t.sort();
                    t
                })
                .collect();
            cs.sort();
            if best.as_ref().is_none_or(|b| cs < *b) {
                best = Some(cs);
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        OneInThreeInstance { num_vars: used.len(), clauses: best.unwrap_or_default() }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else { return false };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

impl fmt::Display for OneInThreeInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{} {} {}", c[0] + 1, c[1] + 1, c[2] + 1)?;
        }
        Ok(())
    }
}

/// Exhaustive check over all assignments.
pub fn brute_1in3(inst: &OneInThreeInstance) -> Result<bool, InstanceError> {
    if inst.num_vars > BRUTE_FORCE_LIMIT {
        return Err(InstanceError::TooLarge { num_vars: inst.num_vars, limit: BRUTE_FORCE_LIMIT });
    }
    let masks: Vec<u32> = inst.clauses.iter().map(|c| c.iter().map(|&v| 1u32 << v).sum()).collect();
    Ok((0u32..1 << inst.num_vars).any(|a| masks.iter().all(|m| (a & m).count_ones() == 1)))
}

/// All instances with at most `max_clauses` clauses over at most `max_vars`
/// variables, one per class up to renaming and reordering, in canonical order.
pub fn canonical_instances(max_clauses: usize, max_vars: usize) -> Vec<OneInThreeInstance> {
    let mut triples = Vec::new();
    for a in 0..max_vars {
        for b in a + 1..max_vars {
            for c in b + 1..max_vars {
                triples.push([a, b, c]);
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut stack: Vec<(usize, Vec<[usize; 3]>)> = vec![(0, Vec::new())];
    while let Some((from, cs)) = stack.pop() {
        let inst = OneInThreeInstance { num_vars: max_vars, clauses: cs.clone() };
        seen.insert(inst.canonical());
        if cs.len() < max_clauses {
            for (i, t) in triples.iter().enumerate().skip(from) {
                let mut next = cs.clone();
                next.push(*t);
                stack.push((i, next));
            }
        }
    }
    seen.into_iter().collect()
}

/// A random instance with shuffled literal order.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, num_vars: usize, num_clauses: usize) -> OneInThreeInstance {
    assert!(num_vars >= 3);
    let vars: Vec<usize> = (0..num_vars).collect();
    let clauses = (0..num_clauses)
        .map(|_| {
            let pick: Vec<usize> = vars.choose_multiple(rng, 3).copied().collect();
            [pick[0], pick[1], pick[2]]
        })
        .collect();
    OneInThreeInstance { num_vars, clauses }
}

/// Target signatures of the reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Child and Child+.
    Tau4,
    /// Child and Child*.
    Tau5,
    /// Child and Following.
    Tau6,
    /// Child+ and Following.
    Tau7,
    /// Child* and Following.
    Tau8,
    /// Following and NextSibling.
    Tau15,
}

impl Target {
    pub const ALL: [Target; 6] = [Target::Tau4, Target::Tau5, Target::Tau6, Target::Tau7, Target::Tau8, Target::Tau15];

    pub fn name(self) -> &'static str {
        match self {
            Target::Tau4 => "tau4",
            Target::Tau5 => "tau5",
            Target::Tau6 => "tau6",
            Target::Tau7 => "tau7",
            Target::Tau8 => "tau8",
            Target::Tau15 => "tau15",
        }
    }

    pub fn from_name(s: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn axes(self) -> BTreeSet<Axis> {
        let v: &[Axis] = match self {
            Target::Tau4 => &[Axis::Child, Axis::ChildPlus],
            Target::Tau5 => &[Axis::Child, Axis::ChildStar],
            Target::Tau6 => &[Axis::Child, Axis::Following],
            Target::Tau7 => &[Axis::ChildPlus, Axis::Following],
            Target::Tau8 => &[Axis::ChildStar, Axis::Following],
            Target::Tau15 => &[Axis::Following, Axis::NextSibling],
        };
        v.iter().copied().collect()
    }

    pub fn reduce(self, inst: &OneInThreeInstance) -> GadgetOutput {
        match self {
            Target::Tau4 => reduce_tau45(inst, false),
            Target::Tau5 => reduce_tau45(inst, true),
            Target::Tau6 | Target::Tau7 | Target::Tau8 | Target::Tau15 => reduce_doubled(inst, self),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct GadgetOutput {
    pub tree: Tree,
    pub query: ConjunctiveQuery,
    pub target: Target,
}

/// Accumulates query atoms; `chain` expands `axis^k(x,y)` into `k` atoms.
struct Builder {
    atoms: Vec<Atom>,
    fresh: usize,
}

impl Builder {
    fn new() -> Builder {
        Builder { atoms: Vec::new(), fresh: 0 }
    }

    fn label(&mut self, l: &str, x: &str) {
        self.atoms.push(Atom::label(l, x));
    }

    fn atom(&mut self, axis: Axis, x: &str, y: &str) {
        self.atoms.push(Atom::binary(axis, x, y));
    }

    fn chain(&mut self, axis: Axis, k: usize, x: &str, y: &str) {
        assert!(k >= 1);
        let mut prev: Var = x.to_string();
        for step in 0..k {
            let next = if step + 1 == k {
                y.to_string()
            } else {
                self.fresh += 1;
                format!("t{}", self.fresh)
            };
            self.atom(axis, &prev, &next);
            prev = next;
        }
    }

    fn finish(self) -> ConjunctiveQuery {
        ConjunctiveQuery::boolean(self.atoms)
    }
}

/// Moves every label to a fresh leaf child of its node, one label per leaf.
fn push_down_labels(t: &Tree) -> Tree {
    fn go(t: &Tree, v: NodeId, out: &mut String) {
        out.push_str("(-");
        for l in t.labels(v) {
            out.push_str(&format!(" ({l})"));
        }
        for &c in t.children(v) {
            out.push(' ');
            go(t, c, out);
        }
        out.push(')');
    }
    let mut s = String::new();
    go(t, t.root(), &mut s);
    Tree::parse(&s).expect("well-formed")
}

/// The fixed tree for the Child/Child+ and Child/Child* reductions, before
/// labels are pushed down: a path `v1 v2 v3` labeled X, and below `v3` three
/// chains `w[k][1..=10]`.
pub fn tau45_tree_multilabel() -> Tree {
    let mut s = String::from("(X (X (X");
    for k in 1..=3 {
        let mut closing = String::new();
        for j in 1..=10 {
            let mut labels: Vec<String> = Vec::new();
            if j == k {
                labels.push("Y".into());
            }
            for kk in 1..=3 {
                if (kk == k && j == 5 + k) || (kk != k && (4..=10).contains(&j)) {
                    labels.push(format!("L{kk}"));
                }
            }
            let text = if labels.is_empty() { "-".to_string() } else { labels.join(",") };
            s.push_str(&format!(" ({text}"));
            closing.push(')');
        }
        s.push_str(&closing);
    }
    s.push_str(")))");
    Tree::parse(&s).expect("well-formed")
}

pub fn tau45_tree() -> Tree {
    push_down_labels(&tau45_tree_multilabel())
}

/// Child/Child+ (`star = false`) or Child/Child* (`star = true`) reduction.
pub fn reduce_tau45(inst: &OneInThreeInstance, star: bool) -> GadgetOutput {
    let mut b = Builder::new();
    let mut leaf = 0;
    let mut labelled = |b: &mut Builder, l: &str, x: &str| {
        leaf += 1;
        let h = format!("h{leaf}");
        b.atom(Axis::Child, x, &h);
        b.label(l, &h);
    };
    let m = inst.clauses.len();
    for i in 0..m {
        let (x, y) = (format!("x{i}"), format!("y{i}"));
        labelled(&mut b, "X", &x);
        labelled(&mut b, "Y", &y);
        b.chain(Axis::Child, 3, &x, &y);
    }
    let down = if star { Axis::ChildStar } else { Axis::ChildPlus };
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            for k in 0..3 {
                for l in 0..3 {
                    if inst.clauses[i][k] != inst.clauses[j][l] {
                        continue;
                    }
                    let z = format!("z{}_{}_{i}_{j}", k + 1, l + 1);
                    labelled(&mut b, &format!("L{}", k + 1), &z);
                    b.atom(down, &format!("y{i}"), &z);
                    b.chain(Axis::Child, 8 + k - l, &format!("x{j}"), &z);
                }
            }
        }
    }
    let target = if star { Target::Tau5 } else { Target::Tau4 };
    GadgetOutput { tree: tau45_tree(), query: b.finish(), target }
}

/// Leaves up to the end of the subtree of `v` and leaves strictly before `v`, in
/// document order. `Following^n(u,v)` holds iff `before(v) - through(u) >= n-1`.
fn leaf_counts(t: &Tree) -> (Vec<usize>, Vec<usize>) {
    let mut before = vec![0; t.len()];
    let mut through = vec![0; t.len()];
    let mut leaves = 0;
    let mut prefix = vec![0; t.len() + 1];
    for v in t.nodes() {
        before[v] = leaves;
        if t.children(v).is_empty() {
            leaves += 1;
        }
        prefix[v + 1] = leaves;
    }
    for v in t.nodes() {
        through[v] = prefix[t.subtree_last(v) + 1];
    }
    (through, before)
}

/// Smallest `n` such that `Following^n(u,v)` fails; zero if `Following(u,v)` fails.
fn following_reach(t: &Tree, u: NodeId, v: NodeId) -> usize {
    let (through, before) = leaf_counts(t);
    if v <= t.subtree_last(u) {
        0
    } else {
        before[v] - through[u] + 2
    }
}

/// How a test reaches from a clause variable to the node its Following chain uses.
#[derive(Debug, Clone, Copy)]
enum Helper {
    Itself,
    /// A labelled node below the variable, via the gadget's vertical axis.
    Below(&'static str),
    /// The labelled previous sibling.
    Prev(&'static str),
    /// The labelled next sibling.
    Next(&'static str),
}

/// `Following^n(helper(v_from), helper(v_to))`, with `n` the largest value keeping
/// every listed pair of positions possible. Positions index the nodes of a label
/// in document order, so 0 is the topmost one.
struct Test {
    from: (usize, Helper),
    to: (usize, Helper),
    keep: &'static [(usize, usize)],
}

const KEEP12: &[(usize, usize)] = &[(0, 1), (1, 0), (1, 2)];
const KEEP13: &[(usize, usize)] = &[(0, 1), (1, 1), (1, 0)];
const KEEP23: &[(usize, usize)] = &[(1, 1), (0, 1), (2, 0)];

/// Clause gadget: a data fragment holding `L1` at positions 1, 2, `L2` at 3, 4, 5
/// and `L3` at 6, 7, and Following tests between the variables `v1, v2, v3`.
struct ClauseGadget {
    fragment: &'static str,
    tests: &'static [Test],
}

// Every top node contains the other nodes of its label. Helpers of the top node
// come first when the test minimises over them and last when it maximises, so
// Child, Child+ and Child* select the same helper.
const TAU6: ClauseGadget = ClauseGadget {
    fragment: "(- (L1 (A) (L1 (A)) (-)) (L2 (C) (L2 (B,C)) (-) (L2 (B,C)) (B)) (L3 (-) (L3 (A)) (A)))",
    tests: &[
        Test { from: (0, Helper::Itself), to: (1, Helper::Itself), keep: KEEP12 },
        Test { from: (0, Helper::Below("A")), to: (1, Helper::Below("B")), keep: KEEP12 },
        Test { from: (0, Helper::Itself), to: (2, Helper::Itself), keep: KEEP13 },
        Test { from: (1, Helper::Itself), to: (2, Helper::Itself), keep: KEEP23 },
        Test { from: (1, Helper::Below("C")), to: (2, Helper::Below("A")), keep: KEEP23 },
    ],
};

const TAU15: ClauseGadget = ClauseGadget {
    fragment: "(- (P) (L1 (P) (L1) (-)) (R) (L2 (R) (L2) (Q) (R) (L2) (Q)) (Q) (L3 (-) (L3) (N)) (N))",
    tests: &[
        Test { from: (0, Helper::Itself), to: (1, Helper::Itself), keep: KEEP12 },
        Test { from: (0, Helper::Prev("P")), to: (1, Helper::Next("Q")), keep: KEEP12 },
        Test { from: (0, Helper::Itself), to: (2, Helper::Itself), keep: KEEP13 },
        Test { from: (1, Helper::Itself), to: (2, Helper::Itself), keep: KEEP23 },
        Test { from: (1, Helper::Prev("R")), to: (2, Helper::Next("N")), keep: KEEP23 },
    ],
};

impl ClauseGadget {
    fn tree(&self) -> Tree {
        Tree::parse(self.fragment).expect("well-formed fragment")
    }

    /// Nodes labelled `L1, L2, L3`, in document order.
    fn positions(&self) -> [Vec<NodeId>; 3] {
        let t = self.tree();
        [1, 2, 3].map(|k| t.nodes().filter(|&v| t.has_label(v, &format!("L{k}"))).collect())
    }

    /// Chain lengths of the tests, derived from the fragment with helpers taken
    /// as children.
    fn thresholds(&self) -> Vec<usize> {
        let t = self.tree();
        let pos = self.positions();
        let resolve = |v: NodeId, h: Helper| -> NodeId {
            let pick = |cands: Vec<NodeId>, l: &str| {
                cands.into_iter().find(|&u| t.has_label(u, l)).expect("gadget helper present")
            };
            match h {
                Helper::Itself => v,
                Helper::Below(l) => pick(t.children(v).to_vec(), l),
                Helper::Prev(l) => pick(t.nodes().filter(|&u| t.next_sibling(u) == Some(v)).collect(), l),
                Helper::Next(l) => pick(t.next_sibling(v).into_iter().collect(), l),
            }
        };
        self.tests
            .iter()
            .map(|test| {
                test.keep
                    .iter()
                    .map(|&(a, c)| {
                        let u = resolve(pos[test.from.0][a], test.from.1);
                        let w = resolve(pos[test.to.0][c], test.to.1);
                        following_reach(&t, u, w) - 1
                    })
                    .min()
                    .expect("nonempty keep list")
            })
            .collect()
    }

    fn build(&self, b: &mut Builder, pre: &str, below: Axis) {
        let v = |n: String| format!("{pre}{n}");
        for k in 1..=3 {
            b.label(&format!("L{k}"), &v(format!("v{k}")));
        }
        for (i, (test, n)) in self.tests.iter().zip(self.thresholds()).enumerate() {
            let mut end = |(k, h): (usize, Helper), side: &str| -> String {
                let x = v(format!("v{}", k + 1));
                let h_var = v(format!("h{i}{side}"));
                match h {
                    Helper::Itself => return x,
                    Helper::Below(l) => {
                        b.atom(below, &x, &h_var);
                        b.label(l, &h_var);
                    }
                    Helper::Prev(l) => {
                        b.atom(Axis::NextSibling, &h_var, &x);
                        b.label(l, &h_var);
                    }
                    Helper::Next(l) => {
                        b.atom(Axis::NextSibling, &x, &h_var);
                        b.label(l, &h_var);
                    }
                }
                h_var
            };
            let from = end(test.from, "a");
            let to = end(test.to, "b");
            b.chain(Axis::Following, n, &from, &to);
        }
    }

    /// Two copies of the fragment under a common root.
    fn doubled(&self) -> Tree {
        Tree::parse(&format!("(- {0} {0})", self.fragment)).expect("well-formed")
    }

    /// `NAND(k,l)`: the least `n` such that `Following^n` fails from the topmost
    /// `L_k` of the left copy to the topmost `L_l` of the right copy.
    fn nand_table(&self) -> [[usize; 3]; 3] {
        let t = self.doubled();
        let size = self.tree().len();
        let pos = self.positions();
        let mut out = [[0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                out[k][l] = following_reach(&t, 1 + pos[k][0], 1 + size + pos[l][0]);
            }
        }
        out
    }
}

/// `NAND` of the doubled fragment of a Following reduction.
pub fn nand_table(target: Target) -> Option<[[usize; 3]; 3]> {
    gadget(target).map(ClauseGadget::nand_table)
}

/// `NAND(k,l)` of the Child/Following reduction (1-based).
pub fn nand(k: usize, l: usize) -> usize {
    TAU6.nand_table()[k - 1][l - 1]
}

fn gadget(target: Target) -> Option<&'static ClauseGadget> {
    match target {
        Target::Tau6 | Target::Tau7 | Target::Tau8 => Some(&TAU6),
        Target::Tau15 => Some(&TAU15),
        Target::Tau4 | Target::Tau5 => None,
    }
}

fn below_axis(target: Target) -> Axis {
    match target {
        Target::Tau7 => Axis::ChildPlus,
        Target::Tau8 => Axis::ChildStar,
        _ => Axis::Child,
    }
}

/// Reductions built from two copies of a clause gadget per clause.
fn reduce_doubled(inst: &OneInThreeInstance, target: Target) -> GadgetOutput {
    let g = gadget(target).expect("gadget-based target");
    let mut b = Builder::new();
    let m = inst.clauses.len();
    for i in 0..m {
        g.build(&mut b, &format!("a{i}"), below_axis(target));
        g.build(&mut b, &format!("b{i}"), below_axis(target));
    }
    let table = g.nand_table();
    for i in 0..m {
        for j in 0..m {
            for (k, &lit) in inst.clauses[i].iter().enumerate() {
                if !inst.clauses[j].contains(&lit) {
                    continue;
                }
                for (l, &other) in inst.clauses[j].iter().enumerate() {
                    if other == lit {
                        continue;
                    }
                    b.chain(Axis::Following, table[k][l], &format!("a{i}v{}", k + 1), &format!("b{j}v{}", l + 1));
                }
            }
        }
    }
    GadgetOutput { tree: g.doubled(), query: b.finish(), target }
}

/// Child/Following reduction.
pub fn reduce_tau6(inst: &OneInThreeInstance) -> GadgetOutput {
    reduce_doubled(inst, Target::Tau6)
}

/// The Child/Following reduction with Child replaced by `Child+` or `Child*`.
pub fn reduce_tau6_with(inst: &OneInThreeInstance, below: Axis) -> GadgetOutput {
    match below {
        Axis::Child => reduce_doubled(inst, Target::Tau6),
        Axis::ChildPlus => reduce_doubled(inst, Target::Tau7),
        Axis::ChildStar => reduce_doubled(inst, Target::Tau8),
        other => panic!("no vertical reduction over {other}"),
    }
}

/// Following/NextSibling reduction.
pub fn reduce_tau15(inst: &OneInThreeInstance) -> GadgetOutput {
    reduce_doubled(inst, Target::Tau15)
}

/// A single clause gadget over one copy of its fragment, with head `(v1, v2, v3)`.
pub fn clause_gadget(target: Target) -> Option<(Tree, ConjunctiveQuery)> {
    let g = gadget(target)?;
    let mut b = Builder::new();
    g.build(&mut b, "", below_axis(target));
    let head = vec!["v1".to_string(), "v2".to_string(), "v3".to_string()];
    Some((g.tree(), ConjunctiveQuery::new("q", head, b.atoms)))
}

/// Nodes of `L1, L2, L3` in a clause fragment, topmost first.
pub fn clause_positions(target: Target) -> Option<[Vec<NodeId>; 3]> {
    gadget(target).map(ClauseGadget::positions)
}
