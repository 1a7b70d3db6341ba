//! Rewriting conjunctive queries into unions of acyclic conjunctive queries.
//!
//! Joins `R(x,z), S(y,z)` at the bottom of an undirected cycle are replaced by the
//! disjuncts of a join lifter, directed cycles are collapsed or refuted, and the
//! process repeats until every disjunct is a forest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::eval::{Answers, Compiled, Index};
use crate::query::{Atom, ConjunctiveQuery, PositiveQuery, Unary, Var};
use crate::tree::{enumerate_shapes, enumerate_trees, random_tree, Axis, NodeId, Tree};

/// Variable slots of a lifter formula. `S` is existentially quantified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    X,
    Y,
    Z,
    S,
}

impl Term {
    fn name(self) -> &'static str {
        match self {
            Term::X => "x",
            Term::Y => "y",
            Term::Z => "z",
            Term::S => "s",
        }
    }

    fn swap_xy(self) -> Term {
        match self {
            Term::X => Term::Y,
            Term::Y => Term::X,
            t => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiftAtom {
    pub axis: Axis,
    pub from: Term,
    pub to: Term,
}

/// One conjunction of a lifter: binary atoms plus at most one equality. Equalities
/// are ordered so that the second term is replaced by the first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Conjunction {
    pub atoms: Vec<LiftAtom>,
    pub eq: Option<(Term, Term)>,
}

/// Syntactic forms a conjunction may take. The first five are the classical ones;
/// `ForkX`, `ForkY` and `Via` are needed by the corrected Following lifters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `P(x,y) ∧ P'(y,z)`
    A,
    /// `P(y,x) ∧ P'(x,z)`
    B,
    /// `P(x,z) ∧ y=z`
    C,
    /// `P(y,z) ∧ x=z`
    D,
    /// `P(x,z) ∧ x=y`
    E,
    /// `P(x,y) ∧ P'(x,z)`
    ForkX,
    /// `P(y,x) ∧ P'(y,z)`
    ForkY,
    /// `∃s P(x,s) ∧ P'(s,z) ∧ P''(s,y)`
    Via,
    /// `∃s P(y,s) ∧ P'(s,z) ∧ P''(s,x)`
    ViaY,
}

impl Shape {
    pub fn is_classical(self) -> bool {
        matches!(self, Shape::A | Shape::B | Shape::C | Shape::D | Shape::E)
    }
}

impl Conjunction {
    pub fn shape(&self) -> Option<Shape> {
        use Term::*;
        let ends: Vec<(Term, Term)> = self.atoms.iter().map(|a| (a.from, a.to)).collect();
        let has = |e: (Term, Term)| ends.contains(&e);
        match (ends.len(), self.eq) {
            (1, Some(eq)) => match (ends[0], eq) {
                ((X, Z), (Y, Z)) => Some(Shape::C),
                ((Y, Z), (X, Z)) => Some(Shape::D),
                ((X, Z), (X, Y)) => Some(Shape::E),
                _ => None,
            },
            (2, None) => {
                if has((X, Y)) && has((Y, Z)) {
                    Some(Shape::A)
                } else if has((Y, X)) && has((X, Z)) {
                    Some(Shape::B)
                } else if has((X, Y)) && has((X, Z)) {
                    Some(Shape::ForkX)
                } else if has((Y, X)) && has((Y, Z)) {
                    Some(Shape::ForkY)
                } else {
                    None
                }
            }
            (3, None) if has((X, S)) && has((S, Z)) && has((S, Y)) => Some(Shape::Via),
            (3, None) if has((Y, S)) && has((S, Z)) && has((S, X)) => Some(Shape::ViaY),
            _ => None,
        }
    }

    fn swap_xy(&self) -> Conjunction {
        let mut atoms: Vec<LiftAtom> =
            self.atoms.iter().map(|a| LiftAtom { axis: a.axis, from: a.from.swap_xy(), to: a.to.swap_xy() }).collect();
        let mut eq = self.eq.map(|(a, b)| (a.swap_xy(), b.swap_xy()));
        if let Some((a, b)) = eq {
            let (keep, gone) = if a <= b { (a, b) } else { (b, a) };
            eq = Some((keep, gone));
            // Keep atoms over the surviving term so the classical forms are preserved.
            for at in &mut atoms {
                if at.from == gone {
                    at.from = keep;
                }
                if at.to == gone && gone != Term::Z {
                    at.to = keep;
                }
            }
        }
        atoms.sort();
        Conjunction { atoms, eq }
    }

    /// Truth of the conjunction at `(x, y, z) = (a, b, c)`.
    pub fn holds(&self, tree: &Tree, a: NodeId, b: NodeId, c: NodeId) -> bool {
        let check = |s: NodeId| {
            let val = |t: Term| match t {
                Term::X => a,
                Term::Y => b,
                Term::Z => c,
                Term::S => s,
            };
            self.eq.is_none_or(|(p, q)| val(p) == val(q))
                && self.atoms.iter().all(|at| tree.axis_holds(at.axis, val(at.from), val(at.to)))
        };
        if self.atoms.iter().any(|at| at.from == Term::S || at.to == Term::S) {
            tree.nodes().any(check)
        } else {
            check(0)
        }
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> =
            self.atoms.iter().map(|a| format!("{}({},{})", a.axis, a.from.name(), a.to.name())).collect();
        if let Some((p, q)) = self.eq {
            parts.push(format!("{}={}", p.name(), q.name()));
        }
        let body = parts.join(" & ");
        if self.atoms.iter().any(|a| a.from == Term::S || a.to == Term::S) {
            write!(f, "exists s: {body}")
        } else {
            f.write_str(&body)
        }
    }
}

/// A DNF equivalent to `R(x,z) ∧ S(y,z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinLifter {
    pub r: Axis,
    pub s: Axis,
    pub disjuncts: Vec<Conjunction>,
}

impl JoinLifter {
    pub fn holds(&self, tree: &Tree, a: NodeId, b: NodeId, c: NodeId) -> bool {
        self.disjuncts.iter().any(|d| d.holds(tree, a, b, c))
    }

    /// Axes mentioned by the lifter.
    pub fn axes(&self) -> BTreeSet<Axis> {
        self.disjuncts.iter().flat_map(|d| d.atoms.iter().map(|a| a.axis)).collect()
    }
}

impl fmt::Display for JoinLifter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.disjuncts.iter().map(|d| format!("({d})")).collect();
        write!(f, "psi[{},{}] = {}", self.r, self.s, parts.join(" | "))
    }
}

/// Which lifter table to consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifterTable {
    /// Lifters for the six non-Following axes.
    Basic,
    /// Following lifters exactly as published; unsound, kept for comparison.
    FollowingPublished,
    /// Corrected Following lifters (they use Child+).
    Following,
}

type Rule = (fn(Axis, Axis) -> bool, &'static str);

fn sib_axis(a: Axis) -> bool {
    matches!(a, Axis::NextSibling | Axis::NextSiblingStar | Axis::NextSiblingPlus)
}

fn star_of(a: Axis) -> Option<Axis> {
    match a {
        Axis::Child => Some(Axis::ChildStar),
        Axis::NextSibling => Some(Axis::NextSiblingStar),
        _ => None,
    }
}

fn plus_of(a: Axis) -> Option<Axis> {
    match a {
        Axis::Child => Some(Axis::ChildPlus),
        Axis::NextSibling => Some(Axis::NextSiblingPlus),
        _ => None,
    }
}

const BASIC_RULES: &[Rule] = &[
    (|r, s| r == s && matches!(r, Axis::Child | Axis::NextSibling), "R(x,z) & x=y"),
    (|r, s| r == s && matches!(r, Axis::ChildStar | Axis::NextSiblingStar), "R(x,z) & R(y,x) | R(x,y) & R(y,z)"),
    (
        |r, s| r == s && matches!(r, Axis::ChildPlus | Axis::NextSiblingPlus),
        "R(x,z) & R(y,x) | R(x,y) & R(y,z) | R(x,z) & x=y",
    ),
    (|r, s| star_of(r) == Some(s), "R(x,z) & y=z | R(x,z) & S(y,x)"),
    (|r, s| plus_of(r) == Some(s), "R(x,z) & x=y | R(x,z) & S(y,x)"),
    (
        |r, s| matches!((r, s), (Axis::ChildPlus, Axis::ChildStar) | (Axis::NextSiblingPlus, Axis::NextSiblingStar)),
        "R(x,z) & S(y,x) | R(x,y) & S(y,z)",
    ),
    (|r, s| sib_axis(r) && matches!(s, Axis::Child | Axis::ChildPlus), "R(x,z) & S(y,x)"),
    (|r, s| sib_axis(r) && s == Axis::ChildStar, "R(x,z) & y=z | R(x,z) & child+(y,x)"),
];

const PUBLISHED_FOLLOWING_RULES: &[Rule] = &[
    (|r, s| r == Axis::NextSibling && s == Axis::Following, "R(x,z) & x=y | R(x,z) & following(y,x)"),
    (
        |r, s| r == Axis::NextSiblingPlus && s == Axis::Following,
        "R(x,z) & x=y | R(x,z) & following(y,x) | R(x,y) & R(y,z)",
    ),
    (|r, s| r == Axis::NextSiblingStar && s == Axis::Following, "R(x,z) & following(y,x) | R(x,y) & nextsib+(y,z)"),
    (
        |r, s| r == Axis::Child && s == Axis::Following,
        "R(x,z) & x=y | R(x,z) & following(y,x) | R(x,y) & nextsib+(y,z)",
    ),
    (|r, s| r == Axis::Following && s == Axis::Following, "R(x,z) & x=y | R(x,z) & R(y,x) | R(x,y) & R(y,z)"),
];

const FOLLOWING_RULES: &[Rule] = &[
    (
        |r, s| r == Axis::NextSibling && s == Axis::Following,
        "R(x,z) & x=y | R(x,z) & following(y,x) | child+(x,y) & R(x,z)",
    ),
    (
        |r, s| r == Axis::NextSiblingPlus && s == Axis::Following,
        "R(x,z) & x=y | R(x,z) & following(y,x) | R(x,y) & R(y,z) | child+(x,y) & R(x,z) \
         | R(x,s) & R(s,z) & child+(s,y)",
    ),
    (
        |r, s| r == Axis::NextSiblingStar && s == Axis::Following,
        "R(x,z) & following(y,x) | R(x,y) & nextsib+(y,z) | R(x,s) & nextsib+(s,z) & child+(s,y)",
    ),
    (
        |r, s| r == Axis::Child && s == Axis::Following,
        "R(x,z) & following(y,x) | R(x,y) & nextsib+(y,z) | R(x,s) & nextsib+(s,z) & child+(s,y)",
    ),
    (
        |r, s| r == Axis::Following && s == Axis::Following,
        "R(x,z) & x=y | R(x,z) & R(y,x) | R(x,y) & R(y,z) | child+(y,x) & R(y,z) | child+(x,y) & R(x,z)",
    ),
];

fn parse_term(s: &str) -> Term {
    match s.trim() {
        "x" => Term::X,
        "y" => Term::Y,
        "z" => Term::Z,
        "s" => Term::S,
        other => panic!("bad lifter term {other:?}"),
    }
}

/// Parses a DNF such as `R(x,z) & x=y | R(x,z) & S(y,x)` with `R` and `S` bound.
fn parse_dnf(text: &str, r: Axis, s: Axis) -> Vec<Conjunction> {
    text.split('|')
        .map(|conj| {
            let mut atoms = Vec::new();
            let mut eq = None;
            for lit in conj.split('&') {
                let lit = lit.trim();
                if let Some((a, b)) = lit.split_once('=') {
                    let (a, b) = (parse_term(a), parse_term(b));
                    eq = Some(if a <= b { (a, b) } else { (b, a) });
                    continue;
                }
                let open = lit.find('(').expect("atom has arguments");
                let name = &lit[..open];
                let args = lit[open + 1..].trim_end_matches(')');
                let (a, b) = args.split_once(',').expect("binary atom");
                let axis = match name {
                    "R" => r,
                    "S" => s,
                    n => Axis::from_name(n).unwrap_or_else(|| panic!("unknown axis {n}")),
                };
                atoms.push(LiftAtom { axis, from: parse_term(a), to: parse_term(b) });
            }
            atoms.sort();
            Conjunction { atoms, eq }
        })
        .collect()
}

fn lookup(rules: &[Rule], r: Axis, s: Axis) -> Option<Vec<Conjunction>> {
    rules.iter().find(|(m, _)| m(r, s)).map(|(_, text)| parse_dnf(text, r, s))
}

/// The lifter for `(r, s)` from a table, resolving the symmetric case by exchanging
/// `x` and `y`. Following tables fall back to the basic table for pairs without
/// Following.
pub fn lifter(r: Axis, s: Axis, table: LifterTable) -> Option<JoinLifter> {
    let rules: &[Rule] = match table {
        LifterTable::Basic => BASIC_RULES,
        LifterTable::FollowingPublished => PUBLISHED_FOLLOWING_RULES,
        LifterTable::Following => FOLLOWING_RULES,
    };
    if table != LifterTable::Basic && r != Axis::Following && s != Axis::Following {
        return lifter(r, s, LifterTable::Basic);
    }
    if let Some(d) = lookup(rules, r, s) {
        return Some(JoinLifter { r, s, disjuncts: d });
    }
    lookup(rules, s, r).map(|d| JoinLifter { r, s, disjuncts: d.iter().map(Conjunction::swap_xy).collect() })
}

/// Every `(R, S)` pair a table defines, with the lifter.
pub fn table_entries(table: LifterTable) -> Vec<JoinLifter> {
    let axes: Vec<Axis> = match table {
        LifterTable::Basic => Axis::ALL.into_iter().filter(|&a| a != Axis::Following).collect(),
        _ => vec![Axis::Child, Axis::NextSibling, Axis::NextSiblingStar, Axis::NextSiblingPlus, Axis::Following],
    };
    let mut out = Vec::new();
    for &r in &axes {
        for &s in &axes {
            if table != LifterTable::Basic && r != Axis::Following && s != Axis::Following {
                continue;
            }
            out.push(lifter(r, s, table).expect("table covers its axes"));
        }
    }
    out
}

/// Checks the shape of every conjunction in a table. Returns offending entries.
pub fn check_table_shapes(table: LifterTable) -> Vec<String> {
    let mut bad = Vec::new();
    for l in table_entries(table) {
        for d in &l.disjuncts {
            let ok = match (table, d.shape()) {
                (_, None) => false,
                (LifterTable::Following, Some(_)) => true,
                (_, Some(s)) => s.is_classical(),
            };
            if !ok {
                bad.push(format!("{}: {}", l, d));
            }
        }
    }
    bad
}

fn checked_tables() -> &'static () {
    static CHECK: OnceLock<()> = OnceLock::new();
    CHECK.get_or_init(|| {
        for t in [LifterTable::Basic, LifterTable::FollowingPublished, LifterTable::Following] {
            let bad = check_table_shapes(t);
            assert!(bad.is_empty(), "malformed lifter table {t:?}: {bad:?}");
        }
    })
}

/// Rewrite pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    /// Child, Child*, Child+ only; no new axes.
    ChildOnly,
    /// Child, Child+ and the sibling axes; no new axes.
    NoChildStar,
    /// All axes but Following; may add Child+.
    NoFollowing,
    /// Child, sibling axes and Following; may add NextSibling+ and Child+.
    WithFollowing,
    /// Any axes: Following eliminated, Child* split, then the basic lifters.
    Full,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::ChildOnly, Mode::NoChildStar, Mode::NoFollowing, Mode::WithFollowing, Mode::Full];

    pub fn tag(self) -> &'static str {
        match self {
            Mode::ChildOnly => "66a",
            Mode::NoChildStar => "66b",
            Mode::NoFollowing => "66c",
            Mode::WithFollowing => "69",
            Mode::Full => "610",
        }
    }

    pub fn from_tag(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.tag() == s)
    }

    pub fn admissible(self) -> &'static [Axis] {
        use Axis::*;
        match self {
            Mode::ChildOnly => &[Child, ChildStar, ChildPlus],
            Mode::NoChildStar => &[Child, ChildPlus, NextSibling, NextSiblingStar, NextSiblingPlus],
            Mode::NoFollowing => &[Child, ChildStar, ChildPlus, NextSibling, NextSiblingStar, NextSiblingPlus],
            Mode::WithFollowing => &[Child, NextSibling, NextSiblingStar, NextSiblingPlus, Following],
            Mode::Full => &Axis::ALL,
        }
    }

    /// Axes the pipeline may add to the input signature.
    pub fn added_axes(self) -> &'static [Axis] {
        match self {
            Mode::ChildOnly | Mode::NoChildStar => &[],
            Mode::NoFollowing => &[Axis::ChildPlus],
            Mode::WithFollowing | Mode::Full => &[Axis::ChildPlus, Axis::NextSiblingPlus],
        }
    }

    /// The first mode (in declaration order) admitting the signature.
    pub fn auto(sig: &BTreeSet<Axis>) -> Mode {
        Mode::ALL.into_iter().find(|m| sig.iter().all(|a| m.admissible().contains(a))).expect("Full admits all")
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewriteError {
    #[error("axis {axis} is not admissible in mode {mode}")]
    ModeMismatch { mode: Mode, axis: Axis },
    #[error("no join lifter for ({r}, {s})")]
    NoLifter { r: Axis, s: Axis },
    #[error("rewrite did not terminate within {cap} steps")]
    IterationCap { cap: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteStats {
    /// Worklist steps taken.
    pub iterations: usize,
    /// Queries after preprocessing, before any lifting.
    pub expanded: usize,
    /// Largest preprocessed query, in atoms.
    pub expanded_max_atoms: usize,
    /// Disjuncts dropped because of an irreflexive directed cycle.
    pub refuted: usize,
    pub disjuncts_before_merge: usize,
    pub atoms_before_merge: usize,
}

#[derive(Debug, Clone)]
pub struct Rewrite {
    pub apq: PositiveQuery,
    pub stats: RewriteStats,
}

pub const ITERATION_CAP: usize = 2_000_000;

fn fresh(q: &ConjunctiveQuery, prefix: &str) -> Var {
    let used = q.variables();
    (1..).map(|k| format!("{prefix}{k}")).find(|v| !used.contains(v)).expect("unbounded")
}

/// Repeatedly collapses directed cycles made of Child* and NextSibling* atoms.
/// Returns `None` if some directed cycle contains another axis.
pub fn collapse_directed_cycles(q: &ConjunctiveQuery) -> Option<ConjunctiveQuery> {
    let mut q = q.clone();
    while let Some(cycle) = q.find_directed_cycle() {
        let mut vars: Vec<Var> = Vec::new();
        for &i in &cycle {
            match &q.atoms()[i] {
                Atom::Binary(a, x, _) if a.is_reflexive() => vars.push(x.clone()),
                _ => return None,
            }
        }
        let keep = vars.iter().min().expect("nonempty cycle").clone();
        for v in &vars {
            if *v != keep {
                q = q.substitute(v, &keep);
            }
        }
        let loops: Vec<usize> = q
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, Atom::Binary(ax, x, y) if ax.is_reflexive() && x == y))
            .map(|(i, _)| i)
            .collect();
        q = q.without_atoms(&loops);
        if !q.body_variables().contains(&keep) {
            q.push(Atom::node(&keep));
        }
    }
    Some(q)
}

/// Replaces every Following atom by `Child*(z1,x), NextSibling+(z1,z2), Child*(z2,y)`.
pub fn eliminate_following(q: &ConjunctiveQuery) -> ConjunctiveQuery {
    let mut result = ConjunctiveQuery::new(&q.name, q.head.clone(), Vec::new());
    let mut scratch = q.clone();
    for a in q.atoms() {
        match a {
            Atom::Binary(Axis::Following, x, y) => {
                let z1 = fresh(&scratch, "f");
                scratch.push(Atom::node(&z1));
                let z2 = fresh(&scratch, "f");
                scratch.push(Atom::node(&z2));
                result.push(Atom::binary(Axis::ChildStar, &z1, x));
                result.push(Atom::binary(Axis::NextSiblingPlus, &z1, &z2));
                result.push(Atom::binary(Axis::ChildStar, &z2, y));
            }
            other => result.push(other.clone()),
        }
    }
    result
}

/// The 2^n queries obtained by replacing each Child* atom by Child+ or by an
/// identification of its endpoints.
pub fn split_child_star(q: &ConjunctiveQuery) -> Vec<ConjunctiveQuery> {
    let mut done = vec![q.clone()];
    loop {
        let mut next = Vec::new();
        let mut changed = false;
        for cq in done {
            let pos = cq.atoms().iter().position(|a| matches!(a, Atom::Binary(Axis::ChildStar, ..)));
            let Some(i) = pos else {
                next.push(cq);
                continue;
            };
            changed = true;
            let Atom::Binary(_, x, y) = cq.atoms()[i].clone() else { unreachable!() };
            let mut plus = cq.without_atoms(&[i]);
            plus.push(Atom::binary(Axis::ChildPlus, &x, &y));
            next.push(plus);
            let mut same = cq.without_atoms(&[i]).substitute(&y, &x);
            if !same.body_variables().contains(&x) {
                same.push(Atom::node(&x));
            }
            next.push(same);
        }
        done = next;
        if !changed {
            return done;
        }
    }
}

fn apply_conjunction(
    q: &ConjunctiveQuery,
    e1: usize,
    e2: usize,
    x: &Var,
    y: &Var,
    z: &Var,
    c: &Conjunction,
) -> ConjunctiveQuery {
    let mut out = q.without_atoms(&[e1, e2]);
    let s = fresh(q, "s");
    let var = |t: Term| -> Var {
        match t {
            Term::X => x.clone(),
            Term::Y => y.clone(),
            Term::Z => z.clone(),
            Term::S => s.clone(),
        }
    };
    for a in &c.atoms {
        out.push(Atom::binary(a.axis, &var(a.from), &var(a.to)));
    }
    if let Some((keep, gone)) = c.eq {
        let (k, g) = (var(keep), var(gone));
        if k != g {
            out = out.substitute(&g, &k);
        }
    }
    keep_head_safe(&mut out);
    out
}

fn keep_head_safe(q: &mut ConjunctiveQuery) {
    let body = q.body_variables();
    let missing: BTreeSet<Var> = q.head.iter().filter(|v| !body.contains(*v)).cloned().collect();
    for v in missing {
        q.push(Atom::node(&v));
    }
}

fn check_mode(q: &ConjunctiveQuery, mode: Mode) -> Result<(), RewriteError> {
    for a in q.signature() {
        if !mode.admissible().contains(&a) {
            return Err(RewriteError::ModeMismatch { mode, axis: a });
        }
    }
    Ok(())
}

/// Rewrites `q` into an equivalent union of acyclic conjunctive queries. Disjuncts
/// are merged up to variable renaming and sorted by canonical form. An
/// unsatisfiable input yields the empty union.
pub fn rewrite_to_apq(q: &ConjunctiveQuery, mode: Mode) -> Result<Rewrite, RewriteError> {
    checked_tables();
    check_mode(q, mode)?;
    let mut stats = RewriteStats::default();
    let mut work: Vec<ConjunctiveQuery> = match mode {
        Mode::Full => split_child_star(&eliminate_following(q)),
        _ => vec![q.clone()],
    };
    stats.expanded = work.len();
    stats.expanded_max_atoms = work.iter().map(|w| w.size()).max().unwrap_or(0);
    work.reverse();
    let table = match mode {
        Mode::WithFollowing => LifterTable::Following,
        _ => LifterTable::Basic,
    };
    let mut done: Vec<ConjunctiveQuery> = Vec::new();
    while let Some(cq) = work.pop() {
        stats.iterations += 1;
        if stats.iterations > ITERATION_CAP {
            return Err(RewriteError::IterationCap { cap: ITERATION_CAP });
        }
        let Some(cq) = collapse_directed_cycles(&cq) else {
            stats.refuted += 1;
            continue;
        };
        if cq.is_acyclic() {
            done.push(cq);
            continue;
        }
        let (z, e1, e2) = cq.find_undirected_cycle().expect("no directed cycle").expect("not a forest");
        let (Atom::Binary(r, x, _), Atom::Binary(s, y, _)) = (&cq.atoms()[e1], &cq.atoms()[e2]) else {
            unreachable!("cycle edges are binary atoms")
        };
        let mut branches = match lifter(*r, *s, table) {
            Some(l) => l.disjuncts.iter().map(|c| apply_conjunction(&cq, e1, e2, x, y, &z, c)).collect::<Vec<_>>(),
            None if mode == Mode::WithFollowing && (*r == Axis::Following || *s == Axis::Following) => {
                // No lifter pairs Following with Child+: expand that Following atom.
                let e = if *r == Axis::Following { e1 } else { e2 };
                let Atom::Binary(_, fx, fy) = &cq.atoms()[e] else { unreachable!() };
                let mut rest = cq.without_atoms(&[e]);
                let z1 = fresh(&cq, "f");
                let z2 = (1..)
                    .map(|k| format!("f{k}"))
                    .find(|v| *v != z1 && !cq.variables().contains(v))
                    .expect("unbounded");
                rest.push(Atom::binary(Axis::ChildStar, &z1, fx));
                rest.push(Atom::binary(Axis::NextSiblingPlus, &z1, &z2));
                rest.push(Atom::binary(Axis::ChildStar, &z2, fy));
                split_child_star(&rest)
            }
            None => return Err(RewriteError::NoLifter { r: *r, s: *s }),
        };
        branches.reverse();
        work.extend(branches);
    }
    stats.disjuncts_before_merge = done.len();
    stats.atoms_before_merge = done.iter().map(|d| d.size()).sum();
    let mut merged: BTreeMap<String, ConjunctiveQuery> = BTreeMap::new();
    for d in done {
        merged.entry(d.canonical_key()).or_insert(d);
    }
    let apq = PositiveQuery { disjuncts: merged.into_values().collect() };
    Ok(Rewrite { apq, stats })
}

/// Satisfiability on some tree. A satisfying valuation survives contraction of all
/// nodes outside its image except the root, so trees with `|Var| + 1` nodes, every
/// node carrying every label, suffice.
pub fn is_satisfiable(q: &ConjunctiveQuery) -> bool {
    let labels: Vec<String> = q
        .unary_atoms()
        .filter_map(|(p, _)| match p {
            Unary::Label(l) => Some(l.clone()),
            Unary::Node => None,
        })
        .collect();
    let c = Compiled::new(q);
    enumerate_shapes(q.variables().len() + 1).any(|t| {
        let t = t.with_uniform_labels(&labels);
        Index::new(&t).holds(&c)
    })
}

/// Options for sampled equivalence testing.
#[derive(Debug, Clone)]
pub struct SampleOptions {
    /// All trees up to this many nodes over the mentioned labels.
    pub max_enum_nodes: usize,
    pub trials: usize,
    pub max_random_nodes: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> SampleOptions {
        SampleOptions { max_enum_nodes: 6, trials: 50, max_random_nodes: 12, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    NoDifference { trees: usize },
    Counterexample { tree: Box<Tree>, left: Answers, right: Answers },
}

impl Equivalence {
    pub fn holds(&self) -> bool {
        matches!(self, Equivalence::NoDifference { .. })
    }
}

/// A union compiled once for repeated evaluation.
pub struct CompiledUnion {
    arity: usize,
    parts: Vec<Compiled>,
}

impl CompiledUnion {
    pub fn new(p: &PositiveQuery, arity: usize) -> CompiledUnion {
        CompiledUnion { arity, parts: p.disjuncts.iter().map(Compiled::new).collect() }
    }

    pub fn answers(&self, index: &Index<'_>) -> Answers {
        let mut out = Answers::new();
        for c in &self.parts {
            if self.arity == 0 {
                if index.holds(c) {
                    out.insert(Vec::new());
                    return out;
                }
            } else {
                out.extend(index.answers(c));
            }
        }
        out
    }
}

fn mentioned_labels(ps: &[&PositiveQuery]) -> Vec<String> {
    let mut out: BTreeSet<String> = BTreeSet::new();
    for p in ps {
        for q in &p.disjuncts {
            for (u, _) in q.unary_atoms() {
                if let Unary::Label(l) = u {
                    out.insert(l.clone());
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Compares two unions on every small tree and on random larger ones. Random trees
/// additionally use one label mentioned by neither query.
pub fn is_equivalent_sampled(p1: &PositiveQuery, p2: &PositiveQuery, opts: &SampleOptions) -> Equivalence {
    let arity = p1.arity().or(p2.arity()).unwrap_or(0);
    let (c1, c2) = (CompiledUnion::new(p1, arity), CompiledUnion::new(p2, arity));
    let labels = mentioned_labels(&[p1, p2]);
    let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    let mut trees = 0;
    let mut compare = |t: &Tree| -> Option<Equivalence> {
        trees += 1;
        let index = Index::new(t);
        let (a, b) = (c1.answers(&index), c2.answers(&index));
        (a != b).then(|| Equivalence::Counterexample { tree: Box::new(t.clone()), left: a, right: b })
    };
    for t in enumerate_trees(opts.max_enum_nodes, &refs) {
        if let Some(cx) = compare(&t) {
            return cx;
        }
    }
    let fresh_label = (0..).map(|k| format!("Fresh{k}")).find(|l| !labels.contains(l)).expect("unbounded");
    let mut with_fresh = refs.clone();
    with_fresh.push(&fresh_label);
    let mut rng = StdRng::seed_from_u64(opts.seed);
    for _ in 0..opts.trials {
        let n = rng.gen_range(1..=opts.max_random_nodes.max(1));
        let t = random_tree(&mut rng, n, &with_fresh, 0.6);
        if let Some(cx) = compare(&t) {
            return cx;
        }
    }
    Equivalence::NoDifference { trees }
}
