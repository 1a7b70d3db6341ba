//! Query evaluation: arc consistency, minimum valuations under the X̄-property,
//! backtracking search, and the exhaustive oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::query::{ConjunctiveQuery, PositiveQuery, Unary, Var};
use crate::tree::{Axis, NodeId, Tree};
use crate::xbar::{classify, OrderTag, Verdict};

/// Candidate node sets per variable.
pub type PreValuation = BTreeMap<Var, BTreeSet<NodeId>>;
pub type Valuation = BTreeMap<Var, NodeId>;
pub type Answers = BTreeSet<Vec<NodeId>>;

pub const DEFAULT_BUDGET: u64 = 50_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("signature is not contained in the X-underbar family of {0}")]
    NotTractable(OrderTag),
    #[error("search space of {needed} valuations exceeds the budget of {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("tuple has {got} components, query head has {expected}")]
    Arity { expected: usize, got: usize },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
}

/// Per-tree successor/predecessor bitsets for every axis plus label extents.
pub struct Index<'t> {
    tree: &'t Tree,
    succ: Vec<Vec<FixedBitSet>>,
    pred: Vec<Vec<FixedBitSet>>,
    labels: HashMap<String, FixedBitSet>,
}

impl<'t> Index<'t> {
    pub fn new(tree: &'t Tree) -> Index<'t> {
        let n = tree.len();
        let mut succ = vec![vec![FixedBitSet::with_capacity(n); n]; Axis::ALL.len()];
        let mut pred = succ.clone();
        for axis in Axis::ALL {
            let (s, p) = (&mut succ[axis.index()], &mut pred[axis.index()]);
            for u in tree.nodes() {
                match axis {
                    Axis::Child => {
                        for &c in tree.children(u) {
                            s[u].insert(c);
                            p[c].insert(u);
                        }
                    }
                    Axis::ChildPlus | Axis::ChildStar | Axis::Following => {
                        let (lo, hi) = match axis {
                            Axis::ChildPlus => (u + 1, tree.subtree_last(u) + 1),
                            Axis::ChildStar => (u, tree.subtree_last(u) + 1),
                            _ => (tree.subtree_last(u) + 1, n),
                        };
                        s[u].insert_range(lo..hi);
                        for pv in &mut p[lo..hi] {
                            pv.insert(u);
                        }
                    }
                    _ => {
                        let Some(par) = tree.parent(u) else {
                            if axis == Axis::NextSiblingStar {
                                s[u].insert(u);
                                p[u].insert(u);
                            }
                            continue;
                        };
                        let sibs = tree.children(par);
                        let i = sibs.iter().position(|&c| c == u).expect("child of parent");
                        let range = match axis {
                            Axis::NextSibling => i + 1..(i + 2).min(sibs.len()),
                            Axis::NextSiblingPlus => i + 1..sibs.len(),
                            _ => i..sibs.len(),
                        };
                        for &v in &sibs[range] {
                            s[u].insert(v);
                            p[v].insert(u);
                        }
                    }
                }
            }
        }
        let mut labels: HashMap<String, FixedBitSet> = HashMap::new();
        for v in tree.nodes() {
            for l in tree.labels(v) {
                labels.entry(l.clone()).or_insert_with(|| FixedBitSet::with_capacity(n)).insert(v);
            }
        }
        Index { tree, succ, pred, labels }
    }

    pub fn tree(&self) -> &'t Tree {
        self.tree
    }

    fn n(&self) -> usize {
        self.tree.len()
    }

    fn succ(&self, axis: Axis, u: NodeId) -> &FixedBitSet {
        &self.succ[axis.index()][u]
    }

    fn pred(&self, axis: Axis, v: NodeId) -> &FixedBitSet {
        &self.pred[axis.index()][v]
    }

    fn full(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.n());
        s.insert_range(..);
        s
    }

    /// Domains after unary filtering and optional singleton restrictions.
    fn initial_domains(&self, c: &Compiled, fixed: &[(usize, NodeId)]) -> Vec<FixedBitSet> {
        let mut doms: Vec<FixedBitSet> = (0..c.vars.len()).map(|_| self.full()).collect();
        for (x, p) in &c.unary {
            match p {
                Unary::Node => {}
                Unary::Label(l) => match self.labels.get(l) {
                    Some(ext) => doms[*x].intersect_with(ext),
                    None => doms[*x].clear(),
                },
            }
        }
        for &(x, v) in fixed {
            let keep = doms[x].contains(v);
            doms[x].clear();
            if keep {
                doms[x].insert(v);
            }
        }
        doms
    }

    /// Subset-maximal arc-consistent domains by support counting, or `None` if some
    /// domain empties.
    pub fn arc_consistent(&self, c: &Compiled) -> Option<Vec<FixedBitSet>> {
        self.ac4(c, &[])
    }

    fn ac4(&self, c: &Compiled, fixed: &[(usize, NodeId)]) -> Option<Vec<FixedBitSet>> {
        let n = self.n();
        let mut doms = self.initial_domains(c, fixed);
        if doms.iter().any(|d| d.is_clear()) {
            return None;
        }
        // fwd[e][v]: successors of v inside D(y); bwd[e][w]: predecessors inside D(x).
        let mut fwd: Vec<Vec<u32>> = Vec::with_capacity(c.edges.len());
        let mut bwd: Vec<Vec<u32>> = Vec::with_capacity(c.edges.len());
        for &(axis, x, y) in &c.edges {
            let mut f = vec![0u32; n];
            for v in doms[x].ones() {
                f[v] = self.succ(axis, v).intersection_count(&doms[y]) as u32;
            }
            let mut b = vec![0u32; n];
            for w in doms[y].ones() {
                b[w] = self.pred(axis, w).intersection_count(&doms[x]) as u32;
            }
            fwd.push(f);
            bwd.push(b);
        }
        let mut queue: VecDeque<(usize, NodeId)> = VecDeque::new();
        for (e, &(_, x, y)) in c.edges.iter().enumerate() {
            let dead_x: Vec<NodeId> = doms[x].ones().filter(|&v| fwd[e][v] == 0).collect();
            for v in dead_x {
                doms[x].set(v, false);
                queue.push_back((x, v));
            }
            let dead_y: Vec<NodeId> = doms[y].ones().filter(|&w| bwd[e][w] == 0).collect();
            for w in dead_y {
                doms[y].set(w, false);
                queue.push_back((y, w));
            }
        }
        while let Some((u, a)) = queue.pop_front() {
            if doms[u].is_clear() {
                return None;
            }
            for &e in &c.adj[u] {
                let (axis, x, y) = c.edges[e];
                if x == u {
                    for w in self.succ(axis, a).ones() {
                        if doms[y].contains(w) {
                            bwd[e][w] -= 1;
                            if bwd[e][w] == 0 {
                                doms[y].set(w, false);
                                queue.push_back((y, w));
                            }
                        }
                    }
                }
                if y == u {
                    for v in self.pred(axis, a).ones() {
                        if doms[x].contains(v) {
                            fwd[e][v] -= 1;
                            if fwd[e][v] == 0 {
                                doms[x].set(v, false);
                                queue.push_back((x, v));
                            }
                        }
                    }
                }
            }
        }
        if doms.iter().any(|d| d.is_clear()) {
            None
        } else {
            Some(doms)
        }
    }

    /// Edge-based propagation to a fixpoint, used inside the search. Returns false
    /// when a domain empties.
    fn ac3(&self, c: &Compiled, doms: &mut [FixedBitSet], touched: &[usize]) -> bool {
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut queued = vec![false; c.edges.len()];
        for &x in touched {
            for &e in &c.adj[x] {
                if !queued[e] {
                    queued[e] = true;
                    queue.push_back(e);
                }
            }
        }
        let mut scratch = FixedBitSet::with_capacity(self.n());
        while let Some(e) = queue.pop_front() {
            queued[e] = false;
            let (axis, x, y) = c.edges[e];
            for (from, to, forward) in [(x, y, true), (y, x, false)] {
                // Keep v in D(from) iff it has a partner in D(to).
                scratch.clear();
                for w in doms[to].ones() {
                    let rel = if forward { self.pred(axis, w) } else { self.succ(axis, w) };
                    scratch.union_with(rel);
                }
                let before = doms[from].count_ones(..);
                doms[from].intersect_with(&scratch);
                let after = doms[from].count_ones(..);
                if after == 0 {
                    return false;
                }
                if after != before {
                    for &e2 in &c.adj[from] {
                        if e2 != e && !queued[e2] {
                            queued[e2] = true;
                            queue.push_back(e2);
                        }
                    }
                    if x == y && !queued[e] {
                        queued[e] = true;
                        queue.push_back(e);
                    }
                }
            }
        }
        true
    }

    /// Depth-first search with smallest-domain-first variable choice and ascending
    /// pre-order value choice. `vars` restricts branching to a subset; the remaining
    /// variables are only propagated. Calls `on_leaf` for every complete assignment of
    /// `vars`; stops when it returns true.
    fn search(
        &self,
        c: &Compiled,
        doms: &mut [FixedBitSet],
        vars: &[usize],
        on_leaf: &mut dyn FnMut(&[FixedBitSet]) -> bool,
    ) -> bool {
        let pick =
            vars.iter().copied().filter(|&x| doms[x].count_ones(..) > 1).min_by_key(|&x| (doms[x].count_ones(..), x));
        let Some(x) = pick else {
            return on_leaf(doms);
        };
        let values: Vec<NodeId> = doms[x].ones().collect();
        for v in values {
            let mut next = doms.to_vec();
            next[x].clear();
            next[x].insert(v);
            if self.ac3(c, &mut next, &[x]) && self.search(c, &mut next, vars, on_leaf) {
                return true;
            }
        }
        false
    }

    /// Some satisfying valuation, or `None`.
    pub fn find_valuation(&self, c: &Compiled) -> Option<Vec<NodeId>> {
        self.find_valuation_fixed(c, &[])
    }

    fn find_valuation_fixed(&self, c: &Compiled, fixed: &[(usize, NodeId)]) -> Option<Vec<NodeId>> {
        let mut doms = self.initial_domains(c, fixed);
        if doms.iter().any(|d| d.is_clear()) {
            return None;
        }
        let all: Vec<usize> = (0..c.vars.len()).collect();
        if !self.ac3(c, &mut doms, &all) {
            return None;
        }
        let mut found = None;
        self.search(c, &mut doms, &all, &mut |d| {
            found = Some(d.iter().map(|s| s.minimum().expect("singleton")).collect());
            true
        });
        found
    }

    /// Answer tuples by backtracking: head variables are branched first, then the
    /// rest of the query is decided by a satisfiability search.
    pub fn answers_backtracking(&self, c: &Compiled) -> Answers {
        let mut out = Answers::new();
        let mut doms = self.initial_domains(c, &[]);
        if doms.iter().any(|d| d.is_clear()) {
            return out;
        }
        let all: Vec<usize> = (0..c.vars.len()).collect();
        if !self.ac3(c, &mut doms, &all) {
            return out;
        }
        let head: Vec<usize> = c.head_set();
        let rest: Vec<usize> = (0..c.vars.len()).filter(|x| !head.contains(x)).collect();
        self.search(c, &mut doms, &head, &mut |d| {
            let mut inner = d.to_vec();
            if self.search(c, &mut inner, &rest, &mut |_| true) {
                out.insert(c.head.iter().map(|&h| d[h].minimum().expect("singleton")).collect());
            }
            false
        });
        out
    }

    /// Minimum valuation of the maximal arc-consistent pre-valuation under `order`.
    pub fn eval_xbar(&self, c: &Compiled, order: OrderTag) -> Result<Option<Vec<NodeId>>, EvalError> {
        if !c.signature.iter().all(|a| order.family().contains(a)) {
            return Err(EvalError::NotTractable(order));
        }
        Ok(self.arc_consistent(c).map(|doms| {
            doms.iter().map(|d| d.ones().min_by_key(|&v| order.rank(self.tree, v)).expect("nonempty domain")).collect()
        }))
    }

    /// Exhaustive valuation enumeration (atoms checked as soon as their variables are
    /// bound). Head variables are bound first so each head tuple needs one witness.
    pub fn answers_bruteforce(&self, c: &Compiled, budget: u64) -> Result<Answers, EvalError> {
        check_budget(self.n(), c.vars.len(), budget)?;
        let mut order: Vec<usize> = c.head_set();
        let nhead = order.len();
        let rest: Vec<usize> = (0..c.vars.len()).filter(|x| !order.contains(x)).collect();
        order.extend(rest);
        let mut out = Answers::new();
        let mut val = vec![usize::MAX; c.vars.len()];
        self.brute(c, &order, 0, nhead, &mut val, &mut out);
        Ok(out)
    }

    fn brute(
        &self,
        c: &Compiled,
        order: &[usize],
        k: usize,
        nhead: usize,
        val: &mut [NodeId],
        out: &mut Answers,
    ) -> bool {
        if k == order.len() {
            out.insert(c.head.iter().map(|&h| val[h]).collect());
            return true;
        }
        let x = order[k];
        for v in self.tree.nodes() {
            val[x] = v;
            if !c.consistent_at(self.tree, x, val) {
                continue;
            }
            if self.brute(c, order, k + 1, nhead, val, out) && k >= nhead {
                val[x] = usize::MAX;
                return true;
            }
        }
        val[x] = usize::MAX;
        false
    }

    /// Membership of a head tuple, via singleton restrictions.
    pub fn check_tuple(&self, c: &Compiled, t: &[NodeId]) -> Result<bool, EvalError> {
        if t.len() != c.head.len() {
            return Err(EvalError::Arity { expected: c.head.len(), got: t.len() });
        }
        if let Some(&bad) = t.iter().find(|&&v| v >= self.n()) {
            return Err(EvalError::InvalidNode(bad));
        }
        let mut fixed: Vec<(usize, NodeId)> = Vec::new();
        for (&h, &v) in c.head.iter().zip(t) {
            if let Some(&(_, w)) = fixed.iter().find(|(x, _)| *x == h) {
                if w != v {
                    return Ok(false);
                }
            } else {
                fixed.push((h, v));
            }
        }
        Ok(match classify(&c.signature) {
            Verdict::Tractable(_) => self.ac4(c, &fixed).is_some(),
            Verdict::Intractable(..) => self.find_valuation_fixed(c, &fixed).is_some(),
        })
    }

    /// All answer tuples by per-tuple membership checks over the candidates left by
    /// arc consistency.
    pub fn enumerate_answers(&self, c: &Compiled, budget: u64) -> Result<Answers, EvalError> {
        let head = c.head_set();
        check_budget(self.n(), head.len(), budget)?;
        let mut out = Answers::new();
        let Some(doms) = self.arc_consistent(c) else {
            return Ok(out);
        };
        let cands: Vec<Vec<NodeId>> = head.iter().map(|&h| doms[h].ones().collect()).collect();
        let mut pick = vec![0usize; head.len()];
        loop {
            let assign: HashMap<usize, NodeId> =
                head.iter().enumerate().map(|(i, &h)| (h, cands[i][pick[i]])).collect();
            let t: Vec<NodeId> = c.head.iter().map(|h| assign[h]).collect();
            if self.check_tuple(c, &t)? {
                out.insert(t);
            }
            let mut i = 0;
            loop {
                if i == pick.len() {
                    return Ok(out);
                }
                pick[i] += 1;
                if pick[i] < cands[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
        }
    }

    /// Answers by the cheapest exact method: arc consistency alone for acyclic
    /// queries of arity at most one and for tractable Boolean queries, backtracking
    /// otherwise.
    pub fn answers(&self, c: &Compiled) -> Answers {
        let head = c.head_set();
        if head.is_empty() && (c.acyclic || classify(&c.signature).is_tractable()) {
            return match self.arc_consistent(c) {
                Some(_) => Answers::from([Vec::new()]),
                None => Answers::new(),
            };
        }
        if head.len() == 1 && c.acyclic {
            return match self.arc_consistent(c) {
                Some(d) => d[head[0]].ones().map(|v| vec![v; c.head.len()]).collect(),
                None => Answers::new(),
            };
        }
        self.answers_backtracking(c)
    }

    /// Whether the Boolean closure of the query holds.
    pub fn holds(&self, c: &Compiled) -> bool {
        if c.acyclic || classify(&c.signature).is_tractable() {
            self.arc_consistent(c).is_some()
        } else {
            self.find_valuation(c).is_some()
        }
    }
}

fn check_budget(n: usize, k: usize, budget: u64) -> Result<(), EvalError> {
    let needed = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if needed > budget as u128 {
        Err(EvalError::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// Query with variables replaced by dense indices.
#[derive(Debug, Clone)]
pub struct Compiled {
    vars: Vec<Var>,
    head: Vec<usize>,
    unary: Vec<(usize, Unary)>,
    edges: Vec<(Axis, usize, usize)>,
    adj: Vec<Vec<usize>>,
    signature: BTreeSet<Axis>,
    acyclic: bool,
}

impl Compiled {
    pub fn new(q: &ConjunctiveQuery) -> Compiled {
        let vars = q.variables();
        let idx: HashMap<&Var, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let head = q.head.iter().map(|h| idx[h]).collect();
        let unary = q.unary_atoms().map(|(p, x)| (idx[x], p.clone())).collect();
        let edges: Vec<(Axis, usize, usize)> = q.binary_atoms().map(|(a, x, y)| (a, idx[x], idx[y])).collect();
        let mut adj = vec![Vec::new(); vars.len()];
        for (e, &(_, x, y)) in edges.iter().enumerate() {
            adj[x].push(e);
            if y != x {
                adj[y].push(e);
            }
        }
        Compiled { signature: q.signature(), acyclic: q.is_acyclic(), vars, head, unary, edges, adj }
    }

    pub fn variables(&self) -> &[Var] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.head.len()
    }

    /// Distinct head variable indices in order of first occurrence.
    fn head_set(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &h in &self.head {
            if !out.contains(&h) {
                out.push(h);
            }
        }
        out
    }

    /// Checks every atom mentioning `x` whose variables are all bound in `val`.
    fn consistent_at(&self, tree: &Tree, x: usize, val: &[NodeId]) -> bool {
        for (y, p) in &self.unary {
            if *y == x {
                if let Unary::Label(l) = p {
                    if !tree.has_label(val[x], l) {
                        return false;
                    }
                }
            }
        }
        for &e in &self.adj[x] {
            let (axis, a, b) = self.edges[e];
            if val[a] != usize::MAX && val[b] != usize::MAX && !tree.axis_holds(axis, val[a], val[b]) {
                return false;
            }
        }
        true
    }

    fn to_valuation(&self, v: &[NodeId]) -> Valuation {
        self.vars.iter().cloned().zip(v.iter().copied()).collect()
    }
}

/// Maximal arc-consistent pre-valuation by support counting.
pub fn arc_consistent_prevaluation(tree: &Tree, q: &ConjunctiveQuery) -> Option<PreValuation> {
    let c = Compiled::new(q);
    Index::new(tree).arc_consistent(&c).map(|doms| to_prevaluation(&c, &doms))
}

fn to_prevaluation(c: &Compiled, doms: &[FixedBitSet]) -> PreValuation {
    c.vars.iter().cloned().zip(doms.iter().map(|d| d.ones().collect())).collect()
}

/// Reference fixpoint: repeatedly drops unsupported candidates using direct axis
/// tests until nothing changes.
pub fn arc_consistent_prevaluation_naive(tree: &Tree, q: &ConjunctiveQuery) -> Option<PreValuation> {
    let mut theta: PreValuation = BTreeMap::new();
    for x in q.variables() {
        let cand: BTreeSet<NodeId> = tree
            .nodes()
            .filter(|&v| {
                q.unary_atoms().filter(|(_, y)| **y == x).all(|(p, _)| match p {
                    Unary::Node => true,
                    Unary::Label(l) => tree.has_label(v, l),
                })
            })
            .collect();
        theta.insert(x, cand);
    }
    loop {
        let mut changed = false;
        for (axis, x, y) in q.binary_atoms() {
            let keep_x: BTreeSet<NodeId> =
                theta[x].iter().copied().filter(|&v| theta[y].iter().any(|&w| tree.axis_holds(axis, v, w))).collect();
            if keep_x.len() != theta[x].len() {
                theta.insert(x.clone(), keep_x);
                changed = true;
            }
            let keep_y: BTreeSet<NodeId> =
                theta[y].iter().copied().filter(|&w| theta[x].iter().any(|&v| tree.axis_holds(axis, v, w))).collect();
            if keep_y.len() != theta[y].len() {
                theta.insert(y.clone(), keep_y);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if theta.values().any(|s| s.is_empty()) {
        None
    } else {
        Some(theta)
    }
}

/// Whether a pre-valuation is arc-consistent for the query.
pub fn is_arc_consistent(tree: &Tree, q: &ConjunctiveQuery, theta: &PreValuation) -> bool {
    let vars = q.variables();
    if vars.iter().any(|x| theta.get(x).is_none_or(|s| s.is_empty())) {
        return false;
    }
    for (p, x) in q.unary_atoms() {
        if let Unary::Label(l) = p {
            if theta[x].iter().any(|&v| !tree.has_label(v, l)) {
                return false;
            }
        }
    }
    q.binary_atoms().all(|(axis, x, y)| {
        theta[x].iter().all(|&v| theta[y].iter().any(|&w| tree.axis_holds(axis, v, w)))
            && theta[y].iter().all(|&w| theta[x].iter().any(|&v| tree.axis_holds(axis, v, w)))
    })
}

/// Minimum valuation under `order`; refuses signatures outside the order's family.
pub fn eval_xbar(tree: &Tree, q: &ConjunctiveQuery, order: OrderTag) -> Result<Option<Valuation>, EvalError> {
    let c = Compiled::new(q);
    Ok(Index::new(tree).eval_xbar(&c, order)?.map(|v| c.to_valuation(&v)))
}

pub fn eval_backtracking(tree: &Tree, q: &ConjunctiveQuery) -> Answers {
    let c = Compiled::new(q);
    Index::new(tree).answers_backtracking(&c)
}

/// A satisfying valuation found by backtracking.
pub fn find_valuation(tree: &Tree, q: &ConjunctiveQuery) -> Option<Valuation> {
    let c = Compiled::new(q);
    Index::new(tree).find_valuation(&c).map(|v| c.to_valuation(&v))
}

pub fn eval_bruteforce(tree: &Tree, q: &ConjunctiveQuery, budget: u64) -> Result<Answers, EvalError> {
    let c = Compiled::new(q);
    Index::new(tree).answers_bruteforce(&c, budget)
}

pub fn check_tuple(tree: &Tree, q: &ConjunctiveQuery, t: &[NodeId]) -> Result<bool, EvalError> {
    let c = Compiled::new(q);
    Index::new(tree).check_tuple(&c, t)
}

pub fn enumerate_answers(tree: &Tree, q: &ConjunctiveQuery, budget: u64) -> Result<Answers, EvalError> {
    let c = Compiled::new(q);
    Index::new(tree).enumerate_answers(&c, budget)
}

/// Whether every atom holds under the valuation.
pub fn satisfies(tree: &Tree, q: &ConjunctiveQuery, val: &Valuation) -> bool {
    q.atoms().iter().all(|a| match a {
        crate::query::Atom::Unary(Unary::Node, x) => val.contains_key(x),
        crate::query::Atom::Unary(Unary::Label(l), x) => val.get(x).is_some_and(|&v| tree.has_label(v, l)),
        crate::query::Atom::Binary(axis, x, y) => match (val.get(x), val.get(y)) {
            (Some(&u), Some(&v)) => tree.axis_holds(*axis, u, v),
            _ => false,
        },
    })
}

/// Union of the answers of all disjuncts.
pub fn eval_positive(tree: &Tree, p: &PositiveQuery) -> Answers {
    let index = Index::new(tree);
    let mut out = Answers::new();
    for q in &p.disjuncts {
        out.extend(index.answers(&Compiled::new(q)));
    }
    out
}
