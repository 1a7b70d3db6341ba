//! Conjunctive and positive queries, their query graphs, and the datalog text format.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::tree::{is_ident_byte, Axis};

pub type Var = String;

/// Unary predicate: the built-in `node` or a label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unary {
    Node,
    Label(String),
}

impl fmt::Display for Unary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unary::Node => f.write_str("node"),
            Unary::Label(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Unary(Unary, Var),
    Binary(Axis, Var, Var),
}

impl Atom {
    pub fn label(l: &str, x: &str) -> Atom {
        Atom::Unary(Unary::Label(l.to_string()), x.to_string())
    }

    pub fn node(x: &str) -> Atom {
        Atom::Unary(Unary::Node, x.to_string())
    }

    pub fn binary(axis: Axis, x: &str, y: &str) -> Atom {
        Atom::Binary(axis, x.to_string(), y.to_string())
    }

    pub fn vars(&self) -> Vec<&Var> {
        match self {
            Atom::Unary(_, x) => vec![x],
            Atom::Binary(_, x, y) => vec![x, y],
        }
    }

    fn rename(&self, from: &str, to: &str) -> Atom {
        let r = |v: &Var| if v == from { to.to_string() } else { v.clone() };
        match self {
            Atom::Unary(p, x) => Atom::Unary(p.clone(), r(x)),
            Atom::Binary(a, x, y) => Atom::Binary(*a, r(x), r(y)),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Unary(p, x) => write!(f, "{p}({x})"),
            Atom::Binary(a, x, y) => write!(f, "{a}({x},{y})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("predicate {name} at byte {offset} expects {expected} argument(s), got {got}")]
    Arity { name: String, offset: usize, expected: usize, got: usize },
    #[error("head variable {0} does not occur in the body")]
    UnsafeHead(String),
    #[error("union members disagree on head arity")]
    HeadMismatch,
    #[error("query graph contains a directed cycle")]
    DirectedCycle,
}

/// A conjunctive query: head variables plus a body of unary and binary atoms.
/// Unary atoms are kept as a set, binary atoms as a multiset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjunctiveQuery {
    pub name: String,
    pub head: Vec<Var>,
    atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    /// Builds a query, deduplicating unary atoms. Does not check safety.
    pub fn new(name: &str, head: Vec<Var>, atoms: impl IntoIterator<Item = Atom>) -> ConjunctiveQuery {
        let mut q = ConjunctiveQuery { name: name.to_string(), head, atoms: Vec::new() };
        for a in atoms {
            q.push(a);
        }
        q
    }

    pub fn boolean(atoms: impl IntoIterator<Item = Atom>) -> ConjunctiveQuery {
        ConjunctiveQuery::new("q", Vec::new(), atoms)
    }

    pub fn push(&mut self, atom: Atom) {
        if matches!(atom, Atom::Unary(..)) && self.atoms.contains(&atom) {
            return;
        }
        self.atoms.push(atom);
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_boolean(&self) -> bool {
        self.head.is_empty()
    }

    pub fn unary_atoms(&self) -> impl Iterator<Item = (&Unary, &Var)> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Unary(p, x) => Some((p, x)),
            _ => None,
        })
    }

    pub fn binary_atoms(&self) -> impl Iterator<Item = (Axis, &Var, &Var)> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Binary(r, x, y) => Some((*r, x, y)),
            _ => None,
        })
    }

    pub fn binary_count(&self) -> usize {
        self.binary_atoms().count()
    }

    /// Body-atom count, the size measure used throughout.
    pub fn size(&self) -> usize {
        self.atoms.len()
    }

    /// Var(Q): variables of head and body, sorted.
    pub fn variables(&self) -> Vec<Var> {
        let mut s: BTreeSet<Var> = self.head.iter().cloned().collect();
        for a in &self.atoms {
            for v in a.vars() {
                s.insert(v.clone());
            }
        }
        s.into_iter().collect()
    }

    pub fn body_variables(&self) -> BTreeSet<Var> {
        self.atoms.iter().flat_map(|a| a.vars()).cloned().collect()
    }

    pub fn check_safe(&self) -> Result<(), QueryError> {
        let body = self.body_variables();
        for h in &self.head {
            if !body.contains(h) {
                return Err(QueryError::UnsafeHead(h.clone()));
            }
        }
        Ok(())
    }

    pub fn signature(&self) -> BTreeSet<Axis> {
        self.binary_atoms().map(|(a, _, _)| a).collect()
    }

    /// Replaces every occurrence of `from` (head and body) by `to`.
    pub fn substitute(&self, from: &str, to: &str) -> ConjunctiveQuery {
        let head = self.head.iter().map(|v| if v == from { to.to_string() } else { v.clone() }).collect();
        ConjunctiveQuery::new(&self.name, head, self.atoms.iter().map(|a| a.rename(from, to)))
    }

    /// Copy with the atoms at the given indices removed.
    pub fn without_atoms(&self, idx: &[usize]) -> ConjunctiveQuery {
        let atoms = self.atoms.iter().enumerate().filter(|(i, _)| !idx.contains(i)).map(|(_, a)| a.clone());
        ConjunctiveQuery::new(&self.name, self.head.clone(), atoms)
    }

    /// Shadow of the query graph is a forest (no parallel edges, no loops, no cycles).
    pub fn is_acyclic(&self) -> bool {
        let vars = self.variables();
        let index: HashMap<&Var, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut uf = UnionFind::new(vars.len());
        for (_, x, y) in self.binary_atoms() {
            if !uf.union(index[x], index[y]) {
                return false;
            }
        }
        true
    }

    pub fn has_directed_cycle(&self) -> bool {
        self.find_directed_cycle().is_some()
    }

    /// Lexicographically least directed cycle, written from its least variable.
    /// Returns atom indices in cycle order.
    pub fn find_directed_cycle(&self) -> Option<Vec<usize>> {
        let vars = self.variables();
        // Out-edges per variable sorted by (target, atom index).
        let mut out: BTreeMap<&Var, Vec<(&Var, usize)>> = BTreeMap::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if let Atom::Binary(_, x, y) = a {
                out.entry(x).or_default().push((y, i));
            }
        }
        for e in out.values_mut() {
            e.sort();
        }
        for s in &vars {
            if let Some(c) = least_cycle_from(s, &out) {
                return Some(c);
            }
        }
        None
    }

    /// A cycle variable `z` of the shadow graph from which no directed path leads to
    /// another cycle variable, together with two distinct in-edges of `z` on a common
    /// undirected cycle. Returns `(z, atom index, atom index)`.
    pub fn find_undirected_cycle(&self) -> Result<Option<(Var, usize, usize)>, QueryError> {
        if self.has_directed_cycle() {
            return Err(QueryError::DirectedCycle);
        }
        let edges: Vec<(usize, &Var, &Var)> = self
            .atoms
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match a {
                Atom::Binary(_, x, y) => Some((i, x, y)),
                _ => None,
            })
            .collect();
        let on_cycle: BTreeSet<usize> = non_bridge_edges(&edges);
        if on_cycle.is_empty() {
            return Ok(None);
        }
        let cycle_vars: BTreeSet<&Var> =
            edges.iter().filter(|(i, _, _)| on_cycle.contains(i)).flat_map(|(_, x, y)| [*x, *y]).collect();
        let mut succ: BTreeMap<&Var, Vec<&Var>> = BTreeMap::new();
        for (_, x, y) in &edges {
            succ.entry(*x).or_default().push(*y);
        }
        let z = cycle_vars
            .iter()
            .copied()
            .find(|z| {
                let mut seen: BTreeSet<&Var> = BTreeSet::new();
                let mut stack = vec![*z];
                while let Some(u) = stack.pop() {
                    for &w in succ.get(u).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if seen.insert(w) {
                            if w != *z && cycle_vars.contains(w) {
                                return false;
                            }
                            stack.push(w);
                        }
                    }
                }
                true
            })
            .expect("a DAG has a bottommost cycle variable");
        let e1 = edges
            .iter()
            .find(|(i, _, y)| *y == z && on_cycle.contains(i))
            .map(|(i, _, _)| *i)
            .expect("cycle variable has an in-edge on a cycle");
        let Atom::Binary(_, x1, _) = &self.atoms[e1] else { unreachable!() };
        // Breadth-first search from x1 to z in the shadow graph avoiding e1;
        // the edge through which z is reached closes the cycle.
        let mut adj: BTreeMap<&Var, Vec<(&Var, usize)>> = BTreeMap::new();
        for (i, x, y) in &edges {
            if *i == e1 {
                continue;
            }
            adj.entry(*x).or_default().push((*y, *i));
            adj.entry(*y).or_default().push((*x, *i));
        }
        for v in adj.values_mut() {
            v.sort();
        }
        let mut seen: BTreeSet<&Var> = BTreeSet::from([x1]);
        let mut queue = VecDeque::from([x1]);
        while let Some(u) = queue.pop_front() {
            for &(w, i) in adj.get(u).map(|v| v.as_slice()).unwrap_or(&[]) {
                if w == z {
                    return Ok(Some((z.clone(), e1, i)));
                }
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        unreachable!("non-bridge edge lies on a cycle")
    }

    /// Canonical text up to variable renaming, used to merge duplicate disjuncts.
    /// Equal keys imply isomorphic queries; isomorphic queries whose variables are
    /// not separated by colour refinement may still receive different keys.
    pub fn canonical_key(&self) -> String {
        let c = self.canonical_form();
        c.to_string()
    }

    /// Renamed copy with variables `v0, v1, ...` in canonical order and sorted atoms.
    pub fn canonical_form(&self) -> ConjunctiveQuery {
        let vars = self.variables();
        let idx: HashMap<&Var, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let n = vars.len();
        let mut colour: Vec<String> = vec![String::new(); n];
        for (p, x) in self.head.iter().enumerate() {
            colour[idx[x]].push_str(&format!("h{p};"));
        }
        let mut unary: Vec<Vec<String>> = vec![Vec::new(); n];
        for (p, x) in self.unary_atoms() {
            unary[idx[x]].push(p.to_string());
        }
        for (i, u) in unary.iter_mut().enumerate() {
            u.sort();
            colour[i].push_str(&u.join(","));
        }
        let bins: Vec<(Axis, usize, usize)> = self.binary_atoms().map(|(a, x, y)| (a, idx[x], idx[y])).collect();
        let mut rank = compress(&colour);
        for _ in 0..n {
            let mut sig: Vec<String> = (0..n).map(|i| format!("{}|", rank[i])).collect();
            let mut parts: Vec<Vec<String>> = vec![Vec::new(); n];
            for &(a, x, y) in &bins {
                parts[x].push(format!("o{}:{}", a.index(), rank[y]));
                parts[y].push(format!("i{}:{}", a.index(), rank[x]));
            }
            for (i, p) in parts.iter_mut().enumerate() {
                p.sort();
                sig[i].push_str(&p.join(","));
            }
            let next = compress(&sig);
            let stable = distinct(&next) == distinct(&rank);
            rank = next;
            if stable {
                break;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (rank[i], i));
        let mut new_name = vec![String::new(); n];
        for (k, &i) in order.iter().enumerate() {
            new_name[i] = format!("v{k}");
        }
        let head = self.head.iter().map(|x| new_name[idx[x]].clone()).collect();
        let mut atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| match a {
                Atom::Unary(p, x) => Atom::Unary(p.clone(), new_name[idx[x]].clone()),
                Atom::Binary(r, x, y) => Atom::Binary(*r, new_name[idx[x]].clone(), new_name[idx[y]].clone()),
            })
            .collect();
        atoms.sort_by_key(atom_sort_key);
        ConjunctiveQuery::new(&self.name, head, atoms)
    }

    /// Parses `name(vars) :- atom, ..., atom.`; a rule without body is written `name(vars).`
    pub fn parse(text: &str) -> Result<ConjunctiveQuery, QueryError> {
        let mut p = QueryParser { src: text.as_bytes(), pos: 0 };
        let q = p.rule()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input after rule"));
        }
        Ok(q)
    }
}

fn atom_sort_key(a: &Atom) -> (u8, String, usize, String, String) {
    match a {
        Atom::Unary(p, x) => (0, p.to_string(), 0, x.clone(), String::new()),
        Atom::Binary(r, x, y) => (1, String::new(), r.index(), x.clone(), y.clone()),
    }
}

fn compress(keys: &[String]) -> Vec<usize> {
    let sorted: BTreeSet<&String> = keys.iter().collect();
    let pos: HashMap<&String, usize> = sorted.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
    keys.iter().map(|k| pos[k]).collect()
}

fn distinct(v: &[usize]) -> usize {
    v.iter().collect::<BTreeSet<_>>().len()
}

fn least_cycle_from(s: &Var, out: &BTreeMap<&Var, Vec<(&Var, usize)>>) -> Option<Vec<usize>> {
    // Variables usable on the cycle: those >= s. Greedy choice of the least next
    // variable that can still return to s is lexicographically optimal because
    // closing the cycle yields a prefix of every extension.
    let can_reach = |from: &Var, banned: &BTreeSet<&Var>| -> bool {
        let mut seen: BTreeSet<&Var> = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for (w, _) in out.get(u).map(|v| v.as_slice()).unwrap_or(&[]) {
                if *w == s {
                    return true;
                }
                if *w > s && !banned.contains(*w) && seen.insert(*w) {
                    stack.push(w);
                }
            }
        }
        false
    };
    let mut path: Vec<&Var> = vec![s];
    let mut atoms = Vec::new();
    let mut banned: BTreeSet<&Var> = BTreeSet::from([s]);
    loop {
        let cur = *path.last().expect("nonempty path");
        let edges = out.get(cur).map(|v| v.as_slice()).unwrap_or(&[]);
        if let Some((_, i)) = edges.iter().find(|(w, _)| *w == s) {
            atoms.push(*i);
            return Some(atoms);
        }
        let next = edges.iter().find(|(w, _)| *w > s && !banned.contains(*w) && can_reach(w, &banned));
        match next {
            Some((w, i)) => {
                atoms.push(*i);
                path.push(w);
                banned.insert(w);
            }
            None => return None,
        }
    }
}

/// Indices of shadow-graph edges that are not bridges (they lie on a cycle).
fn non_bridge_edges(edges: &[(usize, &Var, &Var)]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for (k, &(i, x, y)) in edges.iter().enumerate() {
        if x == y {
            out.insert(i);
            continue;
        }
        // The edge lies on a cycle iff y is reachable from x without it.
        let mut seen: BTreeSet<&Var> = BTreeSet::from([x]);
        let mut stack = vec![x];
        let mut found = false;
        while let Some(u) = stack.pop() {
            for (k2, &(_, a, b)) in edges.iter().enumerate() {
                if k2 == k {
                    continue;
                }
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if w == y {
                    found = true;
                    break;
                }
                if seen.insert(w) {
                    stack.push(w);
                }
            }
            if found {
                break;
            }
        }
        if found {
            out.insert(i);
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.head.join(","))?;
        if self.atoms.is_empty() {
            return f.write_str(".");
        }
        f.write_str(" :- ")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(".")
    }
}

/// A finite union of conjunctive queries with a common head arity. The empty union
/// is the query that is false everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveQuery {
    pub disjuncts: Vec<ConjunctiveQuery>,
}

impl PositiveQuery {
    pub fn single(q: ConjunctiveQuery) -> PositiveQuery {
        PositiveQuery { disjuncts: vec![q] }
    }

    pub fn is_apq(&self) -> bool {
        self.disjuncts.iter().all(|q| q.is_acyclic())
    }

    pub fn arity(&self) -> Option<usize> {
        self.disjuncts.first().map(|q| q.head.len())
    }

    pub fn total_atoms(&self) -> usize {
        self.disjuncts.iter().map(|q| q.size()).sum()
    }

    pub fn max_atoms(&self) -> usize {
        self.disjuncts.iter().map(|q| q.size()).max().unwrap_or(0)
    }

    pub fn signature(&self) -> BTreeSet<Axis> {
        self.disjuncts.iter().flat_map(|q| q.signature()).collect()
    }

    /// Parses one rule per non-empty line; lines starting with `%` are comments.
    pub fn parse(text: &str) -> Result<PositiveQuery, QueryError> {
        let mut disjuncts = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('%') {
                let q = ConjunctiveQuery::parse(line).map_err(|e| shift(e, offset))?;
                if let Some(first) = disjuncts.first() {
                    let first: &ConjunctiveQuery = first;
                    if first.head.len() != q.head.len() || first.name != q.name {
                        return Err(QueryError::HeadMismatch);
                    }
                }
                disjuncts.push(q);
            }
            offset += line.len();
        }
        Ok(PositiveQuery { disjuncts })
    }
}

fn shift(e: QueryError, by: usize) -> QueryError {
    match e {
        QueryError::Syntax { offset, msg } => QueryError::Syntax { offset: offset + by, msg },
        QueryError::Arity { name, offset, expected, got } => {
            QueryError::Arity { name, offset: offset + by, expected, got }
        }
        other => other,
    }
}

impl fmt::Display for PositiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.disjuncts {
            writeln!(f, "{q}")?;
        }
        Ok(())
    }
}

struct QueryParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl QueryParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, msg: &str) -> QueryError {
        QueryError::Syntax { offset: self.pos, msg: msg.to_string() }
    }

    fn expect(&mut self, s: &str) -> Result<(), QueryError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(self.err(&format!("expected '{s}'")))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && is_ident_byte(self.src[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    /// Predicate name: identifier optionally followed by `+` or `*`.
    fn pred_name(&mut self) -> Result<String, QueryError> {
        let mut name = self.ident()?;
        if let Some(&c) = self.src.get(self.pos) {
            if c == b'+' || c == b'*' {
                name.push(c as char);
                self.pos += 1;
            }
        }
        Ok(name)
    }

    fn args(&mut self) -> Result<Vec<String>, QueryError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.err("expected ',' or ')'")),
            }
        }
    }

    fn rule(&mut self) -> Result<ConjunctiveQuery, QueryError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            return Err(self.err("empty input"));
        }
        let name = self.ident()?;
        let head = self.args()?;
        let mut atoms = Vec::new();
        match self.peek() {
            Some(b'.') => {
                self.pos += 1;
            }
            Some(b':') => {
                self.expect(":-")?;
                loop {
                    atoms.push(self.atom()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b'.') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.err("expected ',' or '.'")),
                    }
                }
            }
            _ => return Err(self.err("expected ':-' or '.'")),
        }
        let q = ConjunctiveQuery::new(&name, head, atoms);
        q.check_safe()?;
        Ok(q)
    }

    fn atom(&mut self) -> Result<Atom, QueryError> {
        self.skip_ws();
        let at = self.pos;
        let name = self.pred_name()?;
        let args = self.args()?;
        let arity_err =
            |expected: usize| QueryError::Arity { name: name.clone(), offset: at, expected, got: args.len() };
        if let Some(axis) = Axis::from_name(&name) {
            if args.len() != 2 {
                return Err(arity_err(2));
            }
            return Ok(Atom::Binary(axis, args[0].clone(), args[1].clone()));
        }
        if name.ends_with('+') || name.ends_with('*') {
            return Err(QueryError::Syntax { offset: at, msg: format!("unknown axis {name}") });
        }
        if args.len() != 1 {
            return Err(arity_err(1));
        }
        if name == "node" {
            Ok(Atom::Unary(Unary::Node, args[0].clone()))
        } else {
            Ok(Atom::Unary(Unary::Label(name), args[0].clone()))
        }
    }
}
