//! Unranked ordered labeled trees, the seven axes, and the three document orders.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Node identifier. Identifiers coincide with pre-order positions.
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Child,
    ChildPlus,
    ChildStar,
    NextSibling,
    NextSiblingPlus,
    NextSiblingStar,
    Following,
}

impl Axis {
    pub const ALL: [Axis; 7] = [
        Axis::Child,
        Axis::ChildPlus,
        Axis::ChildStar,
        Axis::NextSibling,
        Axis::NextSiblingPlus,
        Axis::NextSiblingStar,
        Axis::Following,
    ];

    /// Name used by the query text format.
    pub fn name(self) -> &'static str {
        match self {
            Axis::Child => "child",
            Axis::ChildPlus => "child+",
            Axis::ChildStar => "child*",
            Axis::NextSibling => "nextsib",
            Axis::NextSiblingPlus => "nextsib+",
            Axis::NextSiblingStar => "nextsib*",
            Axis::Following => "following",
        }
    }

    /// Conventional mathematical name, used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Axis::Child => "Child",
            Axis::ChildPlus => "Child+",
            Axis::ChildStar => "Child*",
            Axis::NextSibling => "NextSibling",
            Axis::NextSiblingPlus => "NextSibling+",
            Axis::NextSiblingStar => "NextSibling*",
            Axis::Following => "Following",
        }
    }

    pub fn from_name(s: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_reflexive(self) -> bool {
        matches!(self, Axis::ChildStar | Axis::NextSiblingStar)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("empty input")]
    Empty,
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unbalanced parentheses at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    labels: Vec<Vec<String>>,
    post: Vec<usize>,
    bflr: Vec<usize>,
    last: Vec<NodeId>,
    depth: Vec<usize>,
    sib_index: Vec<usize>,
}

impl Tree {
    /// Builds a tree from arbitrary node numbering; nodes are renumbered in pre-order.
    pub fn from_children(root: usize, children: &[Vec<usize>], labels: &[Vec<String>]) -> Tree {
        let n = children.len();
        assert_eq!(labels.len(), n);
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            order.push(u);
            for &c in children[u].iter().rev() {
                stack.push(c);
            }
        }
        assert_eq!(order.len(), n, "children lists do not form a single tree");
        let mut new_id = vec![usize::MAX; n];
        for (i, &u) in order.iter().enumerate() {
            new_id[u] = i;
        }
        let mut ch = vec![Vec::new(); n];
        let mut lab = vec![Vec::new(); n];
        for &u in &order {
            ch[new_id[u]] = children[u].iter().map(|&c| new_id[c]).collect();
            let mut l = labels[u].clone();
            l.sort();
            l.dedup();
            lab[new_id[u]] = l;
        }
        Tree::from_preorder(ch, lab)
    }

    /// `children` must already be in pre-order numbering with node 0 as root.
    fn from_preorder(children: Vec<Vec<NodeId>>, labels: Vec<Vec<String>>) -> Tree {
        let n = children.len();
        let mut parent = vec![None; n];
        let mut sib_index = vec![0; n];
        for (u, cs) in children.iter().enumerate() {
            for (i, &c) in cs.iter().enumerate() {
                parent[c] = Some(u);
                sib_index[c] = i;
            }
        }
        let mut depth = vec![0; n];
        for u in 1..n {
            depth[u] = depth[parent[u].expect("non-root has parent")] + 1;
        }
        let mut last: Vec<NodeId> = (0..n).collect();
        for u in (0..n).rev() {
            if let Some(&c) = children[u].last() {
                last[u] = last[c];
            }
        }
        let mut post = vec![0; n];
        let mut counter = 0;
        post_visit(0, &children, &mut post, &mut counter);
        let mut bflr = vec![0; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut k = 0;
        while let Some(u) = queue.pop_front() {
            bflr[u] = k;
            k += 1;
            queue.extend(children[u].iter().copied());
        }
        Tree { parent, children, labels, post, bflr, last, depth, sib_index }
    }

    pub fn single(labels: &[&str]) -> Tree {
        Tree::from_preorder(vec![vec![]], vec![labels.iter().map(|s| s.to_string()).collect()])
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.len()
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn labels(&self, v: NodeId) -> &[String] {
        &self.labels[v]
    }

    pub fn has_label(&self, v: NodeId, label: &str) -> bool {
        self.labels[v].iter().any(|l| l == label)
    }

    /// All labels occurring in the tree, sorted.
    pub fn label_alphabet(&self) -> BTreeSet<String> {
        self.labels.iter().flatten().cloned().collect()
    }

    pub fn depth(&self, v: NodeId) -> usize {
        self.depth[v]
    }

    /// Pre-order position (equal to the node id).
    pub fn pre_rank(&self, v: NodeId) -> usize {
        v
    }

    pub fn post_rank(&self, v: NodeId) -> usize {
        self.post[v]
    }

    pub fn bflr_rank(&self, v: NodeId) -> usize {
        self.bflr[v]
    }

    /// Largest pre-order id in the subtree of `v`.
    pub fn subtree_last(&self, v: NodeId) -> NodeId {
        self.last[v]
    }

    pub fn next_sibling(&self, v: NodeId) -> Option<NodeId> {
        let p = self.parent[v]?;
        self.children[p].get(self.sib_index[v] + 1).copied()
    }

    pub fn check_node(&self, v: NodeId) -> Result<(), TreeError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(TreeError::InvalidNode(v))
        }
    }

    /// Whether `(u, v)` belongs to the axis relation. Panics on invalid ids;
    /// use [`Tree::try_axis_holds`] for checked access.
    pub fn axis_holds(&self, axis: Axis, u: NodeId, v: NodeId) -> bool {
        match axis {
            Axis::Child => self.parent[v] == Some(u),
            Axis::ChildPlus => u < v && v <= self.last[u],
            Axis::ChildStar => u <= v && v <= self.last[u],
            Axis::NextSibling => self.parent[u].is_some() && self.next_sibling(u) == Some(v),
            Axis::NextSiblingPlus => {
                self.parent[u].is_some() && self.parent[u] == self.parent[v] && self.sib_index[u] < self.sib_index[v]
            }
            Axis::NextSiblingStar => {
                u == v
                    || (self.parent[u].is_some()
                        && self.parent[u] == self.parent[v]
                        && self.sib_index[u] < self.sib_index[v])
            }
            Axis::Following => v > self.last[u],
        }
    }

    pub fn try_axis_holds(&self, axis: Axis, u: NodeId, v: NodeId) -> Result<bool, TreeError> {
        self.check_node(u)?;
        self.check_node(v)?;
        Ok(self.axis_holds(axis, u, v))
    }

    /// `{ v | axis(u, v) }` in ascending id order.
    pub fn axis_successors(&self, axis: Axis, u: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.check_node(u)?;
        Ok(match axis {
            Axis::Child => self.children[u].clone(),
            Axis::ChildPlus => (u + 1..=self.last[u]).collect(),
            Axis::ChildStar => (u..=self.last[u]).collect(),
            Axis::Following => (self.last[u] + 1..self.len()).collect(),
            _ => self.nodes().filter(|&v| self.axis_holds(axis, u, v)).collect(),
        })
    }

    /// `{ u | axis(u, v) }` in ascending id order.
    pub fn axis_predecessors(&self, axis: Axis, v: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.check_node(v)?;
        Ok(self.nodes().filter(|&u| self.axis_holds(axis, u, v)).collect())
    }

    /// Same shape with every node carrying exactly the given labels.
    pub fn with_uniform_labels(&self, labels: &[String]) -> Tree {
        let mut l = labels.to_vec();
        l.sort();
        l.dedup();
        Tree::from_preorder(self.children.clone(), vec![l; self.len()])
    }

    /// Every parent-child edge receives a fresh unlabeled midpoint node.
    pub fn subdivide_edges(&self) -> Tree {
        let n = self.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); 2 * n - 1];
        let mut labels: Vec<Vec<String>> = vec![Vec::new(); 2 * n - 1];
        let mut next = n;
        for u in self.nodes() {
            labels[u] = self.labels[u].clone();
            for &c in &self.children[u] {
                let mid = next;
                next += 1;
                children[u].push(mid);
                children[mid].push(c);
            }
        }
        Tree::from_children(0, &children, &labels)
    }

    /// Parses the s-expression format `(LABELS child...)`.
    pub fn parse(text: &str) -> Result<Tree, TreeError> {
        let mut p = SexpParser { src: text.as_bytes(), pos: 0, children: Vec::new(), labels: Vec::new() };
        p.skip_ws();
        if p.pos == p.src.len() {
            return Err(TreeError::Empty);
        }
        p.node()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            if p.src[p.pos] == b')' {
                return Err(TreeError::Unbalanced { offset: p.pos });
            }
            return Err(TreeError::Syntax { offset: p.pos, msg: "trailing input after tree".into() });
        }
        Ok(Tree::from_preorder(p.children, p.labels))
    }

    /// Canonical single-line serialization.
    pub fn to_sexp(&self) -> String {
        let mut out = String::new();
        self.write_node(0, &mut out);
        out
    }

    fn write_node(&self, u: NodeId, out: &mut String) {
        out.push('(');
        if self.labels[u].is_empty() {
            out.push('-');
        } else {
            out.push_str(&self.labels[u].join(","));
        }
        for &c in &self.children[u] {
            out.push(' ');
            self.write_node(c, out);
        }
        out.push(')');
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sexp())
    }
}

fn post_visit(u: NodeId, children: &[Vec<NodeId>], post: &mut [usize], counter: &mut usize) {
    // Iterative to survive deep chains.
    let mut stack = vec![(u, 0usize)];
    while let Some(&mut (v, ref mut i)) = stack.last_mut() {
        if *i < children[v].len() {
            let c = children[v][*i];
            *i += 1;
            stack.push((c, 0));
        } else {
            post[v] = *counter;
            *counter += 1;
            stack.pop();
        }
    }
}

pub(crate) fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\''
}

struct SexpParser<'a> {
    src: &'a [u8],
    pos: usize,
    children: Vec<Vec<NodeId>>,
    labels: Vec<Vec<String>>,
}

impl SexpParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, msg: &str) -> TreeError {
        TreeError::Syntax { offset: self.pos, msg: msg.to_string() }
    }

    fn node(&mut self) -> Result<NodeId, TreeError> {
        // Explicit stack so that very deep trees do not overflow.
        let mut open: Vec<NodeId> = Vec::new();
        let first = self.open_node()?;
        open.push(first);
        loop {
            self.skip_ws();
            match self.src.get(self.pos) {
                None => return Err(TreeError::Unbalanced { offset: self.pos }),
                Some(b')') => {
                    self.pos += 1;
                    open.pop();
                    if open.is_empty() {
                        return Ok(first);
                    }
                }
                Some(b'(') => {
                    let parent = *open.last().expect("open node");
                    let c = self.open_node()?;
                    self.children[parent].push(c);
                    open.push(c);
                }
                Some(_) => return Err(self.err("expected '(' or ')'")),
            }
        }
    }

    fn open_node(&mut self) -> Result<NodeId, TreeError> {
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'(') {
            return Err(self.err("expected '('"));
        }
        self.pos += 1;
        self.skip_ws();
        let labels = self.label_list()?;
        let id = self.children.len();
        self.children.push(Vec::new());
        self.labels.push(labels);
        Ok(id)
    }

    fn label_list(&mut self) -> Result<Vec<String>, TreeError> {
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        loop {
            let start = self.pos;
            while self.pos < self.src.len() && is_ident_byte(self.src[self.pos]) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected label or '-'"));
            }
            out.push(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned());
            self.skip_ws();
            if self.src.get(self.pos) == Some(&b',') {
                self.pos += 1;
                self.skip_ws();
            } else {
                break;
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Ordered tree shapes with exactly `n` nodes, as pre-order children lists.
fn shapes(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn forests(m: usize) -> Vec<Vec<Vec<Vec<usize>>>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for k in 1..=m {
            for t in shapes(k) {
                for rest in forests(m - k) {
                    let mut f = vec![t.clone()];
                    f.extend(rest);
                    out.push(f);
                }
            }
        }
        out
    }
    forests(n - 1)
        .into_iter()
        .map(|forest| {
            let mut ch: Vec<Vec<usize>> = vec![Vec::new()];
            let mut offset = 1;
            for t in forest {
                ch[0].push(offset);
                let len = t.len();
                for c in t {
                    ch.push(c.into_iter().map(|x| x + offset).collect());
                }
                offset += len;
            }
            ch
        })
        .collect()
}

/// Deterministic enumeration of all ordered trees with at most `max_nodes` nodes in
/// which each node carries no label or exactly one label from `labels`.
pub struct TreeEnumerator {
    shapes: Vec<Vec<Vec<usize>>>,
    labels: Vec<String>,
    shape_idx: usize,
    digits: Vec<usize>,
    done: bool,
}

impl TreeEnumerator {
    pub fn new(max_nodes: usize, labels: &[&str]) -> TreeEnumerator {
        let mut all = Vec::new();
        for n in 1..=max_nodes {
            all.extend(shapes(n));
        }
        let mut labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        labels.sort();
        labels.dedup();
        let done = all.is_empty();
        let digits = all.first().map(|s| vec![0; s.len()]).unwrap_or_default();
        TreeEnumerator { shapes: all, labels, shape_idx: 0, digits, done }
    }
}

impl Iterator for TreeEnumerator {
    type Item = Tree;

    fn next(&mut self) -> Option<Tree> {
        if self.done {
            return None;
        }
        let shape = &self.shapes[self.shape_idx];
        let labels: Vec<Vec<String>> =
            self.digits.iter().map(|&d| if d == 0 { vec![] } else { vec![self.labels[d - 1].clone()] }).collect();
        let tree = Tree::from_preorder(shape.clone(), labels);
        // Advance the odometer, then the shape.
        let base = self.labels.len() + 1;
        let mut i = 0;
        loop {
            if i == self.digits.len() {
                self.shape_idx += 1;
                if self.shape_idx == self.shapes.len() {
                    self.done = true;
                } else {
                    self.digits = vec![0; self.shapes[self.shape_idx].len()];
                }
                break;
            }
            self.digits[i] += 1;
            if self.digits[i] < base {
                break;
            }
            self.digits[i] = 0;
            i += 1;
        }
        Some(tree)
    }
}

/// Unlabeled ordered trees with at most `max_nodes` nodes, smallest first.
pub fn enumerate_shapes(max_nodes: usize) -> impl Iterator<Item = Tree> {
    (1..=max_nodes).flat_map(|n| shapes(n).into_iter().map(move |ch| Tree::from_preorder(ch, vec![Vec::new(); n])))
}

pub fn enumerate_trees(max_nodes: usize, labels: &[&str]) -> TreeEnumerator {
    TreeEnumerator::new(max_nodes, labels)
}

/// Random tree with exactly `n` nodes: each new node attaches as the last child of a
/// uniformly chosen earlier node. Each node gets at most one label, chosen with
/// probability `label_prob` uniformly from `labels`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize, labels: &[&str], label_prob: f64) -> Tree {
    assert!(n >= 1);
    let mut children = vec![Vec::new(); n];
    for v in 1..n {
        let p = rng.gen_range(0..v);
        children[p].push(v);
    }
    let labs: Vec<Vec<String>> = (0..n)
        .map(|_| {
            if !labels.is_empty() && rng.gen_bool(label_prob) {
                vec![labels[rng.gen_range(0..labels.len())].to_string()]
            } else {
                vec![]
            }
        })
        .collect();
    Tree::from_children(0, &children, &labs)
}

/// Builds a path-shaped tree from per-node label sets, top to bottom.
pub fn path_tree(labels: &[Vec<String>]) -> Tree {
    assert!(!labels.is_empty());
    let n = labels.len();
    let children: Vec<Vec<usize>> = (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![] }).collect();
    Tree::from_children(0, &children, labels)
}
