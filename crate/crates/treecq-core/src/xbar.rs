//! X̄-property checks on concrete trees and the signature classifier.

use std::collections::BTreeSet;
use std::fmt;

use crate::tree::{Axis, NodeId, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrderTag {
    Pre,
    Post,
    Bflr,
}

impl OrderTag {
    pub const ALL: [OrderTag; 3] = [OrderTag::Pre, OrderTag::Post, OrderTag::Bflr];

    pub fn rank(self, tree: &Tree, v: NodeId) -> usize {
        match self {
            OrderTag::Pre => tree.pre_rank(v),
            OrderTag::Post => tree.post_rank(v),
            OrderTag::Bflr => tree.bflr_rank(v),
        }
    }

    /// Nodes sorted by this order.
    pub fn sequence(self, tree: &Tree) -> Vec<NodeId> {
        let mut seq = vec![0; tree.len()];
        for v in tree.nodes() {
            seq[self.rank(tree, v)] = v;
        }
        seq
    }

    pub fn name(self) -> &'static str {
        match self {
            OrderTag::Pre => "pre",
            OrderTag::Post => "post",
            OrderTag::Bflr => "bflr",
        }
    }

    pub fn from_name(s: &str) -> Option<OrderTag> {
        OrderTag::ALL.into_iter().find(|o| o.name() == s)
    }

    /// The maximal set of axes having the X̄-property w.r.t. this order.
    pub fn family(self) -> &'static [Axis] {
        match self {
            OrderTag::Pre => &[Axis::ChildPlus, Axis::ChildStar],
            OrderTag::Post => &[Axis::Following],
            OrderTag::Bflr => &[Axis::Child, Axis::NextSibling, Axis::NextSiblingStar, Axis::NextSiblingPlus],
        }
    }
}

impl fmt::Display for OrderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense view of an axis relation in rank coordinates: `m[i][j]` iff
/// `axis(seq[i], seq[j])`.
struct RankMatrix {
    n: usize,
    bits: Vec<bool>,
    seq: Vec<NodeId>,
}

impl RankMatrix {
    fn new(tree: &Tree, axis: Axis, order: OrderTag) -> RankMatrix {
        let seq = order.sequence(tree);
        let n = seq.len();
        let mut bits = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                bits[i * n + j] = tree.axis_holds(axis, seq[i], seq[j]);
            }
        }
        RankMatrix { n, bits, seq }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Largest column set in each row, or `None` for an empty row.
    fn last_in_rows(&self) -> Vec<Option<usize>> {
        (0..self.n).map(|i| (0..self.n).rev().find(|&j| self.get(i, j))).collect()
    }

    /// Largest row set in each column.
    fn last_in_cols(&self) -> Vec<Option<usize>> {
        (0..self.n).map(|j| (0..self.n).rev().find(|&i| self.get(i, j))).collect()
    }

    fn nodes(&self, q: [usize; 4]) -> [NodeId; 4] {
        q.map(|i| self.seq[i])
    }
}

/// Lexicographically least (by rank) quadruple `(n0, n1, n2, n3)` with `n0 < n1`,
/// `n2 < n3`, `R(n1, n2)`, `R(n0, n3)` and not `R(n0, n2)`.
pub fn check_xbar(tree: &Tree, axis: Axis, order: OrderTag) -> Option<[NodeId; 4]> {
    let m = RankMatrix::new(tree, axis, order);
    let n = m.n;
    let last = m.last_in_rows();
    for (n0, &last0) in last.iter().enumerate() {
        for n1 in n0 + 1..n {
            for n2 in 0..n {
                if !m.get(n1, n2) || m.get(n0, n2) || last0.is_none_or(|l| l <= n2) {
                    continue;
                }
                if let Some(n3) = (n2 + 1..n).find(|&n3| m.get(n0, n3)) {
                    return Some(m.nodes([n0, n1, n2, n3]));
                }
            }
        }
    }
    None
}

/// The restricted quadruple check for relations contained in the order:
/// only `n0 < n1 <= n2 < n3` is inspected.
pub fn check_xbar_restricted(tree: &Tree, axis: Axis, order: OrderTag) -> Option<[NodeId; 4]> {
    let m = RankMatrix::new(tree, axis, order);
    let n = m.n;
    let last = m.last_in_rows();
    for (n0, &last0) in last.iter().enumerate() {
        for n1 in n0 + 1..n {
            for n2 in n1..n {
                if !m.get(n1, n2) || m.get(n0, n2) || last0.is_none_or(|l| l <= n2) {
                    continue;
                }
                if let Some(n3) = (n2 + 1..n).find(|&n3| m.get(n0, n3)) {
                    return Some(m.nodes([n0, n1, n2, n3]));
                }
            }
        }
    }
    None
}

/// The mirrored check for relations contained in the reverse order: a violation is
/// `n0 < n1 <= n2 < n3` with `R(n2, n1)`, `R(n3, n0)` and not `R(n2, n0)`.
pub fn check_xbar_inverse(tree: &Tree, axis: Axis, order: OrderTag) -> Option<[NodeId; 4]> {
    let m = RankMatrix::new(tree, axis, order);
    let n = m.n;
    let last = m.last_in_cols();
    for (n0, &last0) in last.iter().enumerate() {
        for n1 in n0 + 1..n {
            for n2 in n1..n {
                if !m.get(n2, n1) || m.get(n2, n0) || last0.is_none_or(|l| l <= n2) {
                    continue;
                }
                if let Some(n3) = (n2 + 1..n).find(|&n3| m.get(n3, n0)) {
                    return Some(m.nodes([n0, n1, n2, n3]));
                }
            }
        }
    }
    None
}

/// Whether the relation is contained in the reflexive order (`R(u,v)` implies `u <= v`).
pub fn contained_in_order(tree: &Tree, axis: Axis, order: OrderTag) -> bool {
    tree.nodes()
        .all(|u| tree.nodes().all(|v| !tree.axis_holds(axis, u, v) || order.rank(tree, u) <= order.rank(tree, v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Tractable(OrderTag),
    /// Two axes with no common order.
    Intractable(Axis, Axis),
}

impl Verdict {
    pub fn is_tractable(self) -> bool {
        matches!(self, Verdict::Tractable(_))
    }
}

/// Classifies a signature by the three maximal tractable families. The families
/// partition the axes, so any other signature contains two axes from different
/// families; the least such pair is returned.
pub fn classify(sig: &BTreeSet<Axis>) -> Verdict {
    for order in [OrderTag::Bflr, OrderTag::Pre, OrderTag::Post] {
        if sig.iter().all(|a| order.family().contains(a)) {
            return Verdict::Tractable(order);
        }
    }
    let family_of = |a: Axis| OrderTag::ALL.into_iter().find(|o| o.family().contains(&a)).expect("total");
    for &a in sig {
        for &b in sig {
            if a < b && family_of(a) != family_of(b) {
                return Verdict::Intractable(a, b);
            }
        }
    }
    unreachable!("families partition the axes")
}

/// One cell of the complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableCell {
    pub tractable: bool,
    pub theorem: &'static str,
}

impl fmt::Display for TableCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.tractable { "in P" } else { "NP-hard" };
        write!(f, "{status} ({})", self.theorem)
    }
}

// Upper triangle in Axis::ALL order; the diagonal holds singleton signatures.
const TABLE_ONE: [[Option<(bool, &str)>; 7]; 7] = {
    const P44: Option<(bool, &str)> = Some((true, "4.4"));
    const P42: Option<(bool, &str)> = Some((true, "4.2"));
    const P43: Option<(bool, &str)> = Some((true, "4.3"));
    const H51: Option<(bool, &str)> = Some((false, "5.1"));
    const H52: Option<(bool, &str)> = Some((false, "5.2"));
    const H53: Option<(bool, &str)> = Some((false, "5.3"));
    const H54: Option<(bool, &str)> = Some((false, "5.4"));
    const H55: Option<(bool, &str)> = Some((false, "5.5"));
    const H56: Option<(bool, &str)> = Some((false, "5.6"));
    const H57: Option<(bool, &str)> = Some((false, "5.7"));
    const H58: Option<(bool, &str)> = Some((false, "5.8"));
    const N: Option<(bool, &str)> = None;
    [
        [P44, H51, H51, P44, P44, P44, H52],
        [N, P42, P42, H57, H57, H57, H53],
        [N, N, P42, H55, H54, H56, H53],
        [N, N, N, P44, P44, P44, H58],
        [N, N, N, N, P44, P44, H58],
        [N, N, N, N, N, P44, H58],
        [N, N, N, N, N, N, P43],
    ]
};

/// The embedded expected table entry for the signature `{a, b}` (or `{a}` if equal).
pub fn table_one(a: Axis, b: Axis) -> TableCell {
    let (i, j) = if a.index() <= b.index() { (a.index(), b.index()) } else { (b.index(), a.index()) };
    let (tractable, theorem) = TABLE_ONE[i][j].expect("upper triangle");
    TableCell { tractable, theorem }
}

/// Classifier verdict for `{a, b}` rendered as a table cell, taking the theorem
/// pointer from the embedded table.
pub fn classify_cell(a: Axis, b: Axis) -> TableCell {
    let sig: BTreeSet<Axis> = [a, b].into_iter().collect();
    let tractable = classify(&sig).is_tractable();
    TableCell { tractable, theorem: table_one(a, b).theorem }
}

/// Human-readable verdict line for a signature of any size.
pub fn describe(sig: &BTreeSet<Axis>) -> String {
    match classify(sig) {
        Verdict::Tractable(o) => {
            let cell = match sig.len() {
                0 => None,
                1 => {
                    let a = *sig.iter().next().expect("one element");
                    Some(table_one(a, a))
                }
                2 => {
                    let mut it = sig.iter();
                    let (a, b) = (*it.next().expect("two"), *it.next().expect("two"));
                    Some(table_one(a, b))
                }
                _ => None,
            };
            match cell {
                Some(c) => format!("in P (Table I: {}) via X-underbar w.r.t. {o}", c.theorem),
                None => format!("in P via X-underbar w.r.t. {o}"),
            }
        }
        Verdict::Intractable(a, b) => {
            let c = table_one(a, b);
            if sig.len() == 2 {
                format!("NP-hard (Table I: {})", c.theorem)
            } else {
                format!("NP-hard (Table I: {}) witnessed by {{{}, {}}}", c.theorem, a.display_name(), b.display_name())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(axes: &[Axis]) -> BTreeSet<Axis> {
        axes.iter().copied().collect()
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(classify(&sig(&[Axis::Child, Axis::NextSiblingPlus])), Verdict::Tractable(OrderTag::Bflr));
        assert!(!classify(&sig(&[Axis::Child, Axis::ChildPlus])).is_tractable());
        assert_eq!(classify(&sig(&[Axis::Following])), Verdict::Tractable(OrderTag::Post));
        assert_eq!(classify(&sig(&[])), Verdict::Tractable(OrderTag::Bflr));
        assert_eq!(describe(&sig(&[Axis::Child, Axis::ChildPlus])), "NP-hard (Table I: 5.1)");
    }

    #[test]
    fn following_not_xbar_under_pre() {
        let t = Tree::parse("(- (A (B) (C)) (D (E)))").unwrap();
        assert!(check_xbar(&t, Axis::Following, OrderTag::Pre).is_some());
        assert!(check_xbar(&t, Axis::Following, OrderTag::Post).is_none());
    }

    #[test]
    fn single_node_never_violates() {
        let t = Tree::single(&[]);
        for a in Axis::ALL {
            for o in OrderTag::ALL {
                assert!(check_xbar(&t, a, o).is_none());
            }
        }
    }
}
