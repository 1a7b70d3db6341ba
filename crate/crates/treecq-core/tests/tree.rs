use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecq_core::tree::{enumerate_shapes, enumerate_trees, random_tree};
use treecq_core::{Axis, NodeId, Tree, TreeError};

fn t(s: &str) -> Tree {
    Tree::parse(s).unwrap()
}

/// Ancestors-or-self of `v`, from parent pointers only.
fn ancestors_or_self(tree: &Tree, v: NodeId) -> Vec<NodeId> {
    let mut out = vec![v];
    let mut u = v;
    while let Some(p) = tree.parent(u) {
        out.push(p);
        u = p;
    }
    out
}

fn child_star(tree: &Tree, u: NodeId, v: NodeId) -> bool {
    ancestors_or_self(tree, v).contains(&u)
}

/// `z2` is a later sibling of `z1`, from children lists only.
fn later_sibling(tree: &Tree, z1: NodeId, z2: NodeId) -> bool {
    match tree.parent(z1) {
        Some(p) => {
            let ch = tree.children(p);
            let i = ch.iter().position(|&c| c == z1).unwrap();
            ch[i + 1..].contains(&z2)
        }
        None => false,
    }
}

/// `Following(x,y)` as the existential definition over `Child*` and `NextSibling+`.
fn following_oracle(tree: &Tree, x: NodeId, y: NodeId) -> bool {
    tree.nodes().any(|z1| {
        child_star(tree, z1, x) && tree.nodes().any(|z2| later_sibling(tree, z1, z2) && child_star(tree, z2, y))
    })
}

fn axis_oracle(tree: &Tree, axis: Axis, u: NodeId, v: NodeId) -> bool {
    let parent_is = |c: NodeId, p: NodeId| tree.parent(c) == Some(p);
    let next = |a: NodeId, b: NodeId| {
        tree.parent(a).is_some_and(|p| {
            let ch = tree.children(p);
            ch.windows(2).any(|w| w == [a, b])
        })
    };
    match axis {
        Axis::Child => parent_is(v, u),
        Axis::ChildPlus => u != v && child_star(tree, u, v),
        Axis::ChildStar => child_star(tree, u, v),
        Axis::NextSibling => next(u, v),
        Axis::NextSiblingPlus => later_sibling(tree, u, v),
        Axis::NextSiblingStar => u == v || later_sibling(tree, u, v),
        Axis::Following => following_oracle(tree, u, v),
    }
}

/// Pre- and post-order sequences by recursion over the children lists.
fn traversals(tree: &Tree) -> (Vec<NodeId>, Vec<NodeId>) {
    fn go(tree: &Tree, v: NodeId, pre: &mut Vec<NodeId>, post: &mut Vec<NodeId>) {
        pre.push(v);
        for &c in tree.children(v) {
            go(tree, c, pre, post);
        }
        post.push(v);
    }
    let (mut pre, mut post) = (Vec::new(), Vec::new());
    go(tree, tree.root(), &mut pre, &mut post);
    (pre, post)
}

fn bflr(tree: &Tree) -> Vec<NodeId> {
    let mut out = vec![tree.root()];
    let mut i = 0;
    while i < out.len() {
        out.extend_from_slice(tree.children(out[i]));
        i += 1;
    }
    out
}

fn check_tree(tree: &Tree) {
    let (pre, post) = traversals(tree);
    let bf = bflr(tree);
    for (i, &v) in pre.iter().enumerate() {
        assert_eq!(tree.pre_rank(v), i);
        assert_eq!(v, i, "ids are pre-order positions");
    }
    for (i, &v) in post.iter().enumerate() {
        assert_eq!(tree.post_rank(v), i);
    }
    for (i, &v) in bf.iter().enumerate() {
        assert_eq!(tree.bflr_rank(v), i);
    }
    for u in tree.nodes() {
        for v in tree.nodes() {
            for a in Axis::ALL {
                assert_eq!(tree.axis_holds(a, u, v), axis_oracle(tree, a, u, v), "{a}({u},{v}) on {tree}");
            }
            let star = tree.axis_holds(Axis::ChildStar, u, v);
            let fol = tree.axis_holds(Axis::Following, u, v);
            let inv_star = tree.axis_holds(Axis::ChildStar, v, u);
            // <=pre is the disjoint union of Child* and Following.
            assert_eq!(tree.pre_rank(u) <= tree.pre_rank(v), star || fol);
            assert!(!(star && fol));
            // <=post is the disjoint union of Following and inverse Child*.
            assert_eq!(tree.post_rank(u) <= tree.post_rank(v), fol || inv_star);
            assert!(!(fol && inv_star));
            let pre_post = tree.pre_rank(u) < tree.pre_rank(v) && tree.post_rank(u) < tree.post_rank(v);
            assert_eq!(fol, pre_post && !star);
        }
    }
    assert_eq!(Tree::parse(&tree.to_sexp()).unwrap(), *tree);
}

#[test]
fn parse_examples() {
    let a = t("(A (B))");
    assert_eq!(a.len(), 2);
    assert_eq!(a.labels(0), ["A"]);
    assert_eq!(a.labels(1), ["B"]);
    let b = t("(- (Y1) (-))");
    assert_eq!(b.len(), 3);
    assert!(b.labels(0).is_empty() && b.labels(2).is_empty());
    let c = t("(A (B (C) (D)) (E (F)))");
    let names: Vec<&str> = (0..6).map(|v| c.labels(v)[0].as_str()).collect();
    assert_eq!(names, ["A", "B", "C", "D", "E", "F"]);
    let mut by_post: Vec<NodeId> = c.nodes().collect();
    by_post.sort_by_key(|&v| c.post_rank(v));
    let post_names: Vec<&str> = by_post.iter().map(|&v| c.labels(v)[0].as_str()).collect();
    assert_eq!(post_names, ["C", "D", "B", "F", "E", "A"]);
    check_tree(&c);
}

#[test]
fn parse_errors() {
    assert_eq!(Tree::parse(""), Err(TreeError::Empty));
    assert_eq!(Tree::parse("   "), Err(TreeError::Empty));
    assert!(matches!(Tree::parse("(A (B)"), Err(TreeError::Unbalanced { .. })));
    assert!(matches!(Tree::parse("(A))"), Err(TreeError::Syntax { .. } | TreeError::Unbalanced { .. })));
    assert!(matches!(Tree::parse("(A) (B)"), Err(TreeError::Syntax { .. })));
    assert!(matches!(Tree::parse("(A,)"), Err(TreeError::Syntax { .. })));
}

#[test]
fn serializer_sorts_labels() {
    let tree = t("( B,A (C)   (-))");
    assert_eq!(tree.to_sexp(), "(A,B (C) (-))");
}

#[test]
fn following_example() {
    // Nodes 1..6 of the example are pre-order ids 0..5.
    let tree = t("(- (A (B) (C)) (D (E)))");
    let id = |k: usize| k - 1;
    assert!(tree.axis_holds(Axis::Following, id(2), id(6)));
    assert!(tree.axis_holds(Axis::Following, id(3), id(4)));
    assert!(!tree.axis_holds(Axis::Following, id(2), id(4)));
    assert_eq!(tree.axis_successors(Axis::Following, id(2)).unwrap(), vec![id(5), id(6)]);
    check_tree(&tree);
}

#[test]
fn axis_examples() {
    let tree = t("(A (B) (C))");
    for v in tree.nodes() {
        assert!(tree.axis_holds(Axis::ChildStar, v, v));
        assert!(!tree.axis_holds(Axis::ChildPlus, v, v));
        assert!(tree.axis_holds(Axis::NextSiblingStar, v, v));
        assert!(!tree.axis_holds(Axis::NextSiblingPlus, v, v));
        assert!(!tree.axis_holds(Axis::Following, v, v));
    }
    assert!(tree.axis_holds(Axis::NextSibling, 1, 2));
    assert!(!tree.axis_holds(Axis::NextSibling, 2, 1));
    assert_eq!(tree.axis_successors(Axis::Child, 0).unwrap(), vec![1, 2]);
    assert!(tree.axis_successors(Axis::ChildPlus, 2).unwrap().is_empty());
    assert_eq!(tree.axis_predecessors(Axis::Child, 2).unwrap(), vec![0]);
    assert_eq!(tree.try_axis_holds(Axis::Child, 0, 9), Err(TreeError::InvalidNode(9)));
    assert_eq!(tree.axis_successors(Axis::Child, 3), Err(TreeError::InvalidNode(3)));
}

/// Ordered trees with `n` nodes: the Catalan number `C(n-1)`.
fn catalan(n: usize) -> usize {
    let mut c = vec![1usize; n + 1];
    for i in 1..=n {
        c[i] = (0..i).map(|j| c[j] * c[i - 1 - j]).sum();
    }
    c[n]
}

#[test]
fn enumeration_counts() {
    assert_eq!(enumerate_trees(1, &["A"]).map(|t| t.to_sexp()).collect::<Vec<_>>(), ["(-)", "(A)"]);
    assert_eq!(enumerate_trees(2, &[]).count(), 2);
    assert_eq!(enumerate_trees(3, &[]).count(), 4);
    for max in 1..=7 {
        let expected: usize = (1..=max).map(|n| catalan(n - 1)).sum();
        assert_eq!(enumerate_shapes(max).count(), expected);
    }
    let with_labels: usize = (1..=4).map(|n| catalan(n - 1) * 3usize.pow(n as u32)).sum();
    assert_eq!(enumerate_trees(4, &["A", "B"]).count(), with_labels);
}

#[test]
fn enumerated_trees_satisfy_axis_laws() {
    for tree in enumerate_shapes(6) {
        check_tree(&tree);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_trees_satisfy_axis_laws(seed in any::<u64>(), n in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, n, &["A", "B", "C"], 0.5);
        check_tree(&tree);
    }
}
