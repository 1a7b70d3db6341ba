//! Seeded random conjunctive queries for property tests and experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::query::{Atom, ConjunctiveQuery};
use crate::tree::Axis;

#[derive(Debug, Clone)]
pub struct QueryShape {
    pub axes: Vec<Axis>,
    /// Total body atoms (unary and binary), at least one.
    pub max_atoms: usize,
    pub max_vars: usize,
    pub labels: Vec<String>,
    /// Probability that an atom is a label atom rather than an axis atom.
    pub label_prob: f64,
    pub arity: usize,
}

impl QueryShape {
    pub fn new(axes: &[Axis], max_atoms: usize, max_vars: usize, labels: &[&str]) -> QueryShape {
        QueryShape {
            axes: axes.to_vec(),
            max_atoms,
            max_vars,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            label_prob: 0.3,
            arity: 0,
        }
    }

    pub fn with_arity(mut self, arity: usize) -> QueryShape {
        self.arity = arity;
        self
    }
}

/// Draws a query whose variables are `x0, x1, ...` in order of first use. Every
/// variable occurs in the body; head variables are drawn from the body variables.
pub fn random_query<R: Rng + ?Sized>(rng: &mut R, shape: &QueryShape) -> ConjunctiveQuery {
    assert!(shape.max_atoms >= 1 && shape.max_vars >= 1);
    let natoms = rng.gen_range(1..=shape.max_atoms);
    let nvars = rng.gen_range(1..=shape.max_vars);
    let mut raw: Vec<(Option<Axis>, usize, usize, usize)> = Vec::with_capacity(natoms);
    for _ in 0..natoms {
        let unary = shape.axes.is_empty() || (!shape.labels.is_empty() && rng.gen_bool(shape.label_prob));
        let x = rng.gen_range(0..nvars);
        if unary {
            let l = if shape.labels.is_empty() { usize::MAX } else { rng.gen_range(0..shape.labels.len()) };
            raw.push((None, l, x, x));
        } else {
            let axis = *shape.axes.choose(rng).expect("nonempty axes");
            let y = rng.gen_range(0..nvars);
            raw.push((Some(axis), 0, x, y));
        }
    }
    // Rename to first-use order so that no variable is unused.
    let mut names: Vec<Option<String>> = vec![None; nvars];
    let mut next = 0;
    let mut name = |v: usize, names: &mut Vec<Option<String>>| -> String {
        names[v]
            .get_or_insert_with(|| {
                let s = format!("x{next}");
                next += 1;
                s
            })
            .clone()
    };
    let mut atoms = Vec::with_capacity(natoms);
    for (axis, l, x, y) in raw {
        match axis {
            Some(a) => {
                let (nx, ny) = (name(x, &mut names), name(y, &mut names));
                atoms.push(Atom::binary(a, &nx, &ny));
            }
            None => {
                let nx = name(x, &mut names);
                if l == usize::MAX {
                    atoms.push(Atom::node(&nx));
                } else {
                    atoms.push(Atom::label(&shape.labels[l], &nx));
                }
            }
        }
    }
    let used: Vec<String> = names.into_iter().flatten().collect();
    let head = (0..shape.arity).map(|_| used.choose(rng).expect("some variable").clone()).collect();
    ConjunctiveQuery::new("q", head, atoms)
}
