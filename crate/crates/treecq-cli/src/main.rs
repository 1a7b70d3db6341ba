//! `treecq`: command-line front end for the treecq library.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecq_core::eval::{
    eval_bruteforce, eval_positive, eval_xbar, find_valuation, Answers, Valuation, DEFAULT_BUDGET,
};
use treecq_core::gadgets::{brute_1in3, random_instance, OneInThreeInstance, Target};
use treecq_core::rewrite::{rewrite_to_apq, Mode};
use treecq_core::succinct::{all_ps, blowup_experiment, gen_diamond, gen_ps, is_k_scattered, DiamondCheck};
use treecq_core::tree::random_tree;
use treecq_core::xbar::{
    check_xbar, check_xbar_inverse, classify, classify_cell, describe, table_one, OrderTag, Verdict,
};
use treecq_core::{Axis, ConjunctiveQuery, PositiveQuery, Tree};

#[derive(Parser)]
#[command(name = "treecq", version, about = "Conjunctive queries over unranked labeled trees")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Valuation budget for brute-force evaluation.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Auto,
    Xbar,
    Backtrack,
    Brute,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a query on a tree.
    Eval {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Auto)]
        strategy: Strategy,
        /// Order for the xbar strategy (pre, post, bflr); chosen by the classifier if omitted.
        #[arg(long)]
        order: Option<String>,
    },
    /// Rewrite a query into a union of acyclic queries.
    Rewrite {
        #[arg(long)]
        query: PathBuf,
        /// 66a, 66b, 66c, 69, 610 or auto.
        #[arg(long, default_value = "auto")]
        mode: String,
    },
    /// Classify the complexity of a signature.
    Classify {
        /// Comma-separated axis names, e.g. child,child+.
        #[arg(long, value_delimiter = ',', conflicts_with = "query")]
        axes: Vec<String>,
        /// Take the signature of this query instead.
        #[arg(long)]
        query: Option<PathBuf>,
    },
    /// Search for X-underbar violations.
    XbarCheck {
        /// Tree to check; random trees are drawn if omitted.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        order: Option<String>,
        /// Check every axis against every order, not only the tractable pairs.
        #[arg(long)]
        all: bool,
        /// Check the inverse relation instead.
        #[arg(long)]
        inverse: bool,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long, default_value_t = 60)]
        max_nodes: usize,
    },
    /// Reduce a 1-in-3 instance to a tree and a Boolean query.
    Gadget {
        /// One clause per line, three 1-based variable numbers.
        #[arg(long, required_unless_present = "random_clauses")]
        instance: Option<PathBuf>,
        /// Draw a random instance with this many clauses instead.
        #[arg(long)]
        random_clauses: Option<usize>,
        #[arg(long, default_value_t = 6)]
        random_vars: usize,
        #[arg(long, default_value = "tau6")]
        target: String,
        #[arg(long)]
        tree_out: Option<PathBuf>,
        #[arg(long)]
        query_out: Option<PathBuf>,
        /// Compare the query's truth value with the instance's satisfiability.
        #[arg(long)]
        verify: bool,
    },
    /// Print the n-diamond query.
    Diamond {
        #[arg(long)]
        n: usize,
    },
    /// Print path structures PS(n,p).
    Ps {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// One 0/1 digit per diamond; all bit vectors if omitted.
        #[arg(long)]
        bits: Option<String>,
        /// Also report whether the n-diamond holds and whether the structure is p-scattered.
        #[arg(long)]
        check: bool,
    },
    /// Rewrite the n-diamonds and report the growth of the result.
    Blowup {
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value = "610")]
        mode: String,
        /// Random trees per equivalence check.
        #[arg(long, default_value_t = 200)]
        trees: usize,
    },
    /// Print the complexity table and compare it with the embedded expected one.
    Table1,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    Negative,
}

struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Usage {
        Usage(e.to_string())
    }
}

type Run = Result<Outcome, Usage>;

fn read(path: &Path) -> Result<String, Usage> {
    fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Usage> {
    fs::write(path, text).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn parse_order(s: &str) -> Result<OrderTag, Usage> {
    OrderTag::from_name(s).ok_or_else(|| Usage(format!("unknown order {s:?} (expected pre, post or bflr)")))
}

fn parse_axis(s: &str) -> Result<Axis, Usage> {
    Axis::from_name(s.trim()).ok_or_else(|| Usage(format!("unknown axis {s:?}")))
}

fn parse_mode(s: &str) -> Result<Option<Mode>, Usage> {
    if s == "auto" {
        return Ok(None);
    }
    Mode::from_tag(s)
        .map(Some)
        .ok_or_else(|| Usage(format!("unknown mode {s:?} (expected 66a, 66b, 66c, 69, 610 or auto)")))
}

fn outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Ok
    } else {
        Outcome::Negative
    }
}

fn push_valuation(out: &mut String, v: &Valuation) {
    for (x, n) in v {
        let _ = writeln!(out, "{x} = {n}");
    }
}

fn push_answers(out: &mut String, arity: usize, answers: &Answers) -> Outcome {
    if arity == 0 {
        let _ = writeln!(out, "{}", !answers.is_empty());
    } else {
        for t in answers {
            let row: Vec<String> = t.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    outcome(!answers.is_empty())
}

fn cmd_eval(out: &mut String, cli: &Cli, tree: &Path, query: &Path, strategy: Strategy, order: Option<&str>) -> Run {
    let t = Tree::parse(&read(tree)?)?;
    let p = PositiveQuery::parse(&read(query)?)?;
    if p.disjuncts.len() != 1 {
        if strategy != Strategy::Auto {
            return Err(Usage("a union of queries is evaluated only with --strategy auto".into()));
        }
        return Ok(push_answers(out, p.arity().unwrap_or(0), &eval_positive(&t, &p)));
    }
    let q = &p.disjuncts[0];
    let order = order.map(parse_order).transpose()?;
    let verdict = classify(&q.signature());
    let strategy = match strategy {
        Strategy::Auto if q.is_boolean() && verdict.is_tractable() => Strategy::Xbar,
        Strategy::Auto => Strategy::Backtrack,
        s => s,
    };
    match strategy {
        Strategy::Xbar => {
            let order = match (order, verdict) {
                (Some(o), _) => o,
                (None, Verdict::Tractable(o)) => o,
                (None, Verdict::Intractable(..)) => {
                    return Err(Usage(format!("{} has no tractable order; {}", q.name, describe(&q.signature()))))
                }
            };
            let found = eval_xbar(&t, q, order)?;
            let _ = writeln!(out, "{}", found.is_some());
            if let Some(v) = &found {
                push_valuation(out, v);
            }
            Ok(outcome(found.is_some()))
        }
        Strategy::Backtrack if q.is_boolean() => {
            let found = find_valuation(&t, q);
            let _ = writeln!(out, "{}", found.is_some());
            if let Some(v) = &found {
                push_valuation(out, v);
            }
            Ok(outcome(found.is_some()))
        }
        Strategy::Backtrack => Ok(push_answers(out, q.head.len(), &treecq_core::eval::eval_backtracking(&t, q))),
        Strategy::Brute | Strategy::Auto => Ok(push_answers(out, q.head.len(), &eval_bruteforce(&t, q, cli.budget)?)),
    }
}

fn cmd_rewrite(out: &mut String, query: &Path, mode: &str) -> Run {
    let q = ConjunctiveQuery::parse(&read(query)?)?;
    let mode = parse_mode(mode)?.unwrap_or_else(|| Mode::auto(&q.signature()));
    let r = rewrite_to_apq(&q, mode)?;
    let _ = writeln!(out, "% mode {mode}");
    let _ = writeln!(out, "% disjuncts {}", r.apq.disjuncts.len());
    let _ = writeln!(out, "% total_atoms {}", r.apq.total_atoms());
    let _ = writeln!(out, "% max_atoms {}", r.apq.max_atoms());
    let _ = writeln!(out, "% iterations {}", r.stats.iterations);
    for d in &r.apq.disjuncts {
        let _ = writeln!(out, "{d}");
    }
    Ok(Outcome::Ok)
}

fn cmd_classify(out: &mut String, axes: &[String], query: Option<&Path>) -> Run {
    let sig: BTreeSet<Axis> = match query {
        Some(path) => ConjunctiveQuery::parse(&read(path)?)?.signature(),
        None => axes.iter().filter(|s| !s.trim().is_empty()).map(|s| parse_axis(s)).collect::<Result<_, _>>()?,
    };
    let _ = writeln!(out, "{}", describe(&sig));
    Ok(outcome(classify(&sig).is_tractable()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_xbar_check(
    out: &mut String,
    cli: &Cli,
    tree: Option<&Path>,
    axis: Option<&str>,
    order: Option<&str>,
    all: bool,
    inverse: bool,
    trees: usize,
    max_nodes: usize,
) -> Run {
    let axes: Vec<Axis> = match axis {
        Some(a) => vec![parse_axis(a)?],
        None => Axis::ALL.to_vec(),
    };
    let orders: Vec<OrderTag> = match order {
        Some(o) => vec![parse_order(o)?],
        None => OrderTag::ALL.to_vec(),
    };
    let explicit = axis.is_some() && order.is_some();
    let pairs: Vec<(Axis, OrderTag)> = axes
        .iter()
        .flat_map(|&a| orders.iter().map(move |&o| (a, o)))
        .filter(|&(a, o)| all || explicit || o.family().contains(&a))
        .collect();
    let sample: Vec<Tree> = match tree {
        Some(path) => vec![Tree::parse(&read(path)?)?],
        None => {
            if max_nodes == 0 {
                return Err(Usage("--max-nodes must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            (0..trees)
                .map(|_| {
                    let n = rng.gen_range(1..=max_nodes);
                    random_tree(&mut rng, n, &[], 0.0)
                })
                .collect()
        }
    };
    let mut clean = true;
    for (a, o) in pairs {
        let hit = sample.iter().enumerate().find_map(|(i, t)| {
            let found = if inverse { check_xbar_inverse(t, a, o) } else { check_xbar(t, a, o) };
            found.map(|w| (i, t, w))
        });
        match hit {
            None => {
                let _ = writeln!(out, "{a} {o} ok");
            }
            Some((i, t, w)) => {
                clean = false;
                let _ = writeln!(out, "{a} {o} violation tree {i} {t} nodes {} {} {} {}", w[0], w[1], w[2], w[3]);
            }
        }
    }
    Ok(outcome(clean))
}

#[allow(clippy::too_many_arguments)]
fn cmd_gadget(
    out: &mut String,
    cli: &Cli,
    instance: Option<&Path>,
    random_clauses: Option<usize>,
    random_vars: usize,
    target: &str,
    tree_out: Option<&Path>,
    query_out: Option<&Path>,
    verify: bool,
) -> Run {
    let target = Target::from_name(target).ok_or_else(|| {
        let names: Vec<&str> = Target::ALL.iter().map(|t| t.name()).collect();
        Usage(format!("unknown target {target:?} (expected one of {})", names.join(", ")))
    })?;
    let inst = match (instance, random_clauses) {
        (Some(path), _) => OneInThreeInstance::parse(&read(path)?)?,
        (None, Some(m)) => {
            if random_vars < 3 {
                return Err(Usage("--random-vars must be at least 3".into()));
            }
            random_instance(&mut ChaCha8Rng::seed_from_u64(cli.seed), random_vars, m)
        }
        (None, None) => return Err(Usage("either --instance or --random-clauses is required".into())),
    };
    let g = target.reduce(&inst);
    let tree_text = format!("{}\n", g.tree.to_sexp());
    let query_text = format!("{}\n", g.query);
    match tree_out {
        Some(p) => write(p, &tree_text)?,
        None => out.push_str(&tree_text),
    }
    match query_out {
        Some(p) => write(p, &query_text)?,
        None => out.push_str(&query_text),
    }
    if !verify {
        return Ok(Outcome::Ok);
    }
    let sat = brute_1in3(&inst)?;
    let holds = find_valuation(&g.tree, &g.query).is_some();
    let _ = writeln!(out, "% instance satisfiable {sat}");
    let _ = writeln!(out, "% query true {holds}");
    let _ = writeln!(out, "% {}", if sat == holds { "agree" } else { "disagree" });
    Ok(outcome(sat == holds))
}

fn cmd_ps(out: &mut String, n: usize, p: usize, bits: Option<&str>, check: bool) -> Run {
    let structures = match bits {
        Some(b) => {
            let v: Vec<bool> = b
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(Usage(format!("--bits takes 0/1 digits, got {c:?}"))),
                })
                .collect::<Result<_, _>>()?;
            vec![gen_ps(n, p, &v)?]
        }
        None => all_ps(n, p)?,
    };
    let diamond = if check { Some(gen_diamond(n)?) } else { None };
    let mut ok = true;
    for ps in structures {
        match &diamond {
            None => {
                let _ = writeln!(out, "{ps}");
            }
            Some(d) => {
                let holds = find_valuation(&ps.tree(), d).is_some();
                let scattered = is_k_scattered(&ps, p);
                ok &= holds && scattered;
                let _ = writeln!(out, "{ps}\tdiamond={holds}\tscattered={scattered}");
            }
        }
    }
    Ok(outcome(ok))
}

fn cmd_blowup(out: &mut String, cli: &Cli, n_max: usize, mode: &str, trees: usize) -> Run {
    let mode = parse_mode(mode)?.unwrap_or_else(|| Mode::auto(&[Axis::ChildPlus].into()));
    let opts = DiamondCheck { random_trees: trees, seed: cli.seed, ..DiamondCheck::default() };
    let report = blowup_experiment(n_max, mode, &opts)?;
    out.push_str(&match cli.format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    });
    Ok(outcome(report.rows.iter().all(|r| r.all_acyclic && r.equivalent)))
}

fn cmd_table1(out: &mut String, cli: &Cli) -> Run {
    let mut diffs = Vec::new();
    let mut grid: Vec<Vec<String>> = Vec::new();
    for (i, &a) in Axis::ALL.iter().enumerate() {
        let mut row = Vec::new();
        for (j, &b) in Axis::ALL.iter().enumerate() {
            if j < i {
                row.push(String::new());
                continue;
            }
            let got = classify_cell(a, b);
            let want = table_one(a, b);
            if got != want {
                diffs.push(format!("{} / {}: classifier {got}, expected {want}", a.display_name(), b.display_name()));
            }
            row.push(got.to_string());
        }
        grid.push(row);
    }
    let names: Vec<&str> = Axis::ALL.iter().map(|a| a.display_name()).collect();
    match cli.format {
        Format::Csv => {
            let _ = writeln!(out, "axis,{}", names.join(","));
            for (name, row) in names.iter().zip(&grid) {
                let _ = writeln!(out, "{name},{}", row.join(","));
            }
        }
        Format::Text => {
            let first = names.iter().map(|n| n.len()).max().unwrap_or(0);
            let width = grid.iter().flatten().map(|c| c.len()).chain(names.iter().map(|n| n.len())).max().unwrap_or(0);
            let _ = write!(out, "{:first$}", "");
            for n in &names {
                let _ = write!(out, "  {n:width$}");
            }
            let trimmed = out.trim_end_matches(' ').len();
            out.truncate(trimmed);
            out.push('\n');
            for (name, row) in names.iter().zip(&grid) {
                let _ = write!(out, "{name:first$}");
                for c in row {
                    let _ = write!(out, "  {c:width$}");
                }
                let trimmed = out.trim_end_matches(' ').len();
                out.truncate(trimmed);
                out.push('\n');
            }
        }
    }
    for d in &diffs {
        let _ = writeln!(out, "% mismatch {d}");
    }
    let _ = writeln!(
        out,
        "% {}",
        if diffs.is_empty() { "identical to the expected table" } else { "differs from the expected table" }
    );
    Ok(outcome(diffs.is_empty()))
}

fn run(cli: &Cli, out: &mut String) -> Run {
    match &cli.command {
        Command::Eval { tree, query, strategy, order } => cmd_eval(out, cli, tree, query, *strategy, order.as_deref()),
        Command::Rewrite { query, mode } => cmd_rewrite(out, query, mode),
        Command::Classify { axes, query } => cmd_classify(out, axes, query.as_deref()),
        Command::XbarCheck { tree, axis, order, all, inverse, trees, max_nodes } => cmd_xbar_check(
            out,
            cli,
            tree.as_deref(),
            axis.as_deref(),
            order.as_deref(),
            *all,
            *inverse,
            *trees,
            *max_nodes,
        ),
        Command::Gadget { instance, random_clauses, random_vars, target, tree_out, query_out, verify } => cmd_gadget(
            out,
            cli,
            instance.as_deref(),
            *random_clauses,
            *random_vars,
            target,
            tree_out.as_deref(),
            query_out.as_deref(),
            *verify,
        ),
        Command::Diamond { n } => {
            let _ = writeln!(out, "{}", gen_diamond(*n)?);
            Ok(Outcome::Ok)
        }
        Command::Ps { n, p, bits, check } => cmd_ps(out, *n, *p, bits.as_deref(), *check),
        Command::Blowup { n_max, mode, trees } => cmd_blowup(out, cli, *n_max, mode, *trees),
        Command::Table1 => cmd_table1(out, cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = run(&cli, &mut out);
    print!("{out}");
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
