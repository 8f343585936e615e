#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

use axplain::gbm::{Tree, TreeNode};
use axplain::solver::smt::{Script, Term};
use axplain::{Ensemble, FeatureBox, Instance, Interval};

/// Thresholds come from a coarse grid so that trees share cut points and
/// boxes can land exactly on them.
pub const GRID: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.5];

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub features: usize,
    pub trees: usize,
    pub depth: usize,
    /// Leaves on a dyadic grid, so float sums are exact.
    pub dyadic: bool,
}

impl Shape {
    pub fn small(rng: &mut impl Rng) -> Self {
        Shape {
            features: rng.gen_range(1..=6),
            trees: rng.gen_range(0..=8),
            depth: rng.gen_range(1..=4),
            dyadic: false,
        }
    }
}

fn leaf(rng: &mut impl Rng, dyadic: bool) -> f64 {
    if dyadic {
        f64::from(rng.gen_range(-16i32..=16)) / 8.0
    } else {
        rng.gen_range(-1.0..1.0)
    }
}

fn grow(rng: &mut impl Rng, shape: &Shape, depth: usize) -> TreeNode {
    if depth == shape.depth || (depth > 0 && rng.gen_bool(0.25)) {
        return TreeNode::leaf(leaf(rng, shape.dyadic));
    }
    TreeNode::split(
        rng.gen_range(0..shape.features),
        *GRID.choose(rng).unwrap(),
        grow(rng, shape, depth + 1),
        grow(rng, shape, depth + 1),
    )
}

pub fn random_ensemble(rng: &mut impl Rng, shape: &Shape) -> Ensemble {
    let names = (0..shape.features).map(|i| format!("x{i}")).collect();
    let trees = (0..shape.trees)
        .map(|_| Tree::new(grow(rng, shape, 0)))
        .collect();
    let init = if shape.dyadic {
        leaf(rng, true) / 2.0
    } else {
        rng.gen_range(-0.5..0.5)
    };
    Ensemble::new(names, trees, init).unwrap()
}

fn bound(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.6) {
        *GRID.choose(rng).unwrap()
    } else {
        rng.gen_range(-3.0..3.0)
    }
}

pub fn random_interval(rng: &mut impl Rng) -> Interval {
    match rng.gen_range(0..5) {
        0 => Interval::FULL,
        1 => Interval::point(bound(rng)),
        2 => Interval::at_least(bound(rng)),
        3 => Interval::below(bound(rng)),
        _ => loop {
            let (a, b) = (bound(rng), bound(rng));
            let iv = Interval::new(a.min(b), rng.gen(), a.max(b), rng.gen());
            if !iv.is_empty() {
                break iv;
            }
        },
    }
}

pub fn random_box(rng: &mut impl Rng, n: usize) -> FeatureBox {
    FeatureBox::new((0..n).map(|_| random_interval(rng)).collect())
}

/// A sub-box: each interval is intersected with a random interval, retrying
/// until non-empty (falling back to the original).
pub fn shrink(rng: &mut impl Rng, b: &FeatureBox) -> FeatureBox {
    let intervals = b
        .intervals()
        .iter()
        .map(|iv| {
            for _ in 0..8 {
                let sub = iv.intersect(&random_interval(rng));
                if !sub.is_empty() && sub.representative().is_some() {
                    return sub;
                }
            }
            *iv
        })
        .collect();
    FeatureBox::new(intervals)
}

pub fn random_instance(rng: &mut impl Rng, n: usize) -> Instance {
    Instance::new((0..n).map(|_| bound(rng)).collect())
}

pub fn random_subset(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).filter(|_| rng.gen_bool(0.5)).collect()
}

// ---------------------------------------------------------------------------
// Exact evaluation of exported scripts.

pub fn rational(literal: &str) -> BigRational {
    let (int, frac) = literal.split_once('.').unwrap_or((literal, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal literal");
    BigRational::new(digits, BigInt::from(10u8).pow(frac.len() as u32))
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Num(BigRational),
    Bool(bool),
}

fn eval(t: &Term, env: &HashMap<String, BigRational>) -> Val {
    let num = |t: &Term| match eval(t, env) {
        Val::Num(n) => n,
        Val::Bool(_) => panic!("expected a number"),
    };
    let boolean = |t: &Term| match eval(t, env) {
        Val::Bool(b) => b,
        Val::Num(_) => panic!("expected a boolean"),
    };
    match t {
        Term::Const(s) => Val::Num(rational(s)),
        Term::Var(v) => Val::Num(env.get(v).unwrap_or_else(|| panic!("unbound {v}")).clone()),
        Term::Bool(b) => Val::Bool(*b),
        Term::App(op, args) => match op.as_str() {
            "and" => Val::Bool(args.iter().all(boolean)),
            "or" => Val::Bool(args.iter().any(boolean)),
            "not" => Val::Bool(!boolean(&args[0])),
            "=>" => {
                let (last, ante) = args.split_last().unwrap();
                Val::Bool(!ante.iter().all(boolean) || boolean(last))
            }
            "+" => Val::Num(args.iter().map(num).fold(BigRational::zero(), |a, b| a + b)),
            "-" if args.len() == 1 => Val::Num(-num(&args[0])),
            "-" => Val::Num(args[1..].iter().map(num).fold(num(&args[0]), |a, b| a - b)),
            "*" => Val::Num(args.iter().map(num).fold(BigRational::one(), |a, b| a * b)),
            "/" => Val::Num(args[1..].iter().map(num).fold(num(&args[0]), |a, b| a / b)),
            "=" | "<" | "<=" | ">" | ">=" => {
                let vals: Vec<BigRational> = args.iter().map(num).collect();
                Val::Bool(vals.windows(2).all(|w| match op.as_str() {
                    "=" => w[0] == w[1],
                    "<" => w[0] < w[1],
                    "<=" => w[0] <= w[1],
                    ">" => w[0] > w[1],
                    _ => w[0] >= w[1],
                }))
            }
            other => panic!("unsupported operator {other}"),
        },
    }
}

/// Does the assignment satisfy every assertion?
pub fn satisfies(script: &Script, env: &HashMap<String, BigRational>) -> bool {
    script
        .assertions
        .iter()
        .all(|a| eval(a, env) == Val::Bool(true))
}

fn collect_constants(
    t: &Term,
    vars: &BTreeSet<String>,
    out: &mut BTreeMap<String, BTreeSet<BigRational>>,
) {
    if let Term::App(op, args) = t {
        if matches!(op.as_str(), "<" | "<=" | ">" | ">=" | "=") && args.len() == 2 {
            let (a, b) = (&args[0], &args[1]);
            if let (Term::Var(v), Some(c)) = (a, constant(b)) {
                if vars.contains(v) {
                    out.entry(v.clone()).or_default().insert(c);
                }
            }
        }
        for a in args {
            collect_constants(a, vars, out);
        }
    }
}

fn constant(t: &Term) -> Option<BigRational> {
    match t {
        Term::Const(s) => Some(rational(s)),
        Term::App(op, args) if op == "-" && args.len() == 1 => constant(&args[0]).map(|c| -c),
        _ => None,
    }
}

/// Assigns the output variables from implications whose antecedent holds.
fn derive_outputs(script: &Script, env: &mut HashMap<String, BigRational>, outputs: &[String]) {
    for a in &script.assertions {
        let (ante, cons): (&[Term], &Term) = match a {
            Term::App(op, args) if op == "=>" => {
                let (last, ante) = args.split_last().unwrap();
                (ante, last)
            }
            t => (&[], t),
        };
        let Term::App(eq, args) = cons else { continue };
        if eq != "=" || args.len() != 2 {
            continue;
        }
        let Term::Var(o) = &args[0] else { continue };
        if !outputs.contains(o) || env.contains_key(o) {
            continue;
        }
        let holds = ante.iter().all(|t| eval(t, env) == Val::Bool(true));
        if holds {
            if let Some(c) = constant(&args[1]) {
                env.insert(o.clone(), c);
            }
        }
    }
}

/// Candidate values per variable: every constant it is compared with,
/// midpoints between consecutive constants, and one point beyond each end.
/// Atoms over one variable and a constant are constant on each resulting
/// cell, so these points cover every combination of atom truth values.
fn candidates(consts: &BTreeSet<BigRational>) -> Vec<BigRational> {
    let sorted: Vec<&BigRational> = consts.iter().collect();
    let Some((first, last)) = sorted.first().zip(sorted.last()) else {
        return vec![BigRational::zero()];
    };
    let mut out = vec![(*first).clone() - BigRational::one()];
    for w in sorted.windows(2) {
        out.push(w[0].clone());
        out.push((w[0].clone() + w[1].clone()) / BigRational::from_integer(2.into()));
    }
    out.push((*last).clone());
    out.push((*last).clone() + BigRational::one());
    out
}

/// Decides an exported query exactly over the rationals by enumerating the
/// cells induced by its constants. The feature variables are the declared
/// ones not named `o_*`; outputs are fixed by the implications. Returns a
/// model when satisfiable, `None` when unsatisfiable, and panics when the
/// cell count exceeds `cap`.
pub fn exact_decide(script: &Script, cap: usize) -> Option<HashMap<String, BigRational>> {
    let (outputs, inputs): (Vec<String>, Vec<String>) = script
        .declarations
        .iter()
        .map(|(n, _)| n.clone())
        .partition(|n| n.starts_with("o_"));
    let vars: BTreeSet<String> = inputs.iter().cloned().collect();
    let mut consts = BTreeMap::new();
    for a in &script.assertions {
        collect_constants(a, &vars, &mut consts);
    }
    let axes: Vec<Vec<BigRational>> = inputs
        .iter()
        .map(|v| candidates(consts.get(v).unwrap_or(&BTreeSet::new())))
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    assert!(total <= cap, "{total} cells exceed the cap of {cap}");
    let mut idx = vec![0usize; axes.len()];
    loop {
        let mut env: HashMap<String, BigRational> = inputs
            .iter()
            .zip(&idx)
            .zip(&axes)
            .map(|((v, &i), axis)| (v.clone(), axis[i].clone()))
            .collect();
        derive_outputs(script, &mut env, &outputs);
        if outputs.iter().all(|o| env.contains_key(o)) && satisfies(script, &env) {
            return Some(env);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return None;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Environment for a concrete point: features by name, outputs from the
/// trees' leaves.
pub fn point_env(ensemble: &Ensemble, x: &[f64]) -> HashMap<String, BigRational> {
    let mut env: HashMap<String, BigRational> = ensemble
        .features()
        .iter()
        .zip(x)
        .map(|(n, &v)| (n.clone(), exact(v)))
        .collect();
    for (h, t) in ensemble.trees().iter().enumerate() {
        env.insert(format!("o_{}", h + 1), exact(t.eval(x)));
    }
    env
}

pub fn is_positive(r: &BigRational) -> bool {
    r.is_positive()
}

/// Looks for an SMT solver on PATH.
pub fn external_solver() -> Option<(String, Vec<String>)> {
    for (bin, args) in [("z3", vec![]), ("cvc5", vec!["--lang=smt2".to_string()])] {
        let found = std::process::Command::new(bin)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false);
        if found {
            return Some((bin.to_string(), args));
        }
    }
    None
}

pub fn run_external(solver: &(String, Vec<String>), path: &std::path::Path) -> String {
    let out = std::process::Command::new(&solver.0)
        .args(&solver.1)
        .arg(path)
        .output()
        .expect("solver runs");
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_string()
}

pub fn small_ensemble(rng: &mut impl Rng) -> Ensemble {
    let shape = Shape::small(rng);
    random_ensemble(rng, &shape)
}
