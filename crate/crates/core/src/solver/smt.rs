//! SMT-LIB2 (QF_LRA) rendering of the counterexample query, and a strict
//! reader for the subset of the language the exporter emits.
//!
//! The exported script declares one real per feature and one real `o_h` per
//! tree, pins the fixed features, asserts every root-to-leaf path of every
//! tree as an implication, and asserts that the summed output lands on the
//! other side of the class boundary. It is satisfiable exactly when
//! [`flip_reachable`](super::flip_reachable) answers `true`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::dataset::Instance;
use crate::gbm::{Cmp, Ensemble};

/// Exact decimal expansion of a finite `f64`, in SMT-LIB syntax.
pub fn real_literal(x: f64) -> String {
    assert!(x.is_finite(), "SMT-LIB has no literal for {x}");
    let digits = decimal(x.abs());
    if x < 0.0 {
        format!("(- {digits})")
    } else {
        digits
    }
}

fn decimal(x: f64) -> String {
    // Every finite double is a dyadic rational with at most 1074 fractional
    // decimal digits, so this expansion is exact.
    let mut s = format!("{x:.1074}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    s
}

const RESERVED: &[&str] = &[
    "par", "NUMERAL", "DECIMAL", "STRING", "_", "!", "as", "let", "exists", "forall", "match",
    "true", "false",
];

fn is_simple_symbol(s: &str) -> bool {
    let extra = "~!@$%^&*_-+=<>.?/";
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || extra.contains(c) => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || extra.contains(c)) && !RESERVED.contains(&s)
}

fn symbol_for(name: &str) -> String {
    if is_simple_symbol(name) {
        name.to_string()
    } else {
        let cleaned: String = name
            .chars()
            .map(|c| if c == '|' || c == '\\' { '_' } else { c })
            .collect();
        format!("|{cleaned}|")
    }
}

/// Assigns distinct SMT symbols to features, then to tree outputs `o_1..o_m`.
fn symbol_table(ensemble: &Ensemble) -> (Vec<String>, Vec<String>) {
    let mut taken = HashSet::new();
    let mut claim = |base: String| {
        let mut candidate = base.clone();
        let mut k = 1;
        while !taken.insert(bare(&candidate)) {
            k += 1;
            candidate = symbol_for(&format!("{}#{k}", bare(&base)));
        }
        candidate
    };
    let features = ensemble
        .features()
        .iter()
        .map(|f| claim(symbol_for(f)))
        .collect();
    let outputs = (1..=ensemble.trees().len())
        .map(|h| claim(format!("o_{h}")))
        .collect();
    (features, outputs)
}

fn bare(symbol: &str) -> String {
    symbol.trim_matches('|').to_string()
}

/// Renders the counterexample query for `instance` with `fixed` pinned.
pub fn export_smt2(ensemble: &Ensemble, instance: &Instance, fixed: &[usize]) -> String {
    let class = ensemble.predict_class(&instance.values);
    let (vars, outs) = symbol_table(ensemble);
    let mut fixed: Vec<usize> = fixed.to_vec();
    fixed.sort_unstable();
    fixed.dedup();

    let mut s = String::new();
    let fixed_names: Vec<&str> = fixed
        .iter()
        .map(|&f| ensemble.features()[f].as_str())
        .collect();
    let _ = writeln!(
        s,
        "; counterexample query: does any point agreeing on the fixed features change the class?"
    );
    let _ = writeln!(s, "; predicted class: {class}");
    let _ = writeln!(s, "; fixed: {}", fixed_names.join(", "));
    s.push_str("(set-logic QF_LRA)\n");
    for v in vars.iter().chain(&outs) {
        let _ = writeln!(s, "(declare-const {v} Real)");
    }
    for &f in &fixed {
        let _ = writeln!(
            s,
            "(assert (= {} {}))",
            vars[f],
            real_literal(instance.values[f])
        );
    }
    for (tree, out) in ensemble.trees().iter().zip(&outs) {
        for path in tree.paths() {
            let tests: Vec<String> = path
                .antecedent
                .iter()
                .map(|lit| {
                    let op = match lit.cmp {
                        Cmp::Lt => "<",
                        Cmp::Ge => ">=",
                    };
                    format!(
                        "({op} {} {})",
                        vars[lit.feature],
                        real_literal(lit.threshold)
                    )
                })
                .collect();
            let consequent = format!("(= {out} {})", real_literal(path.leaf));
            match tests.len() {
                0 => {
                    let _ = writeln!(s, "(assert {consequent})");
                }
                1 => {
                    let _ = writeln!(s, "(assert (=> {} {consequent}))", tests[0]);
                }
                _ => {
                    let _ = writeln!(s, "(assert (=> (and {}) {consequent}))", tests.join(" "));
                }
            }
        }
    }
    let init = real_literal(ensemble.init());
    let sum = if outs.is_empty() {
        init
    } else {
        format!("(+ {} {init})", outs.join(" "))
    };
    // Negated decision: class 1 needs margin > 0, so its negation is <= 0.
    let op = if class == 1 { "<=" } else { ">" };
    let _ = writeln!(s, "(assert ({op} {sum} 0.0))");
    s.push_str("(check-sat)\n");
    s
}

#[derive(Debug, Error, PartialEq)]
pub enum SmtError {
    #[error("lexical error at byte {0}: {1}")]
    Lex(usize, String),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("sort error: {0}")]
    Sort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Real,
    Bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// A numeral or decimal literal, as written.
    Const(String),
    Var(String),
    Bool(bool),
    App(String, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub logic: String,
    pub declarations: Vec<(String, Sort)>,
    pub assertions: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Symbol(String),
    Keyword(String),
    Numeral(String),
    Decimal(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(Token),
    List(Vec<Sexp>),
}

fn lex(text: &str) -> Result<Vec<Token>, SmtError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let is_delim = |b: u8| b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b';';
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'(' => {
                tokens.push(Token::Open);
                i += 1;
            }
            b')' => {
                tokens.push(Token::Close);
                i += 1;
            }
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            _ if b.is_ascii_whitespace() => i += 1,
            b'|' => {
                let start = i + 1;
                let end = text[start..]
                    .find('|')
                    .map(|k| start + k)
                    .ok_or_else(|| SmtError::Lex(i, "unterminated quoted symbol".into()))?;
                let inner = &text[start..end];
                if inner.contains('\\') {
                    return Err(SmtError::Lex(i, "backslash in quoted symbol".into()));
                }
                tokens.push(Token::Symbol(inner.to_string()));
                i = end + 1;
            }
            _ => {
                let start = i;
                while i < bytes.len() && !is_delim(bytes[i]) {
                    i += 1;
                }
                let word = &text[start..i];
                let token = if word.as_bytes()[0].is_ascii_digit() {
                    classify_number(word)
                        .ok_or_else(|| SmtError::Lex(start, format!("bad number `{word}`")))?
                } else if let Some(k) = word.strip_prefix(':') {
                    if !k.is_empty() && is_simple_symbol(k) {
                        Token::Keyword(k.to_string())
                    } else {
                        return Err(SmtError::Lex(start, format!("bad keyword `{word}`")));
                    }
                } else if is_simple_symbol(word) || RESERVED.contains(&word) {
                    Token::Symbol(word.to_string())
                } else {
                    return Err(SmtError::Lex(start, format!("bad symbol `{word}`")));
                };
                tokens.push(token);
            }
        }
    }
    Ok(tokens)
}

fn classify_number(word: &str) -> Option<Token> {
    let numeral = |s: &str| {
        !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'))
    };
    match word.split_once('.') {
        None if numeral(word) => Some(Token::Numeral(word.to_string())),
        Some((int, frac))
            if numeral(int) && !frac.is_empty() && frac.bytes().all(|b| b.is_ascii_digit()) =>
        {
            Some(Token::Decimal(word.to_string()))
        }
        _ => None,
    }
}

fn read_sexps(tokens: Vec<Token>) -> Result<Vec<Sexp>, SmtError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in tokens {
        match t {
            Token::Open => stack.push(Vec::new()),
            Token::Close => {
                let done = stack.pop().expect("stack is never empty");
                match stack.last_mut() {
                    Some(parent) => parent.push(Sexp::List(done)),
                    None => return Err(SmtError::Syntax("unbalanced `)`".into())),
                }
            }
            atom => stack
                .last_mut()
                .expect("stack is never empty")
                .push(Sexp::Atom(atom)),
        }
    }
    if stack.len() != 1 {
        return Err(SmtError::Syntax("unbalanced `(`".into()));
    }
    Ok(stack.pop().unwrap())
}

struct Checker {
    sorts: HashMap<String, Sort>,
}

impl Checker {
    fn term(&self, s: &Sexp) -> Result<(Term, Sort), SmtError> {
        match s {
            Sexp::Atom(Token::Numeral(n)) | Sexp::Atom(Token::Decimal(n)) => {
                Ok((Term::Const(n.clone()), Sort::Real))
            }
            Sexp::Atom(Token::Symbol(name)) => match name.as_str() {
                "true" => Ok((Term::Bool(true), Sort::Bool)),
                "false" => Ok((Term::Bool(false), Sort::Bool)),
                _ => self
                    .sorts
                    .get(name)
                    .map(|&sort| (Term::Var(name.clone()), sort))
                    .ok_or_else(|| SmtError::Sort(format!("undeclared symbol `{name}`"))),
            },
            Sexp::Atom(t) => Err(SmtError::Syntax(format!("unexpected token {t:?}"))),
            Sexp::List(items) => {
                let (op, args) = match items.split_first() {
                    Some((Sexp::Atom(Token::Symbol(op)), args)) => (op.as_str(), args),
                    _ => {
                        return Err(SmtError::Syntax(
                            "application needs an operator symbol".into(),
                        ))
                    }
                };
                let args = args
                    .iter()
                    .map(|a| self.term(a))
                    .collect::<Result<Vec<_>, _>>()?;
                let need = |sort: Sort, min: usize, max: Option<usize>| -> Result<(), SmtError> {
                    if args.len() < min || max.is_some_and(|m| args.len() > m) {
                        return Err(SmtError::Sort(format!(
                            "`{op}` applied to {} arguments",
                            args.len()
                        )));
                    }
                    if let Some((_, s)) = args.iter().find(|(_, s)| *s != sort) {
                        return Err(SmtError::Sort(format!(
                            "`{op}` expects {sort:?}, got {s:?}"
                        )));
                    }
                    Ok(())
                };
                let result = match op {
                    "+" => {
                        need(Sort::Real, 2, None)?;
                        Sort::Real
                    }
                    "-" => {
                        need(Sort::Real, 1, None)?;
                        Sort::Real
                    }
                    "*" => {
                        need(Sort::Real, 2, None)?;
                        let variable = args.iter().filter(|(t, _)| !is_constant(t)).count();
                        if variable > 1 {
                            return Err(SmtError::Sort("nonlinear product".into()));
                        }
                        Sort::Real
                    }
                    "/" => {
                        need(Sort::Real, 2, Some(2))?;
                        if !args.iter().all(|(t, _)| is_constant(t)) {
                            return Err(SmtError::Sort("division by a non-constant".into()));
                        }
                        Sort::Real
                    }
                    "<" | "<=" | ">" | ">=" => {
                        need(Sort::Real, 2, None)?;
                        Sort::Bool
                    }
                    "=" => {
                        let sort = args.first().map_or(Sort::Real, |a| a.1);
                        need(sort, 2, None)?;
                        Sort::Bool
                    }
                    "and" | "or" | "=>" => {
                        need(Sort::Bool, 2, None)?;
                        Sort::Bool
                    }
                    "not" => {
                        need(Sort::Bool, 1, Some(1))?;
                        Sort::Bool
                    }
                    _ => return Err(SmtError::Sort(format!("unknown function `{op}`"))),
                };
                Ok((
                    Term::App(op.to_string(), args.into_iter().map(|a| a.0).collect()),
                    result,
                ))
            }
        }
    }
}

fn is_constant(t: &Term) -> bool {
    match t {
        Term::Const(_) => true,
        Term::App(op, args) if op == "-" || op == "/" => args.iter().all(is_constant),
        _ => false,
    }
}

/// Parses and sort-checks a QF_LRA script: `set-logic` first, constants of
/// sort `Real` declared before use, Boolean assertions, linear arithmetic,
/// exactly one `check-sat` after all assertions.
pub fn parse_script(text: &str) -> Result<Script, SmtError> {
    let commands = read_sexps(lex(text)?)?;
    let mut checker = Checker {
        sorts: HashMap::new(),
    };
    let mut logic: Option<String> = None;
    let mut declarations = Vec::new();
    let mut assertions = Vec::new();
    let mut checked = false;
    for cmd in &commands {
        let items = match cmd {
            Sexp::List(items) => items,
            _ => {
                return Err(SmtError::Syntax(
                    "top level must consist of commands".into(),
                ))
            }
        };
        let name = match items.first() {
            Some(Sexp::Atom(Token::Symbol(n))) => n.as_str(),
            _ => return Err(SmtError::Syntax("command needs a name".into())),
        };
        if name != "set-info" && name != "set-option" && name != "set-logic" && logic.is_none() {
            return Err(SmtError::Syntax(format!("`{name}` before set-logic")));
        }
        if checked && name != "exit" && name != "get-model" {
            return Err(SmtError::Syntax(format!("`{name}` after check-sat")));
        }
        match (name, &items[1..]) {
            ("set-info" | "set-option", [Sexp::Atom(Token::Keyword(_)), ..]) => {}
            ("set-logic", [Sexp::Atom(Token::Symbol(l))]) => {
                if logic.is_some() {
                    return Err(SmtError::Syntax("set-logic given twice".into()));
                }
                if l != "QF_LRA" {
                    return Err(SmtError::Syntax(format!("unsupported logic `{l}`")));
                }
                logic = Some(l.clone());
            }
            ("declare-const", [Sexp::Atom(Token::Symbol(v)), Sexp::Atom(Token::Symbol(sort))])
            | (
                "declare-fun",
                [Sexp::Atom(Token::Symbol(v)), Sexp::List(_), Sexp::Atom(Token::Symbol(sort))],
            ) => {
                if let Sexp::List(params) = &items[2] {
                    if !params.is_empty() {
                        return Err(SmtError::Syntax(
                            "functions with arguments are not in QF_LRA".into(),
                        ));
                    }
                }
                let sort = match sort.as_str() {
                    "Real" => Sort::Real,
                    "Bool" => Sort::Bool,
                    s => return Err(SmtError::Sort(format!("unsupported sort `{s}`"))),
                };
                if RESERVED.contains(&v.as_str()) || checker.sorts.insert(v.clone(), sort).is_some()
                {
                    return Err(SmtError::Syntax(format!(
                        "`{v}` declared twice or reserved"
                    )));
                }
                declarations.push((v.clone(), sort));
            }
            ("assert", [t]) => {
                let (term, sort) = checker.term(t)?;
                if sort != Sort::Bool {
                    return Err(SmtError::Sort("assertion is not Boolean".into()));
                }
                assertions.push(term);
            }
            ("check-sat", []) => checked = true,
            ("exit" | "get-model", []) => {}
            _ => return Err(SmtError::Syntax(format!("malformed `{name}` command"))),
        }
    }
    if !checked {
        return Err(SmtError::Syntax("missing check-sat".into()));
    }
    Ok(Script {
        logic: logic.expect("checked scripts set a logic"),
        declarations,
        assertions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::load_ensemble;

    #[test]
    fn literals_are_exact() {
        assert_eq!(real_literal(27.0), "27.0");
        assert_eq!(real_literal(50000.0), "50000.0");
        assert_eq!(real_literal(-2.0), "(- 2.0)");
        assert_eq!(real_literal(0.5), "0.5");
        assert_eq!(real_literal(-0.0), "0.0");
        assert_eq!(
            real_literal(0.1),
            "0.1000000000000000055511151231257827021181583404541015625"
        );
    }

    #[test]
    fn example_script() {
        let e = load_ensemble(crate::gbm::tests::example_dump()).unwrap();
        let x = Instance::new(vec![27.0, 80000.0]);
        let text = export_smt2(&e, &x, &[0]);
        assert!(text.contains("(set-logic QF_LRA)"));
        assert!(text.contains("(assert (= age 27.0))"));
        assert!(!text.contains("(= income"));
        assert!(
            text.contains("(assert (=> (and (>= age 30.0) (>= income 50000.0)) (= o_1 (- 1.0))))")
        );
        assert!(text.contains("(assert (<= (+ o_1 0.0) 0.0))"));
        assert!(text.trim_end().ends_with("(check-sat)"));
        let script = parse_script(&text).unwrap();
        assert_eq!(script.logic, "QF_LRA");
        let names: Vec<&str> = script.declarations.iter().map(|d| d.0.as_str()).collect();
        assert_eq!(names, vec!["age", "income", "o_1"]);
        // One pin, four implications, one decision constraint.
        assert_eq!(script.assertions.len(), 6);

        let text = export_smt2(&e, &x, &[1]);
        assert!(text.contains("(assert (= income 80000.0))"));
    }

    #[test]
    fn empty_ensemble_compares_init() {
        let e = load_ensemble(r#"{"init": -0.25, "features": ["a"], "trees": []}"#).unwrap();
        let text = export_smt2(&e, &Instance::new(vec![1.0]), &[]);
        assert!(text.contains("(assert (> (- 0.25) 0.0))"));
        parse_script(&text).unwrap();
    }

    #[test]
    fn awkward_names_are_quoted_and_unique() {
        let e = load_ensemble(
            r#"{"init": 0, "features": ["LA diameter", "o_1", "x|y", "2nd"], "trees": [{"leaf": 1}]}"#,
        )
        .unwrap();
        let text = export_smt2(&e, &Instance::new(vec![0.0; 4]), &[0, 1, 2, 3]);
        let script = parse_script(&text).unwrap();
        let names: Vec<&str> = script.declarations.iter().map(|d| d.0.as_str()).collect();
        assert_eq!(names, vec!["LA diameter", "o_1", "x_y", "2nd", "o_1#2"]);
    }

    #[test]
    fn strict_checks() {
        let ok = "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< x 1.0))\n(check-sat)\n";
        assert!(parse_script(ok).is_ok());
        for bad in [
            "(declare-const x Real)\n(set-logic QF_LRA)\n(check-sat)",
            "(set-logic QF_LRA)\n(assert (< y 1.0))\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (+ x 1.0))\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< x 01.0))\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< (* x x) 1.0))\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< x 1.0)\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< x 1.))\n(check-sat)",
            "(set-logic QF_LRA)\n(declare-const x Real)\n(assert (< x 1.0))",
            "(set-logic QF_NIA)\n(check-sat)",
        ] {
            assert!(parse_script(bad).is_err(), "accepted {bad:?}");
        }
    }
}
