//! Propositional formulas over task variables, and their clausal form.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a Boolean variable in a configuration task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lit {
    pub var: Var,
    pub positive: bool,
}

impl Lit {
    pub fn new(var: Var, positive: bool) -> Self {
        Lit { var, positive }
    }

    pub fn negated(self) -> Self {
        Lit { var: self.var, positive: !self.positive }
    }
}

pub type Clause = Vec<Lit>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Const(bool),
    /// `var = value`
    Lit(Var, bool),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(v: Var) -> Self {
        Formula::Lit(v, true)
    }

    pub fn negation(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, value: &impl Fn(Var) -> bool) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Lit(v, want) => value(*v) == *want,
            Formula::Not(f) => !f.eval(value),
            Formula::And(fs) => fs.iter().all(|f| f.eval(value)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(value)),
            Formula::Implies(a, b) => !a.eval(value) || b.eval(value),
            Formula::Iff(a, b) => a.eval(value) == b.eval(value),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Const(_) => {}
            Formula::Lit(v, _) => {
                out.insert(*v);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Clausal form by negation normal form plus distribution. No auxiliary
    /// variables are introduced, so the clause set has exactly the models of
    /// the formula over its own variables.
    pub fn to_cnf(&self) -> Vec<Clause> {
        let mut clauses = Vec::new();
        for clause in cnf(&nnf(self, true)) {
            if let Some(c) = normalize(clause) {
                if !clauses.contains(&c) {
                    clauses.push(c);
                }
            }
        }
        clauses
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, names }
    }
}

/// Negation normal form: only `Const`, `Lit`, `And`, `Or`.
fn nnf(f: &Formula, positive: bool) -> Formula {
    match f {
        Formula::Const(b) => Formula::Const(*b == positive),
        Formula::Lit(v, want) => Formula::Lit(*v, *want == positive),
        Formula::Not(g) => nnf(g, !positive),
        Formula::And(fs) => {
            let parts = fs.iter().map(|g| nnf(g, positive)).collect();
            if positive {
                Formula::And(parts)
            } else {
                Formula::Or(parts)
            }
        }
        Formula::Or(fs) => {
            let parts = fs.iter().map(|g| nnf(g, positive)).collect();
            if positive {
                Formula::Or(parts)
            } else {
                Formula::And(parts)
            }
        }
        Formula::Implies(a, b) => {
            let rewritten = Formula::Or(vec![Formula::negation((**a).clone()), (**b).clone()]);
            nnf(&rewritten, positive)
        }
        Formula::Iff(a, b) => {
            let (a, b) = ((**a).clone(), (**b).clone());
            let rewritten = Formula::And(vec![
                Formula::Or(vec![Formula::negation(a.clone()), b.clone()]),
                Formula::Or(vec![a, Formula::negation(b)]),
            ]);
            nnf(&rewritten, positive)
        }
    }
}

/// CNF of an NNF formula.
fn cnf(f: &Formula) -> Vec<Clause> {
    match f {
        Formula::Const(true) => vec![],
        Formula::Const(false) => vec![vec![]],
        Formula::Lit(v, want) => vec![vec![Lit::new(*v, *want)]],
        Formula::And(fs) => fs.iter().flat_map(cnf).collect(),
        Formula::Or(fs) => {
            let mut acc: Vec<Clause> = vec![vec![]];
            for g in fs {
                let part = cnf(g);
                let mut next = Vec::with_capacity(acc.len() * part.len());
                for left in &acc {
                    for right in &part {
                        let mut c = left.clone();
                        c.extend_from_slice(right);
                        if let Some(c) = normalize(c) {
                            next.push(c);
                        }
                    }
                }
                acc = next;
            }
            acc
        }
        Formula::Not(_) | Formula::Implies(..) | Formula::Iff(..) => unreachable!("input is in NNF"),
    }
}

/// Sorts and dedups literals; `None` for tautologies.
fn normalize(mut clause: Clause) -> Option<Clause> {
    clause.sort();
    clause.dedup();
    if clause.windows(2).any(|w| w[0].var == w[1].var) {
        return None;
    }
    Some(clause)
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    names: &'a [String],
}

impl FormulaDisplay<'_> {
    fn write(&self, f: &Formula, out: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        let name = |v: &Var| self.names.get(v.0).cloned().unwrap_or_else(|| format!("v{}", v.0));
        let join = |fs: &[Formula], op: &str, out: &mut fmt::Formatter<'_>| -> fmt::Result {
            if nested {
                write!(out, "(")?;
            }
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    write!(out, " {op} ")?;
                }
                self.write(g, out, true)?;
            }
            if nested {
                write!(out, ")")?;
            }
            Ok(())
        };
        match f {
            Formula::Const(b) => write!(out, "{}", if *b { "true" } else { "false" }),
            Formula::Lit(v, true) => write!(out, "{}", name(v)),
            Formula::Lit(v, false) => write!(out, "!{}", name(v)),
            Formula::Not(g) => {
                write!(out, "!")?;
                self.write(g, out, true)
            }
            Formula::And(fs) if fs.is_empty() => write!(out, "true"),
            Formula::Or(fs) if fs.is_empty() => write!(out, "false"),
            Formula::And(fs) => join(fs, "&", out),
            Formula::Or(fs) => join(fs, "|", out),
            Formula::Implies(a, b) => join(&[(**a).clone(), (**b).clone()], "->", out),
            Formula::Iff(a, b) => join(&[(**a).clone(), (**b).clone()], "<->", out),
        }
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.formula, f, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clause_holds(c: &Clause, bits: u32) -> bool {
        c.iter().any(|l| ((bits >> l.var.0) & 1 == 1) == l.positive)
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let leaf = prop_oneof![
            any::<bool>().prop_map(Formula::Const),
            (0usize..4, any::<bool>()).prop_map(|(v, b)| Formula::Lit(Var(v), b)),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::negation),
                prop::collection::vec(inner.clone(), 0..3).prop_map(Formula::And),
                prop::collection::vec(inner.clone(), 0..3).prop_map(Formula::Or),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| Formula::iff(a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn cnf_preserves_models(f in arb_formula()) {
            let clauses = f.to_cnf();
            for bits in 0u32..16 {
                let direct = f.eval(&|v: Var| (bits >> v.0) & 1 == 1);
                let via_cnf = clauses.iter().all(|c| clause_holds(c, bits));
                prop_assert_eq!(direct, via_cnf);
            }
        }
    }

    #[test]
    fn display_uses_names() {
        let names = vec!["a".to_string(), "b".to_string()];
        let f =
            Formula::iff(Formula::var(Var(0)), Formula::And(vec![Formula::Lit(Var(1), false), Formula::var(Var(0))]));
        assert_eq!(f.display(&names).to_string(), "a <-> (!b & a)");
    }

    #[test]
    fn constants() {
        assert!(Formula::Const(true).to_cnf().is_empty());
        assert_eq!(Formula::Const(false).to_cnf(), vec![Vec::<Lit>::new()]);
    }
}
