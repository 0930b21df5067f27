//! Complete DPLL search over the clausal form of a configuration task.
//!
//! Branching follows task variable order and tries each variable's preferred
//! value first, so enumeration order is lexicographic in the variable sequence
//! and reproducible. There is no clause learning and no restarts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Clause, Formula, Lit, Var};
use crate::task::ConfigurationTask;

/// Cap applied to `Limit::All` unless overridden with [`Solver::with_cap`].
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// Preference scores at or above this value make 1 the preferred value.
pub const PREFERENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(Var),
    #[error("preference score {score} for {var:?} is outside [0, 1]")]
    InvalidScore { var: Var, score: f64 },
}

/// A possibly partial assignment of task variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(BTreeMap<Var, bool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: Var, value: bool) -> Option<bool> {
        self.0.insert(var, value)
    }

    pub fn with(mut self, var: Var, value: bool) -> Self {
        self.0.insert(var, value);
        self
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        self.0.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, bool)> + '_ {
        self.0.iter().map(|(&v, &b)| (v, b))
    }

    /// True if every entry of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &Assignment) -> bool {
        self.iter().all(|(v, b)| other.get(v) == Some(b))
    }
}

impl FromIterator<(Var, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (Var, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// A total assignment, indexed by variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(Vec<bool>);

impl Configuration {
    pub fn new(values: Vec<bool>) -> Self {
        Configuration(values)
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, var: Var) -> bool {
        self.0[var.0]
    }

    pub fn to_assignment(&self) -> Assignment {
        self.0.iter().enumerate().map(|(i, &b)| (Var(i), b)).collect()
    }

    /// Feature name → value.
    pub fn to_named(&self, task: &ConfigurationTask) -> BTreeMap<String, bool> {
        task.names().iter().cloned().zip(self.0.iter().copied()).collect()
    }

    /// Names of the selected features, in variable order.
    pub fn selected<'t>(&self, task: &'t ConfigurationTask) -> Vec<&'t str> {
        task.names().iter().zip(&self.0).filter(|(_, &b)| b).map(|(n, _)| n.as_str()).collect()
    }
}

/// Preferred first value per variable; unlisted variables try 1 first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueOrdering(BTreeMap<Var, bool>);

impl ValueOrdering {
    pub fn prefer(mut self, var: Var, value: bool) -> Self {
        self.0.insert(var, value);
        self
    }

    pub fn preferred(&self, var: Var) -> bool {
        self.0.get(&var).copied().unwrap_or(true)
    }

    /// Prefer 1 where the score is at least 0.5, else 0.
    pub fn from_scores(scores: &BTreeMap<Var, f64>) -> Result<Self, SolverError> {
        let mut ordering = ValueOrdering::default();
        for (&var, &score) in scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(SolverError::InvalidScore { var, score });
            }
            ordering.0.insert(var, score >= PREFERENCE_THRESHOLD);
        }
        Ok(ordering)
    }

    fn keys(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    First(usize),
    All,
}

/// Outcome of unit propagation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagation {
    /// The input extended by every forced literal.
    Fixpoint(Assignment),
    /// Some constraint is violated by the forced literals.
    Conflict,
}

/// Search over a fixed clause set. Each call runs its own search state, so
/// a shared `Solver` can serve concurrent callers.
#[derive(Debug, Clone)]
pub struct Solver {
    num_vars: usize,
    clauses: Vec<Clause>,
    ordering: ValueOrdering,
    cap: usize,
}

impl Solver {
    /// Solver over `C_F ∪ C_R` of `task`.
    pub fn new(task: &ConfigurationTask) -> Self {
        Self::from_formulas(task.len(), &task.formulas())
    }

    pub fn from_formulas(num_vars: usize, formulas: &[Formula]) -> Self {
        let mut clauses: Vec<Clause> = Vec::new();
        for f in formulas {
            for c in f.to_cnf() {
                if !clauses.contains(&c) {
                    clauses.push(c);
                }
            }
        }
        Solver { num_vars, clauses, ordering: ValueOrdering::default(), cap: DEFAULT_ENUMERATION_CAP }
    }

    pub fn with_ordering(mut self, ordering: ValueOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    fn check(&self, a: &Assignment) -> Result<(), SolverError> {
        match a.iter().map(|(v, _)| v).chain(self.ordering.keys()).find(|v| v.0 >= self.num_vars) {
            Some(v) => Err(SolverError::UnknownVariable(v)),
            None => Ok(()),
        }
    }

    fn search(&self) -> Search<'_> {
        Search::new(self.num_vars, &self.clauses)
    }

    pub fn is_consistent(&self, extra: &Assignment) -> Result<bool, SolverError> {
        Ok(self.solve(extra)?.is_some())
    }

    pub fn solve(&self, assumptions: &Assignment) -> Result<Option<Configuration>, SolverError> {
        Ok(self.enumerate_with(assumptions, Limit::First(1))?.pop())
    }

    pub fn enumerate(&self, limit: Limit) -> Vec<Configuration> {
        self.enumerate_with(&Assignment::new(), limit).expect("empty assumptions are always valid")
    }

    /// Solutions extending `assumptions`, in lexicographic order with each
    /// variable's preferred value first.
    pub fn enumerate_with(&self, assumptions: &Assignment, limit: Limit) -> Result<Vec<Configuration>, SolverError> {
        self.check(assumptions)?;
        let limit = match limit {
            Limit::First(n) => n.min(self.cap),
            Limit::All => self.cap,
        };
        let mut out = Vec::new();
        if limit == 0 {
            return Ok(out);
        }
        let mut s = self.search();
        for (v, b) in assumptions.iter() {
            s.assign(v, b);
        }
        s.enumerate(&self.ordering, limit, &mut out);
        Ok(out)
    }

    /// Satisfiability under a list of literals that may repeat or contradict
    /// each other.
    pub fn is_satisfiable_under(&self, lits: &[Lit]) -> Result<bool, SolverError> {
        let mut s = self.search();
        for l in lits {
            if l.var.0 >= self.num_vars {
                return Err(SolverError::UnknownVariable(l.var));
            }
            match s.values[l.var.0] {
                Some(b) if b != l.positive => return Ok(false),
                Some(_) => {}
                None => s.assign(l.var, l.positive),
            }
        }
        let mut out = Vec::new();
        s.enumerate(&ValueOrdering::default(), 1, &mut out);
        Ok(!out.is_empty())
    }

    pub fn propagate(&self, partial: &Assignment) -> Result<Propagation, SolverError> {
        self.check(partial)?;
        let mut s = self.search();
        for (v, b) in partial.iter() {
            s.assign(v, b);
        }
        if !s.propagate() {
            return Ok(Propagation::Conflict);
        }
        Ok(Propagation::Fixpoint(s.values.iter().enumerate().filter_map(|(i, v)| v.map(|b| (Var(i), b))).collect()))
    }
}

struct Search<'a> {
    clauses: &'a [Clause],
    values: Vec<Option<bool>>,
    trail: Vec<Var>,
}

impl<'a> Search<'a> {
    fn new(num_vars: usize, clauses: &'a [Clause]) -> Self {
        Search { clauses, values: vec![None; num_vars], trail: Vec::new() }
    }

    fn assign(&mut self, var: Var, value: bool) {
        self.values[var.0] = Some(value);
        self.trail.push(var);
    }

    fn undo(&mut self, mark: usize) {
        for v in self.trail.drain(mark..) {
            self.values[v.0] = None;
        }
    }

    fn lit_value(&self, l: Lit) -> Option<bool> {
        self.values[l.var.0].map(|b| b == l.positive)
    }

    /// Unit propagation to fixpoint; false on conflict.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for clause in self.clauses {
                let mut unassigned = None;
                let mut open = 0;
                let mut satisfied = false;
                for &l in clause {
                    match self.lit_value(l) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            open += 1;
                            unassigned = Some(l);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match (open, unassigned) {
                    (0, _) => return false,
                    (1, Some(l)) => {
                        self.assign(l.var, l.positive);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Returns true once `limit` solutions have been collected.
    fn enumerate(&mut self, ordering: &ValueOrdering, limit: usize, out: &mut Vec<Configuration>) -> bool {
        let mark = self.trail.len();
        if !self.propagate() {
            self.undo(mark);
            return false;
        }
        let done = match self.values.iter().position(Option::is_none) {
            None => {
                out.push(Configuration(self.values.iter().map(|v| v.expect("total")).collect()));
                out.len() >= limit
            }
            Some(i) => {
                let var = Var(i);
                let first = ordering.preferred(var);
                let mut done = false;
                for value in [first, !first] {
                    let branch = self.trail.len();
                    self.assign(var, value);
                    if self.enumerate(ordering, limit, out) {
                        done = true;
                        break;
                    }
                    self.undo(branch);
                }
                done
            }
        };
        self.undo(mark);
        done
    }
}

pub fn is_consistent(task: &ConfigurationTask, extra: &Assignment) -> Result<bool, SolverError> {
    Solver::new(task).is_consistent(extra)
}

pub fn solve(
    task: &ConfigurationTask,
    assumptions: &Assignment,
    ordering: &ValueOrdering,
) -> Result<Option<Configuration>, SolverError> {
    Solver::new(task).with_ordering(ordering.clone()).solve(assumptions)
}

pub fn enumerate(task: &ConfigurationTask, limit: Limit) -> Vec<Configuration> {
    Solver::new(task).enumerate(limit)
}

pub fn propagate(task: &ConfigurationTask, partial: &Assignment) -> Result<Propagation, SolverError> {
    Solver::new(task).propagate(partial)
}

/// Completes `partial` using preference scores as a value ordering, so the
/// result (if any) is consistent by construction.
pub fn consistent_completion(
    task: &ConfigurationTask,
    partial: &Assignment,
    scores: &BTreeMap<Var, f64>,
) -> Result<Option<Configuration>, SolverError> {
    let ordering = ValueOrdering::from_scores(scores)?;
    Solver::new(task).with_ordering(ordering).solve(partial)
}
