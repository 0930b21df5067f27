//! Reconfiguration support: minimal conflicts among user requirements
//! (QuickXplain), minimal diagnoses (breadth-first hitting-set tree), concrete
//! repairs for each diagnosis, and utility-based ranking of those repairs.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Formula, Lit};
use crate::recommend::{overall_utility, InterestProfile, RecommendError, UtilityTable};
use crate::solver::{Solver, SolverError, DEFAULT_ENUMERATION_CAP};
use crate::task::{ConfigurationTask, Requirement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnoseError {
    #[error("background constraints are inconsistent on their own")]
    InconsistentBackground,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A minimal set of requirements that is inconsistent with the background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictSet {
    /// In candidate listing order.
    pub requirements: Vec<Requirement>,
}

/// A minimal set of requirements whose removal restores consistency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Sorted by variable, then value.
    pub requirements: Vec<Requirement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    /// Conflicts in the order the tree discovered them.
    pub conflicts: Vec<ConflictSet>,
    pub diagnoses: Vec<Diagnosis>,
}

/// Consistency checks of candidate subsets against a fixed background, cached
/// per subset.
struct Checker<'a> {
    solver: Solver,
    candidates: &'a [Requirement],
    cache: RefCell<HashMap<Vec<usize>, bool>>,
}

impl<'a> Checker<'a> {
    fn new(background: &[Formula], candidates: &'a [Requirement]) -> Self {
        let num_vars = background
            .iter()
            .flat_map(|f| f.vars())
            .chain(candidates.iter().map(|r| r.var))
            .map(|v| v.0 + 1)
            .max()
            .unwrap_or(0);
        Checker { solver: Solver::from_formulas(num_vars, background), candidates, cache: RefCell::default() }
    }

    fn consistent(&self, subset: &[usize]) -> Result<bool, SolverError> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&hit) = self.cache.borrow().get(&key) {
            return Ok(hit);
        }
        let lits: Vec<Lit> = key.iter().map(|&i| Lit::new(self.candidates[i].var, self.candidates[i].value)).collect();
        let result = self.solver.is_satisfiable_under(&lits)?;
        self.cache.borrow_mut().insert(key, result);
        Ok(result)
    }

    fn check_background(&self) -> Result<(), DiagnoseError> {
        if self.consistent(&[])? {
            Ok(())
        } else {
            Err(DiagnoseError::InconsistentBackground)
        }
    }

    /// Minimal conflict within `among` (candidate indices in preference
    /// order), or `None` if they are consistent together.
    fn conflict(&self, among: &[usize]) -> Result<Option<Vec<usize>>, SolverError> {
        if among.is_empty() || self.consistent(among)? {
            return Ok(None);
        }
        let mut found = self.quickxplain(&mut Vec::new(), false, among)?;
        found.sort_unstable();
        Ok(Some(found))
    }

    /// Divide and conquer: `base` holds the requirements already assumed,
    /// `added` says whether the last call grew `base`.
    fn quickxplain(&self, base: &mut Vec<usize>, added: bool, among: &[usize]) -> Result<Vec<usize>, SolverError> {
        if added && !self.consistent(base)? {
            return Ok(Vec::new());
        }
        if among.len() == 1 {
            return Ok(among.to_vec());
        }
        let (first, second) = among.split_at(among.len() / 2);

        let mark = base.len();
        base.extend_from_slice(first);
        let from_second = self.quickxplain(base, !first.is_empty(), second)?;
        base.truncate(mark);

        base.extend_from_slice(&from_second);
        let from_first = self.quickxplain(base, !from_second.is_empty(), first)?;
        base.truncate(mark);

        let mut out = from_first;
        out.extend(from_second);
        Ok(out)
    }
}

/// Candidates with repeated (feature, value) pairs dropped, first kept.
fn distinct(candidates: &[Requirement]) -> Vec<Requirement> {
    let mut seen = HashSet::new();
    candidates.iter().filter(|r| seen.insert((r.var, r.value))).cloned().collect()
}

/// One minimal conflict among `candidates`, preferring to keep earlier
/// candidates out of it; `None` if background and candidates are consistent.
pub fn min_conflict(background: &[Formula], candidates: &[Requirement]) -> Result<Option<ConflictSet>, DiagnoseError> {
    let candidates = &distinct(candidates)[..];
    let checker = Checker::new(background, candidates);
    checker.check_background()?;
    let all: Vec<usize> = (0..candidates.len()).collect();
    Ok(checker
        .conflict(&all)?
        .map(|idx| ConflictSet { requirements: idx.iter().map(|&i| candidates[i].clone()).collect() }))
}

/// All minimal diagnoses (and the conflicts used to find them).
pub fn diagnose(background: &[Formula], candidates: &[Requirement]) -> Result<DiagnosisReport, DiagnoseError> {
    let candidates = &distinct(candidates)[..];
    let checker = Checker::new(background, candidates);
    checker.check_background()?;

    let mut conflicts: Vec<BTreeSet<usize>> = Vec::new();
    let mut found: Vec<BTreeSet<usize>> = Vec::new();
    let mut queue: VecDeque<BTreeSet<usize>> = VecDeque::from([BTreeSet::new()]);
    let mut seen: HashSet<BTreeSet<usize>> = HashSet::new();

    while let Some(path) = queue.pop_front() {
        if found.iter().any(|d| d.is_subset(&path)) {
            continue;
        }
        let label = match conflicts.iter().find(|c| c.is_disjoint(&path)) {
            Some(c) => Some(c.clone()),
            None => {
                let rest: Vec<usize> = (0..candidates.len()).filter(|i| !path.contains(i)).collect();
                match checker.conflict(&rest)? {
                    Some(c) => {
                        let c: BTreeSet<usize> = c.into_iter().collect();
                        conflicts.push(c.clone());
                        Some(c)
                    }
                    None => None,
                }
            }
        };
        match label {
            None => found.push(path),
            Some(conflict) => {
                for i in conflict {
                    let mut child = path.clone();
                    child.insert(i);
                    if seen.insert(child.clone()) {
                        queue.push_back(child);
                    }
                }
            }
        }
    }

    // The root is a "diagnosis" only when nothing conflicts.
    found.retain(|d| !d.is_empty());

    let to_reqs = |set: &BTreeSet<usize>| -> Vec<Requirement> { set.iter().map(|&i| candidates[i].clone()).collect() };
    let mut diagnoses: Vec<Diagnosis> = found
        .iter()
        .map(|d| {
            let mut requirements = to_reqs(d);
            requirements.sort_by_key(|r| (r.var, r.value));
            Diagnosis { requirements }
        })
        .collect();
    diagnoses.sort_by(|a, b| {
        let key = |d: &Diagnosis| d.requirements.iter().map(|r| (r.var, r.value)).collect::<Vec<_>>();
        a.requirements.len().cmp(&b.requirements.len()).then_with(|| key(a).cmp(&key(b)))
    });
    Ok(DiagnosisReport {
        conflicts: conflicts.iter().map(|c| ConflictSet { requirements: to_reqs(c) }).collect(),
        diagnoses,
    })
}

pub fn all_diagnoses(background: &[Formula], candidates: &[Requirement]) -> Result<Vec<Diagnosis>, DiagnoseError> {
    Ok(diagnose(background, candidates)?.diagnoses)
}

/// Diagnosis of a task's requirements against its model constraints.
pub fn diagnose_task(task: &ConfigurationTask) -> Result<DiagnosisReport, DiagnoseError> {
    let background: Vec<Formula> = task.model_constraints().iter().map(|c| c.formula.clone()).collect();
    diagnose(&background, task.requirements())
}

/// A concrete way to restore consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub diagnosis: Diagnosis,
    /// New value of each diagnosed feature.
    pub changes: BTreeMap<String, bool>,
    /// Post-repair values of every feature the requirements mention.
    pub assignment: BTreeMap<String, bool>,
    /// Set by [`rank_repairs`].
    pub utility: Option<f64>,
}

/// For each diagnosis, every distinct combination of values for the diagnosed
/// features that is consistent with the model and the remaining requirements.
/// Combinations are listed with 1 tried before 0, in variable order.
pub fn repairs(task: &ConfigurationTask, diagnoses: &[Diagnosis]) -> Result<Vec<Repair>, DiagnoseError> {
    let solver = Solver::from_formulas(
        task.len(),
        &task.model_constraints().iter().map(|c| c.formula.clone()).collect::<Vec<_>>(),
    );
    let mut out = Vec::new();
    for diagnosis in diagnoses {
        let kept: Vec<&Requirement> =
            task.requirements().iter().filter(|r| !diagnosis.requirements.contains(r)).collect();
        let kept_lits: Vec<Lit> = kept.iter().map(|r| Lit::new(r.var, r.value)).collect();
        let mut vars: Vec<_> = diagnosis.requirements.iter().map(|r| r.var).collect();
        vars.sort_unstable();
        vars.dedup();

        let mut combos = Vec::new();
        let mut prefix = Vec::new();
        extend_combos(&solver, &kept_lits, &vars, &mut prefix, &mut combos)?;

        for combo in combos {
            let changes: BTreeMap<String, bool> =
                combo.iter().map(|l| (task.name(l.var).to_string(), l.positive)).collect();
            let mut assignment: BTreeMap<String, bool> =
                kept.iter().map(|r| (task.name(r.var).to_string(), r.value)).collect();
            assignment.extend(changes.clone());
            out.push(Repair { diagnosis: diagnosis.clone(), changes, assignment, utility: None });
        }
    }
    Ok(out)
}

fn extend_combos(
    solver: &Solver,
    kept: &[Lit],
    vars: &[crate::formula::Var],
    prefix: &mut Vec<Lit>,
    out: &mut Vec<Vec<Lit>>,
) -> Result<(), SolverError> {
    if out.len() >= DEFAULT_ENUMERATION_CAP {
        return Ok(());
    }
    let lits: Vec<Lit> = kept.iter().chain(prefix.iter()).copied().collect();
    if !solver.is_satisfiable_under(&lits)? {
        return Ok(());
    }
    let Some(&var) = vars.get(prefix.len()) else {
        out.push(prefix.clone());
        return Ok(());
    };
    for value in [true, false] {
        prefix.push(Lit::new(var, value));
        extend_combos(solver, kept, vars, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Scores each repair by the utility of its post-repair assignment and sorts
/// by descending utility (stable).
pub fn rank_repairs(
    repairs: Vec<Repair>,
    table: &UtilityTable,
    profile: &InterestProfile,
) -> Result<Vec<Repair>, RecommendError> {
    let mut scored = repairs
        .into_iter()
        .map(|mut r| {
            r.utility = Some(overall_utility(&r.assignment, table, profile, None)?);
            Ok(r)
        })
        .collect::<Result<Vec<_>, RecommendError>>()?;
    scored.sort_by(|a, b| b.utility.unwrap_or(0.0).total_cmp(&a.utility.unwrap_or(0.0)));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Var;

    fn req(v: usize, b: bool) -> Requirement {
        Requirement::new(Var(v), b)
    }

    #[test]
    fn consistent_candidates_have_no_conflict() {
        let bg = [Formula::implies(Formula::var(Var(0)), Formula::var(Var(1)))];
        assert_eq!(min_conflict(&bg, &[req(0, true), req(1, true)]).unwrap(), None);
        assert!(all_diagnoses(&bg, &[req(0, true)]).unwrap().is_empty());
    }

    #[test]
    fn singleton_conflict() {
        let bg = [Formula::Lit(Var(0), true)];
        let c = min_conflict(&bg, &[req(1, true), req(0, false)]).unwrap().unwrap();
        assert_eq!(c.requirements, vec![req(0, false)]);
        assert_eq!(
            all_diagnoses(&bg, &[req(0, false)]).unwrap(),
            vec![Diagnosis { requirements: vec![req(0, false)] }]
        );
    }

    #[test]
    fn contradictory_candidates() {
        let c = min_conflict(&[], &[req(0, true), req(1, true), req(0, false)]).unwrap().unwrap();
        assert_eq!(c.requirements, vec![req(0, true), req(0, false)]);
    }

    #[test]
    fn inconsistent_background() {
        let bg = [Formula::Const(false)];
        assert_eq!(min_conflict(&bg, &[req(0, true)]), Err(DiagnoseError::InconsistentBackground));
        assert_eq!(all_diagnoses(&bg, &[]), Err(DiagnoseError::InconsistentBackground));
    }
}
