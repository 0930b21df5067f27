mod common;

use std::collections::BTreeSet;

use common::*;
use fmrec_core::diagnose::{all_diagnoses, diagnose, min_conflict, rank_repairs, repairs, Diagnosis};
use fmrec_core::formula::Formula;
use fmrec_core::{ConfigurationTask, Requirement, Solver, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario() -> ConfigurationTask {
    let task = survey_task();
    let reqs = vec![
        task.require("advancedlicense", false).unwrap(),
        task.require("basiclicense", true).unwrap(),
        task.require("ABtesting", true).unwrap(),
    ];
    task.with_requirements(reqs).unwrap()
}

fn background(task: &ConfigurationTask) -> Vec<Formula> {
    task.model_constraints().iter().map(|c| c.formula.clone()).collect()
}

fn consistent(bg: &[Formula], reqs: &[&Requirement], n: usize) -> bool {
    let mut all = bg.to_vec();
    all.extend(reqs.iter().map(|r| r.formula()));
    Solver::from_formulas(n, &all).is_consistent(&Default::default()).unwrap()
}

/// Minimal removal sets by checking every subset of the candidates.
fn brute_force_diagnoses(bg: &[Formula], cands: &[Requirement], n: usize) -> BTreeSet<BTreeSet<usize>> {
    let k = cands.len();
    let restores = |mask: u32| {
        let kept: Vec<&Requirement> = (0..k).filter(|i| mask & (1 << i) == 0).map(|i| &cands[i]).collect();
        consistent(bg, &kept, n)
    };
    let hitting: Vec<u32> = (0..1u32 << k).filter(|&m| restores(m)).collect();
    hitting
        .iter()
        .filter(|&&m| !hitting.iter().any(|&o| o != m && o & m == o))
        .filter(|&&m| m != 0)
        .map(|&m| (0..k).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn as_indices(diagnoses: &[Diagnosis], cands: &[Requirement]) -> BTreeSet<BTreeSet<usize>> {
    diagnoses
        .iter()
        .map(|d| d.requirements.iter().map(|r| cands.iter().position(|c| c == r).unwrap()).collect())
        .collect()
}

#[test]
fn conflict_in_license_scenario() {
    let task = scenario();
    let bg = background(&task);
    let conflict = min_conflict(&bg, task.requirements()).unwrap().unwrap();
    let names: Vec<String> = conflict.requirements.iter().map(|r| task.describe(r)).collect();
    assert_eq!(names, ["advancedlicense=0", "ABtesting=1"]);
}

#[test]
fn diagnoses_in_license_scenario() {
    let task = scenario();
    let bg = background(&task);
    let report = diagnose(&bg, task.requirements()).unwrap();
    let conflicts: BTreeSet<Vec<String>> =
        report.conflicts.iter().map(|c| c.requirements.iter().map(|r| task.describe(r)).collect()).collect();
    assert_eq!(
        conflicts,
        BTreeSet::from([
            vec!["advancedlicense=0".to_string(), "ABtesting=1".to_string()],
            vec!["basiclicense=1".to_string(), "ABtesting=1".to_string()],
        ])
    );
    let shown: Vec<Vec<String>> =
        report.diagnoses.iter().map(|d| d.requirements.iter().map(|r| task.describe(r)).collect()).collect();
    assert_eq!(shown, [vec!["ABtesting=1"], vec!["advancedlicense=0", "basiclicense=1"]]);
    assert_eq!(
        as_indices(&report.diagnoses, task.requirements()),
        brute_force_diagnoses(&bg, task.requirements(), task.len())
    );
}

#[test]
fn repairs_and_their_ranking() {
    let task = scenario();
    let diagnoses = all_diagnoses(&background(&task), task.requirements()).unwrap();
    let found = repairs(&task, &diagnoses).unwrap();
    assert_eq!(found.len(), 2);
    assert_eq!(found[0].changes, named(&[("ABtesting", false)]));
    assert_eq!(found[1].changes, named(&[("advancedlicense", true), ("basiclicense", false)]));
    let alt1 = named(&[("advancedlicense", true), ("basiclicense", false), ("ABtesting", true)]);
    let alt2 = named(&[("advancedlicense", false), ("basiclicense", true), ("ABtesting", false)]);
    assert_eq!(found[0].assignment, alt2);
    assert_eq!(found[1].assignment, alt1);

    let ranked = rank_repairs(found.clone(), &utilities(), &profile_ua()).unwrap();
    assert_eq!(ranked[0].assignment, alt2);
    assert!((ranked[0].utility.unwrap() - 0.82).abs() < 1e-9);
    assert!((ranked[1].utility.unwrap() - 0.72).abs() < 1e-9);

    let scaled = rank_repairs(found, &utilities(), &profile_ua().scaled(0.5)).unwrap();
    assert_eq!(scaled.iter().map(|r| &r.assignment).collect::<Vec<_>>(), [&alt2, &alt1]);
    assert!(repairs(&task, &[]).unwrap().is_empty());
}

#[test]
fn all_false_repair_has_zero_utility() {
    let task = survey_task();
    let reqs = vec![task.require("ABtesting", true).unwrap(), task.require("statistics", false).unwrap()];
    let task = task.with_requirements(reqs).unwrap();
    let diagnoses = all_diagnoses(&background(&task), task.requirements()).unwrap();
    let ranked = rank_repairs(repairs(&task, &diagnoses).unwrap(), &utilities(), &profile_ua()).unwrap();
    let off = ranked.iter().find(|r| r.assignment.values().all(|v| !v)).unwrap();
    assert_eq!(off.utility, Some(0.0));
}

#[test]
fn singleton_conflict_against_root() {
    let task = survey_task();
    let r = task.require("survey", false).unwrap();
    let c = min_conflict(&background(&task), std::slice::from_ref(&r)).unwrap().unwrap();
    assert_eq!(c.requirements, vec![r.clone()]);
    assert_eq!(
        all_diagnoses(&background(&task), std::slice::from_ref(&r)).unwrap(),
        vec![Diagnosis { requirements: vec![r] }]
    );
}

fn random_instance(rng: &mut impl Rng) -> (Vec<Formula>, Vec<Requirement>, usize) {
    let n = rng.random_range(2..=6);
    let lit = |rng: &mut ChaCha8Rng| Formula::Lit(Var(rng.random_range(0..n)), rng.random_bool(0.5));
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    let mut bg = Vec::new();
    for _ in 0..rng.random_range(0..4) {
        bg.push(Formula::Or(vec![lit(&mut r), lit(&mut r)]));
    }
    let mut cands: Vec<Requirement> = Vec::new();
    for _ in 0..rng.random_range(1..=10) {
        let r = Requirement::new(Var(rng.random_range(0..n)), rng.random_bool(0.5));
        if !cands.contains(&r) {
            cands.push(r);
        }
    }
    (bg, cands, n)
}

#[test]
fn diagnoses_match_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 300 {
        let (bg, cands, n) = random_instance(&mut rng);
        if !consistent(&bg, &[], n) {
            continue;
        }
        checked += 1;
        let report = diagnose(&bg, &cands).unwrap();
        assert_eq!(as_indices(&report.diagnoses, &cands), brute_force_diagnoses(&bg, &cands, n));

        for c in &report.conflicts {
            let refs: Vec<&Requirement> = c.requirements.iter().collect();
            assert!(!consistent(&bg, &refs, n));
            if refs.len() <= 4 {
                for mask in 0..(1u32 << refs.len()) - 1 {
                    let sub: Vec<&Requirement> =
                        (0..refs.len()).filter(|i| mask & (1 << i) != 0).map(|i| refs[i]).collect();
                    assert!(consistent(&bg, &sub, n));
                }
            } else {
                for skip in 0..refs.len() {
                    let sub: Vec<&Requirement> =
                        refs.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, r)| *r).collect();
                    assert!(consistent(&bg, &sub, n));
                }
            }
        }
    }
}
