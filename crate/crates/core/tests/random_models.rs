use std::collections::BTreeSet;

use fmrec_core::testkit::{brute_force_consistent, brute_force_solutions, random_model, satisfies_named};
use fmrec_core::{parse_model, serialize_model, translate, Assignment, Limit, Propagation, Solver, ValueOrdering};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn enumeration_matches_brute_force_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..200 {
        let model = random_model(&mut rng, 12);
        let task = translate(&model).unwrap();
        let solver = Solver::new(&task);
        let listed = solver.enumerate(Limit::All);
        let found: BTreeSet<_> = listed.iter().map(|c| c.to_named(&task)).collect();
        assert_eq!(found.len(), listed.len(), "duplicates in enumeration");
        assert!(found.iter().all(|c| satisfies_named(&model, c)));
        assert_eq!(found, brute_force_solutions(&model), "{}", serialize_model(&model));
        assert_eq!(listed, solver.enumerate(Limit::All));
    }
}

#[test]
fn solve_agrees_with_consistency_and_propagation_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..150 {
        let model = random_model(&mut rng, 10);
        let task = translate(&model).unwrap();
        let solver = Solver::new(&task);
        let mut partial = Assignment::new();
        for i in 0..task.len() {
            if rng.random_bool(0.3) {
                partial.insert(fmrec_core::Var(i), rng.random_bool(0.5));
            }
        }
        let named = partial.iter().map(|(v, b)| (task.name(v).to_string(), b)).collect();
        let expected = brute_force_consistent(&model, &named);
        assert_eq!(solver.is_consistent(&partial).unwrap(), expected);
        let solved = solver.solve(&partial).unwrap();
        assert_eq!(solved.is_some(), expected);
        if let Some(c) = solved {
            assert!(satisfies_named(&model, &c.to_named(&task)));
            assert!(partial.is_subset_of(&c.to_assignment()));
        }
        match solver.propagate(&partial).unwrap() {
            Propagation::Fixpoint(fixed) => {
                assert!(partial.is_subset_of(&fixed));
                for c in solver.enumerate_with(&partial, Limit::All).unwrap() {
                    assert!(fixed.iter().all(|(v, b)| c.get(v) == b));
                }
            }
            Propagation::Conflict => assert!(!expected),
        }
        let flipped = (0..task.len()).fold(ValueOrdering::default(), |o, i| o.prefer(fmrec_core::Var(i), false));
        if let Some(c) = solver.clone().with_ordering(flipped).solve(&partial).unwrap() {
            assert!(satisfies_named(&model, &c.to_named(&task)));
        }
    }
}

#[test]
fn every_solution_selects_the_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let model = random_model(&mut rng, 12);
        let task = translate(&model).unwrap();
        for c in Solver::new(&task).enumerate(Limit::All) {
            assert!(c.values()[0]);
        }
    }
}

#[test]
fn random_models_round_trip_through_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let model = random_model(&mut rng, 15);
        let text = serialize_model(&model);
        assert_eq!(parse_model(&text).unwrap(), model, "{text}");
    }
}
