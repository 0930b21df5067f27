//! Feature-model configuration and recommendation.
//!
//! Feature models are parsed from a small text format ([`dsl`]), translated
//! into Boolean configuration tasks ([`task`]) and solved with a DPLL search
//! ([`solver`]). On top of that sit utility-based ranking and session-based
//! recommendation ([`recommend`]), conflict detection and repair of
//! inconsistent requirements ([`diagnose`]), and matrix-factorization
//! relevance prediction ([`factorize`]).

pub mod diagnose;
pub mod dsl;
pub mod factorize;
pub mod formula;
pub mod model;
pub mod recommend;
pub mod solver;
pub mod task;

#[cfg(feature = "testkit")]
pub mod testkit;

/// The bundled survey-software reference model.
pub const SURVEY_MODEL: &str = include_str!("../models/survey.fm");

pub use diagnose::{
    all_diagnoses, diagnose, diagnose_task, min_conflict, rank_repairs, repairs, ConflictSet, DiagnoseError, Diagnosis,
    DiagnosisReport, Repair,
};
pub use dsl::{parse_model, serialize_model, ParseError};
pub use factorize::{
    binarize, rmse, train, train_with_history, FactorPair, FactorizeError, InteractionMatrix, Prediction, TrainConfig,
};
pub use formula::{Formula, Lit, Var};
pub use model::{FeatureId, FeatureModel, ModelFinding};
pub use recommend::{InterestProfile, RecommendError, UtilityTable};
pub use solver::{Assignment, Configuration, Limit, Propagation, Solver, SolverError, ValueOrdering};
pub use task::{translate, ConfigurationTask, Requirement, TaskError};
