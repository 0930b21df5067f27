//! Ranking and recommendation: utility-based ranking of configurations,
//! nearest-neighbor value recommendation from session logs, next-item
//! recommendation from specification orderings, and a consistency filter that
//! keeps recommendations in line with the feature model.

use thiserror::Error;

mod filter;
mod session;
mod utility;

pub use filter::{consistency_filtered, Filtered};
pub use session::{
    rank_similarity, recommend_next_constraint, recommend_next_feature, recommend_value, user_similarity, EditLog,
    NextItem, SessionLog, ValueRecommendation,
};
pub use utility::{group_utility, overall_utility, rank_configurations, InterestProfile, Ranked, UtilityTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error("utility table dimensions {table:?} do not match profile dimensions {profile:?}")]
    DimensionMismatch { table: Vec<String>, profile: Vec<String> },
    #[error("utility table has no dimensions")]
    NoDimensions,
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("no utility for feature `{feature}` on dimension `{dimension}`")]
    MissingUtility { feature: String, dimension: String },
    #[error("{what} {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("at least one interest profile is required")]
    NoProfiles,
    #[error("neighbor count must be at least 1")]
    InvalidNeighborCount,
    #[error("feature `{0}` is already specified in the current session")]
    AlreadySpecified(String),
    #[error("no completed session specifies `{0}`")]
    NoEvidence(String),
    #[error("the current session has not ranked any item yet")]
    NothingRanked,
    #[error("no session ranks an item the current session has not specified")]
    NoCandidate,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
}
