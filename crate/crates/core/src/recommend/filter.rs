use serde::{Deserialize, Serialize};

use super::{RecommendError, ValueRecommendation};
use crate::solver::{Assignment, Solver};
use crate::task::ConfigurationTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Filtered {
    /// The recommendation is consistent as it stands.
    Kept(ValueRecommendation),
    /// Only the opposite value is consistent; the vote fraction is that of the minority.
    Flipped(ValueRecommendation),
    /// Neither value is consistent with the partial assignment.
    Suppressed,
}

impl Filtered {
    pub fn recommendation(&self) -> Option<&ValueRecommendation> {
        match self {
            Filtered::Kept(r) | Filtered::Flipped(r) => Some(r),
            Filtered::Suppressed => None,
        }
    }
}

/// Checks a value recommendation against the task and the current partial
/// assignment before it is shown.
pub fn consistency_filtered(
    task: &ConfigurationTask,
    partial: &Assignment,
    rec: ValueRecommendation,
) -> Result<Filtered, RecommendError> {
    let var = task.var(&rec.feature).ok_or_else(|| RecommendError::UnknownFeature(rec.feature.clone()))?;
    let solver = Solver::new(task);
    let admits = |value: bool| -> Result<bool, RecommendError> {
        if partial.get(var) == Some(!value) {
            return Ok(false);
        }
        Ok(solver.is_consistent(&partial.clone().with(var, value))?)
    };
    if admits(rec.value)? {
        return Ok(Filtered::Kept(rec));
    }
    if admits(!rec.value)? {
        return Ok(Filtered::Flipped(ValueRecommendation {
            value: !rec.value,
            vote_fraction: 1.0 - rec.vote_fraction,
            ..rec
        }));
    }
    Ok(Filtered::Suppressed)
}
