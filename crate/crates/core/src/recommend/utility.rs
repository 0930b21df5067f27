use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RecommendError;

/// Utility `u(f, d)` of including feature `f`, per interest dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    dimensions: Vec<String>,
    values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl UtilityTable {
    pub fn new<S: Into<String>>(dimensions: impl IntoIterator<Item = S>) -> Result<Self, RecommendError> {
        let mut dims: Vec<String> = Vec::new();
        for d in dimensions {
            let d = d.into();
            if !dims.contains(&d) {
                dims.push(d);
            }
        }
        if dims.is_empty() {
            return Err(RecommendError::NoDimensions);
        }
        Ok(UtilityTable { dimensions: dims, values: BTreeMap::new() })
    }

    /// Builds a table from `(feature, dimension, utility)` rows. Dimensions
    /// are taken in first-seen order.
    pub fn from_rows<F, D>(rows: impl IntoIterator<Item = (F, D, f64)>) -> Result<Self, RecommendError>
    where
        F: Into<String>,
        D: Into<String>,
    {
        let rows: Vec<(String, String, f64)> = rows.into_iter().map(|(f, d, u)| (f.into(), d.into(), u)).collect();
        let mut table = UtilityTable::new(rows.iter().map(|(_, d, _)| d.clone()))?;
        for (f, d, u) in rows {
            table.set(f, &d, u)?;
        }
        Ok(table)
    }

    pub fn set(&mut self, feature: impl Into<String>, dimension: &str, utility: f64) -> Result<(), RecommendError> {
        if !self.dimensions.iter().any(|d| d == dimension) {
            return Err(RecommendError::UnknownDimension(dimension.to_string()));
        }
        if !(0.0..=1.0).contains(&utility) {
            return Err(RecommendError::OutOfRange { what: "utility", value: utility });
        }
        self.values.entry(feature.into()).or_default().insert(dimension.to_string(), utility);
        Ok(())
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn get(&self, feature: &str, dimension: &str) -> Option<f64> {
        self.values.get(feature).and_then(|row| row.get(dimension)).copied()
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.values.iter().flat_map(|(f, row)| row.iter().map(move |(d, &u)| (f.as_str(), d.as_str(), u)))
    }

    /// Utility of one selected feature for `profile`; 0 for features the table omits.
    fn feature_utility(&self, feature: &str, profile: &InterestProfile) -> Result<f64, RecommendError> {
        let Some(row) = self.values.get(feature) else {
            return Ok(0.0);
        };
        let mut sum = 0.0;
        for d in &self.dimensions {
            let u = row
                .get(d)
                .ok_or_else(|| RecommendError::MissingUtility { feature: feature.to_string(), dimension: d.clone() })?;
            sum += u * profile.weight(d).unwrap_or(0.0);
        }
        Ok(sum)
    }
}

/// A user's interest weights `up(u, d)` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestProfile {
    pub user: String,
    weights: BTreeMap<String, f64>,
}

impl InterestProfile {
    pub fn new<S: Into<String>>(
        user: impl Into<String>,
        weights: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, RecommendError> {
        let mut map = BTreeMap::new();
        for (d, w) in weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(RecommendError::OutOfRange { what: "weight", value: w });
            }
            map.insert(d.into(), w);
        }
        Ok(InterestProfile { user: user.into(), weights: map })
    }

    pub fn weight(&self, dimension: &str) -> Option<f64> {
        self.weights.get(dimension).copied()
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    /// Same profile with every weight multiplied by `factor`, unclamped.
    pub fn scaled(&self, factor: f64) -> Self {
        InterestProfile {
            user: self.user.clone(),
            weights: self.weights.iter().map(|(d, w)| (d.clone(), w * factor)).collect(),
        }
    }
}

fn check_dimensions(table: &UtilityTable, profile: &InterestProfile) -> Result<(), RecommendError> {
    let table_dims: BTreeSet<&String> = table.dimensions.iter().collect();
    let profile_dims: BTreeSet<&String> = profile.weights.keys().collect();
    if table_dims != profile_dims {
        return Err(RecommendError::DimensionMismatch {
            table: table.dimensions.clone(),
            profile: profile.weights.keys().cloned().collect(),
        });
    }
    Ok(())
}

/// Sum over selected features `f` (restricted to `scope` if given) of
/// `Σ_d u(f, d) · up(d)`.
pub fn overall_utility(
    values: &BTreeMap<String, bool>,
    table: &UtilityTable,
    profile: &InterestProfile,
    scope: Option<&BTreeSet<String>>,
) -> Result<f64, RecommendError> {
    check_dimensions(table, profile)?;
    let mut total = 0.0;
    for (feature, _) in values.iter().filter(|(_, &on)| on) {
        if scope.is_some_and(|s| !s.contains(feature)) {
            continue;
        }
        total += table.feature_utility(feature, profile)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    /// Position of the configuration in the input list.
    pub index: usize,
    pub score: f64,
}

/// Configurations by descending utility; equal scores keep input order.
pub fn rank_configurations(
    configs: &[BTreeMap<String, bool>],
    table: &UtilityTable,
    profile: &InterestProfile,
) -> Result<Vec<Ranked>, RecommendError> {
    let mut ranked = configs
        .iter()
        .enumerate()
        .map(|(index, c)| Ok(Ranked { index, score: overall_utility(c, table, profile, None)? }))
        .collect::<Result<Vec<_>, RecommendError>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ranked)
}

/// Mean of the individual utilities over all profiles.
pub fn group_utility(
    config: &BTreeMap<String, bool>,
    table: &UtilityTable,
    profiles: &[InterestProfile],
) -> Result<f64, RecommendError> {
    if profiles.is_empty() {
        return Err(RecommendError::NoProfiles);
    }
    let mut sum = 0.0;
    for p in profiles {
        sum += overall_utility(config, table, p, None)?;
    }
    Ok(sum / profiles.len() as f64)
}
