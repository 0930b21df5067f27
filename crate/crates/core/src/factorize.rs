//! Matrix factorization of user × feature relevance: prediction from factor
//! matrices, SGD training on observed cells, binarization and ranking.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cut-off for [`binarize`].
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorizeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("matrix has no observed cells")]
    NoObservations,
    #[error("value {value} at ({row}, {column}) is not a number in [0, 1]")]
    InvalidValue { row: String, column: String, value: f64 },
    #[error("non-finite factor entry")]
    NonFinite,
    #[error("training diverged in epoch {0}")]
    Diverged(usize),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// A labelled matrix read from CSV: first header cell is a free label, the
/// rest are column ids; each row starts with its row id.
struct Labelled {
    rows: Vec<String>,
    columns: Vec<String>,
    cells: Array2<Option<f64>>,
}

fn check_unique(labels: &[String]) -> Result<(), FactorizeError> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(FactorizeError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn read_labelled(text: &str) -> Result<Labelled, FactorizeError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FactorizeError::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some(((_, header), body)) = records.split_first() else {
        return Err(FactorizeError::Csv { line: 1, message: "missing header row".into() });
    };
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(FactorizeError::Csv { line: 1, message: "header has no columns".into() });
    }
    check_unique(&columns)?;
    let mut rows = Vec::new();
    let mut cells = Array2::from_elem((body.len(), columns.len()), None);
    for (r, (line, rec)) in body.iter().enumerate() {
        if rec.len() != columns.len() + 1 {
            return Err(FactorizeError::Csv {
                line: *line,
                message: format!("expected {} fields, found {}", columns.len() + 1, rec.len()),
            });
        }
        rows.push(rec[0].to_string());
        for (c, field) in rec.iter().skip(1).enumerate() {
            if field.is_empty() || field == "?" {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| FactorizeError::Csv { line: *line, message: format!("`{field}` is not a number") })?;
            cells[[r, c]] = Some(v);
        }
    }
    check_unique(&rows)?;
    Ok(Labelled { rows, columns, cells })
}

fn write_labelled(corner: &str, rows: &[String], columns: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once(corner).chain(columns.iter().map(String::as_str)).collect();
    // Writing to a Vec cannot fail.
    w.write_record(&header).expect("in-memory csv");
    for (r, name) in rows.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..columns.len()).map(|c| cell(r, c)));
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}

/// Observed relevance of features for users; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    users: Vec<String>,
    features: Vec<String>,
    cells: Array2<Option<f64>>,
}

impl InteractionMatrix {
    pub fn new(users: Vec<String>, features: Vec<String>, cells: Array2<Option<f64>>) -> Result<Self, FactorizeError> {
        if cells.dim() != (users.len(), features.len()) {
            return Err(FactorizeError::DimensionMismatch(format!(
                "{} users × {} features but cells are {:?}",
                users.len(),
                features.len(),
                cells.dim()
            )));
        }
        check_unique(&users)?;
        check_unique(&features)?;
        for ((u, i), v) in cells.indexed_iter() {
            if let Some(v) = *v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(FactorizeError::InvalidValue {
                        row: users[u].clone(),
                        column: features[i].clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(InteractionMatrix { users, features, cells })
    }

    /// A fully observed matrix.
    pub fn dense(users: Vec<String>, features: Vec<String>, values: &Array2<f64>) -> Result<Self, FactorizeError> {
        Self::new(users, features, values.mapv(Some))
    }

    /// Header row: a label followed by feature ids. Each further row: user id
    /// followed by one value per feature; empty or `?` means missing.
    pub fn from_csv(text: &str) -> Result<Self, FactorizeError> {
        let l = read_labelled(text)?;
        Self::new(l.rows, l.columns, l.cells)
    }

    pub fn to_csv(&self) -> String {
        write_labelled("user", &self.users, &self.features, |r, c| match self.cells[[r, c]] {
            Some(v) => v.to_string(),
            None => String::new(),
        })
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn cells(&self) -> &Array2<Option<f64>> {
        &self.cells
    }

    pub fn get(&self, user: &str, feature: &str) -> Option<f64> {
        let u = self.users.iter().position(|x| x == user)?;
        let i = self.features.iter().position(|x| x == feature)?;
        self.cells[[u, i]]
    }

    /// Observed cells as `(user index, feature index, value)` in row-major order.
    pub fn observed(&self) -> Vec<(usize, usize, f64)> {
        self.cells.indexed_iter().filter_map(|((u, i), v)| v.map(|v| (u, i, v))).collect()
    }
}

/// `UA` (users × k) and `AF` (k × features) with their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub users: Vec<String>,
    pub features: Vec<String>,
    pub user_aspects: Array2<f64>,
    pub aspect_features: Array2<f64>,
}

impl FactorPair {
    pub fn new(
        users: Vec<String>,
        features: Vec<String>,
        user_aspects: Array2<f64>,
        aspect_features: Array2<f64>,
    ) -> Result<Self, FactorizeError> {
        let (n, k) = user_aspects.dim();
        let (k2, m) = aspect_features.dim();
        if k == 0 || k != k2 {
            return Err(FactorizeError::DimensionMismatch(format!("UA is {n}×{k}, AF is {k2}×{m}")));
        }
        if n != users.len() || m != features.len() {
            return Err(FactorizeError::DimensionMismatch(format!(
                "{} users × {} features for UA {n}×{k} and AF {k2}×{m}",
                users.len(),
                features.len()
            )));
        }
        check_unique(&users)?;
        check_unique(&features)?;
        if user_aspects.iter().chain(aspect_features.iter()).any(|v| !v.is_finite()) {
            return Err(FactorizeError::NonFinite);
        }
        Ok(FactorPair { users, features, user_aspects, aspect_features })
    }

    /// `UA` as `user,aspect...` rows and `AF` as `aspect,feature...` rows.
    /// Aspect labels must agree in order.
    pub fn from_csv(user_aspects: &str, aspect_features: &str) -> Result<Self, FactorizeError> {
        let ua = read_labelled(user_aspects)?;
        let af = read_labelled(aspect_features)?;
        if ua.columns != af.rows {
            return Err(FactorizeError::DimensionMismatch(format!(
                "UA aspects {:?} differ from AF aspects {:?}",
                ua.columns, af.rows
            )));
        }
        let filled = |l: &Labelled| -> Result<Array2<f64>, FactorizeError> {
            if let Some(((r, c), _)) = l.cells.indexed_iter().find(|(_, v)| v.is_none()) {
                return Err(FactorizeError::Csv {
                    line: r + 2,
                    message: format!("missing value in column `{}`", l.columns[c]),
                });
            }
            Ok(l.cells.mapv(|v| v.unwrap_or(0.0)))
        };
        Self::new(ua.rows.clone(), af.columns.clone(), filled(&ua)?, filled(&af)?)
    }

    pub fn to_csv(&self) -> (String, String) {
        let aspects: Vec<String> = (1..=self.k()).map(|a| format!("a{a}")).collect();
        (
            write_labelled("user", &self.users, &aspects, |r, c| self.user_aspects[[r, c]].to_string()),
            write_labelled("aspect", &aspects, &self.features, |r, c| self.aspect_features[[r, c]].to_string()),
        )
    }

    pub fn k(&self) -> usize {
        self.user_aspects.ncols()
    }

    pub fn predict(&self) -> Prediction {
        Prediction {
            users: self.users.clone(),
            features: self.features.clone(),
            values: self.user_aspects.dot(&self.aspect_features),
        }
    }
}

/// The full predicted matrix `T' = UA · AF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub users: Vec<String>,
    pub features: Vec<String>,
    pub values: Array2<f64>,
}

impl Prediction {
    pub fn get(&self, user: &str, feature: &str) -> Option<f64> {
        let u = self.users.iter().position(|x| x == user)?;
        let i = self.features.iter().position(|x| x == feature)?;
        Some(self.values[[u, i]])
    }

    pub fn row(&self, user: &str) -> Result<Vec<(String, f64)>, FactorizeError> {
        let u =
            self.users.iter().position(|x| x == user).ok_or_else(|| FactorizeError::UnknownUser(user.to_string()))?;
        Ok(self.features.iter().cloned().zip(self.values.row(u).iter().copied()).collect())
    }

    /// `candidates` ordered by predicted score for `user`, highest first;
    /// equal scores keep candidate order.
    pub fn relevance_ranking(&self, user: &str, candidates: &[&str]) -> Result<Vec<(String, f64)>, FactorizeError> {
        if !self.users.iter().any(|x| x == user) {
            return Err(FactorizeError::UnknownUser(user.to_string()));
        }
        let mut out = candidates
            .iter()
            .map(|&f| {
                self.get(user, f)
                    .map(|s| (f.to_string(), s))
                    .ok_or_else(|| FactorizeError::UnknownFeature(f.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(out)
    }
}

/// 1 where `value >= threshold`.
pub fn binarize(values: &Array2<f64>, threshold: f64) -> Array2<u8> {
    values.mapv(|v| u8::from(v >= threshold))
}

/// Root mean squared error of `predicted` over the observed cells of `t`.
pub fn rmse(t: &InteractionMatrix, predicted: &Array2<f64>) -> Result<f64, FactorizeError> {
    if predicted.dim() != t.cells.dim() {
        return Err(FactorizeError::DimensionMismatch(format!("{:?} vs {:?}", t.cells.dim(), predicted.dim())));
    }
    let observed = t.observed();
    if observed.is_empty() {
        return Err(FactorizeError::NoObservations);
    }
    let sse: f64 = observed.iter().map(|&(u, i, v)| (v - predicted[[u, i]]).powi(2)).sum();
    Ok((sse / observed.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { k: 2, learning_rate: 0.05, regularization: 0.0, epochs: 2000, seed: 42 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FactorizeError> {
        if self.k == 0 {
            return Err(FactorizeError::InvalidConfig("k must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FactorizeError::InvalidConfig("learning rate must be positive"));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(FactorizeError::InvalidConfig("regularization must be non-negative"));
        }
        if self.epochs == 0 {
            return Err(FactorizeError::InvalidConfig("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// `Σ_observed (T − UA·AF)² + λ(‖UA‖² + ‖AF‖²)`.
pub fn objective(t: &InteractionMatrix, ua: &Array2<f64>, af: &Array2<f64>, lambda: f64) -> f64 {
    let pred = ua.dot(af);
    let sse: f64 = t.observed().iter().map(|&(u, i, v)| (v - pred[[u, i]]).powi(2)).sum();
    sse + lambda * (ua.iter().map(|x| x * x).sum::<f64>() + af.iter().map(|x| x * x).sum::<f64>())
}

/// Full-batch gradient of [`objective`] with respect to `UA` and `AF`.
pub fn objective_gradient(
    t: &InteractionMatrix,
    ua: &Array2<f64>,
    af: &Array2<f64>,
    lambda: f64,
) -> (Array2<f64>, Array2<f64>) {
    let pred = ua.dot(af);
    let mut resid = Array2::<f64>::zeros(pred.dim());
    for (u, i, v) in t.observed() {
        resid[[u, i]] = v - pred[[u, i]];
    }
    let g_ua = resid.dot(&af.t()) * -2.0 + ua * (2.0 * lambda);
    let g_af = ua.t().dot(&resid) * -2.0 + af * (2.0 * lambda);
    (g_ua, g_af)
}

pub fn train(t: &InteractionMatrix, cfg: &TrainConfig) -> Result<FactorPair, FactorizeError> {
    Ok(train_with_history(t, cfg)?.0)
}

/// Trains by SGD and also returns the objective after every epoch.
pub fn train_with_history(t: &InteractionMatrix, cfg: &TrainConfig) -> Result<(FactorPair, Vec<f64>), FactorizeError> {
    cfg.validate()?;
    let mut cells = t.observed();
    if cells.is_empty() {
        return Err(FactorizeError::NoObservations);
    }
    let (n, m) = t.cells.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ua = Array2::from_shape_simple_fn((n, cfg.k), || rng.random::<f64>() * 0.1);
    let mut af = Array2::from_shape_simple_fn((cfg.k, m), || rng.random::<f64>() * 0.1);
    let (rate, lambda) = (cfg.learning_rate, cfg.regularization);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        cells.shuffle(&mut rng);
        for &(u, i, v) in &cells {
            let pred: f64 = (0..cfg.k).map(|a| ua[[u, a]] * af[[a, i]]).sum();
            let e = v - pred;
            for a in 0..cfg.k {
                let (p, q) = (ua[[u, a]], af[[a, i]]);
                ua[[u, a]] += rate * (e * q - lambda * p);
                af[[a, i]] += rate * (e * p - lambda * q);
            }
        }
        let loss = objective(t, &ua, &af, lambda);
        if !loss.is_finite() {
            return Err(FactorizeError::Diverged(epoch + 1));
        }
        if let Some(&prev) = history.last() {
            if loss > prev {
                log::debug!("training loss rose from {prev} to {loss} in epoch {}", epoch + 1);
            }
        }
        history.push(loss);
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        if last > first {
            log::warn!("training ended with loss {last}, above the first epoch's {first}; try a smaller rate");
        }
    }
    let pair = FactorPair::new(t.users.clone(), t.features.clone(), ua, af)?;
    Ok((pair, history))
}
