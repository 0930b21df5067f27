//! HTTP/JSON interface under `/api/v1`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use fmrec_core::factorize::{InteractionMatrix, TrainConfig};
use fmrec_core::recommend::{consistency_filtered, recommend_next_feature, recommend_value, Filtered, RecommendError};
use fmrec_core::{
    diagnose_task, rank_repairs, repairs, Assignment, DiagnoseError, Limit, Requirement, Solver, TaskError,
};
use serde::de::{DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::formats::{read_profile, read_sessions, read_utilities, FormatError};
use crate::store::{SessionStatus, Store, StoreError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError { status, message: message.to_string() }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unprocessable(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StoreError::*;
        let status = match &e {
            UnknownModel(_) | UnknownSession(_) | UnknownProfile(_) | UnknownJob(_) | NoJobs => StatusCode::NOT_FOUND,
            SessionCompleted(_) | SessionInconsistent(_) | DuplicateId(_) | RankRegression { .. } => {
                StatusCode::CONFLICT
            }
            Parse(_) | InvalidModel(_) | UnknownFeature(_) | Rejected(_) | Factorize(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Journal { .. } | Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::Solver(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e),
            _ => ApiError::unprocessable(e),
        }
    }
}

impl From<DiagnoseError> for ApiError {
    fn from(e: DiagnoseError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        ApiError::unprocessable(e)
    }
}

impl From<TaskError> for ApiError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::MalformedRequirement(_) => ApiError::bad_request(e),
            _ => ApiError::unprocessable(e),
        }
    }
}

/// `Json` with rejections reported as 400 in the API's error shape.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(e) => Err(ApiError::bad_request(e.body_text())),
        }
    }
}

type ApiResult = Result<Response, ApiError>;
type Shared = Arc<Store>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
}

/// Accepts `0`, `1`, `true` or `false`.
fn bit<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Int(u64),
    }
    match Raw::deserialize(d)? {
        Raw::Bool(b) => Ok(b),
        Raw::Int(0) => Ok(false),
        Raw::Int(1) => Ok(true),
        Raw::Int(n) => Err(serde::de::Error::custom(format!("value {n} is not 0 or 1"))),
    }
}

fn bits(values: &BTreeMap<String, bool>) -> BTreeMap<&str, u8> {
    values.iter().map(|(f, v)| (f.as_str(), u8::from(*v))).collect()
}

fn pairs(values: impl IntoIterator<Item = (String, bool)>) -> Vec<Value> {
    values.into_iter().map(|(f, v)| json!({ "feature": f, "value": u8::from(v) })).collect()
}

pub fn router(store: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/models", post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/configurations", get(configurations))
        .route("/models/{id}/utilities", put(put_utilities))
        .route("/models/{id}/sessions/import", post(import_sessions))
        .route("/profiles/{id}", put(put_profile))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/assign", post(assign))
        .route("/sessions/{id}/complete", post(complete))
        .route("/sessions/{id}/recommendation/value", get(value_recommendation))
        .route("/sessions/{id}/recommendation/next", get(next_recommendation))
        .route("/sessions/{id}/conflicts", get(conflicts))
        .route("/sessions/{id}/repairs", get(session_repairs))
        .route("/mf/train", post(mf_train))
        .route("/mf/predict", get(mf_predict));
    Router::new().nest("/api/v1", api).layer(CorsLayer::permissive()).with_state(store)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct NewModel {
    source: String,
}

async fn create_model(State(store): State<Shared>, JsonBody(body): JsonBody<NewModel>) -> ApiResult {
    let id = blocking(move || Ok(store.store_model(&body.source)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "modelId": id }))).into_response())
}

async fn get_model(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    store.read(|s| {
        let m = s.model(&id)?;
        Ok(Json(json!({
            "modelId": m.record.model_id,
            "source": m.record.source,
            "features": m.task.names(),
            "created": m.record.created,
        }))
        .into_response())
    })
}

#[derive(Deserialize)]
struct ConfigurationQuery {
    #[serde(default)]
    require: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn configurations(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ConfigurationQuery>,
) -> ApiResult {
    let task = store.read(|s| s.model(&id).map(|m| m.task.clone()))?;
    blocking(move || {
        let reqs = q
            .require
            .as_deref()
            .unwrap_or("")
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| task.parse_requirement(t))
            .collect::<Result<Vec<Requirement>, _>>()?;
        let mut assumptions = Assignment::new();
        for r in &reqs {
            if assumptions.insert(r.var, r.value) == Some(!r.value) {
                return Ok(Json(json!({ "configurations": [] })).into_response());
            }
        }
        let limit = q.limit.map_or(Limit::All, Limit::First);
        let found = Solver::new(&task)
            .enumerate_with(&assumptions, limit)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
        let named: Vec<_> = found.iter().map(|c| c.to_named(&task)).collect();
        let configs: Vec<_> = named.iter().map(bits).collect();
        Ok(Json(json!({ "configurations": configs })).into_response())
    })
    .await
}

async fn put_utilities(State(store): State<Shared>, Path(id): Path<String>, body: String) -> ApiResult {
    blocking(move || {
        let table = read_utilities(&body)?;
        store.set_utilities(&id, table)?;
        Ok(Json(json!({ "modelId": id })).into_response())
    })
    .await
}

async fn put_profile(State(store): State<Shared>, Path(id): Path<String>, body: String) -> ApiResult {
    blocking(move || {
        let profile = read_profile(&id, &body)?;
        store.set_profile(profile)?;
        Ok(Json(json!({ "profileId": id })).into_response())
    })
    .await
}

async fn import_sessions(State(store): State<Shared>, Path(id): Path<String>, body: String) -> ApiResult {
    blocking(move || {
        let sessions = read_sessions(&body)?;
        let ids = store.import_sessions(&id, &sessions)?;
        Ok((StatusCode::CREATED, Json(json!({ "sessionIds": ids }))).into_response())
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct NewSession {
    model_id: String,
    user_id: String,
}

async fn create_session(State(store): State<Shared>, JsonBody(body): JsonBody<NewSession>) -> ApiResult {
    let id = blocking(move || Ok(store.create_session(&body.model_id, &body.user_id)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "sessionId": id }))).into_response())
}

async fn get_session(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    store.read(|s| {
        let sess = s.session(&id)?;
        let events: Vec<Value> = sess
            .events
            .iter()
            .map(|e| json!({ "feature": e.feature, "value": u8::from(e.value), "rank": e.rank, "timestamp": e.timestamp }))
            .collect();
        Ok(Json(json!({
            "sessionId": sess.session_id,
            "modelId": sess.model_id,
            "userId": sess.user_id,
            "status": sess.status.as_str(),
            "values": bits(&sess.values()),
            "events": events,
        }))
        .into_response())
    })
}

#[derive(Deserialize)]
struct AssignBody {
    feature: String,
    #[serde(deserialize_with = "bit")]
    value: bool,
}

async fn assign(
    State(store): State<Shared>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<AssignBody>,
) -> ApiResult {
    let out = blocking(move || Ok(store.assign(&id, &body.feature, body.value)?)).await?;
    Ok(Json(json!({ "status": out.status.as_str(), "forced": pairs(out.forced) })).into_response())
}

async fn complete(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let status = blocking(move || Ok(store.complete(&id)?)).await?;
    Ok(Json(json!({ "status": status.as_str() })).into_response())
}

#[derive(Deserialize)]
struct ValueQuery {
    feature: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    2
}

/// Recommends a value for one feature from the model's completed sessions,
/// then checks it against the model and the session's values.
async fn value_recommendation(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ValueQuery>,
) -> ApiResult {
    blocking(move || {
        store.read(|s| {
            let sess = s.session(&id)?;
            if sess.status == SessionStatus::Inconsistent {
                return Err(StoreError::SessionInconsistent(id.clone()).into());
            }
            let task = &s.model(&sess.model_id)?.task;
            if task.var(&q.feature).is_none() {
                return Err(StoreError::UnknownFeature(q.feature.clone()).into());
            }
            let logs: Vec<_> = s.logs(&sess.model_id).into_iter().filter(|l| l.session_id != id).collect();
            let rec = recommend_value(&logs, &sess.to_log(), &q.feature, q.k)?;
            let (filter, rec) = match consistency_filtered(task, &sess.partial(task), rec)? {
                Filtered::Kept(r) => ("kept", r),
                Filtered::Flipped(r) => ("flipped", r),
                Filtered::Suppressed => return Err(StoreError::SessionInconsistent(id.clone()).into()),
            };
            Ok(Json(json!({
                "feature": rec.feature,
                "value": u8::from(rec.value),
                "voteFraction": rec.vote_fraction,
                "neighbors": rec.neighbors,
                "filter": filter,
            }))
            .into_response())
        })
    })
    .await
}

async fn next_recommendation(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(move || {
        store.read(|s| {
            let sess = s.session(&id)?;
            let logs: Vec<_> = s.logs(&sess.model_id).into_iter().filter(|l| l.session_id != id).collect();
            let next = recommend_next_feature(&logs, &sess.to_log())?;
            Ok(Json(json!({
                "feature": next.item,
                "neighbor": next.neighbor,
                "similarity": next.similarity,
                "rank": next.rank,
            }))
            .into_response())
        })
    })
    .await
}

async fn conflicts(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(move || {
        let task = store.read(|s| -> Result<_, StoreError> {
            let sess = s.session(&id)?;
            let task = &s.model(&sess.model_id)?.task;
            Ok(task.with_requirements(sess.requirements(task)).expect("session features belong to the model"))
        })?;
        let report = diagnose_task(&task)?;
        let named = |reqs: &[Requirement]| pairs(reqs.iter().map(|r| (task.name(r.var).to_string(), r.value)));
        let conflicts: Vec<_> = report.conflicts.iter().map(|c| named(&c.requirements)).collect();
        let diagnoses: Vec<_> = report.diagnoses.iter().map(|d| named(&d.requirements)).collect();
        Ok(Json(json!({ "conflicts": conflicts, "diagnoses": diagnoses })).into_response())
    })
    .await
}

#[derive(Deserialize)]
struct RepairQuery {
    #[serde(default)]
    profile: Option<String>,
}

#[derive(Serialize)]
struct RepairView<'a> {
    changes: BTreeMap<&'a str, u8>,
    assignment: BTreeMap<&'a str, u8>,
    utility: Option<f64>,
}

/// Repairs of the session's values, ranked by utility when a profile is given.
async fn session_repairs(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<RepairQuery>,
) -> ApiResult {
    blocking(move || {
        let (task, scoring) = store.read(|s| -> Result<_, StoreError> {
            let sess = s.session(&id)?;
            let task = &s.model(&sess.model_id)?.task;
            let task = task.with_requirements(sess.requirements(task)).expect("session features belong to the model");
            let scoring = match &q.profile {
                None => None,
                Some(p) => {
                    let profile = s.profile(p)?.clone();
                    let table = s.utilities.get(&sess.model_id).cloned().ok_or_else(|| {
                        StoreError::Rejected(format!("model `{}` has no utility table", sess.model_id))
                    })?;
                    Some((table, profile))
                }
            };
            Ok((task, scoring))
        })?;
        let report = diagnose_task(&task)?;
        let mut found = repairs(&task, &report.diagnoses)?;
        if let Some((table, profile)) = scoring {
            found = rank_repairs(found, &table, &profile)?;
        }
        let views: Vec<_> = found
            .iter()
            .map(|r| RepairView { changes: bits(&r.changes), assignment: bits(&r.assignment), utility: r.utility })
            .collect();
        Ok(Json(json!({ "repairs": views })).into_response())
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TrainBody {
    matrix_csv: String,
    k: Option<usize>,
    rate: Option<f64>,
    lambda: Option<f64>,
    epochs: Option<usize>,
    seed: Option<u64>,
}

async fn mf_train(State(store): State<Shared>, JsonBody(body): JsonBody<TrainBody>) -> ApiResult {
    blocking(move || {
        let d = TrainConfig::default();
        let config = TrainConfig {
            k: body.k.unwrap_or(d.k),
            learning_rate: body.rate.unwrap_or(d.learning_rate),
            regularization: body.lambda.unwrap_or(d.regularization),
            epochs: body.epochs.unwrap_or(d.epochs),
            seed: body.seed.unwrap_or(d.seed),
        };
        let matrix = InteractionMatrix::from_csv(&body.matrix_csv).map_err(ApiError::unprocessable)?;
        let job = store.train(&matrix, config)?;
        Ok((StatusCode::CREATED, Json(json!({ "jobId": job.job_id, "rmse": job.rmse }))).into_response())
    })
    .await
}

#[derive(Deserialize)]
struct PredictQuery {
    user: String,
    #[serde(default)]
    job: Option<String>,
}

async fn mf_predict(State(store): State<Shared>, Query(q): Query<PredictQuery>) -> ApiResult {
    store.read(|s| {
        let job = s.job(q.job.as_deref())?;
        let row = job.factors.predict().row(&q.user).map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e))?;
        let scores: BTreeMap<String, f64> = row.into_iter().collect();
        Ok(Json(json!({ "jobId": job.job_id, "user": q.user, "scores": scores })).into_response())
    })
}
