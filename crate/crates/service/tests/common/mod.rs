#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use fmrec_service::api::router;
use fmrec_service::store::Store;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn data(name: &str) -> String {
    std::fs::read_to_string(data_path(name)).unwrap()
}

pub fn app() -> Router {
    router(Arc::new(Store::in_memory()))
}

pub enum Payload {
    None,
    Json(Value),
    Text(String),
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Payload) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Payload::None => builder.body(Body::empty()),
        Payload::Json(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())),
        Payload::Text(t) => builder.header("content-type", "text/csv").body(Body::from(t)),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, Payload::None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Payload::Json(body)).await
}

pub async fn put_text(app: &Router, uri: &str, text: String) -> (StatusCode, Value) {
    call(app, Method::PUT, uri, Payload::Text(text)).await
}

pub async fn post_text(app: &Router, uri: &str, text: String) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Payload::Text(text)).await
}

/// Stores the survey model with its utility table, both profiles and the
/// logged sessions u1..u3. Returns the model id.
pub async fn survey_fixture(app: &Router) -> String {
    let (status, body) = post(app, "/api/v1/models", serde_json::json!({ "source": data("survey.fm") })).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let model = body["modelId"].as_str().unwrap().to_string();
    let (status, _) = put_text(app, &format!("/api/v1/models/{model}/utilities"), data("utilities.csv")).await;
    assert_eq!(status, StatusCode::OK);
    for p in ["ua", "ub"] {
        let (status, _) = put_text(app, &format!("/api/v1/profiles/{p}"), data(&format!("{p}.profile.csv"))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, body) = post_text(app, &format!("/api/v1/models/{model}/sessions/import"), data("sessions.csv")).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    model
}

/// Opens a session and assigns `values` in order, checking each response.
pub async fn session_with(app: &Router, model: &str, values: &[(&str, u8)]) -> String {
    let (status, body) =
        post(app, "/api/v1/sessions", serde_json::json!({ "modelId": model, "userId": "current" })).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["sessionId"].as_str().unwrap().to_string();
    for (f, v) in values {
        let (status, body) =
            post(app, &format!("/api/v1/sessions/{id}/assign"), serde_json::json!({ "feature": f, "value": v })).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    id
}
