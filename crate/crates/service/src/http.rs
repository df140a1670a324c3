//! Routes. Every JSON body carries `schema_version`.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use align_evalkit::Verdict;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Result, ServiceError};
use crate::{EnqueueRequest, EvalRunRequest, Service, SCHEMA_VERSION};

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

type Svc = Arc<Service>;

pub fn router(svc: Svc) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/rubric", get(rubric))
        .route("/v1/chat", post(chat))
        .route("/v1/corpus/docs", post(add_docs))
        .route("/v1/index/rebuild", post(rebuild))
        .route("/v1/eval/run", post(eval_run))
        .route("/v1/eval/report/{run_id}", get(report))
        .route("/v1/annotations/enqueue", post(enqueue))
        .route("/v1/annotations/next", get(next_task))
        .route("/v1/annotations/stats", get(stats))
        .route("/v1/annotations/agreement/{run_id}", get(agreement))
        .route("/v1/annotations/{task_id}", get(task))
        .route("/v1/annotations/{task_id}/label", post(label))
        .route("/v1/annotations/{task_id}/release", post(release))
        .with_state(svc)
}

fn body(v: impl serde::Serialize) -> Result<Json<Value>> {
    let mut v = serde_json::to_value(v)?;
    match &mut v {
        Value::Object(m) => {
            m.insert("schema_version".into(), json!(SCHEMA_VERSION));
        }
        _ => v = json!({"schema_version": SCHEMA_VERSION, "data": v}),
    }
    Ok(Json(v))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn parse<T: serde::de::DeserializeOwned>(raw: &str) -> Result<T> {
    serde_json::from_str(raw).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn healthz() -> Result<Json<Value>> {
    body(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn rubric(State(svc): State<Svc>) -> Result<Json<Value>> {
    body(svc.rubric())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    session_id: String,
    query: String,
}

async fn chat(State(svc): State<Svc>, raw: String) -> Result<Json<Value>> {
    let req: ChatRequest = parse(&raw)?;
    let answer = blocking(move || svc.chat(&req.session_id, &req.query).map(|a| (req.session_id, a))).await?;
    body(json!({"session_id": answer.0, "answer": answer.1}))
}

async fn add_docs(State(svc): State<Svc>, raw: String) -> Result<Json<Value>> {
    let added = blocking(move || svc.add_documents(&raw)).await?;
    body(json!({"added": added}))
}

async fn rebuild(State(svc): State<Svc>) -> Result<Json<Value>> {
    let n = blocking(move || svc.rebuild_index()).await?;
    body(json!({"doc_count": n}))
}

async fn eval_run(State(svc): State<Svc>, raw: String) -> Result<Json<Value>> {
    let req: EvalRunRequest = parse(&raw)?;
    let report = blocking(move || svc.run_eval(req)).await?;
    body(json!({"run_id": report.meta.run_id, "report": report}))
}

/// The stored bytes, unchanged.
async fn report(State(svc): State<Svc>, Path(run_id): Path<String>) -> Result<Response> {
    let bytes = blocking(move || svc.report_bytes(&run_id)).await?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn enqueue(State(svc): State<Svc>, raw: String) -> Result<Json<Value>> {
    let req: EnqueueRequest = parse(&raw)?;
    let run_id = req.run_id.clone();
    let (created, total) = blocking(move || svc.enqueue(&req)).await?;
    body(json!({"run_id": run_id, "created": created, "total": total}))
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
    run_id: Option<String>,
}

fn annotator(explicit: Option<String>, headers: &HeaderMap) -> Result<String> {
    explicit
        .or_else(|| headers.get(ANNOTATOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .ok_or_else(|| ServiceError::BadRequest("annotator id is required".into()))
}

async fn next_task(State(svc): State<Svc>, headers: HeaderMap, Query(q): Query<NextQuery>) -> Result<Json<Value>> {
    let who = annotator(q.annotator, &headers)?;
    let task = blocking(move || svc.next_task(&who, q.run_id.as_deref())).await?;
    body(json!({"task": task}))
}

#[derive(Deserialize)]
struct StatsQuery {
    run_id: Option<String>,
}

async fn stats(State(svc): State<Svc>, Query(q): Query<StatsQuery>) -> Result<Json<Value>> {
    body(blocking(move || svc.stats(q.run_id.as_deref())).await?)
}

async fn agreement(State(svc): State<Svc>, Path(run_id): Path<String>) -> Result<Json<Value>> {
    body(blocking(move || svc.agreement(&run_id)).await?)
}

async fn task(State(svc): State<Svc>, Path(task_id): Path<String>) -> Result<Json<Value>> {
    let t = blocking(move || svc.task(&task_id)).await?;
    body(json!({"task": t}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    #[serde(default)]
    annotator_id: Option<String>,
    label: Verdict,
    #[serde(default)]
    note: Option<String>,
}

async fn label(State(svc): State<Svc>, headers: HeaderMap, Path(task_id): Path<String>, raw: String) -> Result<Json<Value>> {
    let req: LabelRequest = parse(&raw)?;
    let who = annotator(req.annotator_id, &headers)?;
    let t = blocking(move || svc.submit_label(&task_id, &who, req.label, req.note)).await?;
    body(json!({"task": t}))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReleaseRequest {
    #[serde(default)]
    annotator_id: Option<String>,
}

async fn release(State(svc): State<Svc>, headers: HeaderMap, Path(task_id): Path<String>, raw: String) -> Result<Json<Value>> {
    let req: ReleaseRequest = if raw.trim().is_empty() { ReleaseRequest::default() } else { parse(&raw)? };
    let who = annotator(req.annotator_id, &headers)?;
    let t = blocking(move || svc.release(&task_id, &who)).await?;
    body(json!({"task": t}))
}
