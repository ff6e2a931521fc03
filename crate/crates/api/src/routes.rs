use std::collections::BTreeMap;

use axum::body::{Body, Bytes};
use axum::extract::{Path, RawQuery, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use sierra_core::auth::{system_now_ms, Action, AuthError, Resource};
use sierra_core::ml::{init_mlp, parse_dataset_csv, Task};
use sierra_core::model::{ChannelId, SubjectId, SubjectRecord, MAX_TIMESTAMP_MS};
use sierra_core::quest::{emit_form_spec, parse_questionnaire, score_response, validate_response, ScoreError};
use sierra_core::store::SampleBatch;

use crate::error::{ok, ok_with, ApiError, ApiResult};
use crate::jobs::{run_job, JobStatus, TrainRequest};
use crate::state::{parse_query, AppState};

/// Upper bound on request bodies (dataset uploads are the largest).
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/api/v1/auth/login", post(login))
        .route("/api/v1/auth/logout", post(logout))
        .route("/api/v1/subjects", post(create_subject).get(list_subjects))
        .route("/api/v1/subjects/{id}", get(get_subject))
        .route("/api/v1/ingest", post(ingest))
        .route("/api/v1/series", get(series))
        .route(
            "/api/v1/questionnaires",
            post(create_questionnaire).get(list_questionnaires),
        )
        .route("/api/v1/questionnaires/{id}/form", get(questionnaire_form))
        .route("/api/v1/questionnaires/{id}/responses", post(submit_response))
        .route("/api/v1/questionnaires/{id}/scores", get(scores))
        .route("/api/v1/portfolio", get(portfolio))
        .route("/api/v1/viz/{plugin_id}/data", get(viz_data))
        .route("/api/v1/ml/datasets", post(upload_dataset))
        .route("/api/v1/ml/train", post(start_training))
        .route("/api/v1/ml/jobs/{id}", get(job_status))
        .route("/api/v1/ml/jobs/{id}/confusion", get(job_confusion))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

async fn read_body(body: Body) -> ApiResult<Bytes> {
    axum::body::to_bytes(body, MAX_BODY_BYTES)
        .await
        .map_err(|_| ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", "request body too large"))
}

async fn json_body<T: DeserializeOwned>(body: Body) -> ApiResult<T> {
    let bytes = read_body(body).await?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

async fn text_body(body: Body) -> ApiResult<String> {
    String::from_utf8(read_body(body).await?.to_vec())
        .map_err(|_| ApiError::bad_request("invalid_body", "body is not UTF-8"))
}

fn subject_param(q: &BTreeMap<String, String>) -> ApiResult<SubjectId> {
    let raw = q
        .get("subject")
        .ok_or_else(|| ApiError::bad_request("invalid_params", "missing `subject`"))?;
    SubjectId::new(raw.as_str()).map_err(|e| ApiError::bad_request("invalid_params", format!("subject: {e}")))
}

fn int_param(q: &BTreeMap<String, String>, name: &str, default: i64) -> ApiResult<i64> {
    q.get(name).map_or(Ok(default), |v| {
        v.parse()
            .map_err(|_| ApiError::bad_request("invalid_params", format!("`{name}` must be an integer")))
    })
}

/// Runs blocking store or CPU work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn health() -> Response {
    ok("ok")
}

// auth

#[derive(Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

async fn login(State(st): State<AppState>, body: Body) -> ApiResult {
    let req: LoginRequest = json_body(body).await?;
    let auth = st.auth.clone();
    match blocking(move || auth.authenticate(&req.username, &req.password)).await? {
        Ok(s) => Ok(ok(s)),
        Err(AuthError::AuthFailed) => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "auth_failed",
            "invalid username or password",
        )),
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

async fn logout(State(st): State<AppState>, headers: HeaderMap) -> ApiResult {
    let who = st.guard(&headers, Action::EndSession, &Resource::Any)?;
    st.auth.logout(who.token());
    Ok(ok(json!({ "logged_out": true })))
}

// subjects and series

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSubject {
    id: SubjectId,
    #[serde(default)]
    cohort: String,
    #[serde(default)]
    phi: BTreeMap<String, String>,
    created_at: Option<i64>,
}

async fn create_subject(State(st): State<AppState>, headers: HeaderMap, body: Body) -> ApiResult {
    st.guard(&headers, Action::WriteClinical, &Resource::Any)?;
    let req: NewSubject = json_body(body).await?;
    let rec = SubjectRecord {
        id: req.id,
        cohort: req.cohort,
        phi: req.phi,
        created_at: req.created_at.unwrap_or_else(system_now_ms),
    };
    let id = st.store.put_subject(&rec)?;
    Ok(ok_with(StatusCode::CREATED, json!({ "id": id })))
}

async fn list_subjects(State(st): State<AppState>, headers: HeaderMap) -> ApiResult {
    st.guard(&headers, Action::ReadClinical, &Resource::Any)?;
    let list: Vec<Value> = st
        .store
        .list_subjects()?
        .into_iter()
        .map(|(id, cohort)| json!({ "id": id, "cohort": cohort }))
        .collect();
    Ok(ok(list))
}

async fn get_subject(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let who = st.authenticate(&headers)?;
    let id = SubjectId::new(id).map_err(|e| ApiError::bad_request("invalid_params", e.to_string()))?;
    st.authorize(&who, Action::ReadClinical, &Resource::Subject(id.clone()))?;
    Ok(ok(st.store.get_subject(&id)?))
}

async fn ingest(State(st): State<AppState>, headers: HeaderMap, body: Body) -> ApiResult {
    let device = st.device(&headers)?;
    let batch: SampleBatch = json_body(body).await?;
    if batch.device != device {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            "device key does not match device_id",
        ));
    }
    let store = st.store.clone();
    let receipt = blocking(move || store.ingest_batch(&batch)).await??;
    Ok(ok(receipt))
}

async fn series(State(st): State<AppState>, headers: HeaderMap, RawQuery(q): RawQuery) -> ApiResult {
    let who = st.authenticate(&headers)?;
    let q = parse_query(q.as_deref());
    let subject = subject_param(&q)?;
    let channel = q
        .get("channel")
        .ok_or_else(|| ApiError::bad_request("invalid_params", "missing `channel`"))
        .and_then(|c| {
            ChannelId::new(c.as_str()).map_err(|e| ApiError::bad_request("invalid_params", format!("channel: {e}")))
        })?;
    let t0 = int_param(&q, "t0", 0)?;
    let t1 = int_param(&q, "t1", MAX_TIMESTAMP_MS)?;
    st.authorize(&who, Action::ReadClinical, &Resource::Subject(subject.clone()))?;
    Ok(ok(st.store.query_series(&subject, &channel, t0, t1)?))
}

// questionnaires

async fn create_questionnaire(State(st): State<AppState>, headers: HeaderMap, body: Body) -> ApiResult {
    st.guard(&headers, Action::WriteClinical, &Resource::Any)?;
    let def = parse_questionnaire(&text_body(body).await?)?;
    st.store.put_questionnaire(&def)?;
    Ok(ok_with(
        StatusCode::CREATED,
        json!({ "id": def.id, "version": def.version, "items": def.items.len() }),
    ))
}

async fn list_questionnaires(State(st): State<AppState>, headers: HeaderMap) -> ApiResult {
    st.guard(&headers, Action::ReadCatalog, &Resource::Any)?;
    let list: Vec<Value> = st
        .store
        .list_questionnaires()?
        .iter()
        .map(|d| json!({ "id": d.id, "version": d.version, "items": d.items.len(), "score_mode": d.score_mode }))
        .collect();
    Ok(ok(list))
}

fn version_param(q: &BTreeMap<String, String>) -> ApiResult<Option<u32>> {
    q.get("version")
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request("invalid_params", "`version` must be a positive integer"))
        })
        .transpose()
}

async fn questionnaire_form(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult {
    st.guard(&headers, Action::ReadCatalog, &Resource::Any)?;
    let version = version_param(&parse_query(q.as_deref()))?;
    let def = st.store.questionnaire(&id, version)?;
    Ok(ok(emit_form_spec(&def)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitResponse {
    subject: SubjectId,
    version: Option<u32>,
    answered_at: Option<i64>,
    answers: BTreeMap<String, Value>,
}

async fn submit_response(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Body,
) -> ApiResult {
    let who = st.authenticate(&headers)?;
    let req: SubmitResponse = json_body(body).await?;
    let me = st.authorize(&who, Action::RespondQuestionnaire, &Resource::Subject(req.subject.clone()))?;
    let def = st.store.questionnaire(&id, req.version)?;
    if !st.store.subject_exists(&req.subject)? {
        return Err(ApiError::not_found(format!("unknown subject `{}`", req.subject)));
    }
    let answered_at = req.answered_at.unwrap_or_else(system_now_ms);
    let rs = validate_response(&def, req.subject, answered_at, &req.answers)?;
    let seq = st.store.put_response(&rs, &me.username)?;
    let score = match score_response(&def, &rs) {
        Ok(s) => Some(s),
        Err(ScoreError::NoScorableItems) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(ok_with(StatusCode::CREATED, json!({ "seq": seq, "score": score })))
}

async fn scores(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let who = st.authenticate(&headers)?;
    let subject = subject_param(&parse_query(q.as_deref()))?;
    st.authorize(&who, Action::ReadClinical, &Resource::Subject(subject.clone()))?;
    st.store.questionnaire(&id, None)?;
    let mut out = Vec::new();
    for r in st.store.responses(&id, &subject)? {
        let def = st.store.questionnaire(&id, Some(r.response.version))?;
        let score = match score_response(&def, &r.response) {
            Ok(s) => Some(s),
            Err(ScoreError::NoScorableItems) => None,
            Err(e) => return Err(e.into()),
        };
        out.push(json!({
            "version": r.response.version,
            "answered_at": r.response.answered_at,
            "respondent": r.respondent,
            "score": score,
        }));
    }
    Ok(ok(out))
}

// visualization

async fn portfolio(State(st): State<AppState>, headers: HeaderMap) -> ApiResult {
    st.guard(&headers, Action::ReadCatalog, &Resource::Any)?;
    Ok(ok(st.registry.list_portfolio()))
}

async fn viz_data(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(plugin): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let who = st.authenticate(&headers)?;
    let raw = parse_query(q.as_deref());
    // a missing or malformed subject can only be served to roles that may
    // read any subject; the registry reports the parameter error
    let resource = raw
        .get("subject")
        .and_then(|s| SubjectId::new(s.as_str()).ok())
        .map_or(Resource::Any, Resource::Subject);
    st.authorize(&who, Action::ReadClinical, &resource)?;
    Ok(ok(st.registry.build_data_stream(&plugin, &raw, &st.store)?))
}

// ml

fn task_param(q: &BTreeMap<String, String>) -> ApiResult<Task> {
    match q.get("task").map(String::as_str) {
        None | Some("classification") => Ok(Task::Classification),
        Some("regression") => Ok(Task::Regression),
        Some(other) => Err(ApiError::bad_request(
            "invalid_params",
            format!("unknown task `{other}`"),
        )),
    }
}

async fn upload_dataset(
    State(st): State<AppState>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
    body: Body,
) -> ApiResult {
    st.guard(&headers, Action::RunAnalytics, &Resource::Any)?;
    let task = task_param(&parse_query(q.as_deref()))?;
    let ds = parse_dataset_csv(&text_body(body).await?, task)?;
    Ok(ok_with(StatusCode::CREATED, st.ml.add_dataset(task, ds)))
}

async fn start_training(State(st): State<AppState>, headers: HeaderMap, body: Body) -> ApiResult {
    st.guard(&headers, Action::RunAnalytics, &Resource::Any)?;
    let req: TrainRequest = json_body(body).await?;
    let (info, data) = st
        .ml
        .dataset(req.dataset_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset {}", req.dataset_id)))?;
    req.config().validate()?;
    if !(0.0..1.0).contains(&req.test_fraction) {
        return Err(ApiError::bad_request("invalid_params", "test_fraction must be in [0, 1)"));
    }
    // reject shape problems now rather than as a failed job
    data.check_for(&init_mlp(&req.layers, req.activation, info.task, req.seed)?)?;

    let id = st.ml.start(&req, info.task);
    let ml = st.ml.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = run_job(&req, info.task, &data);
        ml.finish(id, outcome);
    });
    Ok(ok_with(StatusCode::ACCEPTED, json!({ "job_id": id })))
}

fn job_id(raw: &str) -> ApiResult<u64> {
    raw.parse()
        .map_err(|_| ApiError::bad_request("invalid_params", "job id must be an integer"))
}

async fn job_status(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    st.guard(&headers, Action::RunAnalytics, &Resource::Any)?;
    let id = job_id(&id)?;
    let job = st.ml.job(id).ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    Ok(ok(job))
}

async fn job_confusion(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    st.guard(&headers, Action::RunAnalytics, &Resource::Any)?;
    let id = job_id(&id)?;
    let job = st.ml.job(id).ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    match (job.status, job.evaluation) {
        (JobStatus::Done, Some(eval)) => Ok(ok(eval)),
        (JobStatus::Done, None) => Err(ApiError::bad_request(
            "not_classification",
            "regression jobs have no confusion matrix",
        )),
        (JobStatus::Running, _) => Err(ApiError::conflict("job_running", "job has not finished")),
        (JobStatus::Failed, _) => Err(ApiError::conflict(
            "job_failed",
            job.error.unwrap_or_else(|| "job failed".into()),
        )),
    }
}
