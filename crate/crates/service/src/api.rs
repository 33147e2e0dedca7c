use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nusrecon::io::{format_schedule, parse_schedule, read_weights, FormatError, SignalContainer, SignalKind};
use nusrecon::pipeline::{undersample, MethodName, ReconConfig};
use nusrecon::sampling::{count_for_density, poisson_gap_schedule, POISSON_GAP_GENERATOR};
use nusrecon::spectral::Shape;
use nusrecon::Weights;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{JobState, Store, StoreError, DIAGNOSTICS, RESULT};
use crate::ServiceConfig;

pub const SECRET_HEADER: &str = "x-nusrecon-secret";

#[derive(Clone)]
struct AppState {
    store: Arc<Store>,
    config: Arc<ServiceConfig>,
}

struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl std::fmt::Display) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.to_string())
    }
    fn unprocessable(msg: impl std::fmt::Display) -> Self {
        ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn valid_weights_id(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Deployed weights `<weights_dir>/<name>.json`.
pub(crate) fn load_weights(cfg: &ServiceConfig, name: &str) -> Result<Weights, String> {
    let dir = cfg.weights_dir.as_ref().ok_or("no weights are deployed")?;
    if !valid_weights_id(name) {
        return Err(format!("invalid weights id '{name}'"));
    }
    let path = dir.join(format!("{name}.json"));
    if !path.is_file() {
        return Err(format!("unknown weights id '{name}'"));
    }
    read_weights(&path).map_err(|e| e.to_string())
}

fn fits(shape: Shape, grid: Shape) -> bool {
    shape == grid || matches!((shape, grid), (Shape::Plane(_, c), Shape::Line(n)) if c == n)
}

async fn submit(State(st): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let (mut fid, mut schedule, mut config) = (None, None, None);
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(ApiError(e.status(), e.body_text())),
        };
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| ApiError(e.status(), e.body_text()))?;
        match name.as_str() {
            "fid" => fid = Some(data),
            "schedule" => schedule = Some(data),
            "config" => config = Some(data),
            other => return Err(ApiError::bad(format!("unexpected field '{other}'"))),
        }
    }
    let fid = fid.ok_or_else(|| ApiError::bad("missing 'fid' part"))?;
    let schedule_bytes = schedule.ok_or_else(|| ApiError::bad("missing 'schedule' part"))?;

    let container = SignalContainer::from_bytes(&fid).map_err(|e| ApiError::bad(format!("fid: {e}")))?;
    if container.header.kind != SignalKind::Fid {
        return Err(ApiError::bad("fid: container holds a spectrum"));
    }
    let text = std::str::from_utf8(&schedule_bytes).map_err(|_| ApiError::bad("schedule: not UTF-8"))?;
    let schedule = parse_schedule(text).map_err(|e| match e {
        FormatError::Schedule { line, reason } => ApiError(
            StatusCode::BAD_REQUEST,
            format!("schedule line {line}: {reason}"),
        ),
        e => ApiError::bad(format!("schedule: {e}")),
    })?;
    let config: ReconConfig = match config {
        Some(b) if !b.is_empty() => serde_json::from_slice(&b).map_err(|e| ApiError::bad(format!("config: {e}")))?,
        _ => ReconConfig::default(),
    };
    let shape = container.shape().map_err(ApiError::bad)?;
    if !fits(shape, schedule.grid()) {
        return Err(ApiError::bad(format!(
            "fid shape {:?} does not fit schedule grid {:?}",
            shape.extents(),
            schedule.grid().extents()
        )));
    }
    match config.method {
        MethodName::Ist => config.ist.validate().map_err(ApiError::unprocessable)?,
        MethodName::Modern => {
            let name = config.weights.as_deref().ok_or_else(|| ApiError::unprocessable("modern method needs a weights id"))?;
            let w = load_weights(&st.config, name).map_err(ApiError::unprocessable)?;
            if w.meta.dims != schedule.grid().dims() {
                return Err(ApiError::unprocessable(format!("weights '{name}' are {}-D", w.meta.dims)));
            }
        }
    }
    let rec = st.store.submit(&fid, &schedule_bytes, &config)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": rec.id, "state": rec.state })).into_response()).into_response())
}

async fn status(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(st.store.get(&id)?).into_response())
}

async fn result(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = st.store.artifact(&id, RESULT)?;
    let mut res = Bytes::from(bytes).into_response();
    res.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    Ok(res)
}

async fn diagnostics(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = st.store.artifact(&id, DIAGNOSTICS)?;
    let mut res = Bytes::from(bytes).into_response();
    res.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    Ok(res)
}

async fn delete(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let rec = st.store.delete(&id)?;
    Ok(Json(json!({ "id": rec.id, "state": JobState::Deleted })).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRequest {
    /// Base64 of a fully sampled fid container.
    pub fid: String,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResponse {
    /// Schedule file text.
    pub schedule: String,
    /// Base64 of the zero-filled undersampled fid container.
    pub fid: String,
    pub count: usize,
    pub density: f64,
    pub generator: String,
}

/// Poisson-gap schedule over the last axis (the indirect dimension of a
/// line, or shared by every row of a plane) and the undersampled signal.
async fn nus_sim(Json(req): Json<SimRequest>) -> Result<Response, ApiError> {
    let bytes = B64.decode(req.fid.as_bytes()).map_err(|e| ApiError::bad(format!("fid: {e}")))?;
    let container = SignalContainer::from_bytes(&bytes).map_err(|e| ApiError::bad(format!("fid: {e}")))?;
    if container.header.kind != SignalKind::Fid {
        return Err(ApiError::bad("fid: container holds a spectrum"));
    }
    let n = container.shape().map_err(ApiError::bad)?.rows_cols().1;
    let count = match (req.density, req.count) {
        (Some(d), None) => {
            if !(d > 0.0 && d <= 1.0) {
                return Err(ApiError::unprocessable(format!("density {d} not in (0, 1]")));
            }
            count_for_density(n, d).map_err(ApiError::unprocessable)?
        }
        (None, Some(c)) => c,
        _ => return Err(ApiError::unprocessable("give exactly one of density or count")),
    };
    let schedule = poisson_gap_schedule(n, count, req.seed).map_err(ApiError::unprocessable)?;
    let under = undersample(&container, &schedule).map_err(ApiError::unprocessable)?;
    let resp = SimResponse {
        schedule: format_schedule(&schedule, POISSON_GAP_GENERATOR),
        fid: B64.encode(under.to_bytes()),
        count: schedule.len(),
        density: schedule.density(),
        generator: POISSON_GAP_GENERATOR.into(),
    };
    Ok(Json(resp).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn require_secret(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(secret) = &st.config.secret {
        let given = req.headers().get(SECRET_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong shared secret".into()).into_response();
        }
    }
    next.run(req).await
}

pub fn router(store: Arc<Store>, config: Arc<ServiceConfig>) -> Router {
    let limit = config.max_upload_bytes;
    let st = AppState { store, config };
    let api = Router::new()
        .route("/api/v1/jobs", post(submit))
        .route("/api/v1/jobs/{id}", get(status).delete(delete))
        .route("/api/v1/jobs/{id}/result", get(result))
        .route("/api/v1/jobs/{id}/diagnostics", get(diagnostics))
        .route("/api/v1/nus-sim", post(nus_sim))
        .layer(middleware::from_fn_with_state(st.clone(), require_secret));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(api)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(st)
}
