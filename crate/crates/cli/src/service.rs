//! HTTP/JSON service over the library. Model and manifest are loaded once at
//! startup and shared read-only; every request is a pure function of its
//! body and those artifacts.
//!
//! | route                  | body                                                        |
//! |------------------------|-------------------------------------------------------------|
//! | `GET /health`          |                                                             |
//! | `GET /lots`            |                                                             |
//! | `POST /render`         | `{seed, attrs, resolution?}`                                |
//! | `POST /predict`        | `{seed, attrs}`                                             |
//! | `POST /sweep`          | `{seed, attrs, attr_index, grid}`                           |
//! | `POST /counterfactual` | `{seed, attrs, target_stress, lambda?, norm_order?, max_iters?}` |
//!
//! `attrs` is `{size, porosity, dispersity, facetness}`. Errors are
//! `{status, code, message}` with a 4xx/5xx status.

use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use knoblab::explain::{counterfactual, forward_sweep, CounterfactualConfig, ExplainError, API_VERSION};
use knoblab::persist::encode_png;
use knoblab::regressor::RegressorModel;
use knoblab::synth::{RawAttributes, MIN_RESOLUTION};
use knoblab::world::{DatasetManifest, LotSpec};
use knoblab::{render_edit, AttributeVector, NormOrder};

use crate::cli::ServeArgs;
use crate::commands::{load_checkpoint, load_manifest};
use crate::output::{to_json, Prediction};

/// Upper bound on counterfactual iterations per request.
pub const MAX_ITERS_CAP: usize = 2000;
/// Largest tile edge served by /render.
pub const MAX_RENDER_RESOLUTION: usize = 512;
const DEFAULT_RENDER_RESOLUTION: usize = 64;

#[derive(Debug, Default)]
pub struct AppState {
    pub model: Option<RegressorModel>,
    pub manifest: Option<DatasetManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json_response(status, &self)
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        let code = match &e {
            ExplainError::Index(_) => "invalid_index",
            ExplainError::Grid(_) => "invalid_grid",
            ExplainError::Config(_) => "invalid_config",
            ExplainError::Synth(_) => "invalid_attributes",
            _ => return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        };
        ApiError::unprocessable(code, e.to_string())
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_json(body)).into_response()
}

fn ok<T: Serialize>(body: &T) -> Response {
    json_response(StatusCode::OK, body)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        if e.is_data() {
            ApiError::unprocessable("invalid_request", e.to_string())
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string())
        }
    })
}

fn attrs_of(raw: RawAttributes) -> Result<AttributeVector, ApiError> {
    AttributeVector::try_from(raw).map_err(|e| ApiError::unprocessable("invalid_attributes", e.to_string()))
}

fn model_of(state: &AppState) -> Result<&RegressorModel, ApiError> {
    state
        .model
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "model_not_loaded", "the server was started without --model"))
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T, F>(state: Arc<AppState>, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub manifest_loaded: bool,
    pub version: String,
    pub api_version: u32,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    ok(&Health {
        status: "ok".into(),
        model_loaded: state.model.is_some(),
        manifest_loaded: state.manifest.is_some(),
        version: env!("CARGO_PKG_VERSION").into(),
        api_version: API_VERSION,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LotList {
    pub api_version: u32,
    pub lots: Vec<LotSpec>,
}

async fn lots(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let manifest = state.manifest.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "manifest_not_loaded", "the server was started without --data")
    })?;
    let mut lots = manifest.lots.clone();
    // spreadsheet order: A..Z, AA, AB, ...
    lots.sort_by(|a, b| (a.id.len(), &a.id).cmp(&(b.id.len(), &b.id)));
    Ok(ok(&LotList {
        api_version: API_VERSION,
        lots,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub seed: u64,
    pub attrs: RawAttributes,
    #[serde(default)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderResponse {
    pub api_version: u32,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Base64 of an 8-bit grayscale PNG.
    pub image: String,
}

async fn render(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: RenderRequest = parse_body(&body)?;
    let attrs = attrs_of(req.attrs)?;
    let res = req.resolution.unwrap_or(DEFAULT_RENDER_RESOLUTION);
    if !(MIN_RESOLUTION..=MAX_RENDER_RESOLUTION).contains(&res) {
        return Err(ApiError::unprocessable(
            "invalid_resolution",
            format!("resolution must be in {MIN_RESOLUTION}..={MAX_RENDER_RESOLUTION}, got {res}"),
        ));
    }
    let out = blocking(state, move |_| {
        let image = render_edit(req.seed, &attrs, res).map_err(|e| ApiError::unprocessable("invalid_attributes", e.to_string()))?;
        let png = encode_png(&image).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        Ok(RenderResponse {
            api_version: API_VERSION,
            seed: req.seed,
            width: res,
            height: res,
            image: base64::engine::general_purpose::STANDARD.encode(png),
        })
    })
    .await?;
    Ok(ok(&out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub seed: u64,
    pub attrs: RawAttributes,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    let attrs = attrs_of(req.attrs)?;
    model_of(&state)?;
    let out = blocking(state, move |s| {
        let model = model_of(s)?;
        let image = render_edit(req.seed, &attrs, model.resolution()).map_err(ExplainError::from)?;
        let stress = model.predict(&image).map_err(ExplainError::from)?;
        Ok(Prediction::new(req.seed, attrs, stress))
    })
    .await?;
    Ok(ok(&out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub seed: u64,
    pub attrs: RawAttributes,
    pub attr_index: usize,
    pub grid: Vec<f64>,
}

async fn sweep(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SweepRequest = parse_body(&body)?;
    let attrs = attrs_of(req.attrs)?;
    model_of(&state)?;
    let out = blocking(state, move |s| Ok(forward_sweep(model_of(s)?, req.seed, &attrs, req.attr_index, &req.grid)?)).await?;
    Ok(ok(&out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualRequest {
    pub seed: u64,
    pub attrs: RawAttributes,
    pub target_stress: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub norm_order: Option<NormOrder>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

impl CounterfactualRequest {
    /// Fills omitted fields with the library defaults.
    pub fn config(&self) -> Result<CounterfactualConfig, ApiError> {
        let defaults = CounterfactualConfig::default();
        let cfg = CounterfactualConfig {
            lambda: self.lambda.unwrap_or(defaults.lambda),
            norm_order: self.norm_order.unwrap_or(defaults.norm_order),
            max_iters: self.max_iters.unwrap_or(defaults.max_iters),
            ..defaults
        };
        if cfg.max_iters > MAX_ITERS_CAP {
            return Err(ApiError::unprocessable(
                "invalid_config",
                format!("max_iters must be at most {MAX_ITERS_CAP}, got {}", cfg.max_iters),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

async fn run_counterfactual(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CounterfactualRequest = parse_body(&body)?;
    let attrs = attrs_of(req.attrs)?;
    let cfg = req.config()?;
    if !req.target_stress.is_finite() {
        return Err(ApiError::unprocessable("invalid_config", "target_stress must be finite"));
    }
    model_of(&state)?;
    let out = blocking(state, move |s| Ok(counterfactual(model_of(s)?, req.seed, &attrs, req.target_stress, &cfg)?)).await?;
    Ok(ok(&out))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(health))
        .route("/lots", get(lots))
        .route("/render", post(render))
        .route("/predict", post(predict))
        .route("/sweep", post(sweep))
        .route("/counterfactual", post(run_counterfactual))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(cors)
        .with_state(Arc::new(state))
}

pub fn load_state(args: &ServeArgs) -> anyhow::Result<AppState> {
    Ok(AppState {
        model: args.model.as_deref().map(load_checkpoint).transpose()?,
        manifest: args.data.as_deref().map(load_manifest).transpose()?,
    })
}

pub fn serve_blocking(args: &ServeArgs) -> anyhow::Result<()> {
    let state = load_state(args)?;
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host, args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await.context("serving")
    })
}
