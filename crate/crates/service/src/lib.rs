//! HTTP JSON API over an immutable patient store and trial corpus.
//!
//! | method | path                   | body                     | response                  |
//! |--------|------------------------|--------------------------|---------------------------|
//! | GET    | `/health`              |                          | `{"status":"ok"}`         |
//! | GET    | `/variables`           |                          | [`VariablesResponse`]     |
//! | GET    | `/trials/{id}/criteria`| `?include_exclusion=true`| `TrialCriteria`           |
//! | POST   | `/scenarios/evaluate`  | `Scenario`               | `GeneralizabilityReport`  |
//! | POST   | `/scenarios/compare`   | [`CompareRequest`]       | [`CompareResponse`]       |
//!
//! Errors are `{"kind": ..., "message": ...}` with a 4xx/5xx status. Every
//! evaluation runs on the blocking pool under the state's time budget.

use std::sync::Arc;
use std::time::Duration;

use aico_core::{
    compare, evaluate_scenario, Comparison, CriteriaOptions, Corpus, Error, GeneralizabilityReport, PatientStore,
    Resources, Scenario,
};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BUDGET: Duration = Duration::from_secs(2);

/// Everything a request can read. Built once before serving and never
/// mutated afterwards.
#[derive(Debug)]
pub struct AppState {
    pub store: PatientStore,
    pub corpus: Corpus,
    pub resources: Resources,
    /// Wall-clock limit for one evaluate or compare request.
    pub budget: Duration,
}

impl AppState {
    pub fn new(store: PatientStore, corpus: Corpus, resources: Resources) -> Self {
        AppState {
            store,
            corpus,
            resources,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: Duration) -> Self {
        self.budget = budget;
        self
    }

    /// Variables that are both measured in the store and convertible.
    pub fn variables(&self) -> VariablesResponse {
        let variables = self
            .store
            .observed_ranges()
            .into_iter()
            .filter_map(|(variable, (min, max, n_measurements))| {
                let unit = self.resources.conversions.canonical_unit(&variable)?.to_string();
                Some(VariableInfo {
                    variable,
                    canonical_unit: unit,
                    min,
                    max,
                    n_measurements,
                })
            })
            .collect();
        VariablesResponse { variables }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub variable: String,
    pub canonical_unit: String,
    pub min: f64,
    pub max: f64,
    pub n_measurements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariablesResponse {
    pub variables: Vec<VariableInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRequest {
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub reports: Vec<GeneralizabilityReport>,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub kind: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) | Error::Resource { .. } | Error::Ingest { .. } | Error::TooManyRejects { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/variables", get(variables))
        .route("/trials/{id}/criteria", get(trial_criteria))
        .route("/scenarios/evaluate", post(evaluate))
        .route("/scenarios/compare", post(compare_scenarios))
        .fallback(not_found)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string()))
}

/// Runs `job` on the blocking pool, giving up after the state's budget. The
/// job itself is not cancelled; it finishes in the background against the
/// shared immutable state.
pub async fn within_budget<T, F>(state: &Arc<AppState>, job: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> aico_core::Result<T> + Send + 'static,
{
    let budget = state.budget;
    let shared = Arc::clone(state);
    let task = tokio::task::spawn_blocking(move || job(&shared));
    match tokio::time::timeout(budget, task).await {
        Ok(Ok(result)) => result.map_err(ApiError::from),
        Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", join.to_string())),
        Err(_) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "Timeout",
            format!("evaluation exceeded the {} ms budget", budget.as_millis()),
        )),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

async fn variables(State(state): State<Arc<AppState>>) -> Json<VariablesResponse> {
    Json(state.variables())
}

#[derive(Debug, Default, Deserialize)]
struct CriteriaQuery {
    #[serde(default)]
    include_exclusion: bool,
}

async fn trial_criteria(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<CriteriaQuery>,
) -> ApiResult<aico_core::TrialCriteria> {
    let trial = state
        .corpus
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown trial {id}")))?;
    let options = CriteriaOptions {
        include_exclusion: query.include_exclusion,
    };
    let criteria = state
        .resources
        .trial_criteria(trial, &state.store.available_variables(), options)?;
    Ok(Json(criteria))
}

async fn evaluate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<GeneralizabilityReport> {
    let scenario: Scenario = parse_body(&body)?;
    let report = within_budget(&state, move |s| evaluate_scenario(&scenario, &s.store, &s.resources)).await?;
    Ok(Json(report))
}

async fn compare_scenarios(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<CompareResponse> {
    let request: CompareRequest = parse_body(&body)?;
    let response = within_budget(&state, move |s| {
        let reports = request
            .scenarios
            .iter()
            .map(|scenario| evaluate_scenario(scenario, &s.store, &s.resources))
            .collect::<aico_core::Result<Vec<_>>>()?;
        let comparison = compare(&reports)?;
        Ok(CompareResponse { reports, comparison })
    })
    .await?;
    Ok(Json(response))
}
