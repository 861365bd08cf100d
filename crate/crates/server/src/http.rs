use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use shadowdrive_core::api::{
    self, ErrorBody, EvalRequest, EvalResponse, ReplayRequest, ScenarioList, SimulateRequest, SimulateResponse,
    SuiteRequest,
};
use shadowdrive_core::harness::TestScenario;
use shadowdrive_core::session::ReplayOutcome;
use shadowdrive_core::Error;

use crate::AppState;

pub(crate) struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::GenerationFailed { .. } | Error::UndefinedEffect => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a CPU-bound operation off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> shadowdrive_core::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(join) => Err(Error::Io(std::io::Error::other(join.to_string())).into()),
    }
}

pub(crate) async fn health() -> &'static str {
    "ok"
}

pub(crate) async fn scenarios(State(state): State<AppState>) -> ApiResult<ScenarioList> {
    Ok(Json(crate::list_scenarios(&state.scenario_dir).await?))
}

pub(crate) async fn simulate(Json(req): Json<SimulateRequest>) -> ApiResult<SimulateResponse> {
    blocking(move || api::simulate(&req)).await
}

pub(crate) async fn suite(Json(req): Json<SuiteRequest>) -> ApiResult<Vec<TestScenario>> {
    blocking(move || api::suite(&req)).await
}

pub(crate) async fn eval(Json(req): Json<EvalRequest>) -> ApiResult<EvalResponse> {
    blocking(move || api::evaluate(&req)).await
}

pub(crate) async fn replay(Json(req): Json<ReplayRequest>) -> ApiResult<ReplayOutcome> {
    blocking(move || api::replay(&req)).await
}
