//! JSON-over-HTTP backend protocol.
//!
//! ```text
//! POST /v1/embed        {"texts":[...]}                                  -> {"vectors":[[...]], "dim": d}
//! POST /v1/nli          {"pairs":[{"premise":...,"hypothesis":...}]}    -> {"scores":[{"entail","neutral","contradict"}]}
//! POST /v1/plausibility {"statements":[...]}                             -> {"scores":[...]}
//! POST /v1/generate     {"prompt":...,"max_length":n}                    -> {"text":...}
//! ```
//!
//! Schema violations are answered with HTTP 400 and `{"error": message}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Backend, NliScores};
use crate::error::{Error, Result};

pub const EMBED_PATH: &str = "/v1/embed";
pub const NLI_PATH: &str = "/v1/nli";
pub const PLAUSIBILITY_PATH: &str = "/v1/plausibility";
pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliRequest {
    pub pairs: Vec<NliPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub scores: Vec<NliScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlausibilityRequest {
    pub statements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub prompt: String,
    pub max_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

pub(crate) fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorResponse { error: message.into() })).into_response()
}

/// Parses `body` as `Req`, runs `f` off the async executor and serializes its answer.
pub(crate) async fn handle_json<S, Req, Resp, F>(state: S, body: Bytes, f: F) -> Response
where
    S: Send + 'static,
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(S, Req) -> Result<Resp> + Send + 'static,
{
    match serde_json::from_slice::<Req>(&body) {
        Ok(req) => respond(state, req, f).await,
        Err(e) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

/// Runs a blocking backend call; validation failures map to 400, the rest to 500.
pub(crate) async fn respond<S, Req, Resp, F>(state: S, req: Req, f: F) -> Response
where
    S: Send + 'static,
    Req: Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(S, Req) -> Result<Resp> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(state, req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e @ (Error::Validation(_) | Error::Config(_)))) => {
            error_response(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

type Shared = Arc<dyn Backend>;

/// Serves the backend protocol from any local [`Backend`].
pub fn router(backend: Shared) -> Router {
    Router::new()
        .route(EMBED_PATH, post(embed))
        .route(NLI_PATH, post(nli))
        .route(PLAUSIBILITY_PATH, post(plausibility))
        .route(GENERATE_PATH, post(generate))
        .with_state(backend)
}

async fn embed(State(b): State<Shared>, body: Bytes) -> Response {
    handle_json(b, body, |b, req: EmbedRequest| {
        let vectors = b.embed(&req.texts)?;
        let dim = vectors.first().map_or(0, |v| v.dim());
        Ok(EmbedResponse {
            vectors: vectors.into_iter().map(|v| v.into_inner()).collect(),
            dim,
        })
    })
    .await
}

async fn nli(State(b): State<Shared>, body: Bytes) -> Response {
    handle_json(b, body, |b, req: NliRequest| {
        let pairs: Vec<(String, String)> =
            req.pairs.into_iter().map(|p| (p.premise, p.hypothesis)).collect();
        Ok(NliResponse { scores: b.nli(&pairs)? })
    })
    .await
}

async fn plausibility(State(b): State<Shared>, body: Bytes) -> Response {
    handle_json(b, body, |b, req: PlausibilityRequest| {
        Ok(PlausibilityResponse { scores: b.plausibility(&req.statements)? })
    })
    .await
}

async fn generate(State(b): State<Shared>, body: Bytes) -> Response {
    handle_json(b, body, |b, req: GenerateRequest| {
        Ok(GenerateResponse { text: b.generate(&req.prompt, req.max_length)? })
    })
    .await
}
