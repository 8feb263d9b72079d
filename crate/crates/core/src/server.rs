//! HTTP front end over a paragraph index:
//!
//! ```text
//! GET  /v1/retrieve?q=...&k=...             -> {"results":[{"paragraph_id","source","text","score"}]}
//! POST /v1/answer {"question","candidates"} -> {"predicted_index","paragraph_id","generated_answer","candidate_scores"}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::backend::protocol::{error_response, handle_json, respond};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::model::{Partition, QAItem, MAX_CANDIDATES, MIN_CANDIDATES};
use crate::retrieval::ParagraphIndex;
use crate::scorers::{predict_openbook, ScorerConfig, GENERATED_ANSWER_KEY, PARAGRAPH_ID_KEY};

#[derive(Clone)]
pub struct AppState {
    pub index: Arc<ParagraphIndex>,
    pub backend: Arc<dyn Backend>,
    pub scorer: ScorerConfig,
}

impl AppState {
    pub fn new(index: ParagraphIndex, backend: Arc<dyn Backend>, scorer: ScorerConfig) -> Result<Self> {
        index.check_backend(backend.as_ref())?;
        Ok(AppState {
            index: Arc::new(index),
            backend,
            scorer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedParagraph {
    pub paragraph_id: String,
    pub source: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveResponse {
    pub results: Vec<RetrievedParagraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub question: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub predicted_index: usize,
    pub paragraph_id: String,
    pub generated_answer: String,
    pub candidate_scores: Vec<f64>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/retrieve", get(retrieve))
        .route("/v1/answer", post(answer))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn retrieve(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let Some(query) = params.get("q").cloned() else {
        return error_response(StatusCode::BAD_REQUEST, "missing query parameter `q`");
    };
    let k = match params.get("k").map(|k| k.parse::<usize>()) {
        None => 1,
        Some(Ok(k)) => k,
        Some(Err(e)) => return error_response(StatusCode::BAD_REQUEST, format!("bad `k`: {e}")),
    };
    respond(state, query, move |state, query: String| {
        let hits = state.index.retrieve(&query, k, state.backend.as_ref())?;
        Ok(RetrieveResponse {
            results: hits
                .into_iter()
                .map(|h| RetrievedParagraph {
                    paragraph_id: h.paragraph.id.clone(),
                    source: h.paragraph.source.clone(),
                    text: h.paragraph.text.clone(),
                    score: h.score,
                })
                .collect(),
        })
    })
    .await
}

async fn answer(State(state): State<AppState>, body: Bytes) -> Response {
    handle_json(state, body, |state, req: AnswerRequest| {
        let n = req.candidates.len();
        if !(MIN_CANDIDATES..=MAX_CANDIDATES).contains(&n) {
            return Err(Error::validation(format!(
                "{n} candidates, expected {MIN_CANDIDATES}..={MAX_CANDIDATES}"
            )));
        }
        let item = QAItem {
            id: "request".into(),
            question: req.question,
            candidates: req.candidates,
            answer_index: 0,
            partition: Partition::hdt_for(n).expect("checked range"),
            class_label: None,
            metadata: BTreeMap::new(),
        };
        item.validate()?;
        let mut rec = predict_openbook(&item, &state.index, state.backend.as_ref(), &state.scorer)
            .map_err(|e| match e {
                // Surface bad input as 400, everything else as a server failure.
                Error::Item { source, .. } if matches!(*source, Error::Validation(_)) => *source,
                other => other,
            })?;
        Ok(AnswerResponse {
            predicted_index: rec.predicted_index,
            paragraph_id: rec.metadata.remove(PARAGRAPH_ID_KEY).unwrap_or_default(),
            generated_answer: rec.metadata.remove(GENERATED_ANSWER_KEY).unwrap_or_default(),
            candidate_scores: rec.candidate_scores,
        })
    })
    .await
}
