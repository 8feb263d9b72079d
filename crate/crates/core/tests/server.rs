mod common;

use std::sync::Arc;

use common::*;
use trafficqa::backend::{Backend, HashBackend};
use trafficqa::retrieval::ParagraphIndex;
use trafficqa::scorers::{ScorerConfig, ScorerKind};
use trafficqa::server::{router, AnswerResponse, AppState, RetrieveResponse};

fn start() -> (String, ParagraphIndex, Arc<dyn Backend>) {
    let backend: Arc<dyn Backend> = Arc::new(HashBackend::new(32, 4));
    let index = ParagraphIndex::build((0..50).map(paragraph).collect(), backend.as_ref()).unwrap();
    let state = AppState::new(index.clone(), backend.clone(), ScorerConfig::new(ScorerKind::Openbook)).unwrap();
    let addr = spawn_router(router(state));
    (format!("http://{addr}"), index, backend)
}

#[test]
fn retrieve_matches_library() {
    let (base, index, backend) = start();
    let client = reqwest::blocking::Client::new();
    let resp: RetrieveResponse = client
        .get(format!("{base}/v1/retrieve?q=yield%20at%20sign%203&k=5"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let want = index.retrieve("yield at sign 3", 5, backend.as_ref()).unwrap();
    assert_eq!(resp.results.len(), 5);
    for (got, w) in resp.results.iter().zip(&want) {
        assert_eq!(got.paragraph_id, w.paragraph.id);
        assert_eq!(got.score, w.score);
    }
    let default_k: RetrieveResponse = client
        .get(format!("{base}/v1/retrieve?q=stop"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(default_k.results.len(), 1);
}

#[test]
fn retrieve_rejects_bad_queries() {
    let (base, _, _) = start();
    let client = reqwest::blocking::Client::new();
    for q in ["/v1/retrieve", "/v1/retrieve?q=x&k=abc", "/v1/retrieve?q=x&k=0", "/v1/retrieve?q=%20"] {
        let status = client.get(format!("{base}{q}")).send().unwrap().status();
        assert_eq!(status.as_u16(), 400, "{q}");
    }
}

#[test]
fn answer_returns_scores_and_provenance() {
    let (base, _, _) = start();
    let client = reqwest::blocking::Client::new();
    let resp: AnswerResponse = client
        .post(format!("{base}/v1/answer"))
        .json(&serde_json::json!({
            "question": "What should you do at a flashing red light?",
            "candidates": ["stop, then proceed when safe", "speed up", "honk"]
        }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(resp.candidate_scores.len(), 3);
    assert!(resp.predicted_index < 3);
    assert!(resp.paragraph_id.starts_with("manual#"));
    assert!(!resp.generated_answer.is_empty());
    let best = resp
        .candidate_scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s > resp.candidate_scores[b] { i } else { b });
    assert_eq!(best, resp.predicted_index);
}

#[test]
fn answer_rejects_invalid_requests() {
    let (base, _, _) = start();
    let client = reqwest::blocking::Client::new();
    for body in [
        serde_json::json!({"question": "q", "candidates": ["only one"]}),
        serde_json::json!({"question": "q", "candidates": ["a", "b", "c", "d", "e", "f"]}),
        serde_json::json!({"question": "", "candidates": ["a", "b"]}),
        serde_json::json!({"candidates": ["a", "b"]}),
    ] {
        let status = client.post(format!("{base}/v1/answer")).json(&body).send().unwrap().status();
        assert_eq!(status.as_u16(), 400, "{body}");
    }
}

#[test]
fn state_rejects_index_from_other_backend() {
    let other = HashBackend::new(32, 5);
    let index = ParagraphIndex::build(vec![paragraph(0)], &other).unwrap();
    let backend: Arc<dyn Backend> = Arc::new(HashBackend::new(32, 4));
    assert!(AppState::new(index, backend, ScorerConfig::new(ScorerKind::Openbook)).is_err());
}
