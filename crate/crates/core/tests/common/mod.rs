#![allow(dead_code)]

pub mod e2e;
pub mod invariance;

use std::collections::BTreeMap;
use std::path::Path;

use trafficqa::backend::Embedding;
use trafficqa::corpus::Paragraph;
use trafficqa::model::{write_jsonl, CausalPair, Partition, PredictionRecord, QAItem};

pub const EFFECTS: [&str; 15] = [
    "The car accelerates",
    "The car inches forward",
    "The car is traveling down the road",
    "The car slows slightly",
    "The car moves forward slowly",
    "The car maintains a slow speed",
    "The car stops",
    "The car is parked at the right curb",
    "The car is stationary",
    "The car merges into the lane to its left",
    "The car is moving to the left lane",
    "The car is switching lanes to the left",
    "The car slows down and pulls to the right",
    "The car turns left and drives forward",
    "The car swerves to the left and slows",
];

/// `n` raw pairs; every 10th pair repeats the cause of the pair before it.
pub fn pair_corpus(n: usize) -> Vec<CausalPair> {
    (0..n)
        .map(|i| {
            let cause_id = if i % 10 == 9 { i - 1 } else { i };
            CausalPair {
                id: format!("pair-{i:04}"),
                cause: format!("because vehicle {cause_id} ahead changes its behaviour"),
                effect: format!("{} near marker {i}", EFFECTS[i % EFFECTS.len()]),
                source: "fixture".into(),
            }
        })
        .collect()
}

pub fn axis(dim: usize, i: usize) -> Vec<f64> {
    (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
}

pub fn unit(v: Vec<f64>) -> Embedding {
    Embedding::normalize(v).unwrap()
}

pub fn paragraph(i: usize) -> Paragraph {
    let text = format!(
        "Manual section {i}. Drivers must yield at sign {} and keep {} feet of distance.",
        i * 7 % 13,
        i % 50
    );
    Paragraph {
        id: format!("manual#{i}"),
        word_count: text.split_whitespace().count(),
        text,
        source: "manual".into(),
        sentence_count: 2,
    }
}

pub fn simple_item(id: &str, n: usize, answer: usize, partition: Partition) -> QAItem {
    QAItem {
        id: id.into(),
        question: format!("Question {id}?"),
        candidates: (0..n).map(|j| format!("{id} option {j}")).collect(),
        answer_index: answer,
        partition,
        class_label: None,
        metadata: BTreeMap::new(),
    }
}

pub fn one_hot_prediction(id: &str, n: usize, index: usize, scorer: &str) -> PredictionRecord {
    let mut scores = vec![0.0; n];
    scores[index] = 1.0;
    PredictionRecord::from_scores(id, scores, scorer)
}

/// Gold plus two prediction sets with 2256 and 2302 correct answers, 1826 of them shared,
/// out of 3139 items.
pub fn reference_overlap_fixture() -> (Vec<QAItem>, Vec<PredictionRecord>, Vec<PredictionRecord>) {
    const TOTAL: usize = 3139;
    const A: usize = 2256;
    const B: usize = 2302;
    const JOINT: usize = 1826;
    let gold: Vec<QAItem> = (0..TOTAL)
        .map(|i| simple_item(&format!("ep-{i}"), 3, 0, Partition::BddEp))
        .collect();
    // [0, JOINT) both right; [JOINT, A) only A; [A, A + B - JOINT) only B; rest both wrong.
    let a_right = |i: usize| i < A;
    let b_right = |i: usize| i < JOINT || (A..A + B - JOINT).contains(&i);
    let preds = |right: &dyn Fn(usize) -> bool, name: &str| -> Vec<PredictionRecord> {
        (0..TOTAL)
            .map(|i| one_hot_prediction(&format!("ep-{i}"), 3, if right(i) { 0 } else { 1 }, name))
            .collect()
    };
    (gold, preds(&a_right, "nli-large"), preds(&b_right, "plausibility-large"))
}

pub fn write_reference_overlap_fixture(dir: &Path) {
    let (gold, a, b) = reference_overlap_fixture();
    write_jsonl(&gold, &dir.join("gold.jsonl")).unwrap();
    write_jsonl(&a, &dir.join("a.jsonl")).unwrap();
    write_jsonl(&b, &dir.join("b.jsonl")).unwrap();
}

/// Two tight, well separated groups of unit vectors in R^8; returns points and planted labels.
pub fn planted_blobs(per_blob: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for blob in 0..2 {
        for j in 0..per_blob {
            let mut v = axis(8, blob * 4);
            v[blob * 4 + 1] = 0.05 * (j as f64 + 1.0) / per_blob as f64;
            v[blob * 4 + 2] = 0.03 * ((j * 7 % per_blob) as f64) / per_blob as f64;
            points.push(unit(v).into_inner());
            labels.push(blob);
        }
    }
    (points, labels)
}

/// True when two labelings induce the same partition of the points.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Independent cosine on raw slices.
pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Serves `router` on an ephemeral local port from a background thread.
pub fn spawn_router(router: axum::Router) -> std::net::SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}
