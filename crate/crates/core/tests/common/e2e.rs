//! The synth -> score -> eval pipeline driven through the CLI binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use trafficqa::backend::{FixtureEntry, NliScores};
use trafficqa::model::{load_qa_file, write_jsonl, CausalPair, QAItem};
use trafficqa::scorers::make_statement;

pub const ITEMS: usize = 50;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_trafficqa"))
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn run_ok(args: &[&str]) -> String {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "trafficqa {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Distinct causes and effects, so nothing is deduplicated.
pub fn distinct_pairs(n: usize) -> Vec<CausalPair> {
    (0..n)
        .map(|i| CausalPair {
            id: format!("pair-{i:03}"),
            cause: format!("because the signal at crossing {i} turned amber"),
            effect: format!("{} at crossing {i}", super::EFFECTS[i % super::EFFECTS.len()]),
            source: "fixture".into(),
        })
        .collect()
}

/// Item `i` is answered wrong by the plausibility fixture when `i % 4 == 0`.
pub fn plausibility_wrong(i: usize) -> bool {
    i.is_multiple_of(4)
}

/// Item `i` is answered wrong by the NLI fixture when `i % 5 == 0`.
pub fn nli_wrong(i: usize) -> bool {
    i.is_multiple_of(5)
}

fn chosen(item: &QAItem, wrong: bool) -> usize {
    if wrong {
        (item.answer_index + 1) % item.candidates.len()
    } else {
        item.answer_index
    }
}

fn fixture_entries(items: &[QAItem]) -> Vec<FixtureEntry> {
    let mut entries = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let (p, n) = (chosen(item, plausibility_wrong(i)), chosen(item, nli_wrong(i)));
        for (j, c) in item.candidates.iter().enumerate() {
            entries.push(FixtureEntry::Plausibility {
                statement: make_statement(&item.question, c),
                value: if j == p { 2.0 } else { -(j as f64) },
            });
            let value = if j == n {
                NliScores { entail: 0.8, neutral: 0.1, contradict: 0.1 }
            } else {
                NliScores { entail: 0.1, neutral: 0.2, contradict: 0.7 }
            };
            entries.push(FixtureEntry::Nli { premise: item.question.clone(), hypothesis: c.clone(), value });
        }
    }
    entries
}

pub struct PipelineRun {
    pub items: Vec<QAItem>,
    pub eval: serde_json::Value,
    /// Every file the pipeline wrote, by name.
    pub outputs: BTreeMap<String, Vec<u8>>,
}

pub fn run_pipeline(dir: &Path) -> PipelineRun {
    let path = |name: &str| dir.join(name).to_str().unwrap().to_string();
    write_jsonl(&distinct_pairs(ITEMS), Path::new(&path("pairs.jsonl"))).unwrap();
    let labels: BTreeMap<usize, &str> =
        [(0, "accelerate"), (1, "slow"), (2, "stop"), (3, "merge"), (4, "turn")].into();
    std::fs::write(path("labels.json"), serde_json::to_vec(&labels).unwrap()).unwrap();

    run_ok(&[
        "synth", "--input", &path("pairs.jsonl"), "--output", &path("items.jsonl"),
        "--mode", "ep", "--seed", "7", "--dim", "64", "--backend-seed", "3",
        "--label-map", &path("labels.json"),
    ]);
    let items = load_qa_file(Path::new(&path("items.jsonl"))).unwrap();
    write_jsonl(&fixture_entries(&items), Path::new(&path("fixture.jsonl"))).unwrap();

    for scorer in ["plausibility", "nli"] {
        run_ok(&[
            "score", "--items", &path("items.jsonl"), "--scorer", scorer,
            "--output", &path(&format!("{scorer}.jsonl")),
            "--backend", "fixture", "--fixture", &path("fixture.jsonl"),
        ]);
    }
    run_ok(&[
        "eval", "--gold", &path("items.jsonl"),
        "--predictions", &path("plausibility.jsonl"), "--predictions", &path("nli.jsonl"),
        "--format", "json", "--output", &path("eval.json"),
    ]);
    let markdown = run_ok(&[
        "eval", "--gold", &path("items.jsonl"),
        "--predictions", &path("plausibility.jsonl"), "--predictions", &path("nli.jsonl"),
    ]);

    let mut outputs = BTreeMap::new();
    for name in ["items.jsonl", "plausibility.jsonl", "nli.jsonl", "eval.json"] {
        outputs.insert(name.to_string(), std::fs::read(path(name)).unwrap());
    }
    outputs.insert("eval.md".into(), markdown.into_bytes());
    let eval = serde_json::from_slice(&outputs["eval.json"]).unwrap();
    PipelineRun { items, eval, outputs }
}

/// Accuracy the fixtures are built to produce.
pub fn expected_accuracy(n: usize, wrong: fn(usize) -> bool) -> f64 {
    (0..n).filter(|&i| !wrong(i)).count() as f64 / n as f64
}
