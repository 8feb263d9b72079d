//! Randomized argmax-invariance checks shared by the scorer tests and the acceptance suite.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafficqa::backend::{Backend, Embedding, FixtureBackend, FixtureEntry, HashBackend, NliScores};
use trafficqa::corpus::Paragraph;
use trafficqa::model::{Partition, QAItem};
use trafficqa::retrieval::ParagraphIndex;
use trafficqa::scorers::{make_statement, Scorer, ScorerConfig, ScorerKind};
use trafficqa::Result;

fn random_item(rng: &mut ChaCha8Rng, i: usize) -> QAItem {
    let n = rng.random_range(2..=5);
    let question = if rng.random_bool(0.5) {
        format!("Item {i}: the driver ___ because the light turns {}", rng.random_range(0..1000))
    } else {
        format!("Item {i}: what should the driver do at junction {}?", rng.random_range(0..1000))
    };
    QAItem {
        id: format!("item-{i}"),
        question,
        candidates: (0..n).map(|j| format!("choice {j} for item {i} variant {}", rng.random_range(0..1_000_000))).collect(),
        answer_index: rng.random_range(0..n),
        partition: Partition::hdt_for(n).unwrap(),
        class_label: None,
        metadata: BTreeMap::new(),
    }
}

/// Strictly increasing, far from affine.
fn warp(x: f64) -> f64 {
    x.powi(3) + (4.0 * x).tanh()
}

fn permuted(item: &QAItem, rng: &mut ChaCha8Rng) -> QAItem {
    let mut out = item.clone();
    out.candidates.shuffle(rng);
    out
}

fn distinct_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[1] - w[0] > 1e-6) {
            return v;
        }
    }
}

fn nli_triple(f: f64) -> NliScores {
    NliScores { entail: (1.0 + f) / 2.0 * 0.9, neutral: 0.1, contradict: (1.0 - f) / 2.0 * 0.9 }
}

/// Generation comes from a per-question table; everything else from the hash backend.
struct TableGenerator {
    inner: HashBackend,
    answers: HashMap<String, String>,
}

impl Backend for TableGenerator {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        self.inner.embed(texts)
    }
    fn nli(&self, pairs: &[(String, String)]) -> Result<Vec<NliScores>> {
        self.inner.nli(pairs)
    }
    fn plausibility(&self, statements: &[String]) -> Result<Vec<f64>> {
        self.inner.plausibility(statements)
    }
    fn generate(&self, prompt: &str, _max_length: usize) -> Result<String> {
        let question = prompt.lines().next().unwrap_or_default();
        self.answers
            .get(question)
            .cloned()
            .ok_or_else(|| trafficqa::Error::FixtureMiss(question.to_string()))
    }
    fn fingerprint(&self) -> String {
        format!("table+{}", self.inner.fingerprint())
    }
}

fn predicted_text(item: &QAItem, scorer: &Scorer<'_>, backend: &dyn Backend) -> Result<(usize, Vec<f64>, String)> {
    let rec = scorer.predict(item, backend)?;
    let text = item.candidates[rec.predicted_index].clone();
    Ok((rec.predicted_index, rec.candidate_scores, text))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Runs `n` random items through `kind`. Returns a description of the first violation.
pub fn check_scorer(kind: ScorerKind, n: usize, seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<QAItem> = (0..n).map(|i| random_item(&mut rng, i)).collect();
    let fail = |i: &QAItem, what: &str| Err(format!("{kind:?} item {}: {what}", i.id));
    match kind {
        ScorerKind::Plausibility | ScorerKind::Nli => {
            let mut base = Vec::new();
            let mut warped = Vec::new();
            for item in &items {
                let k = item.candidates.len();
                let values = if kind == ScorerKind::Nli {
                    distinct_uniform(&mut rng, k, -1.0, 1.0)
                } else {
                    distinct_uniform(&mut rng, k, -5.0, 5.0)
                };
                for (c, &f) in item.candidates.iter().zip(&values) {
                    if kind == ScorerKind::Nli {
                        let (premise, hypothesis) = (item.question.clone(), c.clone());
                        base.push(FixtureEntry::Nli { premise: premise.clone(), hypothesis: hypothesis.clone(), value: nli_triple(f) });
                        // tanh keeps the warped margin inside (-1, 1) so the triple stays valid.
                        warped.push(FixtureEntry::Nli { premise, hypothesis, value: nli_triple((2.0 * f).tanh()) });
                    } else {
                        let statement = make_statement(&item.question, c);
                        base.push(FixtureEntry::Plausibility { statement: statement.clone(), value: f });
                        warped.push(FixtureEntry::Plausibility { statement, value: warp(f) });
                    }
                }
            }
            let base = FixtureBackend::from_entries(base).map_err(|e| e.to_string())?;
            let warped = FixtureBackend::from_entries(warped).map_err(|e| e.to_string())?;
            let scorer = Scorer::new(ScorerConfig::new(kind), None).map_err(|e| e.to_string())?;
            for item in &items {
                let (ia, scores, ta) = predicted_text(item, &scorer, &base).map_err(|e| e.to_string())?;
                let (ib, _, _) = predicted_text(item, &scorer, &warped).map_err(|e| e.to_string())?;
                if ia != ib {
                    return fail(item, "prediction changed under an increasing transform");
                }
                if argmax(&scores.iter().map(|&s| warp(s)).collect::<Vec<_>>()) != ia {
                    return fail(item, "warped scores pick a different candidate");
                }
                let shuffled = permuted(item, &mut rng);
                let (_, _, tp) = predicted_text(&shuffled, &scorer, &base).map_err(|e| e.to_string())?;
                if tp != ta {
                    return fail(item, "prediction not consistent under candidate permutation");
                }
            }
        }
        ScorerKind::Openbook => {
            let answers = items
                .iter()
                .map(|it| (it.question.clone(), format!("the driver probably does thing {}", rng.random_range(0..1000))))
                .collect();
            let backend = TableGenerator { inner: HashBackend::new(32, seed), answers };
            let paragraphs: Vec<Paragraph> = (0..20).map(super::paragraph).collect();
            let index = ParagraphIndex::build(paragraphs, &backend).map_err(|e| e.to_string())?;
            let scorer = Scorer::new(ScorerConfig::new(kind), Some(&index)).map_err(|e| e.to_string())?;
            for item in &items {
                let (ia, scores, ta) = predicted_text(item, &scorer, &backend).map_err(|e| e.to_string())?;
                if argmax(&scores.iter().map(|&s| warp(s)).collect::<Vec<_>>()) != ia {
                    return fail(item, "warped scores pick a different candidate");
                }
                let shuffled = permuted(item, &mut rng);
                let (_, _, tp) = predicted_text(&shuffled, &scorer, &backend).map_err(|e| e.to_string())?;
                if tp != ta {
                    return fail(item, "prediction not consistent under candidate permutation");
                }
            }
        }
    }
    Ok(())
}
