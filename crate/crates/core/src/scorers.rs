//! Zero-shot answering strategies. Each maps a [`QAItem`] to a [`PredictionRecord`] whose
//! predicted index is the argmax of one score per candidate.
//!
//! * NLI: premise = question, hypothesis = candidate, score = P(entail) - P(contradict).
//! * Plausibility: score = plausibility of the statement formed from question and candidate.
//! * Open-book: retrieve the best paragraph for the question, generate an answer from a prompt
//!   holding question, candidates and paragraph, then score candidates by similarity to it.

use std::collections::HashMap;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::model::{PredictionRecord, QAItem};
use crate::retrieval::{cosine, ParagraphIndex};

pub const DEFAULT_TEMPLATE: &str = "default";
pub const DEFAULT_MAX_LENGTH: usize = 32;
pub const PARAGRAPH_ID_KEY: &str = "paragraph_id";
pub const GENERATED_ANSWER_KEY: &str = "generated_answer";

static BLANK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"_{3,}").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Nli,
    #[value(name = "plaus", alias = "plausibility")]
    Plausibility,
    Openbook,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Nli => "nli",
            ScorerKind::Plausibility => "plausibility",
            ScorerKind::Openbook => "openbook",
        }
    }
}

/// How the generated answer is compared with each candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMetric {
    #[default]
    #[value(name = "embedding-cosine", alias = "cosine")]
    EmbeddingCosine,
    #[value(name = "normalized-token-overlap", alias = "overlap")]
    NormalizedTokenOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Name written into prediction records; defaults to the kind's name.
    pub name: Option<String>,
    pub template: String,
    pub max_length: usize,
    pub metric: MatchMetric,
}

impl ScorerConfig {
    pub fn new(kind: ScorerKind) -> Self {
        ScorerConfig {
            kind,
            name: None,
            template: DEFAULT_TEMPLATE.to_string(),
            max_length: DEFAULT_MAX_LENGTH,
            metric: MatchMetric::default(),
        }
    }

    pub fn scorer_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.name())
    }
}

/// Fills every `___` blank in `question` with `candidate`, or appends the candidate
/// after a space when there is no blank.
pub fn make_statement(question: &str, candidate: &str) -> String {
    if BLANK.is_match(question) {
        BLANK.replace_all(question, regex::NoExpand(candidate)).into_owned()
    } else {
        format!("{question} {candidate}")
    }
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Renders the open-book prompt:
///
/// ```text
/// <question>
///
/// (A) <candidate 0>
/// (B) <candidate 1>
///
/// context: <paragraph>
/// ```
pub fn render_prompt(template: &str, question: &str, candidates: &[String], paragraph: &str) -> Result<String> {
    if template != DEFAULT_TEMPLATE {
        return Err(Error::config(format!("unknown prompt template `{template}`")));
    }
    let mut out = String::new();
    out.push_str(question.trim());
    out.push_str("\n\n");
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!("({}) {}\n", letter(i), c.trim()));
    }
    out.push_str("\ncontext: ");
    out.push_str(paragraph.trim());
    Ok(out)
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token-level F1 between two texts after lowercasing and stripping punctuation.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (ta.len() + tb.len()) as f64
}

pub fn predict_nli(item: &QAItem, backend: &dyn Backend, name: &str) -> Result<PredictionRecord> {
    let pairs: Vec<(String, String)> = item
        .candidates
        .iter()
        .map(|c| (item.question.clone(), c.clone()))
        .collect();
    let scores = backend.nli(&pairs).map_err(|e| e.for_item(&item.id))?;
    check_len(item, scores.len())?;
    let margins = scores.iter().map(|s| s.margin()).collect();
    Ok(PredictionRecord::from_scores(&item.id, margins, name))
}

pub fn predict_plausibility(item: &QAItem, backend: &dyn Backend, name: &str) -> Result<PredictionRecord> {
    let statements: Vec<String> = item
        .candidates
        .iter()
        .map(|c| make_statement(&item.question, c))
        .collect();
    let scores = backend.plausibility(&statements).map_err(|e| e.for_item(&item.id))?;
    check_len(item, scores.len())?;
    Ok(PredictionRecord::from_scores(&item.id, scores, name))
}

pub fn predict_openbook(
    item: &QAItem,
    index: &ParagraphIndex,
    backend: &dyn Backend,
    config: &ScorerConfig,
) -> Result<PredictionRecord> {
    let wrap = |e: Error| e.for_item(&item.id);
    if index.is_empty() {
        return Err(Error::config("open-book scoring needs a non-empty index"));
    }
    let hits = index.retrieve(&item.question, 1, backend).map_err(wrap)?;
    let paragraph = hits[0].paragraph;
    let prompt = render_prompt(&config.template, &item.question, &item.candidates, &paragraph.text)?;
    let generated = match backend.generate(&prompt, config.max_length) {
        Ok(g) if !g.trim().is_empty() => g,
        Ok(_) => return Err(wrap(Error::Generation("empty generated answer".into()))),
        Err(e) => return Err(wrap(Error::Generation(e.to_string()))),
    };
    let scores = match config.metric {
        MatchMetric::EmbeddingCosine => {
            let mut texts = Vec::with_capacity(item.candidates.len() + 1);
            texts.push(generated.clone());
            texts.extend(item.candidates.iter().cloned());
            let vectors = backend.embed(&texts).map_err(wrap)?;
            vectors[1..]
                .iter()
                .map(|v| cosine(&vectors[0], v))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?
        }
        MatchMetric::NormalizedTokenOverlap => item
            .candidates
            .iter()
            .map(|c| token_overlap(&generated, c))
            .collect(),
    };
    check_len(item, scores.len())?;
    let mut record = PredictionRecord::from_scores(&item.id, scores, config.scorer_name());
    record.metadata.insert(PARAGRAPH_ID_KEY.into(), paragraph.id.clone());
    record.metadata.insert(GENERATED_ANSWER_KEY.into(), generated);
    Ok(record)
}

fn check_len(item: &QAItem, got: usize) -> Result<()> {
    if got != item.candidates.len() {
        return Err(Error::Backend(format!(
            "{got} scores for {} candidates",
            item.candidates.len()
        ))
        .for_item(&item.id));
    }
    Ok(())
}

/// A configured strategy ready to score items.
pub struct Scorer<'a> {
    config: ScorerConfig,
    index: Option<&'a ParagraphIndex>,
}

impl<'a> Scorer<'a> {
    pub fn new(config: ScorerConfig, index: Option<&'a ParagraphIndex>) -> Result<Self> {
        if config.max_length == 0 {
            return Err(Error::config("max_length must be >= 1"));
        }
        if config.kind == ScorerKind::Openbook {
            match index {
                None => return Err(Error::config("open-book scorer requires a paragraph index")),
                Some(ix) if ix.is_empty() => return Err(Error::config("empty paragraph index")),
                _ => {}
            }
            render_prompt(&config.template, "q", &[], "p")?;
        }
        Ok(Scorer { config, index })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn predict(&self, item: &QAItem, backend: &dyn Backend) -> Result<PredictionRecord> {
        let name = self.config.scorer_name();
        match self.config.kind {
            ScorerKind::Nli => predict_nli(item, backend, name),
            ScorerKind::Plausibility => predict_plausibility(item, backend, name),
            ScorerKind::Openbook => {
                predict_openbook(item, self.index.expect("checked in new"), backend, &self.config)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRun {
    /// One record per successfully scored item, in input order.
    pub records: Vec<PredictionRecord>,
    /// Items whose generation failed: (item id, reason). Excluded from `records`.
    pub errored: Vec<(String, String)>,
}

/// Scores all items in parallel; output keeps input order.
pub fn score_items(items: &[QAItem], scorer: &Scorer<'_>, backend: &dyn Backend) -> Result<ScoringRun> {
    if let Some(ix) = scorer.index {
        ix.check_backend(backend)?;
    }
    let results: Vec<Result<PredictionRecord>> =
        items.par_iter().map(|it| scorer.predict(it, backend)).collect();
    let mut run = ScoringRun { records: Vec::with_capacity(items.len()), errored: Vec::new() };
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(rec) => run.records.push(rec),
            Err(e) if e.is_generation_failure() => run.errored.push((item.id.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::backend::{FixtureBackend, FixtureEntry, HashBackend, NliScores};
    use crate::corpus::Paragraph;
    use crate::model::Partition;

    fn item(question: &str, candidates: &[&str]) -> QAItem {
        QAItem {
            id: "q".into(),
            question: question.into(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            answer_index: 0,
            partition: Partition::hdt_for(candidates.len()).unwrap(),
            class_label: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn statement_construction() {
        assert_eq!(
            make_statement("You must notify the DMV within ___ days.", "5"),
            "You must notify the DMV within 5 days."
        );
        assert_eq!(
            make_statement("The light turned green.", "The car accelerates."),
            "The light turned green. The car accelerates."
        );
        assert_eq!(make_statement("___ and _____ again", "x"), "x and x again");
        assert_eq!(make_statement("a __ b", "$1"), "a __ b $1");
        assert_eq!(make_statement("cost ___", "$1"), "cost $1");
    }

    fn nli_fixture(q: &str, scores: &[(&str, [f64; 3])]) -> FixtureBackend {
        FixtureBackend::from_entries(
            scores
                .iter()
                .map(|(c, [e, n, x])| FixtureEntry::Nli {
                    premise: q.into(),
                    hypothesis: c.to_string(),
                    value: NliScores { entail: *e, neutral: *n, contradict: *x },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn nli_margin_decides() {
        let q = "The light turned green.";
        let fx = nli_fixture(q, &[("A", [0.9, 0.05, 0.05]), ("B", [0.2, 0.1, 0.7])]);
        let rec = predict_nli(&item(q, &["A", "B"]), &fx, "nli").unwrap();
        assert_eq!(rec.predicted_index, 0);
        assert!((rec.candidate_scores[0] - 0.85).abs() < 1e-12);
        assert!((rec.candidate_scores[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn nli_shift_invariance_and_ties() {
        let q = "Q.";
        let base = [("A", [0.3, 0.5, 0.2]), ("B", [0.4, 0.2, 0.4]), ("C", [0.5, 0.2, 0.3])];
        let shifted: Vec<_> = base
            .iter()
            .map(|(c, [e, n, x])| (*c, [e + 0.1, n - 0.2, x + 0.1]))
            .collect();
        let it = item(q, &["A", "B", "C"]);
        let a = predict_nli(&it, &nli_fixture(q, &base), "nli").unwrap();
        let b = predict_nli(&it, &nli_fixture(q, &shifted), "nli").unwrap();
        assert_eq!(a.predicted_index, b.predicted_index);
        let tied = [("A", [0.3, 0.4, 0.3]), ("B", [0.3, 0.4, 0.3]), ("C", [0.3, 0.4, 0.3])];
        assert_eq!(predict_nli(&it, &nli_fixture(q, &tied), "nli").unwrap().predicted_index, 0);
    }

    fn plaus_fixture(entries: &[(&str, f64)]) -> FixtureBackend {
        FixtureBackend::from_entries(
            entries
                .iter()
                .map(|(s, v)| FixtureEntry::Plausibility { statement: s.to_string(), value: *v })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn plausibility_argmax() {
        let fx = plaus_fixture(&[("Q. a", 1.0), ("Q. b", 3.0), ("Q. c", 2.0)]);
        assert_eq!(predict_plausibility(&item("Q.", &["a", "b", "c"]), &fx, "p").unwrap().predicted_index, 1);
        let fx = plaus_fixture(&[("Yield means stop. True", -0.5), ("Yield means stop. False", -1.5)]);
        let tf = item("Yield means stop.", &["True", "False"]);
        assert_eq!(predict_plausibility(&tf, &fx, "p").unwrap().predicted_index, 0);
    }

    #[test]
    fn backend_error_carries_item_id() {
        let fx = plaus_fixture(&[]);
        let err = predict_plausibility(&item("Q.", &["a", "b"]), &fx, "p").unwrap_err();
        assert!(err.to_string().starts_with("item q:"));
    }

    #[test]
    fn prompt_template_contract() {
        let cands: Vec<String> = ["15", "5", "10", "30"].iter().map(|s| s.to_string()).collect();
        let p = render_prompt(DEFAULT_TEMPLATE, "Notify within ___ days?", &cands, "Para text.").unwrap();
        assert_eq!(p, "Notify within ___ days?\n\n(A) 15\n(B) 5\n(C) 10\n(D) 30\n\ncontext: Para text.");
        assert!(render_prompt("other", "q", &cands, "p").is_err());
    }

    #[test]
    fn token_overlap_metric() {
        assert_eq!(token_overlap("Slow down.", "slow down"), 1.0);
        assert_eq!(token_overlap("", "x"), 0.0);
        assert!((token_overlap("the car stops", "the car turns") - 2.0 / 3.0).abs() < 1e-12);
    }

    fn para(text: &str) -> Paragraph {
        Paragraph {
            id: "manual#0".into(),
            text: text.into(),
            source: "manual".into(),
            sentence_count: 1,
            word_count: text.split_whitespace().count(),
        }
    }

    #[test]
    fn openbook_exact_answer_wins_under_both_metrics() {
        let b = HashBackend::new(64, 2);
        let index = ParagraphIndex::build(vec![para("Always yield to traffic already in the circle.")], &b).unwrap();
        let it = item(
            "You have the right of way when you are:",
            &["Entering a circle", "Backing out", "Already in a traffic circle", "Leaving"],
        );
        for metric in [MatchMetric::EmbeddingCosine, MatchMetric::NormalizedTokenOverlap] {
            let prompt = render_prompt(DEFAULT_TEMPLATE, &it.question, &it.candidates, &index.paragraphs()[0].text).unwrap();
            let ga = b.generate(&prompt, 32).unwrap();
            let expected = it.candidates.iter().position(|c| *c == ga).unwrap();
            let cfg = ScorerConfig { metric, ..ScorerConfig::new(ScorerKind::Openbook) };
            let rec = predict_openbook(&it, &index, &b, &cfg).unwrap();
            assert_eq!(rec.predicted_index, expected);
            assert_eq!(rec.metadata[GENERATED_ANSWER_KEY], ga);
            assert_eq!(rec.metadata[PARAGRAPH_ID_KEY], "manual#0");
        }
    }

    #[test]
    fn openbook_requires_index() {
        assert!(Scorer::new(ScorerConfig::new(ScorerKind::Openbook), None).is_err());
        assert!(Scorer::new(ScorerConfig::new(ScorerKind::Nli), None).is_ok());
    }

    #[test]
    fn generation_failures_are_counted_not_fatal() {
        // The fixture embeds everything but knows no generations.
        let texts = ["Why?", "a", "b", "ctx"];
        let entries = texts
            .iter()
            .enumerate()
            .map(|(i, t)| FixtureEntry::Embed {
                text: t.to_string(),
                value: (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
            })
            .collect();
        let fx = FixtureBackend::from_entries(entries).unwrap();
        let index = ParagraphIndex::build(vec![para("ctx")], &fx).unwrap();
        let scorer = Scorer::new(ScorerConfig::new(ScorerKind::Openbook), Some(&index)).unwrap();
        let run = score_items(&[item("Why?", &["a", "b"])], &scorer, &fx).unwrap();
        assert!(run.records.is_empty());
        assert_eq!(run.errored.len(), 1);
        assert_eq!(run.errored[0].0, "q");
    }
}
