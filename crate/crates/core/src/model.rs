//! Shared data model and the line-delimited JSON formats used on disk.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CANDIDATES: usize = 2;
pub const MAX_CANDIDATES: usize = 5;
/// Candidate count of every synthesized (BDD) item.
pub const BDD_CANDIDATES: usize = 3;

/// Dataset partition an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    #[serde(rename = "BDD-EP")]
    BddEp,
    #[serde(rename = "BDD-CP")]
    BddCp,
    #[serde(rename = "HDT-2")]
    Hdt2,
    #[serde(rename = "HDT-3")]
    Hdt3,
    #[serde(rename = "HDT-4")]
    Hdt4,
    #[serde(rename = "HDT-5")]
    Hdt5,
}

impl Partition {
    pub const ALL: [Partition; 6] = [
        Partition::BddEp,
        Partition::BddCp,
        Partition::Hdt2,
        Partition::Hdt3,
        Partition::Hdt4,
        Partition::Hdt5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::BddEp => "BDD-EP",
            Partition::BddCp => "BDD-CP",
            Partition::Hdt2 => "HDT-2",
            Partition::Hdt3 => "HDT-3",
            Partition::Hdt4 => "HDT-4",
            Partition::Hdt5 => "HDT-5",
        }
    }

    pub fn is_bdd(self) -> bool {
        matches!(self, Partition::BddEp | Partition::BddCp)
    }

    /// The HDT partition for a question with `n` candidates.
    pub fn hdt_for(n: usize) -> Option<Partition> {
        match n {
            2 => Some(Partition::Hdt2),
            3 => Some(Partition::Hdt3),
            4 => Some(Partition::Hdt4),
            5 => Some(Partition::Hdt5),
            _ => None,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five car-action classes effects are clustered into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionClass {
    Accelerate,
    Slow,
    Stop,
    Merge,
    Turn,
}

impl ActionClass {
    pub const ALL: [ActionClass; 5] = [
        ActionClass::Accelerate,
        ActionClass::Slow,
        ActionClass::Stop,
        ActionClass::Merge,
        ActionClass::Turn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionClass::Accelerate => "accelerate",
            ActionClass::Slow => "slow",
            ActionClass::Stop => "stop",
            ActionClass::Merge => "merge",
            ActionClass::Turn => "turn",
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActionClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation(format!("unknown action class `{s}`")))
    }
}

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub candidates: Vec<String>,
    pub answer_index: usize,
    pub partition: Partition,
    pub class_label: Option<ActionClass>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl QAItem {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(format!("item `{}`: {msg}", self.id)));
        if self.id.is_empty() {
            return Err(Error::validation("item with empty id"));
        }
        if self.question.trim().is_empty() {
            return fail("empty question".into());
        }
        let n = self.candidates.len();
        if !(MIN_CANDIDATES..=MAX_CANDIDATES).contains(&n) {
            return fail(format!(
                "{n} candidates, expected {MIN_CANDIDATES}..={MAX_CANDIDATES}"
            ));
        }
        if self.partition.is_bdd() && n != BDD_CANDIDATES {
            return fail(format!(
                "{} items have exactly {BDD_CANDIDATES} candidates, found {n}",
                self.partition
            ));
        }
        if let Some(i) = self.candidates.iter().position(|c| c.trim().is_empty()) {
            return fail(format!("candidate {i} is empty"));
        }
        if self.answer_index >= n {
            return fail(format!(
                "answer_index {} out of range for {n} candidates",
                self.answer_index
            ));
        }
        Ok(())
    }

    pub fn gold(&self) -> &str {
        &self.candidates[self.answer_index]
    }
}

/// A cause/effect sentence pair from an annotated driving corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalPair {
    pub id: String,
    pub cause: String,
    pub effect: String,
    #[serde(default)]
    pub source: String,
}

/// A scorer's decision for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub item_id: String,
    pub predicted_index: usize,
    pub candidate_scores: Vec<f64>,
    pub scorer_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl PredictionRecord {
    pub fn from_scores(item_id: impl Into<String>, scores: Vec<f64>, scorer_name: &str) -> Self {
        PredictionRecord {
            item_id: item_id.into(),
            predicted_index: argmax(&scores).unwrap_or(0),
            candidate_scores: scores,
            scorer_name: scorer_name.to_string(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match argmax(&self.candidate_scores) {
            None => Err(Error::validation(format!(
                "prediction `{}` has no candidate scores",
                self.item_id
            ))),
            Some(best) if best != self.predicted_index => Err(Error::validation(format!(
                "prediction `{}`: predicted_index {} is not the argmax ({best}) of its scores",
                self.item_id, self.predicted_index
            ))),
            Some(_) => Ok(()),
        }
    }
}

/// Index of the largest value; the lowest index wins ties. NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None if !v.is_nan() => best = Some(i),
            Some(b) if v > values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(values: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::validation(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(())
}

pub fn validate_items(items: &[QAItem]) -> Result<()> {
    items.iter().try_for_each(QAItem::validate)?;
    check_unique_ids(items.iter().map(|i| i.id.as_str()), "item")
}

pub fn load_qa_file(path: &Path) -> Result<Vec<QAItem>> {
    let items: Vec<QAItem> = read_jsonl(path)?;
    validate_items(&items)?;
    Ok(items)
}

pub fn write_qa_file(items: &[QAItem], path: &Path) -> Result<()> {
    write_jsonl(items, path)
}

pub fn load_pairs(path: &Path) -> Result<Vec<CausalPair>> {
    let pairs: Vec<CausalPair> = read_jsonl(path)?;
    check_unique_ids(pairs.iter().map(|p| p.id.as_str()), "pair")?;
    Ok(pairs)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let preds: Vec<PredictionRecord> = read_jsonl(path)?;
    preds.iter().try_for_each(PredictionRecord::validate)?;
    Ok(preds)
}

pub fn write_predictions(preds: &[PredictionRecord], path: &Path) -> Result<()> {
    write_jsonl(preds, path)
}
