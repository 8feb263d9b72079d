//! Accuracy, per-class and cross-model overlap statistics over prediction files.

mod human;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionClass, Partition, PredictionRecord, QAItem};

pub use human::{aggregate_human, human_accuracy, HumanAggregate, HumanVote};
pub use report::{emit_report, ReportFormat};

/// What to do with gold items that have no prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Missing predictions are an error.
    #[default]
    Strict,
    /// Missing predictions count as wrong and are listed in the report.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Tally {
    fn from_counts(correct: usize, total: usize) -> Self {
        Tally {
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub total: usize,
    pub correct_a: usize,
    pub correct_b: usize,
    pub joint_correct: usize,
    pub union_correct: usize,
    /// Accuracy of an oracle that is right whenever either model is.
    pub ensemble_upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scorer_name: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub partitions: BTreeMap<Partition, Tally>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<ActionClass, Tally>,
    /// Gold items without a prediction (lenient mode only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    /// Gold items left out on request, e.g. failed generations.
    #[serde(default)]
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
}

type Joined<'a> = Vec<(&'a QAItem, Option<&'a PredictionRecord>)>;

/// Gold items paired with their prediction, after checking ids and shapes.
fn join<'a>(
    predictions: &'a [PredictionRecord],
    gold: &'a [QAItem],
    coverage: Coverage,
) -> Result<(Joined<'a>, Vec<String>)> {
    if predictions.is_empty() {
        return Err(Error::validation("no predictions"));
    }
    let gold_by_id: HashMap<&str, &QAItem> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        let g = gold_by_id.get(p.item_id.as_str()).ok_or_else(|| {
            Error::validation(format!("prediction for unknown item `{}`", p.item_id))
        })?;
        if p.candidate_scores.len() != g.candidates.len() || p.predicted_index >= g.candidates.len() {
            return Err(Error::validation(format!(
                "prediction `{}` does not match the item's {} candidates",
                p.item_id,
                g.candidates.len()
            )));
        }
        if by_id.insert(p.item_id.as_str(), p).is_some() {
            return Err(Error::validation(format!("duplicate prediction for `{}`", p.item_id)));
        }
    }
    let mut missing = Vec::new();
    let mut joined = Vec::with_capacity(gold.len());
    for g in gold {
        let p = by_id.get(g.id.as_str()).copied();
        if p.is_none() {
            if coverage == Coverage::Strict {
                return Err(Error::validation(format!("no prediction for item `{}`", g.id)));
            }
            missing.push(g.id.clone());
        }
        joined.push((g, p));
    }
    Ok((joined, missing))
}

fn is_correct(g: &QAItem, p: Option<&PredictionRecord>) -> bool {
    p.is_some_and(|p| p.predicted_index == g.answer_index)
}

/// Fraction of gold items answered correctly.
pub fn accuracy(predictions: &[PredictionRecord], gold: &[QAItem], coverage: Coverage) -> Result<f64> {
    let (joined, _) = join(predictions, gold, coverage)?;
    let correct = joined.iter().filter(|(g, p)| is_correct(g, *p)).count();
    Ok(Tally::from_counts(correct, joined.len()).accuracy)
}

fn class_tallies(joined: &[(&QAItem, Option<&PredictionRecord>)]) -> BTreeMap<ActionClass, Tally> {
    let mut counts: BTreeMap<ActionClass, (usize, usize)> = BTreeMap::new();
    for (g, p) in joined {
        if let Some(class) = g.class_label {
            let e = counts.entry(class).or_default();
            e.1 += 1;
            if is_correct(g, *p) {
                e.0 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(c, (ok, n))| (c, Tally::from_counts(ok, n)))
        .collect()
}

/// Accuracy within each action class; classes without items are omitted.
pub fn per_class_accuracy(
    predictions: &[PredictionRecord],
    gold: &[QAItem],
    coverage: Coverage,
) -> Result<BTreeMap<ActionClass, f64>> {
    let (joined, _) = join(predictions, gold, coverage)?;
    let tallies = class_tallies(&joined);
    if tallies.is_empty() {
        return Err(Error::validation("no gold item carries a class label"));
    }
    Ok(tallies.into_iter().map(|(c, t)| (c, t.accuracy)).collect())
}

/// Full report for one scorer. Gold items whose ids are in `exclude` are dropped first.
pub fn evaluate(
    predictions: &[PredictionRecord],
    gold: &[QAItem],
    coverage: Coverage,
    exclude: &HashSet<String>,
) -> Result<EvaluationReport> {
    let kept: Vec<QAItem> = gold.iter().filter(|g| !exclude.contains(&g.id)).cloned().collect();
    let preds: Vec<PredictionRecord> = predictions
        .iter()
        .filter(|p| !exclude.contains(&p.item_id))
        .cloned()
        .collect();
    let names: HashSet<&str> = preds.iter().map(|p| p.scorer_name.as_str()).collect();
    if names.len() > 1 {
        return Err(Error::validation(format!("predictions mix scorers: {names:?}")));
    }
    let Some(first) = preds.first() else {
        return Err(Error::validation("no predictions to evaluate"));
    };
    let scorer_name = first.scorer_name.clone();
    let (joined, missing) = join(&preds, &kept, coverage)?;
    let mut by_partition: BTreeMap<Partition, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (g, p) in &joined {
        let e = by_partition.entry(g.partition).or_default();
        e.1 += 1;
        if is_correct(g, *p) {
            e.0 += 1;
            correct += 1;
        }
    }
    let total = Tally::from_counts(correct, joined.len());
    Ok(EvaluationReport {
        scorer_name,
        total: total.total,
        correct,
        accuracy: total.accuracy,
        partitions: by_partition
            .into_iter()
            .map(|(k, (ok, n))| (k, Tally::from_counts(ok, n)))
            .collect(),
        per_class: class_tallies(&joined),
        missing,
        excluded: gold.len() - kept.len(),
        overlap: None,
    })
}

/// Joint and union correctness of two prediction sets over the same items.
pub fn overlap_analysis(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    gold: &[QAItem],
) -> Result<OverlapReport> {
    let ids_a: HashSet<&str> = a.iter().map(|p| p.item_id.as_str()).collect();
    let ids_b: HashSet<&str> = b.iter().map(|p| p.item_id.as_str()).collect();
    if ids_a != ids_b {
        let only_a = ids_a.difference(&ids_b).count();
        let only_b = ids_b.difference(&ids_a).count();
        return Err(Error::validation(format!(
            "prediction sets cover different items ({only_a} only in A, {only_b} only in B)"
        )));
    }
    let covered: Vec<QAItem> = gold.iter().filter(|g| ids_a.contains(g.id.as_str())).cloned().collect();
    let (ja, _) = join(a, &covered, Coverage::Strict)?;
    let (jb, _) = join(b, &covered, Coverage::Strict)?;
    let (mut correct_a, mut correct_b, mut joint) = (0, 0, 0);
    for ((g, pa), (_, pb)) in ja.iter().zip(&jb) {
        let (ca, cb) = (is_correct(g, *pa), is_correct(g, *pb));
        correct_a += usize::from(ca);
        correct_b += usize::from(cb);
        joint += usize::from(ca && cb);
    }
    let total = covered.len();
    let union = correct_a + correct_b - joint;
    Ok(OverlapReport {
        total,
        correct_a,
        correct_b,
        joint_correct: joint,
        union_correct: union,
        ensemble_upper_bound: union as f64 / total as f64,
    })
}
