use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Tally;
use crate::error::{Error, Result};
use crate::model::QAItem;

/// One annotator's answer with a 1-5 Likert confidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVote {
    pub item_id: String,
    pub annotator_id: String,
    pub answer_index: usize,
    pub confidence: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAggregate {
    /// Strict-majority answer per item.
    pub majority: BTreeMap<String, usize>,
    /// Grand mean of all confidences.
    pub mean_confidence: f64,
    /// Items without a strict majority.
    pub unresolved: Vec<String>,
}

pub fn aggregate_human(votes: &[HumanVote]) -> Result<HumanAggregate> {
    if votes.is_empty() {
        return Err(Error::validation("no votes"));
    }
    let mut per_item: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut confidence_sum = 0u64;
    for v in votes {
        if !(1..=5).contains(&v.confidence) {
            return Err(Error::validation(format!(
                "item `{}`: confidence {} outside 1..=5",
                v.item_id, v.confidence
            )));
        }
        if !seen.insert((v.item_id.as_str(), v.annotator_id.as_str())) {
            return Err(Error::validation(format!(
                "annotator `{}` voted twice on `{}`",
                v.annotator_id, v.item_id
            )));
        }
        confidence_sum += u64::from(v.confidence);
        per_item.entry(v.item_id.as_str()).or_default().push(v.answer_index);
    }

    let mut majority = BTreeMap::new();
    let mut unresolved = Vec::new();
    for (id, answers) in per_item {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for a in &answers {
            *counts.entry(*a).or_default() += 1;
        }
        match counts.into_iter().find(|&(_, c)| 2 * c > answers.len()) {
            Some((answer, _)) => {
                majority.insert(id.to_string(), answer);
            }
            None => unresolved.push(id.to_string()),
        }
    }
    Ok(HumanAggregate {
        majority,
        mean_confidence: confidence_sum as f64 / votes.len() as f64,
        unresolved,
    })
}

/// Accuracy of the majority answers; unresolved items count as wrong.
pub fn human_accuracy(agg: &HumanAggregate, gold: &[QAItem]) -> Result<Tally> {
    let gold_by_id: HashMap<&str, &QAItem> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut correct = 0;
    for (id, &answer) in &agg.majority {
        let g = gold_by_id
            .get(id.as_str())
            .ok_or_else(|| Error::validation(format!("votes for unknown item `{id}`")))?;
        correct += usize::from(g.answer_index == answer);
    }
    if let Some(id) = agg.unresolved.iter().find(|id| !gold_by_id.contains_key(id.as_str())) {
        return Err(Error::validation(format!("votes for unknown item `{id}`")));
    }
    Ok(Tally::from_counts(correct, agg.majority.len() + agg.unresolved.len()))
}
