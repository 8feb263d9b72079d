//! Benchmark synthesis from cause/effect corpora.
//!
//! Pairs are normalized into declarative sentences, near-duplicate causes are removed, and each
//! surviving pair becomes a three-way question whose distractors are other pairs' effects (or
//! causes) that are dissimilar both to the gold answer and to each other.

mod cluster;
mod filter;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Embedding};
use crate::error::{Error, Result};
use crate::model::{CausalPair, Partition, QAItem, BDD_CANDIDATES};
use crate::retrieval::dot;

pub use cluster::{
    classify_actions, kmeans_fit, nearest, ClusterModel, DEFAULT_CLUSTERS, MAX_ITERATIONS,
    SHIFT_TOLERANCE,
};
pub use filter::{filter_domain_questions, is_excluded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Effect prediction: given the cause, pick the effect.
    Ep,
    /// Cause prediction: given the effect, pick the cause.
    Cp,
}

impl Mode {
    pub fn partition(self) -> Partition {
        match self {
            Mode::Ep => Partition::BddEp,
            Mode::Cp => Partition::BddCp,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Mode::Ep => "ep",
            Mode::Cp => "cp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Causes more similar than this to an earlier kept cause are dropped.
    pub dedup_threshold: f64,
    /// Distractors must be strictly less similar than this to the answer and to each other.
    pub distractor_upper_bound: f64,
    pub num_candidates: usize,
    /// Draws allowed per distractor slot before giving up on the question.
    pub max_resample_attempts: usize,
    pub rng_seed: u64,
    pub mode: Mode,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            dedup_threshold: 0.9,
            distractor_upper_bound: 0.4,
            num_candidates: BDD_CANDIDATES,
            max_resample_attempts: 100,
            rng_seed: 0,
            mode: Mode::Ep,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.distractor_upper_bound;
        if !(0.0 < t && t < self.dedup_threshold && self.dedup_threshold <= 1.0) {
            return Err(Error::config(format!(
                "need 0 < t ({t}) < dedup threshold ({}) <= 1",
                self.dedup_threshold
            )));
        }
        if self.num_candidates != BDD_CANDIDATES {
            return Err(Error::config(format!(
                "synthesized questions have exactly {BDD_CANDIDATES} candidates, got {}",
                self.num_candidates
            )));
        }
        if self.max_resample_attempts == 0 {
            return Err(Error::config("max_resample_attempts must be >= 1"));
        }
        Ok(())
    }
}

/// Rewrites a raw action or justification into a declarative sentence.
///
/// `to X` becomes `The car wants to X`, a leading `because` is removed, the first letter is
/// capitalized and a period is appended when the text has no terminal punctuation.
pub fn normalize_justification(text: &str) -> Result<String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::validation("empty justification"));
    }
    // Padding lets a bare "because" or "to" match its prefix and normalize to nothing.
    let padded = format!("{trimmed} ");
    let body = if let Some(rest) = strip_prefix_ci(&padded, "because ") {
        rest.trim().to_string()
    } else if let Some(rest) = strip_prefix_ci(&padded, "to ") {
        let rest = rest.trim();
        if rest.is_empty() {
            String::new()
        } else {
            format!("The car wants to {rest}")
        }
    } else {
        trimmed.to_string()
    };
    if body.is_empty() {
        return Err(Error::validation(format!("nothing left of {text:?} after normalization")));
    }
    let mut chars = body.chars();
    let first = chars.next().expect("non-empty");
    let mut out: String = first.to_uppercase().chain(chars).collect();
    if !out.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    Ok(out)
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

pub fn normalize_pair(pair: &CausalPair) -> Result<CausalPair> {
    let wrap = |e: Error| e.for_item(&pair.id);
    Ok(CausalPair {
        id: pair.id.clone(),
        cause: normalize_justification(&pair.cause).map_err(wrap)?,
        effect: normalize_justification(&pair.effect).map_err(wrap)?,
        source: pair.source.clone(),
    })
}

/// Positions kept by a greedy forward scan: a vector is dropped when its similarity to any
/// previously kept vector exceeds `threshold`.
pub fn dedup_indices(vectors: &[Embedding], threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let dup = kept
            .iter()
            .any(|&j| dot(v.as_slice(), vectors[j].as_slice()) > threshold);
        if !dup {
            kept.push(i);
        }
    }
    kept
}

/// Drops pairs whose cause is too similar to an earlier kept cause. Order is preserved.
pub fn deduplicate_pairs(
    pairs: &[CausalPair],
    threshold: f64,
    backend: &dyn Backend,
) -> Result<Vec<CausalPair>> {
    let causes: Vec<String> = pairs.iter().map(|p| p.cause.clone()).collect();
    let vectors = backend.embed(&causes)?;
    Ok(dedup_indices(&vectors, threshold)
        .into_iter()
        .map(|i| pairs[i].clone())
        .collect())
}

/// Rejection-samples `count` positions of `pool` (skipping `exclude`) whose vectors have
/// similarity below `upper_bound` to `answer` and to every other chosen position.
pub fn sample_distractor_indices<R: Rng + ?Sized>(
    answer: &Embedding,
    pool: &[Embedding],
    exclude: Option<usize>,
    count: usize,
    upper_bound: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available = pool.len() - usize::from(exclude.is_some_and(|e| e < pool.len()));
    if available < count {
        return Err(Error::config(format!(
            "pool of {available} cannot supply {count} distractors"
        )));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..max_attempts {
            let mut j = rng.random_range(0..available);
            if let Some(e) = exclude {
                if j >= e {
                    j += 1;
                }
            }
            let v = pool[j].as_slice();
            let ok = dot(v, answer.as_slice()) < upper_bound
                && chosen.iter().all(|&c| dot(v, pool[c].as_slice()) < upper_bound);
            if ok {
                accepted = Some(j);
                break;
            }
        }
        match accepted {
            Some(j) => chosen.push(j),
            None => return Err(Error::SamplingExhausted { attempts: max_attempts }),
        }
    }
    Ok(chosen)
}

/// Text-level distractor sampling; `pool` must not contain the answer's own pair.
pub fn sample_distractors<R: Rng + ?Sized>(
    answer: &str,
    pool: &[String],
    count: usize,
    config: &SynthesisConfig,
    backend: &dyn Backend,
    rng: &mut R,
) -> Result<Vec<String>> {
    let answer_vec = backend.embed_one(answer)?;
    let pool_vecs = backend.embed(pool)?;
    let picks = sample_distractor_indices(
        &answer_vec,
        &pool_vecs,
        None,
        count,
        config.distractor_upper_bound,
        config.max_resample_attempts,
        rng,
    )?;
    Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub items: Vec<QAItem>,
    /// Ids of pairs whose distractor sampling was exhausted.
    pub skipped: Vec<String>,
}

/// Turns every pair into a question, sampling distractors from the other pairs.
pub fn build_mcqa<R: Rng + ?Sized>(
    pairs: &[CausalPair],
    config: &SynthesisConfig,
    backend: &dyn Backend,
    rng: &mut R,
) -> Result<BuildOutput> {
    config.validate()?;
    if pairs.len() < config.num_candidates {
        return Err(Error::config(format!(
            "{} pairs cannot make {}-candidate questions",
            pairs.len(),
            config.num_candidates
        )));
    }
    let (questions, answers): (Vec<&String>, Vec<String>) = pairs
        .iter()
        .map(|p| match config.mode {
            Mode::Ep => (&p.cause, p.effect.clone()),
            Mode::Cp => (&p.effect, p.cause.clone()),
        })
        .unzip();
    let vectors = backend.embed(&answers)?;

    let mut items = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let picks = match sample_distractor_indices(
            &vectors[i],
            &vectors,
            Some(i),
            config.num_candidates - 1,
            config.distractor_upper_bound,
            config.max_resample_attempts,
            rng,
        ) {
            Ok(p) => p,
            Err(Error::SamplingExhausted { .. }) => {
                skipped.push(pair.id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut order: Vec<Option<usize>> = std::iter::once(None).chain(picks.into_iter().map(Some)).collect();
        order.shuffle(rng);
        let answer_index = order.iter().position(Option::is_none).expect("gold present");
        let candidates = order
            .iter()
            .map(|slot| answers[slot.unwrap_or(i)].clone())
            .collect();
        let mut metadata = BTreeMap::new();
        metadata.insert("pair_id".to_string(), pair.id.clone());
        if !pair.source.is_empty() {
            metadata.insert("source".to_string(), pair.source.clone());
        }
        items.push(QAItem {
            id: format!("{}-{}", pair.id, config.mode.suffix()),
            question: questions[i].clone(),
            candidates,
            answer_index,
            partition: config.mode.partition(),
            class_label: None,
            metadata,
        });
    }
    Ok(BuildOutput { items, skipped })
}

/// Counters and output of [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub items: Vec<QAItem>,
    pub input_pairs: usize,
    /// Normalized pairs that survived deduplication.
    pub pairs: Vec<CausalPair>,
    pub skipped: Vec<String>,
}

/// Normalize, deduplicate, build questions and optionally label each item's action class.
///
/// With a label map, a k-means model is fitted on the effects of the surviving pairs (seeded
/// with `rng_seed`) and each item is labeled with the class of its pair's effect.
pub fn synthesize<R: Rng + ?Sized>(
    pairs: &[CausalPair],
    config: &SynthesisConfig,
    labels: Option<(usize, &BTreeMap<usize, crate::model::ActionClass>)>,
    backend: &dyn Backend,
    rng: &mut R,
) -> Result<SynthesisReport> {
    config.validate()?;
    let normalized = pairs.iter().map(normalize_pair).collect::<Result<Vec<_>>>()?;
    let kept = deduplicate_pairs(&normalized, config.dedup_threshold, backend)?;
    let BuildOutput { mut items, skipped } = build_mcqa(&kept, config, backend, rng)?;

    if let Some((k, label_map)) = labels {
        let effects: Vec<String> = kept.iter().map(|p| p.effect.clone()).collect();
        let vectors = backend.embed(&effects)?;
        let (model, _) = kmeans_fit(&vectors, k, config.rng_seed)?;
        let model = model.with_labels(label_map.clone())?;
        let by_pair: BTreeMap<&str, &str> =
            kept.iter().map(|p| (p.id.as_str(), p.effect.as_str())).collect();
        let item_effects: Vec<String> = items
            .iter()
            .map(|it| by_pair[it.metadata["pair_id"].as_str()].to_string())
            .collect();
        let classes = classify_actions(&item_effects, &model, backend)?;
        for (item, class) in items.iter_mut().zip(classes) {
            item.class_label = Some(class);
        }
    }

    Ok(SynthesisReport {
        items,
        input_pairs: pairs.len(),
        pairs: kept,
        skipped,
    })
}

/// Fits k-means on `effects` and lists up to `per_cluster` members of each cluster, closest to
/// the centroid first. Used to author the cluster-to-class label map.
pub fn cluster_exemplars(
    effects: &[String],
    k: usize,
    seed: u64,
    per_cluster: usize,
    backend: &dyn Backend,
) -> Result<BTreeMap<usize, Vec<String>>> {
    let vectors = backend.embed(effects)?;
    let (model, assignments) = kmeans_fit(&vectors, k, seed)?;
    let mut members: BTreeMap<usize, Vec<(f64, usize)>> = (0..k).map(|c| (c, Vec::new())).collect();
    for (i, &c) in assignments.iter().enumerate() {
        let d: f64 = vectors[i]
            .as_slice()
            .iter()
            .zip(&model.centroids[c])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        members.get_mut(&c).expect("cluster id").push((d, i));
    }
    Ok(members
        .into_iter()
        .map(|(c, mut m)| {
            m.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (c, m.into_iter().take(per_cluster).map(|(_, i)| effects[i].clone()).collect())
        })
        .collect())
}
