use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, truncate_tokens, Backend, Embedding, NliScores};
use crate::error::{Error, Result};
use crate::model::read_jsonl;

/// One line of a fixture file: `{"kind": ..., <key fields>, "value": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FixtureEntry {
    Embed {
        text: String,
        value: Vec<f64>,
    },
    Nli {
        premise: String,
        hypothesis: String,
        value: NliScores,
    },
    Plausibility {
        statement: String,
        value: f64,
    },
    /// Keyed by the prompt itself or by the hex SHA-256 of the prompt.
    Generate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt_sha256: Option<String>,
        value: String,
    },
}

/// Exact-match lookup backend. Any miss is an error.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    embeddings: HashMap<String, Embedding>,
    nli: HashMap<(String, String), NliScores>,
    plausibility: HashMap<String, f64>,
    generations: HashMap<String, String>,
    dim: Option<usize>,
    fingerprint: String,
}

fn insert_unique<K, V>(map: &mut HashMap<K, V>, key: K, value: V, what: &str) -> Result<()>
where
    K: std::hash::Hash + Eq + std::fmt::Debug,
    V: PartialEq,
{
    match map.get(&key) {
        Some(existing) if *existing != value => Err(Error::validation(format!(
            "conflicting fixture entries for {what} {key:?}"
        ))),
        _ => {
            map.insert(key, value);
            Ok(())
        }
    }
}

impl FixtureBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<FixtureEntry> = read_jsonl(path)?;
        Self::build(entries, format!("fixture:{}", sha256_hex(&bytes)))
    }

    pub fn from_entries(entries: Vec<FixtureEntry>) -> Result<Self> {
        let canonical = serde_json::to_vec(&entries)?;
        Self::build(entries, format!("fixture:{}", sha256_hex(&canonical)))
    }

    fn build(entries: Vec<FixtureEntry>, fingerprint: String) -> Result<Self> {
        let mut fx = FixtureBackend {
            fingerprint,
            ..Default::default()
        };
        for entry in entries {
            match entry {
                FixtureEntry::Embed { text, value } => {
                    let v = Embedding::unit_or_normalize(value)?;
                    match fx.dim {
                        Some(d) if d != v.dim() => {
                            return Err(Error::validation(format!(
                                "fixture vector for {text:?} has dimension {}, expected {d}",
                                v.dim()
                            )))
                        }
                        _ => fx.dim = Some(v.dim()),
                    }
                    insert_unique(&mut fx.embeddings, text, v, "text")?;
                }
                FixtureEntry::Nli {
                    premise,
                    hypothesis,
                    value,
                } => {
                    value.validate()?;
                    insert_unique(&mut fx.nli, (premise, hypothesis), value, "pair")?;
                }
                FixtureEntry::Plausibility { statement, value } => {
                    insert_unique(&mut fx.plausibility, statement, value, "statement")?;
                }
                FixtureEntry::Generate {
                    prompt,
                    prompt_sha256,
                    value,
                } => {
                    let key = match (prompt, prompt_sha256) {
                        (Some(p), _) => sha256_hex(p.as_bytes()),
                        (None, Some(h)) => h.to_ascii_lowercase(),
                        (None, None) => {
                            return Err(Error::validation(
                                "generate fixture entry needs `prompt` or `prompt_sha256`",
                            ))
                        }
                    };
                    insert_unique(&mut fx.generations, key, value, "prompt hash")?;
                }
            }
        }
        Ok(fx)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }
}

impl Backend for FixtureBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|t| {
                self.embeddings
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::FixtureMiss(format!("no embedding for {t:?}")))
            })
            .collect()
    }

    fn nli(&self, pairs: &[(String, String)]) -> Result<Vec<NliScores>> {
        pairs
            .iter()
            .map(|pair| {
                self.nli.get(pair).copied().ok_or_else(|| {
                    Error::FixtureMiss(format!("no NLI scores for {:?} => {:?}", pair.0, pair.1))
                })
            })
            .collect()
    }

    fn plausibility(&self, statements: &[String]) -> Result<Vec<f64>> {
        statements
            .iter()
            .map(|s| {
                self.plausibility
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::FixtureMiss(format!("no plausibility for {s:?}")))
            })
            .collect()
    }

    fn generate(&self, prompt: &str, max_length: usize) -> Result<String> {
        if max_length == 0 {
            return Err(Error::validation("max_length must be >= 1"));
        }
        let key = sha256_hex(prompt.as_bytes());
        self.generations
            .get(&key)
            .map(|text| truncate_tokens(text, max_length))
            .ok_or_else(|| Error::FixtureMiss(format!("no generation for prompt sha256 {key}")))
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}
