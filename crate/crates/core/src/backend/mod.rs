//! Uniform access to learned-model functionality.
//!
//! Every model call in the crate goes through [`Backend`]: sentence embedding, NLI
//! scoring, plausibility scoring and text generation. Three implementations exist:
//!
//! * [`HashBackend`] derives pseudo-random but reproducible outputs from a hash of the input,
//! * [`FixtureBackend`] looks outputs up in a JSONL file and fails on any miss,
//! * [`RemoteBackend`] speaks the JSON-over-HTTP protocol in [`protocol`] to a model server.

mod fixture;
mod hash;
pub mod protocol;
mod remote;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use fixture::{FixtureBackend, FixtureEntry};
pub use hash::HashBackend;
pub use remote::RemoteBackend;

pub const DEFAULT_DIM: usize = 768;

/// A unit-norm sentence or paragraph embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub const NORM_TOLERANCE: f64 = 1e-6;

    /// Scales `values` to unit length.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::validation("cannot normalize an empty, zero or non-finite vector"));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Embedding(values))
    }

    /// Accepts `values` as-is when already unit-norm, otherwise normalizes them.
    pub fn unit_or_normalize(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !values.is_empty() && (norm - 1.0).abs() <= Self::NORM_TOLERANCE {
            Ok(Embedding(values))
        } else {
            Self::normalize(values)
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Entailment / neutral / contradiction probabilities for a premise-hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl NliScores {
    pub const SUM_TOLERANCE: f64 = 1e-4;

    pub fn validate(&self) -> Result<()> {
        let parts = [self.entail, self.neutral, self.contradict];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation(format!("NLI scores outside [0,1]: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::validation(format!("NLI scores sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Entailment minus contradiction.
    pub fn margin(&self) -> f64 {
        self.entail - self.contradict
    }
}

pub trait Backend: Send + Sync {
    /// One unit-norm vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;

    /// One score triple per (premise, hypothesis) pair, in input order.
    fn nli(&self, pairs: &[(String, String)]) -> Result<Vec<NliScores>>;

    /// Higher means more plausible.
    fn plausibility(&self, statements: &[String]) -> Result<Vec<f64>>;

    /// Generated text of at most `max_length` tokens.
    fn generate(&self, prompt: &str, max_length: usize) -> Result<String>;

    /// Identifies the configuration so artifacts built with another backend are detected.
    fn fingerprint(&self) -> String;

    fn embed_one(&self, text: &str) -> Result<Embedding> {
        self.embed(&[text.to_string()])?
            .pop()
            .ok_or_else(|| Error::Backend("embed returned no vector".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[value(name = "fixture", alias = "fixture-file")]
    FixtureFile,
    #[value(name = "hash", alias = "deterministic-hash")]
    DeterministicHash,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub fixture_path: Option<PathBuf>,
    pub dim: usize,
    pub timeout: Duration,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::DeterministicHash,
            endpoint: None,
            fixture_path: None,
            dim: DEFAULT_DIM,
            timeout: Duration::from_secs(60),
            batch_size: 64,
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn hash(dim: usize, seed: u64) -> Self {
        BackendConfig {
            dim,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("embedding dimension must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be > 0"));
        }
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() => {
                Err(Error::config("remote backend requires an endpoint"))
            }
            BackendKind::FixtureFile if self.fixture_path.is_none() => {
                Err(Error::config("fixture backend requires a fixture file"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::DeterministicHash => Arc::new(HashBackend::new(self.dim, self.seed)),
            BackendKind::FixtureFile => {
                Arc::new(FixtureBackend::load(self.fixture_path.as_deref().unwrap())?)
            }
            BackendKind::Remote => Arc::new(RemoteBackend::new(
                self.endpoint.as_deref().unwrap(),
                self.dim,
                self.batch_size,
                self.timeout,
            )?),
        })
    }
}

/// Keeps the first `max_tokens` whitespace tokens of `text`.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        text.trim().to_string()
    } else {
        tokens[..max_tokens].join(" ")
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
