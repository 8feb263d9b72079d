use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use sha2::{Digest, Sha256};

use super::{truncate_tokens, Backend, Embedding, NliScores};
use crate::error::{Error, Result};

/// Reproducible pseudo-model keyed on a hash of the input.
///
/// Each call seeds a ChaCha8 generator with `sha256(tag, input)[..8] ^ seed`. Embeddings are
/// `dim` standard-normal draws normalized to unit length, so distinct texts map to nearly
/// orthogonal vectors.
#[derive(Debug, Clone)]
pub struct HashBackend {
    dim: usize,
    seed: u64,
}

impl HashBackend {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashBackend { dim, seed }
    }

    fn rng(&self, tag: &str, parts: &[&str]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        for p in parts {
            h.update([0x1f]);
            h.update(p.as_bytes());
        }
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(word) ^ self.seed)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        let mut rng = self.rng("embed", &[text]);
        let values = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        Embedding::normalize(values)
    }
}

/// Candidate texts listed in a rendered prompt as `(A) text` lines.
fn prompt_candidates(prompt: &str) -> Vec<&str> {
    prompt
        .lines()
        .filter_map(|line| {
            let rest = line.trim_start().strip_prefix('(')?;
            let mut chars = rest.chars();
            let letter = chars.next()?;
            let body = chars.as_str().strip_prefix(')')?;
            (letter.is_ascii_uppercase() && !body.trim().is_empty()).then(|| body.trim())
        })
        .collect()
}

fn require_non_empty(text: &str, what: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::validation(format!("empty {what}")))
    } else {
        Ok(())
    }
}

impl Backend for HashBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|t| {
                require_non_empty(t, "text")?;
                self.embed_text(t)
            })
            .collect()
    }

    fn nli(&self, pairs: &[(String, String)]) -> Result<Vec<NliScores>> {
        pairs
            .iter()
            .map(|(p, h)| {
                require_non_empty(p, "premise")?;
                require_non_empty(h, "hypothesis")?;
                let mut rng = self.rng("nli", &[p, h]);
                // Normalized exponentials: a uniform draw from the probability simplex.
                let raw: [f64; 3] = [rng.sample(Exp1), rng.sample(Exp1), rng.sample(Exp1)];
                let total: f64 = raw.iter().sum();
                Ok(NliScores {
                    entail: raw[0] / total,
                    neutral: raw[1] / total,
                    contradict: raw[2] / total,
                })
            })
            .collect()
    }

    fn plausibility(&self, statements: &[String]) -> Result<Vec<f64>> {
        statements
            .iter()
            .map(|s| {
                require_non_empty(s, "statement")?;
                Ok(self.rng("plausibility", &[s]).sample(StandardNormal))
            })
            .collect()
    }

    /// Echoes one of the prompt's `(A) ...` candidate lines, picked by hash.
    fn generate(&self, prompt: &str, max_length: usize) -> Result<String> {
        require_non_empty(prompt, "prompt")?;
        if max_length == 0 {
            return Err(Error::validation("max_length must be >= 1"));
        }
        let candidates = prompt_candidates(prompt);
        let text = if candidates.is_empty() {
            prompt.lines().find(|l| !l.trim().is_empty()).unwrap_or(prompt)
        } else {
            let pick = self.rng("generate", &[prompt]).random_range(0..candidates.len());
            candidates[pick]
        };
        Ok(truncate_tokens(text, max_length))
    }

    fn fingerprint(&self) -> String {
        format!("hash:chacha8:dim={}:seed={}", self.dim, self.seed)
    }
}
