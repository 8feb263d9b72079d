//! Exact dense retrieval over a flat paragraph index.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Embedding};
use crate::corpus::Paragraph;
use crate::error::{Error, Result};
use crate::model::{read_jsonl, write_jsonl};

pub const HEADER_FILE: &str = "header.json";
pub const PARAGRAPHS_FILE: &str = "paragraphs.jsonl";
pub const VECTORS_FILE: &str = "vectors.f32";

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    Ok(dot(u.as_slice(), v.as_slice()).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub dim: usize,
    pub count: usize,
    pub fingerprint: String,
}

/// Immutable paragraphs plus their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphIndex {
    paragraphs: Vec<Paragraph>,
    vectors: Vec<Embedding>,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub position: usize,
    pub paragraph: &'a Paragraph,
    pub score: f64,
}

impl ParagraphIndex {
    pub fn build(paragraphs: Vec<Paragraph>, backend: &dyn Backend) -> Result<Self> {
        if paragraphs.is_empty() {
            return Err(Error::validation("cannot index an empty paragraph list"));
        }
        let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
        let vectors = backend.embed(&texts)?;
        if vectors.len() != paragraphs.len() {
            return Err(Error::Backend(format!(
                "embedded {} of {} paragraphs",
                vectors.len(),
                paragraphs.len()
            )));
        }
        let dim = vectors[0].dim();
        if vectors.iter().any(|v| v.dim() != dim) {
            return Err(Error::Backend("backend returned vectors of mixed dimension".into()));
        }
        Ok(ParagraphIndex {
            paragraphs,
            vectors,
            fingerprint: backend.fingerprint(),
        })
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Embedding::dim)
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn vectors(&self) -> &[Embedding] {
        &self.vectors
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn check_backend(&self, backend: &dyn Backend) -> Result<()> {
        let found = backend.fingerprint();
        if found != self.fingerprint {
            return Err(Error::StaleIndex {
                index: self.fingerprint.clone(),
                backend: found,
            });
        }
        Ok(())
    }

    /// Top-`k` paragraphs by cosine similarity to `query`, best first.
    /// Equal scores keep index order.
    pub fn retrieve(&self, query: &str, k: usize, backend: &dyn Backend) -> Result<Vec<Hit<'_>>> {
        if query.trim().is_empty() {
            return Err(Error::validation("empty query"));
        }
        if k == 0 {
            return Err(Error::validation("k must be >= 1"));
        }
        if self.is_empty() {
            return Err(Error::config("empty index"));
        }
        self.check_backend(backend)?;
        let q = backend.embed_one(query)?;
        self.search(&q, k)
    }

    /// Exhaustive scan with an already-embedded query.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<Hit<'_>>> {
        if query.dim() != self.dim() {
            return Err(Error::validation(format!(
                "query dimension {} does not match index dimension {}",
                query.dim(),
                self.dim()
            )));
        }
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(query.as_slice(), v.as_slice()).clamp(-1.0, 1.0)))
            .collect();
        let k = k.min(scored.len());
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(i, score)| Hit {
                position: i,
                paragraph: &self.paragraphs[i],
                score,
            })
            .collect())
    }

    /// Writes `header.json`, `paragraphs.jsonl` and a little-endian f32 matrix.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = IndexHeader {
            dim: self.dim(),
            count: self.len(),
            fingerprint: self.fingerprint.clone(),
        };
        let header_path = dir.join(HEADER_FILE);
        std::fs::write(&header_path, serde_json::to_vec_pretty(&header)?)
            .map_err(|e| Error::io(&header_path, e))?;
        write_jsonl(&self.paragraphs, &dir.join(PARAGRAPHS_FILE))?;
        let vec_path = dir.join(VECTORS_FILE);
        let file = File::create(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        let mut w = BufWriter::new(file);
        for v in &self.vectors {
            for &x in v.as_slice() {
                w.write_all(&(x as f32).to_le_bytes())
                    .map_err(|e| Error::io(&vec_path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&vec_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header_path = dir.join(HEADER_FILE);
        let raw = std::fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: IndexHeader = serde_json::from_slice(&raw)?;
        let paragraphs: Vec<Paragraph> = read_jsonl(&dir.join(PARAGRAPHS_FILE))?;
        if paragraphs.len() != header.count || header.count == 0 || header.dim == 0 {
            return Err(Error::validation(format!(
                "index header says {} paragraphs of dim {}, found {} paragraphs",
                header.count,
                header.dim,
                paragraphs.len()
            )));
        }
        let vec_path = dir.join(VECTORS_FILE);
        let mut bytes = Vec::new();
        File::open(&vec_path)
            .map(BufReader::new)
            .and_then(|mut r| r.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&vec_path, e))?;
        let expected = header.count * header.dim * 4;
        if bytes.len() != expected {
            return Err(Error::validation(format!(
                "{}: expected {expected} bytes, found {}",
                vec_path.display(),
                bytes.len()
            )));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let vectors = floats
            .chunks_exact(header.dim)
            .map(|row| Embedding::unit_or_normalize(row.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParagraphIndex {
            paragraphs,
            vectors,
            fingerprint: header.fingerprint,
        })
    }
}
