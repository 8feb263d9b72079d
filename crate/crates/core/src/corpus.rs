//! Manual ingestion: sentence splitting, cleaning and fixed-size paragraph chunking.

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::backend::Backend;
use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub text: String,
    pub source: String,
    pub sentence_count: usize,
    pub word_count: usize,
}

/// Splits at `.`, `?` and `!`, keeping each terminator with its sentence.
///
/// No abbreviation handling: "Dr. Smith" is two sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '?' | '!') {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, fragment: &str) {
    let s = fragment.trim();
    // A lone terminator (e.g. the second dot of "..") carries no sentence.
    if !s.is_empty() && !s.chars().all(|c| matches!(c, '.' | '?' | '!')) {
        out.push(s.to_string());
    }
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text cleaning applied to each sentence before chunking.
#[derive(Clone, Copy)]
pub enum Normalizer<'a> {
    /// Whitespace collapse only.
    Identity,
    /// Rewrites each sentence through the backend's `generate` call, e.g. a grammar
    /// correction model. Failures fall back to [`Normalizer::Identity`].
    Generate {
        backend: &'a dyn Backend,
        max_length: usize,
    },
}

/// Returns the cleaned sentence; an empty result means the sentence should be dropped.
pub fn clean_sentence(text: &str, normalizer: Normalizer<'_>) -> String {
    let collapsed = collapse_whitespace(text);
    if collapsed.is_empty() {
        return collapsed;
    }
    match normalizer {
        Normalizer::Identity => collapsed,
        Normalizer::Generate { backend, max_length } => {
            match backend.generate(&collapsed, max_length) {
                Ok(fixed) if !fixed.trim().is_empty() => collapse_whitespace(&fixed),
                Ok(_) => {
                    warn!("normalizer returned empty text for {collapsed:?}; keeping input");
                    collapsed
                }
                Err(e) => {
                    warn!("normalizer failed for {collapsed:?}: {e}; keeping input");
                    collapsed
                }
            }
        }
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Groups consecutive sentences into non-overlapping paragraphs of `chunk_size`.
/// The last paragraph may be shorter.
pub fn chunk_paragraphs(
    source: &str,
    sentences: &[String],
    chunk_size: usize,
) -> Result<Vec<Paragraph>> {
    if chunk_size == 0 {
        return Err(Error::validation("chunk size must be >= 1"));
    }
    Ok(sentences
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, group)| {
            let text = group.join(" ");
            Paragraph {
                id: format!("{source}#{i}"),
                word_count: word_count(&text),
                text,
                source: source.to_string(),
                sentence_count: group.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub paragraph_count: usize,
    pub mean_word_count: f64,
}

pub fn corpus_stats(paragraphs: &[Paragraph]) -> Result<CorpusStats> {
    if paragraphs.is_empty() {
        return Err(Error::validation("no paragraphs"));
    }
    let total: usize = paragraphs.iter().map(|p| p.word_count).sum();
    Ok(CorpusStats {
        paragraph_count: paragraphs.len(),
        mean_word_count: total as f64 / paragraphs.len() as f64,
    })
}

/// Split, clean and chunk one manual.
pub fn ingest_text(
    source: &str,
    text: &str,
    chunk_size: usize,
    normalizer: Normalizer<'_>,
) -> Result<Vec<Paragraph>> {
    let sentences: Vec<String> = split_sentences(text)
        .iter()
        .map(|s| clean_sentence(s, normalizer))
        .filter(|s| !s.is_empty())
        .collect();
    chunk_paragraphs(source, &sentences, chunk_size)
}

/// Ingests every `.txt` file under `dir`, in file-name order.
///
/// A file's source id is its path relative to `dir` without the extension.
pub fn ingest_dir(
    dir: &Path,
    chunk_size: usize,
    normalizer: Normalizer<'_>,
) -> Result<Vec<Paragraph>> {
    if chunk_size == 0 {
        return Err(Error::validation("chunk size must be >= 1"));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|x| x == "txt") {
            let rel = path.strip_prefix(dir).unwrap_or(path).with_extension("");
            let source = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            files.push((source, path.to_path_buf()));
        }
    }
    let per_file: Vec<Result<Vec<Paragraph>>> = files
        .par_iter()
        .map(|(source, path)| {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ingest_text(source, &text, chunk_size, normalizer)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_file {
        out.extend(r?);
    }
    Ok(out)
}
