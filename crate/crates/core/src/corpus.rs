//! Sentence segmentation and frequency-ranked context retrieval over a
//! domain corpus.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{normalize, Entity};

pub const DEFAULT_ABBREVIATIONS: &[&str] = &["dr.", "mr.", "e.g.", "i.e.", "vs."];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}'];

/// Splits text on sentence-terminal punctuation.
///
/// ASCII terminators (`.`, `!`, `?`) end a sentence only when followed by
/// whitespace or end of text (optionally after closing quotes/brackets), and
/// a `.` that closes a whitelisted abbreviation never does. Full-width
/// terminators always end a sentence.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn new<'a>(abbreviations: impl IntoIterator<Item = &'a str>) -> Self {
        Segmenter {
            abbreviations: abbreviations.into_iter().map(|a| a.to_lowercase()).collect(),
        }
    }

    pub fn segment(&self, raw: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = raw.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (pos, c) = chars[i];
            let boundary_end = match c {
                '。' | '！' | '？' => {
                    let mut j = i + 1;
                    while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                        j += 1;
                    }
                    Some(j)
                }
                '.' | '!' | '?' => {
                    let mut j = i + 1;
                    while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                        j += 1;
                    }
                    let at_gap = j == chars.len() || chars[j].1.is_whitespace();
                    if at_gap && !(c == '.' && self.is_abbreviation(&raw[start..pos + 1])) {
                        Some(j)
                    } else {
                        None
                    }
                }
                _ => None,
            };
            match boundary_end {
                Some(j) => {
                    let end = chars.get(j).map_or(raw.len(), |&(p, _)| p);
                    push_trimmed(&mut out, &raw[start..end]);
                    start = end;
                    i = j;
                }
                None => i += 1,
            }
        }
        push_trimmed(&mut out, &raw[start..]);
        out
    }

    fn is_abbreviation(&self, sentence_so_far: &str) -> bool {
        let word = sentence_so_far
            .rsplit(char::is_whitespace)
            .next()
            .unwrap_or("")
            .trim_start_matches(|c: char| CLOSERS.contains(&c) || c == '(' || c == '"')
            .to_lowercase();
        self.abbreviations.contains(&word)
    }
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Segment with the default abbreviation whitelist.
pub fn segment_sentences(raw: &str) -> Vec<String> {
    Segmenter::default().segment(raw)
}

fn token_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Immutable sentence store with a token-level inverted index.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    sentences: Vec<String>,
    normalized: Vec<String>,
    inverted: HashMap<String, Vec<(usize, usize)>>,
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
}

impl CorpusIndex {
    pub fn from_sentences(sentences: Vec<String>) -> Self {
        let normalized: Vec<String> = sentences.iter().map(|s| normalize(s)).collect();
        let mut inverted: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        for (idx, sentence) in normalized.iter().enumerate() {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for token in sentence.split_whitespace() {
                let token = token.trim_matches(|c: char| !c.is_alphanumeric());
                if !token.is_empty() {
                    *counts.entry(token).or_default() += 1;
                }
            }
            let mut counts: Vec<_> = counts.into_iter().collect();
            counts.sort_unstable();
            for (token, n) in counts {
                inverted.entry(token.to_string()).or_default().push((idx, n));
            }
        }
        CorpusIndex {
            sentences,
            normalized,
            inverted,
        }
    }

    pub fn from_text(raw: &str) -> Self {
        Self::from_sentences(segment_sentences(raw))
    }

    /// Load plain-text files and line-delimited JSON files (`.jsonl` /
    /// `.ndjson`, one `{"text": ...}` record per line). Documents are
    /// segmented separately and appended in argument order.
    pub fn load<P: AsRef<Path>>(paths: &[P], segmenter: &Segmenter) -> Result<Self> {
        let mut sentences = Vec::new();
        for path in paths {
            let path = path.as_ref();
            let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let is_records = matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("jsonl") | Some("ndjson")
            );
            if is_records {
                for (i, line) in content.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: TextRecord = serde_json::from_str(line)
                        .map_err(|e| Error::parse(path.display().to_string(), i + 1, e.to_string()))?;
                    sentences.extend(segmenter.segment(&rec.text));
                }
            } else {
                sentences.extend(segmenter.segment(&content));
            }
        }
        Ok(Self::from_sentences(sentences))
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Postings for a normalized token: `(sentence index, occurrences)`.
    pub fn postings(&self, token: &str) -> &[(usize, usize)] {
        self.inverted.get(token).map_or(&[], Vec::as_slice)
    }

    /// Non-overlapping occurrences of the entity in each sentence.
    pub fn occurrences(&self, e: &Entity) -> Vec<usize> {
        self.normalized
            .iter()
            .map(|s| s.matches(e.normalized()).count())
            .collect()
    }

    /// Sentence indices mentioning `e`, by descending count then position.
    pub fn ranked_sentences(&self, e: &Entity) -> Vec<usize> {
        let counts = self.occurrences(e);
        let mut ranked: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        ranked.sort_by_key(|&i| std::cmp::Reverse(counts[i]));
        ranked
    }

    /// Concatenate the ranked sentences, keeping whole sentences while the
    /// whitespace-token total stays within `max_tokens`.
    pub fn retrieve_context(&self, e: &Entity, max_tokens: usize) -> Result<String> {
        if max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be positive".into()));
        }
        let ranked = self.ranked_sentences(e);
        if ranked.is_empty() {
            return Err(Error::NoContext(e.surface().to_string()));
        }
        let mut used = 0usize;
        let mut parts: Vec<&str> = Vec::new();
        for idx in ranked {
            let s = &self.sentences[idx];
            let n = token_count(s);
            if used + n > max_tokens {
                break;
            }
            used += n;
            parts.push(s);
        }
        Ok(parts.join(" "))
    }
}
