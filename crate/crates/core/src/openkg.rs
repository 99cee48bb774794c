//! Open encyclopedic KG loaded from a TSV file, used for in-context example
//! retrieval, pruner training data and the specificity exclusion set.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{normalize, Entity, RawTriple, TripleKey};
use crate::sampling::{sample_indices, seeded_rng};

pub const MAX_EXAMPLES: usize = 10;

/// Which of the three retrieval strategies produced a set of examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalCase {
    /// The entity heads records in the KG.
    Direct,
    /// The entity was split into subentities that head records.
    Subentities,
    /// Nothing matched; records were sampled at random.
    Random,
}

#[derive(Debug, Clone, Default)]
pub struct OpenKg {
    records: Vec<RawTriple>,
    by_head: IndexMap<String, Vec<usize>>,
    /// normalized tail -> first surface seen
    tail_vocab: IndexMap<String, String>,
    /// normalized head -> first surface seen
    head_surfaces: IndexMap<String, String>,
    keys: HashSet<TripleKey>,
}

impl OpenKg {
    pub fn from_records(records: Vec<RawTriple>) -> Self {
        let mut kg = OpenKg::default();
        for (i, r) in records.iter().enumerate() {
            let head = normalize(&r.head);
            let tail = normalize(&r.tail);
            kg.head_surfaces.entry(head.clone()).or_insert_with(|| r.head.clone());
            kg.tail_vocab.entry(tail).or_insert_with(|| r.tail.clone());
            kg.by_head.entry(head).or_default().push(i);
            kg.keys.insert(r.key());
        }
        kg.records = records;
        kg
    }

    /// Parse `head<TAB>relation<TAB>tail` lines; blank and `#` lines are skipped.
    pub fn parse_tsv(content: &str, origin: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 3 non-empty tab-separated columns, got {}", cols.len()),
                ));
            }
            records.push(RawTriple::new(cols[0], cols[1], cols[2]));
        }
        Ok(Self::from_records(records))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&content, &path.display().to_string())
    }

    pub fn records(&self) -> &[RawTriple] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_head(&self, normalized: &str) -> bool {
        self.by_head.contains_key(normalized)
    }

    /// Distinct head surfaces in first-appearance order.
    pub fn head_vocab(&self) -> impl Iterator<Item = &str> {
        self.head_surfaces.values().map(String::as_str)
    }

    /// Distinct tail surfaces in first-appearance order.
    pub fn tail_vocab(&self) -> impl Iterator<Item = &str> {
        self.tail_vocab.values().map(String::as_str)
    }

    /// Tail surfaces whose normalized form never heads a record.
    pub fn tail_only_vocab(&self) -> impl Iterator<Item = &str> {
        self.tail_vocab
            .iter()
            .filter(|(k, _)| !self.by_head.contains_key(*k))
            .map(|(_, v)| v.as_str())
    }

    pub fn records_headed_by(&self, normalized: &str) -> impl Iterator<Item = &RawTriple> {
        self.by_head
            .get(normalized)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    pub fn contains_triple(&self, head: &str, relation: &str, tail: &str) -> bool {
        self.keys.contains(&TripleKey::new(head, relation, tail))
    }

    /// Split an entity into subentities.
    ///
    /// Entities containing whitespace or hyphens are split on them. Otherwise
    /// the normalized surface is scanned left to right, taking the longest
    /// prefix found in the head vocabulary at each step and skipping one
    /// character when none matches.
    pub fn tokenize_subentities(&self, e: &Entity) -> Vec<String> {
        let norm = e.normalized();
        if norm.contains(|c: char| c.is_whitespace() || c == '-') {
            return norm
                .split(|c: char| c.is_whitespace() || c == '-')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
        }
        let bounds: Vec<usize> = norm
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(norm.len()))
            .collect();
        let mut out = Vec::new();
        let mut at = 0usize;
        while at + 1 < bounds.len() {
            let start = bounds[at];
            let longest = (at + 1..bounds.len())
                .rev()
                .find(|&end| self.by_head.contains_key(&norm[start..bounds[end]]));
            match longest {
                Some(end) => {
                    out.push(norm[start..bounds[end]].to_string());
                    at = end;
                }
                None => at += 1,
            }
        }
        out
    }

    pub fn retrieve_examples(&self, e: &Entity, seed: u64) -> Result<Vec<RawTriple>> {
        self.retrieve_examples_traced(e, seed).map(|(_, v)| v)
    }

    /// Retrieve up to ten example records for `e`, reporting which strategy
    /// applied.
    pub fn retrieve_examples_traced(&self, e: &Entity, seed: u64) -> Result<(RetrievalCase, Vec<RawTriple>)> {
        if self.records.is_empty() {
            return Err(Error::EmptyKg);
        }
        if self.has_head(e.normalized()) {
            let direct = self
                .records_headed_by(e.normalized())
                .take(MAX_EXAMPLES)
                .cloned()
                .collect();
            return Ok((RetrievalCase::Direct, direct));
        }

        let mut seen = HashSet::new();
        let lists: Vec<&Vec<usize>> = self
            .tokenize_subentities(e)
            .into_iter()
            .filter(|s| seen.insert(s.clone()))
            .filter_map(|s| self.by_head.get(&s))
            .collect();
        if !lists.is_empty() {
            let mut out = Vec::with_capacity(MAX_EXAMPLES);
            let longest = lists.iter().map(|l| l.len()).max().unwrap_or(0);
            'rounds: for round in 0..longest {
                for list in &lists {
                    if let Some(&i) = list.get(round) {
                        out.push(self.records[i].clone());
                        if out.len() == MAX_EXAMPLES {
                            break 'rounds;
                        }
                    }
                }
            }
            return Ok((RetrievalCase::Subentities, out));
        }

        if self.records.len() <= MAX_EXAMPLES {
            return Ok((RetrievalCase::Random, self.records.clone()));
        }
        let mut rng = seeded_rng(seed);
        let picked = sample_indices(&mut rng, self.records.len(), MAX_EXAMPLES)
            .into_iter()
            .map(|i| self.records[i].clone())
            .collect();
        Ok((RetrievalCase::Random, picked))
    }
}
