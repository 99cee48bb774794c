//! Growing/pruned classification of tail entities.
//!
//! The default backend is a rule-based heuristic. A remote backend can serve
//! verdicts from any trained classifier over HTTP; on failure it falls back
//! to the heuristic.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{http_agent, post_json, LlmError, RetryPolicy};
use crate::model::{normalize, Entity};
use crate::openkg::OpenKg;
use crate::sampling::{sample_indices, seeded_rng};

pub const ENV_PRUNER_URL: &str = "SACKG_PRUNER_URL";

pub const DEFAULT_UNITS: &[&str] = &[
    "%",
    "percent",
    "degree",
    "degrees",
    "°",
    "°c",
    "°f",
    "celsius",
    "fahrenheit",
    "acre",
    "acres",
    "hectare",
    "hectares",
    "ha",
    "mu",
    "day",
    "days",
    "week",
    "weeks",
    "month",
    "months",
    "year",
    "years",
    "hour",
    "hours",
    "h",
    "minute",
    "minutes",
    "min",
    "second",
    "seconds",
    "s",
    "kg",
    "g",
    "mg",
    "t",
    "ton",
    "tons",
    "tonnes",
    "lb",
    "lbs",
    "km",
    "m",
    "cm",
    "mm",
    "meter",
    "meters",
    "metre",
    "metres",
    "inch",
    "inches",
    "ft",
    "feet",
    "l",
    "ml",
    "liter",
    "liters",
    "litre",
    "litres",
    "ppm",
];

pub const DEFAULT_PRUNE_PREFIXES: &[&str] = &["lack of", "absence of"];

pub const MAX_GROWING_TOKENS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Growing,
    Pruned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Heuristic,
    Remote,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunerVerdict {
    pub entity: Entity,
    pub label: Label,
    pub source: VerdictSource,
}

/// Prunes numeric or date-like values, measurements (a number next to a
/// unit word), long phrases, and phrases starting with a configured prefix.
#[derive(Debug, Clone)]
pub struct HeuristicPruner {
    units: HashSet<String>,
    prefixes: Vec<String>,
    max_tokens: usize,
    date: Regex,
}

impl Default for HeuristicPruner {
    fn default() -> Self {
        HeuristicPruner::new(
            DEFAULT_UNITS.iter().map(|s| s.to_string()),
            DEFAULT_PRUNE_PREFIXES.iter().map(|s| s.to_string()),
        )
    }
}

fn split_number_prefix(token: &str) -> Option<&str> {
    let rest =
        token.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '–' | '~' | '/' | '+'));
    (rest.len() < token.len() && token.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-')).then_some(rest)
}

impl HeuristicPruner {
    pub fn new(units: impl IntoIterator<Item = String>, prefixes: impl IntoIterator<Item = String>) -> Self {
        HeuristicPruner {
            units: units.into_iter().map(|u| normalize(&u)).collect(),
            prefixes: prefixes.into_iter().map(|p| normalize(&p)).collect(),
            max_tokens: MAX_GROWING_TOKENS,
            date: Regex::new(
                r"^(\d{1,2}\s+)?(jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\.?(\s+\d{1,2}(st|nd|rd|th)?)?,?\s+\d{3,4}$",
            )
            .expect("date pattern"),
        }
    }

    fn is_numeric_or_date(&self, norm: &str) -> bool {
        let has_digit = norm.chars().any(|c| c.is_ascii_digit());
        let only_numeric = norm.chars().all(|c| {
            c.is_ascii_digit() || c.is_whitespace() || matches!(c, '.' | ',' | ':' | '/' | '-' | '–' | '+' | '%')
        });
        (has_digit && only_numeric) || self.date.is_match(norm)
    }

    fn has_measurement(&self, tokens: &[&str]) -> bool {
        let clean = |t: &str| {
            t.trim_matches(|c: char| matches!(c, ',' | ';' | ':' | '(' | ')' | '.'))
                .to_string()
        };
        tokens.iter().enumerate().any(|(i, tok)| {
            let tok = clean(tok);
            let Some(suffix) = split_number_prefix(&tok) else {
                return false;
            };
            if !suffix.is_empty() {
                return self.units.contains(suffix);
            }
            tokens.get(i + 1).is_some_and(|next| self.units.contains(&clean(next)))
        })
    }

    pub fn classify(&self, e: &Entity) -> Label {
        let norm = e.normalized();
        let tokens: Vec<&str> = norm.split_whitespace().collect();
        let pruned = self.is_numeric_or_date(norm)
            || self.has_measurement(&tokens)
            || tokens.len() > self.max_tokens
            || self
                .prefixes
                .iter()
                .any(|p| norm == p || norm.starts_with(&format!("{p} ")));
        if pruned {
            Label::Pruned
        } else {
            Label::Growing
        }
    }
}

/// HTTP backend: POST `{"text": ...}`, expect `{"label": "growing"|"pruned"}`.
#[derive(Debug)]
pub struct RemotePruner {
    url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct LabelResponse {
    label: Label,
}

impl RemotePruner {
    pub fn new(url: &str) -> Self {
        RemotePruner {
            url: url.to_string(),
            agent: http_agent(Duration::from_secs(30)),
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ENV_PRUNER_URL).ok().map(|u| Self::new(&u))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn classify(&self, e: &Entity) -> std::result::Result<Label, LlmError> {
        let body = serde_json::json!({ "text": e.surface() });
        let value = self.retry.run(|| post_json(&self.agent, &self.url, None, &body))?;
        serde_json::from_value::<LabelResponse>(value)
            .map(|r| r.label)
            .map_err(|e| LlmError::BadResponse(e.to_string()))
    }
}

#[derive(Debug, Default)]
pub struct Pruner {
    heuristic: HeuristicPruner,
    remote: Option<RemotePruner>,
    overrides: HashMap<String, Label>,
}

impl Pruner {
    pub fn heuristic(heuristic: HeuristicPruner) -> Self {
        Pruner {
            heuristic,
            remote: None,
            overrides: HashMap::new(),
        }
    }

    pub fn with_remote(mut self, remote: RemotePruner) -> Self {
        self.remote = Some(remote);
        self
    }

    pub fn with_override(mut self, surface: &str, label: Label) -> Self {
        self.overrides.insert(normalize(surface), label);
        self
    }

    pub fn classify(&self, e: &Entity) -> PrunerVerdict {
        let verdict = |label, source| PrunerVerdict {
            entity: e.clone(),
            label,
            source,
        };
        if let Some(&label) = self.overrides.get(e.normalized()) {
            return verdict(label, VerdictSource::Override);
        }
        if let Some(remote) = &self.remote {
            match remote.classify(e) {
                Ok(label) => return verdict(label, VerdictSource::Remote),
                Err(err) => log::warn!("remote pruner failed for `{e}`, using heuristic: {err}"),
            }
        }
        verdict(self.heuristic.classify(e), VerdictSource::Heuristic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub text: String,
    pub label: Label,
}

/// Balanced classifier training data: heads are `growing`, tails that never
/// head a record are `pruned`.
pub fn extract_training_pairs(kg: &OpenKg, n_per_class: usize, seed: u64) -> Result<Vec<TrainingPair>> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let growing: Vec<&str> = kg.head_vocab().collect();
    let pruned: Vec<&str> = kg.tail_only_vocab().collect();
    for pool in [&growing, &pruned] {
        if pool.len() < n_per_class {
            return Err(Error::InsufficientPool {
                requested: n_per_class,
                available: pool.len(),
            });
        }
    }
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for (pool, label) in [(&growing, Label::Growing), (&pruned, Label::Pruned)] {
        for i in sample_indices(&mut rng, pool.len(), n_per_class) {
            out.push(TrainingPair {
                text: pool[i].to_string(),
                label,
            });
        }
    }
    Ok(out)
}
