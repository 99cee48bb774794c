//! Declarative conflict rules evaluated over a batch of candidate triples.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{normalize, RawTriple};

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Numeric tails of `relation` must lie in `[min, max]`; missing bounds are open.
    Range {
        relation: String,
        min: Option<f64>,
        max: Option<f64>,
    },
    /// For one head, the numeric tail of `earlier` must not exceed that of `later`.
    Order { earlier: String, later: String },
    /// A head has at most one distinct tail for `relation`.
    Functional { relation: String },
}

impl Rule {
    pub fn range(relation: &str, min: Option<f64>, max: Option<f64>) -> Result<Rule> {
        if let (Some(lo), Some(hi)) = (min, max) {
            if lo > hi {
                return Err(Error::InvalidRule(format!(
                    "range for `{relation}` has min {lo} > max {hi}"
                )));
            }
        }
        Ok(Rule::Range {
            relation: normalize(relation),
            min,
            max,
        })
    }

    pub fn order(earlier: &str, later: &str) -> Result<Rule> {
        let (earlier, later) = (normalize(earlier), normalize(later));
        if earlier == later {
            return Err(Error::InvalidRule(format!(
                "order rule needs two distinct relations, got `{earlier}` twice"
            )));
        }
        Ok(Rule::Order { earlier, later })
    }

    pub fn functional(relation: &str) -> Rule {
        Rule::Functional {
            relation: normalize(relation),
        }
    }

    /// Indices into `batch` of the triples this rule rejects.
    ///
    /// Order violations flag the later-relation triple; functional
    /// violations flag every tail after the first one seen for a head.
    pub fn violations(&self, batch: &[&RawTriple]) -> Vec<usize> {
        match self {
            Rule::Range { relation, min, max } => batch
                .iter()
                .enumerate()
                .filter(|(_, t)| normalize(&t.relation) == *relation)
                .filter_map(|(i, t)| extract_number(&t.tail).map(|v| (i, v)))
                .filter(|&(_, v)| min.is_some_and(|lo| v < lo) || max.is_some_and(|hi| v > hi))
                .map(|(i, _)| i)
                .collect(),
            Rule::Order { earlier, later } => {
                let mut earliest: HashMap<String, Vec<f64>> = HashMap::new();
                for t in batch {
                    if normalize(&t.relation) == *earlier {
                        if let Some(v) = extract_number(&t.tail) {
                            earliest.entry(normalize(&t.head)).or_default().push(v);
                        }
                    }
                }
                batch
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| normalize(&t.relation) == *later)
                    .filter_map(|(i, t)| {
                        let v = extract_number(&t.tail)?;
                        let before = earliest.get(&normalize(&t.head))?;
                        before.iter().any(|&e| e > v).then_some(i)
                    })
                    .collect()
            }
            Rule::Functional { relation } => {
                let mut first: HashMap<String, String> = HashMap::new();
                let mut out = Vec::new();
                for (i, t) in batch.iter().enumerate() {
                    if normalize(&t.relation) != *relation {
                        continue;
                    }
                    let tail = normalize(&t.tail);
                    match first.get(&normalize(&t.head)) {
                        Some(kept) if *kept != tail => out.push(i),
                        Some(_) => {}
                        None => {
                            first.insert(normalize(&t.head), tail);
                        }
                    }
                }
                out
            }
        }
    }
}

/// First signed decimal in `s`. A leading `-` counts as a sign only at the
/// start of the string or after whitespace or `(`.
pub fn extract_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    let signed = start > 0
        && bytes[start - 1] == b'-'
        && (start == 1 || bytes[start - 2].is_ascii_whitespace() || bytes[start - 2] == b'(');
    let from = if signed { start - 1 } else { start };
    s[from..end].parse().ok()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    kind: String,
    #[serde(default)]
    relation: Option<String>,
    #[serde(default)]
    relations: Vec<String>,
    #[serde(default)]
    params: RuleParams,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RuleParams {
    min: Option<f64>,
    max: Option<f64>,
}

impl RuleRecord {
    fn into_rule(self) -> std::result::Result<Rule, String> {
        let mut relations = self.relations;
        if let Some(r) = self.relation {
            relations.insert(0, r);
        }
        match (self.kind.to_lowercase().as_str(), relations.as_slice()) {
            ("range", [r]) => Rule::range(r, self.params.min, self.params.max).map_err(|e| e.to_string()),
            ("order", [a, b]) => Rule::order(a, b).map_err(|e| e.to_string()),
            ("functional", [r]) => Ok(Rule::functional(r)),
            ("range" | "functional", rs) => Err(format!("expected one relation, got {}", rs.len())),
            ("order", rs) => Err(format!("expected two relations, got {}", rs.len())),
            (other, _) => Err(format!("unknown rule kind `{other}`")),
        }
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet { rules }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Parse line-delimited rule records, e.g.
    /// `{"kind":"range","relation":"age","params":{"min":0}}` or
    /// `{"kind":"order","relations":["birth time","death time"]}`.
    pub fn parse(content: &str, origin: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RuleRecord = serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
            rules.push(rec.into_rule().map_err(|m| Error::parse(origin, i + 1, m))?);
        }
        Ok(RuleSet { rules })
    }

    /// Load a rule file; a missing file yields an empty rule set.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(content) => Self::parse(&content, &path.display().to_string()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                log::warn!("rule file {} not found; conflict check disabled", path.display());
                Ok(RuleSet::default())
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Sorted, deduplicated indices of triples violating any rule.
    pub fn violations(&self, batch: &[&RawTriple]) -> Vec<usize> {
        let mut out: Vec<usize> = self.rules.iter().flat_map(|r| r.violations(batch)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str) -> RawTriple {
        RawTriple::new(h, r, tl)
    }

    #[test]
    fn numbers() {
        assert_eq!(extract_number("-3"), Some(-3.0));
        assert_eq!(extract_number("born in 1960"), Some(1960.0));
        assert_eq!(extract_number("20-25 degrees"), Some(20.0));
        assert_eq!(extract_number("COVID-19"), Some(19.0));
        assert_eq!(extract_number("age (-4.5 years)"), Some(-4.5));
        assert_eq!(extract_number("3."), Some(3.0));
        assert_eq!(extract_number("unknown"), None);
    }

    #[test]
    fn range_rule() {
        let rule = Rule::range("age", Some(0.0), None).unwrap();
        let a = t("expert", "age", "-3");
        let b = t("expert", "Age", "45 years");
        let c = t("expert", "age", "unknown");
        assert_eq!(rule.violations(&[&a, &b, &c]), vec![0]);
        assert!(Rule::range("x", Some(2.0), Some(1.0)).is_err());
    }

    #[test]
    fn order_rule() {
        let rule = Rule::order("birth time", "death time").unwrap();
        let birth = t("expert", "birth time", "1960");
        let death = t("expert", "death time", "1950");
        assert_eq!(rule.violations(&[&birth, &death]), vec![1]);
        let ok = t("expert", "death time", "2001");
        assert!(rule.violations(&[&birth, &ok]).is_empty());
        let other = t("someone else", "death time", "1900");
        assert!(rule.violations(&[&birth, &other]).is_empty());
        assert!(Rule::order("a", "A").is_err());
    }

    #[test]
    fn functional_rule() {
        let rule = Rule::functional("capital");
        let a = t("x", "capital", "A");
        let a2 = t("x", "capital", "a");
        let b = t("x", "capital", "B");
        assert_eq!(rule.violations(&[&a, &a2, &b]), vec![2]);
    }

    #[test]
    fn parse_rule_file() {
        let rs = RuleSet::parse(
            r#"{"kind":"range","relation":"age","params":{"min":0}}
{"kind":"order","relations":["birth time","death time"]}

{"kind":"functional","relations":["capital"]}"#,
            "rules",
        )
        .unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs.rules()[2], Rule::functional("capital"));
    }

    #[test]
    fn parse_errors_name_line() {
        for bad in [
            r#"{"kind":"range","relations":[]}"#,
            r#"{"kind":"order","relations":["a"]}"#,
            r#"{"kind":"mystery","relation":"a"}"#,
            r#"{"kind":"range","relation":"a","params":{"min":5,"max":1}}"#,
        ] {
            let content = format!("{{\"kind\":\"functional\",\"relation\":\"ok\"}}\n{bad}");
            let err = RuleSet::parse(&content, "r").unwrap_err();
            assert!(matches!(err, Error::Parse { line: 2, .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn missing_file_is_empty() {
        let rs = RuleSet::load(Path::new("/nonexistent/rules.jsonl")).unwrap();
        assert!(rs.is_empty());
    }
}
