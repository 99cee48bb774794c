//! Precision, number of recalls, domain specificity, and judge agreement.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{GenerationParams, LlmClient};
use crate::model::{RawTriple, TripleKey};
use crate::openkg::OpenKg;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub correct: bool,
    pub domain_related: bool,
    pub judge_id: String,
}

impl Judgment {
    pub fn key(&self) -> TripleKey {
        TripleKey::new(&self.head, &self.relation, &self.tail)
    }
}

pub fn parse_judgments(content: &str, origin: &str) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn load_judgments(path: &Path) -> Result<Vec<Judgment>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(&content, &path.display().to_string())
}

/// Judgments of one judge, indexed by normalized triple key.
#[derive(Debug, Clone, Default)]
pub struct JudgeView {
    pub judge_id: String,
    by_key: HashMap<TripleKey, Judgment>,
}

impl JudgeView {
    pub fn new(judgments: &[Judgment], judge_id: &str) -> Result<Self> {
        let mut by_key = HashMap::new();
        for j in judgments.iter().filter(|j| j.judge_id == judge_id) {
            if by_key.insert(j.key(), j.clone()).is_some() {
                return Err(Error::DuplicateJudgment {
                    key: j.key().to_string(),
                    judge: judge_id.to_string(),
                });
            }
        }
        Ok(JudgeView {
            judge_id: judge_id.to_string(),
            by_key,
        })
    }

    /// View of the single judge in a file, or the first judge when several
    /// are present.
    pub fn first(judgments: &[Judgment]) -> Result<Self> {
        let judge = judgments
            .first()
            .map(|j| j.judge_id.clone())
            .ok_or(Error::EmptyInput("judgments"))?;
        Self::new(judgments, &judge)
    }

    pub fn get(&self, key: &TripleKey) -> Option<&Judgment> {
        self.by_key.get(key)
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    fn lookup_all<'a>(&'a self, generated: &[TripleKey]) -> Result<Vec<&'a Judgment>> {
        let mut missing = Vec::new();
        let mut found = Vec::with_capacity(generated.len());
        for key in generated {
            match self.by_key.get(key) {
                Some(j) => found.push(j),
                None => missing.push(key.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(found)
        } else {
            Err(Error::MissingJudgment(missing))
        }
    }
}

fn distinct(generated: &[TripleKey]) -> Vec<TripleKey> {
    let mut seen = std::collections::HashSet::new();
    generated
        .iter()
        .filter(|k| seen.insert((*k).clone()))
        .cloned()
        .collect()
}

/// Fraction of generated triples judged correct.
pub fn precision(judge: &JudgeView, generated: &[TripleKey]) -> Result<f64> {
    let generated = distinct(generated);
    let found = judge.lookup_all(&generated)?;
    if found.is_empty() {
        return Ok(0.0);
    }
    Ok(found.iter().filter(|j| j.correct).count() as f64 / found.len() as f64)
}

/// Mean number of verified triples per domain text.
pub fn number_of_recalls(per_text_counts: &[usize]) -> Result<f64> {
    if per_text_counts.is_empty() {
        return Err(Error::EmptyInput("per-text counts"));
    }
    let total: usize = per_text_counts.iter().sum();
    Ok(total as f64 / per_text_counts.len() as f64)
}

/// Correct, domain-related triples absent from the open KG, over all
/// generated triples. Zero generated triples give 0.
pub fn domain_specificity(judge: &JudgeView, generated: &[TripleKey], kg: Option<&OpenKg>) -> Result<f64> {
    let generated = distinct(generated);
    let found = judge.lookup_all(&generated)?;
    if generated.is_empty() {
        log::warn!("domain specificity over zero generated triples is defined as 0");
        return Ok(0.0);
    }
    let specific = generated
        .iter()
        .zip(&found)
        .filter(|(_, j)| j.correct && j.domain_related)
        .filter(|(k, _)| !kg.is_some_and(|kg| kg.contains_triple(&k.head, &k.relation, &k.tail)))
        .count();
    Ok(specific as f64 / generated.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub precision: f64,
    pub number_of_recalls: f64,
    pub domain_specificity: f64,
    pub generated: usize,
    pub correct: usize,
    pub correct_domain_related: usize,
    pub in_open_kg: usize,
    pub texts: usize,
    pub judge_id: String,
}

/// All three metrics over a generated triple list. `per_text_counts` holds
/// the number of verified triples for each domain text (one per expansion).
pub fn evaluate(
    judge: &JudgeView,
    generated: &[TripleKey],
    per_text_counts: &[usize],
    kg: Option<&OpenKg>,
) -> Result<MetricReport> {
    let keys = distinct(generated);
    let found = judge.lookup_all(&keys)?;
    let correct = found.iter().filter(|j| j.correct).count();
    let correct_domain_related = found.iter().filter(|j| j.correct && j.domain_related).count();
    let in_open_kg = kg.map_or(0, |kg| {
        keys.iter()
            .zip(&found)
            .filter(|(k, j)| j.correct && j.domain_related && kg.contains_triple(&k.head, &k.relation, &k.tail))
            .count()
    });
    Ok(MetricReport {
        precision: precision(judge, &keys)?,
        number_of_recalls: if per_text_counts.is_empty() {
            0.0
        } else {
            number_of_recalls(per_text_counts)?
        },
        domain_specificity: domain_specificity(judge, &keys, kg)?,
        generated: keys.len(),
        correct,
        correct_domain_related,
        in_open_kg,
        texts: per_text_counts.len(),
        judge_id: judge.judge_id.clone(),
    })
}

/// 2x2 agreement table on the `correct` flag; judge B is the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Contingency {
    pub both: u64,
    pub a_only: u64,
    pub b_only: u64,
    pub neither: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    pub n: u64,
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.both + self.a_only + self.b_only + self.neither
    }

    /// P/R/F1 of judge A against B, with Cohen's kappa. A ratio with an empty
    /// denominator is 1 when the opposing error count is also zero, else 0.
    pub fn agreement(&self) -> Agreement {
        let n = self.total();
        let (tp, fp, fn_) = (self.both as f64, self.a_only as f64, self.b_only as f64);
        let ratio = |num: f64, den: f64, other_err: f64| {
            if den > 0.0 {
                num / den
            } else if other_err == 0.0 {
                1.0
            } else {
                0.0
            }
        };
        let precision = ratio(tp, tp + fp, fn_);
        let recall = ratio(tp, tp + fn_, fp);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let (observed, expected, kappa) = if n == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let n = n as f64;
            let po = (self.both + self.neither) as f64 / n;
            let pa = (self.both + self.a_only) as f64 / n;
            let pb = (self.both + self.b_only) as f64 / n;
            let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
            let kappa = if (1.0 - pe).abs() < f64::EPSILON {
                if po >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (po - pe) / (1.0 - pe)
            };
            (po, pe, kappa)
        };
        Agreement {
            precision,
            recall,
            f1,
            kappa,
            observed,
            expected,
            n,
        }
    }
}

/// Pair two judges over the same triple keys.
pub fn contingency(a: &JudgeView, b: &JudgeView) -> Result<Contingency> {
    let ka: BTreeSet<&TripleKey> = a.by_key.keys().collect();
    let kb: BTreeSet<&TripleKey> = b.by_key.keys().collect();
    if ka != kb {
        let only_a = ka.difference(&kb).count();
        let only_b = kb.difference(&ka).count();
        let sample = ka
            .symmetric_difference(&kb)
            .next()
            .map(|k| k.to_string())
            .unwrap_or_default();
        return Err(Error::KeyMismatch(format!(
            "{only_a} key(s) only in A, {only_b} only in B, e.g. {sample}"
        )));
    }
    let mut c = Contingency::default();
    for (key, ja) in &a.by_key {
        match (ja.correct, b.by_key[key].correct) {
            (true, true) => c.both += 1,
            (true, false) => c.a_only += 1,
            (false, true) => c.b_only += 1,
            (false, false) => c.neither += 1,
        }
    }
    Ok(c)
}

pub fn agreement(a: &JudgeView, b: &JudgeView) -> Result<Agreement> {
    Ok(contingency(a, b)?.agreement())
}

/// Prompt asking an LLM judge about one triple.
pub fn judge_prompt(text: &str, t: &RawTriple) -> String {
    let mut prompt = String::new();
    if !text.trim().is_empty() {
        prompt.push_str("Text:\n");
        prompt.push_str(text.trim());
        prompt.push_str("\n\n");
    }
    prompt.push_str(&format!(
        "Triple: ({} | {} | {})\n\nAnswer two questions with yes or no, one per line:\n\
correct: is this triple factually correct?\n\
domain_related: is this triple related to the domain of the text?",
        t.head, t.relation, t.tail
    ));
    prompt
}

fn parse_yes_no(line: &str) -> Option<bool> {
    match line.trim().trim_end_matches('.').to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Strict parse of `correct: yes|no` and `domain_related: yes|no` lines.
pub fn parse_judge_answer(raw: &str) -> Option<(bool, bool)> {
    let mut correct = None;
    let mut related = None;
    for line in raw.lines() {
        let Some((k, v)) = line.split_once(':') else { continue };
        match k.trim().to_lowercase().as_str() {
            "correct" => correct = parse_yes_no(v),
            "domain_related" => related = parse_yes_no(v),
            _ => {}
        }
    }
    Some((correct?, related?))
}

pub fn judge_with_llm(
    llm: &dyn LlmClient,
    params: &GenerationParams,
    judge_id: &str,
    text: &str,
    t: &RawTriple,
) -> Result<Judgment> {
    let raw = llm.complete(&judge_prompt(text, t), params)?;
    let (correct, domain_related) = parse_judge_answer(&raw)
        .ok_or_else(|| crate::llm::LlmError::BadResponse(format!("unparseable judgment: {raw:?}")))?;
    Ok(Judgment {
        head: t.head.clone(),
        relation: t.relation.clone(),
        tail: t.tail.clone(),
        correct,
        domain_related,
        judge_id: judge_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(i: usize, correct: bool, related: bool, judge: &str) -> Judgment {
        Judgment {
            head: "rice".into(),
            relation: format!("r{i}"),
            tail: format!("t{i}"),
            correct,
            domain_related: related,
            judge_id: judge.into(),
        }
    }

    fn keys(js: &[Judgment]) -> Vec<TripleKey> {
        js.iter().map(Judgment::key).collect()
    }

    #[test]
    fn precision_ratio() {
        let js: Vec<_> = (0..10).map(|i| j(i, i < 8, true, "g")).collect();
        let view = JudgeView::new(&js, "g").unwrap();
        assert_eq!(precision(&view, &keys(&js)).unwrap(), 0.8);
        let js: Vec<_> = (0..5).map(|i| j(i, false, true, "g")).collect();
        let view = JudgeView::new(&js, "g").unwrap();
        assert_eq!(precision(&view, &keys(&js)).unwrap(), 0.0);
    }

    #[test]
    fn precision_missing_judgment() {
        let js = vec![j(0, true, true, "g")];
        let view = JudgeView::new(&js, "g").unwrap();
        let mut gen = keys(&js);
        gen.push(TripleKey::new("rice", "x", "y"));
        match precision(&view, &gen) {
            Err(Error::MissingJudgment(k)) => assert_eq!(k, vec!["(rice | x | y)".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_judgment_rejected() {
        let js = vec![j(0, true, true, "g"), j(0, false, true, "g")];
        assert!(matches!(JudgeView::new(&js, "g"), Err(Error::DuplicateJudgment { .. })));
        assert!(JudgeView::new(&js, "other").unwrap().is_empty());
    }

    #[test]
    fn recalls_mean() {
        assert_eq!(number_of_recalls(&[2, 3, 4]).unwrap(), 3.0);
        assert_eq!(number_of_recalls(&[0, 0]).unwrap(), 0.0);
        assert!(matches!(number_of_recalls(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn specificity_edges() {
        let js: Vec<_> = (0..4).map(|i| j(i, true, true, "g")).collect();
        let view = JudgeView::new(&js, "g").unwrap();
        assert_eq!(domain_specificity(&view, &keys(&js), None).unwrap(), 1.0);
        let kg = OpenKg::from_records(
            js.iter()
                .map(|x| RawTriple::new(&*x.head, &*x.relation, &*x.tail))
                .collect(),
        );
        assert_eq!(domain_specificity(&view, &keys(&js), Some(&kg)).unwrap(), 0.0);
        assert_eq!(domain_specificity(&view, &[], Some(&kg)).unwrap(), 0.0);
    }

    #[test]
    fn kappa_identical_and_degenerate() {
        let c = Contingency {
            both: 3,
            a_only: 0,
            b_only: 0,
            neither: 2,
        };
        let a = c.agreement();
        assert_eq!((a.precision, a.recall, a.f1, a.kappa), (1.0, 1.0, 1.0, 1.0));
        let all_no = Contingency {
            neither: 4,
            ..Default::default()
        };
        let a = all_no.agreement();
        assert_eq!((a.precision, a.recall, a.f1, a.kappa), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn contingency_requires_same_keys() {
        let a = vec![j(0, true, true, "a"), j(1, true, true, "a")];
        let b = vec![j(0, true, true, "b")];
        let err = contingency(&JudgeView::new(&a, "a").unwrap(), &JudgeView::new(&b, "b").unwrap()).unwrap_err();
        assert!(matches!(err, Error::KeyMismatch(_)));
    }

    #[test]
    fn judge_answer_parsing() {
        assert_eq!(
            parse_judge_answer("correct: yes\ndomain_related: No."),
            Some((true, false))
        );
        assert_eq!(parse_judge_answer("correct: maybe\ndomain_related: no"), None);
        assert_eq!(parse_judge_answer("yes"), None);
        let p = judge_prompt("Rice grows.", &RawTriple::new("rice", "type", "cereal"));
        assert!(p.starts_with("Text:\nRice grows."));
        assert!(p.contains("(rice | type | cereal)"));
    }
}
