//! Rule-based verification of generated triples and the corrective
//! reprompting loop.
//!
//! Detection runs three checks in order: quantity (batch level), format
//! (malformed lines, head mismatch, head = tail) and conflict (the rule set).
//! Each triple carries only the first error found for it. The decision step
//! then either accepts the batch, drops the flagged triples, or asks for a
//! regeneration with the correction prompts of every error type seen.

pub mod rules;

use std::fmt;

pub use rules::{extract_number, Rule, RuleSet};

use crate::llm::LlmError;
use crate::model::{normalize, Entity, RawTriple, Triple};
use crate::prompting::{build_prompt, parse_triples, ParsedOutput, PromptBundle};

/// Error categories, declared in correction-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorType {
    GeneralConflict,
    /// Also known as "quantity insufficient".
    QuantityTooSmall,
    HeadEntityError,
    FormatError,
    HeadTailContradiction,
}

impl ErrorType {
    pub const ALL: [ErrorType; 5] = [
        ErrorType::GeneralConflict,
        ErrorType::QuantityTooSmall,
        ErrorType::HeadEntityError,
        ErrorType::FormatError,
        ErrorType::HeadTailContradiction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorType::GeneralConflict => "General conflict",
            ErrorType::QuantityTooSmall => "Quantity too small",
            ErrorType::HeadEntityError => "Head entity error",
            ErrorType::FormatError => "Format error",
            ErrorType::HeadTailContradiction => "Contradiction between head and tail",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Correction text appended to the original prompt for an error type.
pub fn correction_prompt(t: ErrorType, entity: &Entity) -> String {
    match t {
        ErrorType::GeneralConflict => "Please generate it again strictly according to the requirements.".to_string(),
        ErrorType::QuantityTooSmall => "Please generate it again strictly according to the \
requirements, and pay attention to generating sufficient triples."
            .to_string(),
        ErrorType::HeadEntityError => format!(
            "Please generate it again strictly according to the requirements, and note that \
the head entity must be {}",
            entity.surface()
        ),
        ErrorType::FormatError => "Please generate it again strictly according to the format \
requirements, paying attention to the format of the example triples."
            .to_string(),
        ErrorType::HeadTailContradiction => "Please generate it again strictly according to \
the format and requirements, and note that the head and tail entities are generally inconsistent."
            .to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlagSubject {
    /// The whole batch (quantity check).
    Batch,
    /// An output line that did not parse as a triple.
    Line {
        line_no: usize,
        raw: String,
    },
    Triple(RawTriple),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flag {
    pub subject: FlagSubject,
    pub error: ErrorType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Regenerate(String),
    EliminateFlagged,
    AcceptAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub accepted: Vec<RawTriple>,
    pub flagged: Vec<Flag>,
    /// `None` until [`decide`] has run.
    pub decision: Option<Decision>,
}

impl VerificationReport {
    pub fn has(&self, t: ErrorType) -> bool {
        self.flagged.iter().any(|f| f.error == t)
    }

    pub fn count(&self, t: ErrorType) -> usize {
        self.flagged.iter().filter(|f| f.error == t).count()
    }

    /// Distinct flagged error types in correction-table order.
    pub fn error_types(&self) -> Vec<ErrorType> {
        ErrorType::ALL.into_iter().filter(|&t| self.has(t)).collect()
    }
}

pub fn detect_errors(
    parsed: &ParsedOutput,
    entity: &Entity,
    rules: &RuleSet,
    min_triples: usize,
) -> VerificationReport {
    let mut flagged = Vec::new();

    if parsed.triples.len() < min_triples {
        flagged.push(Flag {
            subject: FlagSubject::Batch,
            error: ErrorType::QuantityTooSmall,
        });
    }

    for (line_no, raw) in &parsed.malformed_lines {
        flagged.push(Flag {
            subject: FlagSubject::Line {
                line_no: *line_no,
                raw: raw.clone(),
            },
            error: ErrorType::FormatError,
        });
    }
    let mut survivors: Vec<&RawTriple> = Vec::with_capacity(parsed.triples.len());
    for t in &parsed.triples {
        let head = normalize(&t.head);
        let error = if head != entity.normalized() {
            Some(ErrorType::HeadEntityError)
        } else if head == normalize(&t.tail) {
            Some(ErrorType::HeadTailContradiction)
        } else {
            None
        };
        match error {
            Some(error) => flagged.push(Flag {
                subject: FlagSubject::Triple(t.clone()),
                error,
            }),
            None => survivors.push(t),
        }
    }

    let conflicting = rules.violations(&survivors);
    let mut accepted = Vec::with_capacity(survivors.len());
    for (i, t) in survivors.into_iter().enumerate() {
        if conflicting.binary_search(&i).is_ok() {
            flagged.push(Flag {
                subject: FlagSubject::Triple(t.clone()),
                error: ErrorType::GeneralConflict,
            });
        } else {
            accepted.push(t.clone());
        }
    }

    VerificationReport {
        accepted,
        flagged,
        decision: None,
    }
}

/// Choose between regeneration, elimination of flagged triples, or
/// accepting the batch as is.
pub fn decide(mut report: VerificationReport, entity: &Entity, elimination_threshold: usize) -> VerificationReport {
    let decision = if report.has(ErrorType::QuantityTooSmall) || report.flagged.len() > elimination_threshold {
        let prompts: Vec<String> = report
            .error_types()
            .into_iter()
            .map(|t| correction_prompt(t, entity))
            .collect();
        Decision::Regenerate(prompts.join("\n"))
    } else if report.flagged.is_empty() {
        Decision::AcceptAll
    } else {
        Decision::EliminateFlagged
    };
    report.decision = Some(decision);
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyLimits {
    pub min_triples: usize,
    pub elimination_threshold: usize,
    pub max_regeneration_rounds: u32,
}

impl Default for VerifyLimits {
    fn default() -> Self {
        VerifyLimits {
            min_triples: 3,
            elimination_threshold: 3,
            max_regeneration_rounds: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundStats {
    pub round: u32,
    /// Parsed triples plus malformed lines.
    pub generated: usize,
    pub flagged: usize,
    pub accepted: usize,
    pub regenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopOutcome {
    pub triples: Vec<Triple>,
    pub calls: usize,
    pub rounds: Vec<RoundStats>,
    pub final_report: VerificationReport,
}

/// Generate, parse, detect and decide until the batch is accepted (possibly
/// after elimination) or the regeneration budget is spent. A regeneration
/// prompt is the original prompt, a blank line, and the correction prompts.
pub fn verify_loop<F>(
    mut generate: F,
    bundle: &PromptBundle,
    rules: &RuleSet,
    limits: VerifyLimits,
    level: u32,
) -> Result<LoopOutcome, LlmError>
where
    F: FnMut(&str) -> Result<String, LlmError>,
{
    let base = build_prompt(bundle);
    let mut prompt = base.clone();
    let mut rounds = Vec::new();
    let mut round = 0u32;
    loop {
        let raw = generate(&prompt)?;
        let parsed = parse_triples(&raw);
        let report = decide(
            detect_errors(&parsed, &bundle.entity, rules, limits.min_triples),
            &bundle.entity,
            limits.elimination_threshold,
        );
        let regenerate = matches!(report.decision, Some(Decision::Regenerate(_)));
        rounds.push(RoundStats {
            round,
            generated: parsed.triples.len() + parsed.malformed_lines.len(),
            flagged: report.flagged.len(),
            accepted: report.accepted.len(),
            regenerate,
        });

        match &report.decision {
            Some(Decision::Regenerate(correction)) if round < limits.max_regeneration_rounds => {
                prompt = format!("{base}\n\n{correction}");
                round += 1;
            }
            _ => {
                let triples = report
                    .accepted
                    .iter()
                    .filter_map(|t| {
                        Triple::new(&t.head, &t.relation, &t.tail, level, bundle.entity.clone(), round).ok()
                    })
                    .collect();
                return Ok(LoopOutcome {
                    triples,
                    calls: round as usize + 1,
                    rounds,
                    final_report: report,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::InstructionTemplate;

    fn rice() -> Entity {
        Entity::new("rice").unwrap()
    }

    fn parsed(lines: &[&str]) -> ParsedOutput {
        parse_triples(&lines.join("\n"))
    }

    fn bundle() -> PromptBundle {
        PromptBundle::new(rice(), "Rice grows.".into(), &InstructionTemplate::default(), 3, vec![])
    }

    const CLEAN5: &str = "(rice | type | cereal)\n(rice | family | Poaceae)\n(rice | origin | Asia)\n\
(rice | color | white)\n(rice | grown in | paddies)";

    #[test]
    fn clean_batch_has_no_flags() {
        let r = detect_errors(&parse_triples(CLEAN5), &rice(), &RuleSet::default(), 3);
        assert!(r.flagged.is_empty());
        assert_eq!(r.accepted.len(), 5);
        assert_eq!(decide(r, &rice(), 3).decision, Some(Decision::AcceptAll));
    }

    #[test]
    fn head_mismatch() {
        let r = detect_errors(&parsed(&["(wheat | type | cereal)"]), &rice(), &RuleSet::default(), 1);
        assert_eq!(r.flagged.len(), 1);
        assert_eq!(r.flagged[0].error, ErrorType::HeadEntityError);
    }

    #[test]
    fn rule_conflicts() {
        let expert = Entity::new("expert").unwrap();
        let rules = RuleSet::new(vec![
            Rule::range("age", Some(0.0), None).unwrap(),
            Rule::order("birth time", "death time").unwrap(),
        ]);
        let r = detect_errors(
            &parsed(&[
                "(expert | age | -3)",
                "(expert | birth time | 1960)",
                "(expert | death time | 1950)",
            ]),
            &expert,
            &rules,
            3,
        );
        assert_eq!(r.count(ErrorType::GeneralConflict), 2);
        assert_eq!(r.accepted, vec![RawTriple::new("expert", "birth time", "1960")]);
    }

    #[test]
    fn format_precedes_conflict() {
        let rules = RuleSet::new(vec![Rule::range("age", Some(0.0), None).unwrap()]);
        let r = detect_errors(&parsed(&["(wheat | age | -3)"]), &rice(), &rules, 1);
        assert_eq!(r.flagged.len(), 1);
        assert_eq!(r.flagged[0].error, ErrorType::HeadEntityError);
    }

    #[test]
    fn decision_thresholds() {
        let mut lines: Vec<String> = (0..6).map(|i| format!("(rice | r{i} | t{i})")).collect();
        lines.push("(wheat | a | b)".into());
        lines.push("(rice | same | rice)".into());
        let r = decide(
            detect_errors(&parse_triples(&lines.join("\n")), &rice(), &RuleSet::default(), 3),
            &rice(),
            3,
        );
        assert_eq!(r.decision, Some(Decision::EliminateFlagged));
        assert_eq!(r.accepted.len(), 6);

        let four = "(a | b | c)\n(d | e | f)\n(g | h | i)\n(j | k | l)";
        let r = decide(
            detect_errors(&parse_triples(four), &rice(), &RuleSet::default(), 3),
            &rice(),
            3,
        );
        assert_eq!(
            r.decision,
            Some(Decision::Regenerate(correction_prompt(
                ErrorType::HeadEntityError,
                &rice()
            )))
        );
    }

    #[test]
    fn quantity_forces_regeneration() {
        let r = decide(
            detect_errors(&parsed(&["(rice | type | cereal)"]), &rice(), &RuleSet::default(), 3),
            &rice(),
            3,
        );
        match r.decision {
            Some(Decision::Regenerate(p)) => {
                assert_eq!(p, correction_prompt(ErrorType::QuantityTooSmall, &rice()));
                assert!(p.contains("pay attention to generating sufficient triples"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regeneration_prompt_in_table_order() {
        let r = decide(
            detect_errors(
                &parsed(&["garbage", "(wheat | a | b)"]),
                &rice(),
                &RuleSet::default(),
                3,
            ),
            &rice(),
            3,
        );
        let expected = [
            correction_prompt(ErrorType::QuantityTooSmall, &rice()),
            correction_prompt(ErrorType::HeadEntityError, &rice()),
            correction_prompt(ErrorType::FormatError, &rice()),
        ]
        .join("\n");
        assert_eq!(r.decision, Some(Decision::Regenerate(expected)));
    }

    #[test]
    fn correction_texts() {
        assert_eq!(
            correction_prompt(ErrorType::FormatError, &rice()),
            "Please generate it again strictly according to the format requirements, \
paying attention to the format of the example triples."
        );
        assert!(correction_prompt(ErrorType::HeadEntityError, &rice()).ends_with("the head entity must be rice"));
        assert_eq!(
            correction_prompt(ErrorType::GeneralConflict, &rice()),
            "Please generate it again strictly according to the requirements."
        );
        assert!(correction_prompt(ErrorType::HeadTailContradiction, &rice())
            .contains("head and tail entities are generally inconsistent"));
    }

    #[test]
    fn loop_regenerates_on_quantity() {
        let responses = ["(rice | type | cereal)\n(rice | family | Poaceae)", CLEAN5];
        let mut prompts = Vec::new();
        let out = verify_loop(
            |p: &str| {
                prompts.push(p.to_string());
                Ok(responses[prompts.len() - 1].to_string())
            },
            &bundle(),
            &RuleSet::default(),
            VerifyLimits::default(),
            1,
        )
        .unwrap();
        assert_eq!(out.calls, 2);
        assert_eq!(out.triples.len(), 5);
        assert!(out.triples.iter().all(|t| t.round == 1 && t.level == 1));
        assert!(prompts[1].starts_with(&prompts[0]));
        assert!(prompts[1].ends_with(&correction_prompt(ErrorType::QuantityTooSmall, &rice())));
    }

    #[test]
    fn loop_exits_early_when_clean() {
        let mut calls = 0;
        let out = verify_loop(
            |_: &str| {
                calls += 1;
                Ok(CLEAN5.to_string())
            },
            &bundle(),
            &RuleSet::default(),
            VerifyLimits::default(),
            2,
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert!(out.triples.iter().all(|t| t.round == 0 && t.level == 2));
    }

    #[test]
    fn loop_eliminates_after_exhaustion() {
        let dirty = "(rice | a | b)\n(wheat | a | b)\n(wheat | c | d)\n(x | y | z)\n(q | r | s)";
        let mut calls = 0;
        let out = verify_loop(
            |_: &str| {
                calls += 1;
                Ok(dirty.to_string())
            },
            &bundle(),
            &RuleSet::default(),
            VerifyLimits::default(),
            1,
        )
        .unwrap();
        assert_eq!(calls, 3);
        assert_eq!(out.triples.len(), 1);
        assert_eq!(out.triples[0].round, 2);
    }

    #[test]
    fn loop_propagates_llm_errors() {
        let err = verify_loop(
            |_: &str| Err(LlmError::NoScript("x".into())),
            &bundle(),
            &RuleSet::default(),
            VerifyLimits::default(),
            1,
        )
        .unwrap_err();
        assert_eq!(err, LlmError::NoScript("x".into()));
    }
}
