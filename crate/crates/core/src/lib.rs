//! Multi-level domain knowledge graph construction.
//!
//! An LLM is prompted per entity with frequency-ranked corpus sentences and
//! example triples from an open KG; its output is checked by a rule-based
//! verifier (with corrective reprompting), tails are labeled growing or
//! pruned, and growing tails seed the next level. The [`eval`] module scores
//! the result from judgment files.

pub mod builder;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod export;
pub mod llm;
pub mod model;
pub mod openkg;
pub mod prompting;
pub mod pruner;
pub mod sampling;
pub mod verifier;

pub use builder::{sample_roots, BuildConfig, BuildDeps, BuildReport, Builder};
pub use corpus::{segment_sentences, CorpusIndex};
pub use error::{Error, Result};
pub use llm::{GenerationParams, LlmClient, LlmError, MockLlm, RemoteLlm};
pub use model::{normalize, Entity, KgTree, NodeStatus, RawTriple, Triple, TripleKey};
pub use openkg::OpenKg;
pub use prompting::{build_prompt, parse_triples, InstructionTemplate, PromptBundle};
pub use pruner::{Label, Pruner};
pub use verifier::{ErrorType, Rule, RuleSet, VerificationReport};
