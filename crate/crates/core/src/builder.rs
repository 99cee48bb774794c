//! Level-by-level construction: every growing entity of the current level
//! is expanded (retrieve, prompt, generate, verify, prune) and the growing
//! tails it introduces form the next level.
//!
//! Expansions within a level run in parallel against a read-only view of
//! the tree; their results are merged serially in frontier order, so the
//! final tree does not depend on `parallelism`.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::llm::{GenerationParams, LlmClient};
use crate::model::{Entity, KgTree, NodeStatus, Triple};
use crate::openkg::OpenKg;
use crate::prompting::{InstructionTemplate, PromptBundle};
use crate::pruner::{Label, Pruner, PrunerVerdict};
use crate::sampling::{sample_indices, seeded_rng};
use crate::verifier::{verify_loop, RuleSet, VerifyLimits};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub max_levels: u32,
    pub max_nodes: usize,
    pub parallelism: usize,
    pub min_triples: usize,
    pub elimination_threshold: usize,
    pub regeneration_rounds: u32,
    pub retrieval_cap_tokens: usize,
    pub prompt_text_cap_tokens: usize,
    pub rng_seed: u64,
    pub root_sample_size: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_levels: 3,
            max_nodes: 1_000_000,
            parallelism: 1,
            min_triples: 3,
            elimination_threshold: 3,
            regeneration_rounds: 2,
            retrieval_cap_tokens: 2000,
            prompt_text_cap_tokens: 500,
            rng_seed: 0,
            root_sample_size: 120,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_levels", self.max_levels as usize),
            ("max_nodes", self.max_nodes),
            ("parallelism", self.parallelism),
            ("min_triples", self.min_triples),
            ("elimination_threshold", self.elimination_threshold),
            ("retrieval_cap_tokens", self.retrieval_cap_tokens),
            ("prompt_text_cap_tokens", self.prompt_text_cap_tokens),
            ("root_sample_size", self.root_sample_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.prompt_text_cap_tokens > self.retrieval_cap_tokens {
            return Err(Error::Config(format!(
                "prompt_text_cap_tokens ({}) exceeds retrieval_cap_tokens ({})",
                self.prompt_text_cap_tokens, self.retrieval_cap_tokens
            )));
        }
        Ok(())
    }

    pub fn verify_limits(&self) -> VerifyLimits {
        VerifyLimits {
            min_triples: self.min_triples,
            elimination_threshold: self.elimination_threshold,
            max_regeneration_rounds: self.regeneration_rounds,
        }
    }
}

/// Everything an expansion reads.
#[derive(Clone, Copy)]
pub struct BuildDeps<'a> {
    pub corpus: &'a CorpusIndex,
    pub open_kg: &'a OpenKg,
    pub rules: &'a RuleSet,
    pub llm: &'a dyn LlmClient,
    pub pruner: &'a Pruner,
    pub template: &'a InstructionTemplate,
    pub params: &'a GenerationParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpansionStats {
    pub llm_calls: usize,
    pub generated: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionOutcome {
    /// The corpus never mentions the entity; no LLM call was made.
    NoContext,
    /// The LLM call failed; the entity is isolated and the build continues.
    Failed(String),
    Verified {
        triples: Vec<Triple>,
        verdicts: Vec<PrunerVerdict>,
    },
}

/// Result of expanding one entity, before it is merged into the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub entity: Entity,
    pub level: u32,
    pub outcome: ExpansionOutcome,
    pub stats: ExpansionStats,
}

/// Run retrieve → prompt → verify → classify for one entity without
/// touching the tree. Tails already present in `tree` are not classified.
pub fn generate_expansion(tree: &KgTree, e: &Entity, level: u32, cfg: &BuildConfig, deps: BuildDeps<'_>) -> Expansion {
    let mut stats = ExpansionStats::default();
    let done = |outcome, stats| Expansion {
        entity: e.clone(),
        level,
        outcome,
        stats,
    };

    let cap = cfg.prompt_text_cap_tokens.min(cfg.retrieval_cap_tokens);
    let text = match deps.corpus.retrieve_context(e, cap) {
        Ok(text) => text,
        Err(Error::NoContext(_)) => return done(ExpansionOutcome::NoContext, stats),
        Err(err) => return done(ExpansionOutcome::Failed(err.to_string()), stats),
    };
    let examples = match deps.open_kg.retrieve_examples(e, cfg.rng_seed) {
        Ok(ex) => ex,
        Err(Error::EmptyKg) => Vec::new(),
        Err(err) => return done(ExpansionOutcome::Failed(err.to_string()), stats),
    };
    let bundle = PromptBundle::new(e.clone(), text, deps.template, cfg.min_triples, examples);

    let outcome = verify_loop(
        |prompt: &str| deps.llm.complete(prompt, deps.params),
        &bundle,
        deps.rules,
        cfg.verify_limits(),
        level,
    );
    match outcome {
        Ok(outcome) => {
            stats.llm_calls = outcome.calls;
            stats.generated = outcome.rounds.iter().map(|r| r.generated).sum();
            stats.flagged = outcome.rounds.iter().map(|r| r.flagged).sum();
            let mut seen = HashSet::new();
            let verdicts = outcome
                .triples
                .iter()
                .map(|t| &t.tail)
                .filter(|tail| tree.node(tail.normalized()).is_none())
                .filter(|tail| seen.insert(tail.normalized().to_string()))
                .map(|tail| deps.pruner.classify(tail))
                .collect();
            done(
                ExpansionOutcome::Verified {
                    triples: outcome.triples,
                    verdicts,
                },
                stats,
            )
        }
        Err(err) => {
            // a failed first call still counts as one attempt
            stats.llm_calls = 1;
            done(ExpansionOutcome::Failed(err.to_string()), stats)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LevelStats {
    pub level: u32,
    pub expanded: usize,
    pub generated: usize,
    pub flagged: usize,
    pub accepted: usize,
    pub inserted: usize,
    pub pruned: usize,
    pub failed: usize,
    pub no_context: usize,
}

/// Merge an expansion into the tree and return the triples actually
/// inserted. New tails take the pruner's verdict; tails already known keep
/// their status and never re-enter a frontier.
pub fn apply_expansion(tree: &mut KgTree, exp: Expansion, stats: &mut LevelStats) -> Result<Vec<Triple>> {
    stats.expanded += 1;
    stats.generated += exp.stats.generated;
    stats.flagged += exp.stats.flagged;
    let (triples, verdicts) = match exp.outcome {
        ExpansionOutcome::NoContext => {
            stats.no_context += 1;
            tree.mark_expanded_empty(&exp.entity)?;
            return Ok(Vec::new());
        }
        ExpansionOutcome::Failed(msg) => {
            stats.failed += 1;
            log::warn!("expansion of `{}` failed: {msg}", exp.entity);
            tree.mark_expanded_empty(&exp.entity)?;
            return Ok(Vec::new());
        }
        ExpansionOutcome::Verified { triples, verdicts } => (triples, verdicts),
    };
    stats.accepted += triples.len();

    let mut inserted = Vec::new();
    for t in triples {
        let tail_is_new = tree.node(t.tail.normalized()).is_none();
        let tail = t.tail.clone();
        if tree.insert_triple(t.clone())? {
            inserted.push(t);
        }
        if tail_is_new {
            let pruned = verdicts
                .iter()
                .any(|v| v.entity.normalized() == tail.normalized() && v.label == Label::Pruned);
            if pruned {
                tree.mark_status(&tail, NodeStatus::Pruned)?;
                stats.pruned += 1;
            }
        }
    }
    stats.inserted += inserted.len();
    if inserted.is_empty() {
        tree.mark_expanded_empty(&exp.entity)?;
    } else {
        tree.mark_status(&exp.entity, NodeStatus::Expanded)?;
    }
    Ok(inserted)
}

/// Expand a single growing entity in place.
pub fn expand_entity(
    tree: &mut KgTree,
    e: &Entity,
    level: u32,
    cfg: &BuildConfig,
    deps: BuildDeps<'_>,
) -> Result<Vec<Triple>> {
    match tree.status(e) {
        Some(NodeStatus::Growing) => {}
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "`{e}` is {other}, only growing entities can be expanded"
            )))
        }
        None => {
            tree.add_root(e.clone());
        }
    }
    let exp = generate_expansion(tree, e, level, cfg, deps);
    apply_expansion(tree, exp, &mut LevelStats::default())
}

fn expand_level(
    tree: &KgTree,
    frontier: &[Entity],
    level: u32,
    cfg: &BuildConfig,
    deps: BuildDeps<'_>,
) -> Vec<Expansion> {
    let workers = cfg.parallelism.clamp(1, frontier.len().max(1));
    if workers == 1 {
        return frontier
            .iter()
            .map(|e| generate_expansion(tree, e, level, cfg, deps))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Expansion>>> = frontier.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(e) = frontier.get(i) else { break };
                let exp = generate_expansion(tree, e, level, cfg, deps);
                *slots[i].lock().unwrap() = Some(exp);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every frontier slot is filled"))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub levels: Vec<LevelStats>,
    /// Every entity handed to an expansion, in order.
    pub expanded: Vec<Entity>,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StopReason {
    #[default]
    EmptyFrontier,
    MaxLevels,
    MaxNodes,
}

/// Drives a build, calling `on_level` after each merged level (used for
/// checkpoints).
pub struct Builder<'a> {
    cfg: BuildConfig,
    deps: BuildDeps<'a>,
}

impl<'a> Builder<'a> {
    pub fn new(cfg: BuildConfig, deps: BuildDeps<'a>) -> Result<Self> {
        cfg.validate()?;
        Ok(Builder { cfg, deps })
    }

    pub fn build(&self, roots: &[Entity]) -> Result<(KgTree, BuildReport)> {
        self.build_with(roots, |_, _| Ok(()))
    }

    pub fn build_with(
        &self,
        roots: &[Entity],
        on_level: impl FnMut(&KgTree, &LevelStats) -> Result<()>,
    ) -> Result<(KgTree, BuildReport)> {
        if roots.is_empty() {
            return Err(Error::InvalidArgument("at least one root entity is required".into()));
        }
        let mut tree = KgTree::new();
        let mut frontier = Vec::new();
        for r in roots {
            if tree.add_root(r.clone()) {
                frontier.push(r.clone());
            }
        }
        self.run(tree, frontier, 1, on_level)
    }

    /// Continue a build from a checkpointed tree: the growing tails of its
    /// deepest level form the next frontier.
    pub fn resume(
        &self,
        tree: KgTree,
        on_level: impl FnMut(&KgTree, &LevelStats) -> Result<()>,
    ) -> Result<(KgTree, BuildReport)> {
        let last = tree.max_level_reached();
        let frontier = if last == 0 {
            tree.roots()
                .iter()
                .filter(|r| tree.status(r) == Some(NodeStatus::Growing))
                .cloned()
                .collect()
        } else {
            tree.frontier(last)
        };
        self.run(tree, frontier, last + 1, on_level)
    }

    fn run(
        &self,
        mut tree: KgTree,
        mut frontier: Vec<Entity>,
        mut level: u32,
        mut on_level: impl FnMut(&KgTree, &LevelStats) -> Result<()>,
    ) -> Result<(KgTree, BuildReport)> {
        let cfg = &self.cfg;
        let mut report = BuildReport::default();
        let mut expanded: HashSet<String> = HashSet::new();
        loop {
            frontier
                .retain(|e| tree.status(e) == Some(NodeStatus::Growing) && expanded.insert(e.normalized().to_string()));
            if frontier.is_empty() {
                report.stop = StopReason::EmptyFrontier;
                break;
            }
            if level > cfg.max_levels {
                report.stop = StopReason::MaxLevels;
                break;
            }
            if tree.node_count() >= cfg.max_nodes {
                report.stop = StopReason::MaxNodes;
                break;
            }

            let expansions = expand_level(&tree, &frontier, level, cfg, self.deps);
            let mut stats = LevelStats {
                level,
                ..Default::default()
            };
            for exp in expansions {
                report.expanded.push(exp.entity.clone());
                apply_expansion(&mut tree, exp, &mut stats)?;
            }
            log::info!(
                "level {}: expanded {}, generated {}, flagged {}, accepted {}, inserted {}, pruned {}, no-context {}, failed {}, nodes {}",
                stats.level,
                stats.expanded,
                stats.generated,
                stats.flagged,
                stats.accepted,
                stats.inserted,
                stats.pruned,
                stats.no_context,
                stats.failed,
                tree.node_count()
            );
            on_level(&tree, &stats)?;
            report.levels.push(stats);
            frontier = tree.frontier(level);
            level += 1;
        }
        if report.stop == StopReason::EmptyFrontier && level > 1 {
            log::info!("construction stopped: no growing entities after level {}", level - 1);
        }
        Ok((tree, report))
    }
}

/// Uniform seeded sample of `n` distinct head entities.
pub fn sample_roots(kg: &OpenKg, n: usize, seed: u64) -> Result<Vec<Entity>> {
    let heads: Vec<&str> = kg.head_vocab().collect();
    if heads.len() < n {
        return Err(Error::InsufficientPool {
            requested: n,
            available: heads.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    sample_indices(&mut rng, heads.len(), n)
        .into_iter()
        .map(|i| Entity::new(heads[i]))
        .collect()
}
