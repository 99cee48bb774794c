//! Layered settings: command-line flags over a TOML config file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::builder::{BuildConfig, BuildDeps};
use crate::corpus::{CorpusIndex, Segmenter};
use crate::error::{Error, Result};
use crate::llm::{GenerationParams, LlmClient, MockLlm, RemoteLlm};
use crate::openkg::OpenKg;
use crate::prompting::InstructionTemplate;
use crate::pruner::{HeuristicPruner, Pruner, RemotePruner, DEFAULT_PRUNE_PREFIXES, DEFAULT_UNITS};
use crate::verifier::RuleSet;

/// Every configurable key. Used for both the config file and the flag
/// layer; `None` means "not set at this layer".
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub corpus: Option<Vec<PathBuf>>,
    pub open_kg: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub llm: Option<String>,
    pub out: Option<PathBuf>,
    pub roots: Option<Vec<String>>,
    pub max_levels: Option<u32>,
    pub max_nodes: Option<usize>,
    pub parallelism: Option<usize>,
    pub min_triples: Option<usize>,
    pub elimination_threshold: Option<usize>,
    pub regeneration_rounds: Option<u32>,
    pub retrieval_cap_tokens: Option<usize>,
    pub prompt_text_cap_tokens: Option<usize>,
    pub rng_seed: Option<u64>,
    pub root_sample_size: Option<usize>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub model_id: Option<String>,
    pub instruction_template: Option<String>,
    pub unit_lexicon: Option<Vec<String>>,
    pub prune_prefixes: Option<Vec<String>>,
    pub requests_per_minute: Option<u32>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($field:ident),+ $(,)?) => {
        ConfigLayer { $($field: $hi.$field.or($lo.$field)),+ }
    };
}

impl ConfigLayer {
    /// Parse a TOML file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut layer: ConfigLayer =
            toml::from_str(&content).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        layer.corpus = layer.corpus.map(|v| v.into_iter().map(rebase).collect());
        layer.open_kg = layer.open_kg.map(rebase);
        layer.rules = layer.rules.map(rebase);
        layer.out = layer.out.map(rebase);
        if let Some(spec) = &layer.llm {
            if let Some(p) = spec.strip_prefix("mock:") {
                layer.llm = Some(format!("mock:{}", rebase(PathBuf::from(p)).display()));
            }
        }
        Ok(layer)
    }

    /// Keys set in `self` win over `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        overlay!(
            self,
            lower,
            corpus,
            open_kg,
            rules,
            llm,
            out,
            roots,
            max_levels,
            max_nodes,
            parallelism,
            min_triples,
            elimination_threshold,
            regeneration_rounds,
            retrieval_cap_tokens,
            prompt_text_cap_tokens,
            rng_seed,
            root_sample_size,
            temperature,
            max_output_tokens,
            model_id,
            instruction_template,
            unit_lexicon,
            prune_prefixes,
            requests_per_minute,
        )
    }

    pub fn resolve(self) -> Result<Settings> {
        let d = BuildConfig::default();
        let build = BuildConfig {
            max_levels: self.max_levels.unwrap_or(d.max_levels),
            max_nodes: self.max_nodes.unwrap_or(d.max_nodes),
            parallelism: self.parallelism.unwrap_or(d.parallelism),
            min_triples: self.min_triples.unwrap_or(d.min_triples),
            elimination_threshold: self.elimination_threshold.unwrap_or(d.elimination_threshold),
            regeneration_rounds: self.regeneration_rounds.unwrap_or(d.regeneration_rounds),
            retrieval_cap_tokens: self.retrieval_cap_tokens.unwrap_or(d.retrieval_cap_tokens),
            prompt_text_cap_tokens: self.prompt_text_cap_tokens.unwrap_or(d.prompt_text_cap_tokens),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
            root_sample_size: self.root_sample_size.unwrap_or(d.root_sample_size),
        };
        build.validate()?;

        let gp = GenerationParams::default();
        let params = GenerationParams {
            temperature: self.temperature.unwrap_or(gp.temperature),
            max_output_tokens: self.max_output_tokens.unwrap_or(gp.max_output_tokens),
            model_id: self.model_id.unwrap_or(gp.model_id),
        };
        params.validate().map_err(|e| Error::Config(e.to_string()))?;

        let template = match self.instruction_template {
            Some(t) => InstructionTemplate::new(t)?,
            None => InstructionTemplate::default(),
        };
        let llm = self.llm.as_deref().map(LlmSpec::parse).transpose()?;

        Ok(Settings {
            build,
            params,
            template,
            unit_lexicon: self
                .unit_lexicon
                .unwrap_or_else(|| DEFAULT_UNITS.iter().map(|s| s.to_string()).collect()),
            prune_prefixes: self
                .prune_prefixes
                .unwrap_or_else(|| DEFAULT_PRUNE_PREFIXES.iter().map(|s| s.to_string()).collect()),
            corpus: self.corpus.unwrap_or_default(),
            open_kg: self.open_kg,
            rules: self.rules,
            llm,
            out: self.out,
            roots: self.roots,
            requests_per_minute: self.requests_per_minute.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmSpec {
    Mock(PathBuf),
    Remote,
}

impl LlmSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "remote" {
            Ok(LlmSpec::Remote)
        } else if let Some(p) = s.strip_prefix("mock:").filter(|p| !p.is_empty()) {
            Ok(LlmSpec::Mock(PathBuf::from(p)))
        } else {
            Err(Error::Config(format!(
                "--llm expects `mock:<path>` or `remote`, got `{s}`"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub build: BuildConfig,
    pub params: GenerationParams,
    pub template: InstructionTemplate,
    pub unit_lexicon: Vec<String>,
    pub prune_prefixes: Vec<String>,
    pub corpus: Vec<PathBuf>,
    pub open_kg: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub llm: Option<LlmSpec>,
    pub out: Option<PathBuf>,
    pub roots: Option<Vec<String>>,
    /// 0 disables client-side rate limiting.
    pub requests_per_minute: u32,
}

impl Settings {
    pub fn heuristic_pruner(&self) -> HeuristicPruner {
        HeuristicPruner::new(self.unit_lexicon.iter().cloned(), self.prune_prefixes.iter().cloned())
    }

    /// Load every input a build needs. Fails with `Error::Config` naming the
    /// flag when a required input is not configured.
    pub fn load_inputs(&self) -> Result<BuildInputs> {
        let missing = |flag: &str| Error::Config(format!("missing required flag {flag}"));
        if self.corpus.is_empty() {
            return Err(missing("--corpus"));
        }
        let open_kg_path = self.open_kg.as_ref().ok_or_else(|| missing("--open-kg"))?;
        let llm_spec = self.llm.as_ref().ok_or_else(|| missing("--llm"))?;

        let corpus = CorpusIndex::load(&self.corpus, &Segmenter::default())?;
        let open_kg = OpenKg::load(open_kg_path)?;
        let rules = match &self.rules {
            Some(p) => RuleSet::load(p)?,
            None => RuleSet::default(),
        };
        let llm: Box<dyn LlmClient> = match llm_spec {
            LlmSpec::Mock(p) => Box::new(MockLlm::load(p)?),
            LlmSpec::Remote => Box::new(RemoteLlm::from_env()?.with_rate_limit(self.requests_per_minute)),
        };
        let mut pruner = Pruner::heuristic(self.heuristic_pruner());
        if let Some(remote) = RemotePruner::from_env() {
            pruner = pruner.with_remote(remote);
        }
        log::info!(
            "loaded {} sentences, {} open KG records, {} rules",
            corpus.len(),
            open_kg.len(),
            rules.len()
        );
        Ok(BuildInputs {
            corpus,
            open_kg,
            rules,
            llm,
            pruner,
        })
    }
}

/// Owned build inputs; borrow them as [`BuildDeps`] with [`BuildInputs::deps`].
pub struct BuildInputs {
    pub corpus: CorpusIndex,
    pub open_kg: OpenKg,
    pub rules: RuleSet,
    pub llm: Box<dyn LlmClient>,
    pub pruner: Pruner,
}

impl BuildInputs {
    pub fn deps<'a>(&'a self, settings: &'a Settings) -> BuildDeps<'a> {
        BuildDeps {
            corpus: &self.corpus,
            open_kg: &self.open_kg,
            rules: &self.rules,
            llm: self.llm.as_ref(),
            pruner: &self.pruner,
            template: &settings.template,
            params: &settings.params,
        }
    }
}
