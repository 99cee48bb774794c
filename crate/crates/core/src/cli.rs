//! Command-line interface. Exit codes: 0 success, 1 user error (bad flags,
//! paths or input files), 2 runtime failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::builder::{sample_roots, Builder};
use crate::config::{ConfigLayer, Settings};
use crate::error::Error;
use crate::eval::{self, JudgeView};
use crate::export::{export, ExportFormat};
use crate::model::{Entity, KgTree, TripleKey};
use crate::openkg::OpenKg;
use crate::pruner::extract_training_pairs;

#[derive(Parser, Debug)]
#[command(
    name = "kgforge",
    version,
    about = "Build and evaluate multi-level domain knowledge graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct a graph level by level and write a snapshot.
    Build(Box<BuildArgs>),
    /// Convert a snapshot to DOT, GraphML or TSV.
    Export(ExportArgs),
    /// Compute precision, number of recalls and domain specificity.
    Evaluate(EvaluateArgs),
    /// Compare two judgment files (B is the reference).
    Agreement(AgreementArgs),
    /// Emit balanced growing/pruned training pairs from an open KG.
    PruneTrainData(PruneTrainArgs),
}

#[derive(Args, Debug, Default)]
struct BuildArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus files (plain text or .jsonl with a `text` field).
    #[arg(long, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Tab-separated open KG (head, relation, tail) used for examples.
    #[arg(long)]
    open_kg: Option<PathBuf>,
    /// Verification rules, one JSON object per line; no conflict rules if absent.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// `mock:<transcript>` or `remote`.
    #[arg(long)]
    llm: Option<String>,
    /// Snapshot path, rewritten after every level.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from this snapshot instead of starting from roots.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Comma-separated root entities; sampled from the open KG if absent.
    #[arg(long, value_delimiter = ',')]
    roots: Vec<String>,
    /// Deepest level to expand.
    #[arg(long)]
    max_levels: Option<u32>,
    /// Stop before a level once this many entities exist.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Concurrent expansions per level; output does not depend on it.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Fewer parsed triples than this forces regeneration.
    #[arg(long)]
    min_triples: Option<usize>,
    /// Regenerate when more triples than this are flagged.
    #[arg(long)]
    elimination_threshold: Option<usize>,
    /// Reprompts allowed per entity.
    #[arg(long)]
    regeneration_rounds: Option<u32>,
    /// Token budget for retrieved context.
    #[arg(long)]
    retrieval_cap: Option<usize>,
    /// Token budget for the context placed in the prompt.
    #[arg(long)]
    prompt_text_cap: Option<usize>,
    /// Seed for example and root sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Roots drawn from the open KG when --roots is absent.
    #[arg(long)]
    root_sample_size: Option<usize>,
    /// Sampling temperature sent to the LLM.
    #[arg(long)]
    temperature: Option<f64>,
    /// Completion token limit sent to the LLM.
    #[arg(long)]
    max_output_tokens: Option<u32>,
    /// Model id sent to the LLM.
    #[arg(long)]
    model: Option<String>,
    /// Client-side rate limit for the remote LLM; 0 disables it.
    #[arg(long)]
    requests_per_minute: Option<u32>,
}

impl BuildArgs {
    fn flag_layer(&self) -> ConfigLayer {
        ConfigLayer {
            corpus: (!self.corpus.is_empty()).then(|| self.corpus.clone()),
            open_kg: self.open_kg.clone(),
            rules: self.rules.clone(),
            llm: self.llm.clone(),
            out: self.out.clone(),
            roots: (!self.roots.is_empty()).then(|| self.roots.clone()),
            max_levels: self.max_levels,
            max_nodes: self.max_nodes,
            parallelism: self.parallelism,
            min_triples: self.min_triples,
            elimination_threshold: self.elimination_threshold,
            regeneration_rounds: self.regeneration_rounds,
            retrieval_cap_tokens: self.retrieval_cap,
            prompt_text_cap_tokens: self.prompt_text_cap,
            rng_seed: self.seed,
            root_sample_size: self.root_sample_size,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            model_id: self.model.clone(),
            requests_per_minute: self.requests_per_minute,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Snapshot written by `build`.
    #[arg(long)]
    snapshot: PathBuf,
    /// dot, graphml or tsv
    #[arg(long)]
    format: String,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Snapshot written by `build`.
    #[arg(long)]
    snapshot: PathBuf,
    /// Judgment records, one JSON object per line.
    #[arg(long)]
    judgments: PathBuf,
    /// Open KG; triples found in it do not count as domain-specific.
    #[arg(long)]
    open_kg: Option<PathBuf>,
    /// Judge whose verdicts count; defaults to the first judge in the file.
    #[arg(long)]
    judge: Option<String>,
}

#[derive(Args, Debug)]
struct AgreementArgs {
    /// Judgments of the judge under test.
    #[arg(long)]
    a: PathBuf,
    /// Reference judgments.
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args, Debug)]
struct PruneTrainArgs {
    /// Tab-separated open KG to draw entities from.
    #[arg(long)]
    open_kg: PathBuf,
    /// Pairs per label.
    #[arg(long)]
    n: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    User(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Llm(_) | Error::IllegalTransition { .. } | Error::UnknownEntity(_) | Error::MalformedTriple(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::User(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn write_output(path: Option<&Path>, content: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn write_snapshot_atomic(tree: &KgTree, path: &Path) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    tree.write_snapshot(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::User(format!("missing required flag {flag}")))
}

fn cmd_build(args: BuildArgs) -> CliResult {
    let mut layer = args.flag_layer();
    if let Some(cfg) = &args.config {
        layer = layer.over(ConfigLayer::load(cfg)?);
    }
    let settings: Settings = layer.resolve()?;
    let out = require(settings.out.clone(), "--out")?;
    let inputs = settings.load_inputs()?;
    let open_kg = &inputs.open_kg;
    let deps = inputs.deps(&settings);
    let builder = Builder::new(settings.build.clone(), deps)?;
    let checkpoint = |tree: &KgTree, _: &crate::builder::LevelStats| write_snapshot_atomic(tree, &out);

    let (tree, report) = match &args.resume {
        Some(snapshot) => builder.resume(KgTree::load_snapshot(snapshot)?, checkpoint),
        None => {
            let roots: Vec<Entity> = match &settings.roots {
                Some(names) => names
                    .iter()
                    .map(|n| Entity::new(n))
                    .collect::<Result<_, _>>()
                    .map_err(|_| CliError::User("--roots contains an empty entity".into()))?,
                None => sample_roots(open_kg, settings.build.root_sample_size, settings.build.rng_seed)?,
            };
            builder.build_with(&roots, checkpoint)
        }
    }
    .map_err(|e| match e {
        Error::Io { .. } => CliError::Runtime(e.to_string()),
        other => other.into(),
    })?;
    write_snapshot_atomic(&tree, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!(
        "wrote {} triples, {} nodes, {} levels to {} (stopped: {:?})",
        tree.len(),
        tree.node_count(),
        tree.max_level_reached(),
        out.display(),
        report.stop
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult {
    let format: ExportFormat = args.format.parse()?;
    let tree = KgTree::load_snapshot(&args.snapshot)?;
    write_output(args.out.as_deref(), &export(&tree, format))
}

/// Verified triple counts per expanded entity, in first-seen order.
fn per_source_counts(tree: &KgTree) -> Vec<usize> {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in tree.triples() {
        let k = t.source_entity.normalized().to_string();
        let c = counts.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            0
        });
        *c += 1;
    }
    order.iter().map(|k| counts[k]).collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let tree = KgTree::load_snapshot(&args.snapshot)?;
    let judgments = eval::load_judgments(&args.judgments)?;
    let judge = match &args.judge {
        Some(id) => JudgeView::new(&judgments, id)?,
        None => JudgeView::first(&judgments)?,
    };
    let kg = args.open_kg.as_deref().map(OpenKg::load).transpose()?;
    let keys: Vec<TripleKey> = tree.triples().map(|t| t.key()).collect();
    let report = eval::evaluate(&judge, &keys, &per_source_counts(&tree), kg.as_ref())?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(None, &(json + "\n"))
}

fn cmd_agreement(args: AgreementArgs) -> CliResult {
    let a = JudgeView::first(&eval::load_judgments(&args.a)?)?;
    let b = JudgeView::first(&eval::load_judgments(&args.b)?)?;
    let result = eval::agreement(&a, &b)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(None, &(json + "\n"))
}

fn cmd_prune_train_data(args: PruneTrainArgs) -> CliResult {
    let kg = OpenKg::load(&args.open_kg)?;
    let pairs = extract_training_pairs(&kg, args.n, args.seed)?;
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(&p).map_err(|e| CliError::Runtime(e.to_string()))?);
        out.push('\n');
    }
    write_output(args.out.as_deref(), &out)
}

/// Parse `args` (including the program name) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Build(a) => cmd_build(*a),
        Command::Export(a) => cmd_export(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Agreement(a) => cmd_agreement(a),
        Command::PruneTrainData(a) => cmd_prune_train_data(a),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
