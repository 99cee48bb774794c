#![allow(dead_code)]

use std::path::PathBuf;

use kgforge::builder::BuildDeps;
use kgforge::corpus::{CorpusIndex, Segmenter};
use kgforge::llm::{GenerationParams, MockLlm};
use kgforge::model::{Entity, KgTree};
use kgforge::openkg::OpenKg;
use kgforge::prompting::InstructionTemplate;
use kgforge::pruner::Pruner;
use kgforge::verifier::RuleSet;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

pub fn toy(name: &str) -> PathBuf {
    toy_dir().join(name)
}

pub fn ent(s: &str) -> Entity {
    Entity::new(s).unwrap()
}

/// Read-only inputs of the bundled toy build.
pub struct Toy {
    pub corpus: CorpusIndex,
    pub kg: OpenKg,
    pub rules: RuleSet,
    pub pruner: Pruner,
    pub template: InstructionTemplate,
    pub params: GenerationParams,
}

impl Toy {
    pub fn load() -> Self {
        Toy {
            corpus: CorpusIndex::load(&[toy("corpus.txt")], &Segmenter::default()).unwrap(),
            kg: OpenKg::load(&toy("openkg.tsv")).unwrap(),
            rules: RuleSet::load(&toy("rules.jsonl")).unwrap(),
            pruner: Pruner::default(),
            template: InstructionTemplate::default(),
            params: GenerationParams::default(),
        }
    }

    pub fn mock(&self) -> MockLlm {
        MockLlm::load(&toy("transcript.jsonl")).unwrap()
    }

    pub fn deps<'a>(&'a self, llm: &'a dyn kgforge::llm::LlmClient) -> BuildDeps<'a> {
        BuildDeps {
            corpus: &self.corpus,
            open_kg: &self.kg,
            rules: &self.rules,
            llm,
            pruner: &self.pruner,
            template: &self.template,
            params: &self.params,
        }
    }

    pub fn roots() -> Vec<Entity> {
        vec![ent("rice"), ent("paddy field")]
    }
}

pub fn snapshot_bytes(tree: &KgTree) -> Vec<u8> {
    let mut buf = Vec::new();
    tree.write_snapshot(&mut buf).unwrap();
    buf
}

/// Scripted response where `entity` heads every triple.
pub fn script(entity: &str, triples: &[(&str, &str)]) -> kgforge::llm::TranscriptEntry {
    kgforge::llm::TranscriptEntry {
        matcher: format!("head entity is \"{entity}\""),
        response: triples
            .iter()
            .map(|(r, t)| format!("({entity} | {r} | {t})"))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Independent reference: uniform sample of `k` of `0..n` without
/// replacement, drawn with a ChaCha8 stream seeded from `seed` by swapping
/// position `i` with a uniform position in `i..n`.
pub fn reference_sample(seed: u64, n: usize, k: usize) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = (0..n).collect();
    let mut drawn = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        slots.swap(i, j);
        drawn.push(slots[i]);
    }
    drawn
}
