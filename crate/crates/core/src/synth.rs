//! Synthetic datasets with known ground truth.
//!
//! Two generators live here. The IRT generator draws 2PL items and a normal
//! cohort and produces response logs whose calibrated difficulties can be
//! compared with the truth. The teacher generator writes items whose
//! explanations carry marker words; a fixed selection model of the same
//! shape as [`crate::model`] turns those markers into option utilities, a
//! simulated cohort into counts, and the population key rate into the
//! difficulty label.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{cache_key, AugmentedMcq, CacheRecord, GenerationConfig, GenerationMetadata, OptionRole, PromptTemplate};
use crate::corpus::{aggregate_responses, Corpus, CorpusError, Mcq, Provenance, ResponseRecord};
use crate::irt::{simulate_responses, IrtError, ItemParams, SimulatedItem};
use crate::simplex::SelectionDistribution;
use crate::DISTRACTOR_COUNT;

// ============================================================================
// IRT synthetic cohort
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrtSynthSpec {
    pub items: usize,
    pub students: usize,
    pub seed: u64,
    pub a_range: [f64; 2],
    pub b_range: [f64; 2],
}

impl Default for IrtSynthSpec {
    fn default() -> Self {
        Self {
            items: 300,
            students: 2000,
            seed: 1,
            a_range: [0.7, 2.0],
            b_range: [-2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrtSynthData {
    /// Items with aggregated counts and the true `b` as difficulty.
    pub corpus: Corpus,
    pub items: Vec<SimulatedItem>,
    pub abilities: Vec<(String, f64)>,
    pub responses: Vec<ResponseRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Irt(#[from] IrtError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// An addition item with three distinct wrong answers.
fn arithmetic_item(id: String, x: i64, y: i64) -> Mcq {
    let sum = x + y;
    Mcq {
        id,
        stem: format!("What is {x} + {y}?"),
        key: sum.to_string(),
        distractors: [(sum + 1).to_string(), (sum - 1).to_string(), (sum + 10).to_string()],
        counts: [0; 4],
        difficulty: None,
        labels: None,
    }
}

fn dirichlet_ones<R: Rng>(rng: &mut R) -> [f64; DISTRACTOR_COUNT] {
    // Normalized unit exponentials.
    let e: [f64; DISTRACTOR_COUNT] = std::array::from_fn(|_| -(1.0 - rng.random::<f64>()).ln());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

pub fn irt_synth(spec: &IrtSynthSpec) -> Result<IrtSynthData> {
    if spec.items == 0 || spec.students == 0 {
        return Err(SynthError::InvalidSpec("items and students must be positive".into()));
    }
    if !(spec.a_range[0] > 0.0 && spec.a_range[0] <= spec.a_range[1] && spec.b_range[0] <= spec.b_range[1]) {
        return Err(SynthError::InvalidSpec("bad parameter ranges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sims = Vec::with_capacity(spec.items);
    let mut mcqs = Vec::with_capacity(spec.items);
    for i in 0..spec.items {
        let id = format!("q{i:05}");
        let a = rng.random_range(spec.a_range[0]..=spec.a_range[1]);
        let b = rng.random_range(spec.b_range[0]..=spec.b_range[1]);
        sims.push(SimulatedItem {
            id: id.clone(),
            params: ItemParams::two_pl(a, b)?,
            distractor_profile: dirichlet_ones(&mut rng),
        });
        let mut m = arithmetic_item(id, rng.random_range(2..100), rng.random_range(2..100));
        m.difficulty = Some(b);
        mcqs.push(m);
    }
    let cohort = simulate_responses(&sims, spec.students, spec.seed.wrapping_add(1))?;
    let base = Corpus::new(
        mcqs,
        Provenance {
            name: "synthetic-irt".into(),
            source: format!("seed {}", spec.seed),
            window: None,
        },
    )?;
    let corpus = aggregate_responses(&cohort.responses, &base)?;
    Ok(IrtSynthData {
        corpus,
        items: cohort.items,
        abilities: cohort.abilities,
        responses: cohort.responses,
    })
}

/// `id,a,b,c` per item.
pub fn write_truth_csv<W: Write>(items: &[SimulatedItem], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "a", "b", "c"])?;
    for it in items {
        w.write_record([
            it.id.clone(),
            it.params.a.to_string(),
            it.params.b.to_string(),
            it.params.c.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ============================================================================
// Teacher-generated corpus
// ============================================================================

/// Topic names share syllable counts so that only their identity, not their
/// surface statistics, carries the difficulty offset.
const TOPICS: [(&str, f64); 5] = [
    ("alpha", -1.5),
    ("bravo", -0.75),
    ("delta", 0.0),
    ("gamma", 0.75),
    ("sigma", 1.5),
];

/// Marker words in the key's reasoning, ordered by how much work the
/// reasoning describes.
const EFFORT_WORDS: [&str; 6] = ["direct", "brief", "moderate", "lengthy", "involved", "intricate"];

/// Marker words in distractor feedback, ordered by how attractive the error is.
const LURE_WORDS: [&str; 4] = ["unlikely", "occasional", "common", "tempting"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSpec {
    pub items: usize,
    /// Students answering each item (the counts).
    pub cohort: usize,
    /// Size of the fixed population defining the difficulty label.
    pub population: usize,
    pub seed: u64,
    /// Key utility at zero effort.
    pub key_base: f64,
    /// Key utility lost per effort level.
    pub effort_step: f64,
    /// Distractor utility per lure level.
    pub lure_step: f64,
    /// Sensitivity of key utility to student ability.
    pub ability_weight: f64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        Self {
            items: 400,
            cohort: 300,
            population: 1000,
            seed: 7,
            key_base: 2.5,
            effort_step: 0.7,
            lure_step: 1.2,
            ability_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeacherData {
    /// Items with counts and difficulty labels (no generated text).
    pub corpus: Corpus,
    pub augmented: Vec<AugmentedMcq>,
    /// Completion records that let a replay generator reproduce `augmented`.
    pub fixtures: Vec<CacheRecord>,
    /// Teacher's population-average distribution per item.
    pub distributions: Vec<SelectionDistribution>,
}

struct TeacherItem {
    mcq: Mcq,
    reasoning: String,
    feedback: [String; DISTRACTOR_COUNT],
    utilities: [f64; 4],
}

fn stem_for(topic: usize, rng: &mut ChaCha8Rng) -> (String, i64) {
    let (x, y, z) = (
        rng.random_range(2..60i64),
        rng.random_range(2..60i64),
        rng.random_range(2..9i64),
    );
    let name = TOPICS[topic].0;
    // The operation count only loosely tracks the topic offset.
    if topic == 0 || topic == 3 {
        (format!("Exercise set {name}. What is {x} + {y}?"), x + y)
    } else {
        (format!("Exercise set {name}. What is {x} + {y} - {z}?"), x + y - z)
    }
}

fn teacher_item(i: usize, spec: &TeacherSpec, rng: &mut ChaCha8Rng) -> TeacherItem {
    let topic = rng.random_range(0..TOPICS.len());
    let effort = rng.random_range(0..EFFORT_WORDS.len());
    let lures: [usize; DISTRACTOR_COUNT] = std::array::from_fn(|_| rng.random_range(0..LURE_WORDS.len()));
    let (stem, answer) = stem_for(topic, rng);
    let mut offsets = [1i64, -1, 2, -2, 10, -10];
    offsets.shuffle(rng);
    let mcq = Mcq {
        id: format!("t{i:05}"),
        stem,
        key: answer.to_string(),
        distractors: std::array::from_fn(|k| (answer + offsets[k]).to_string()),
        counts: [0; 4],
        difficulty: None,
        labels: None,
    };
    let reasoning = format!(
        "This is a {} {} solution: combine the numbers in order and check the total.",
        EFFORT_WORDS[effort], TOPICS[topic].0
    );
    let feedback = lures.map(|q| format!("This is a {} mistake: the operation was applied incorrectly.", LURE_WORDS[q]));
    let key_u = spec.key_base - spec.effort_step * effort as f64 - TOPICS[topic].1;
    let utilities = [
        key_u,
        spec.lure_step * lures[0] as f64,
        spec.lure_step * lures[1] as f64,
        spec.lure_step * lures[2] as f64,
    ];
    TeacherItem {
        mcq,
        reasoning,
        feedback,
        utilities,
    }
}

/// Selection distribution of a student with ability `theta`.
fn student_choice(utilities: &[f64; 4], theta: f64, ability_weight: f64) -> SelectionDistribution {
    let mut u = *utilities;
    u[0] += ability_weight * theta;
    SelectionDistribution::softmax(u).expect("finite utilities")
}

fn sample_option(p: &SelectionDistribution, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, v) in p.0.iter().enumerate() {
        acc += v;
        if u < acc {
            return k;
        }
    }
    3
}

/// Builds the teacher corpus. Difficulty is `-logit` of the population
/// key rate; counts come from a separately sampled cohort.
pub fn teacher_corpus(spec: &TeacherSpec, generation: &GenerationConfig) -> Result<TeacherData> {
    if spec.items < 10 || spec.cohort == 0 || spec.population == 0 {
        return Err(SynthError::InvalidSpec("need >= 10 items and a positive cohort and population".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let population: Vec<f64> = (0..spec.population).map(|_| rng.sample(StandardNormal)).collect();
    let template = PromptTemplate::default();
    let mut mcqs = Vec::with_capacity(spec.items);
    let mut augmented = Vec::with_capacity(spec.items);
    let mut fixtures = Vec::with_capacity(4 * spec.items);
    let mut distributions = Vec::with_capacity(spec.items);

    for i in 0..spec.items {
        let mut item = teacher_item(i, spec, &mut rng);
        let per_student: Vec<SelectionDistribution> = population
            .iter()
            .map(|t| student_choice(&item.utilities, *t, spec.ability_weight))
            .collect();
        let avg = SelectionDistribution::mean(&per_student).expect("non-empty population");
        let key = avg.key();
        item.mcq.difficulty = Some(-(key / (1.0 - key)).ln());
        for _ in 0..spec.cohort {
            let theta: f64 = rng.sample(StandardNormal);
            let p = student_choice(&item.utilities, theta, spec.ability_weight);
            item.mcq.counts[sample_option(&p, &mut rng)] += 1;
        }

        let key_of = |option: &str, role| {
            cache_key(&template.version, &generation.model_name, &item.mcq.stem, option, role)
        };
        let mut keys: [String; 4] = Default::default();
        keys[0] = key_of(&item.mcq.key, OptionRole::Key);
        fixtures.push(CacheRecord {
            cache_key: keys[0].clone(),
            text: item.reasoning.clone(),
            recorded_at: None,
        });
        for k in 0..DISTRACTOR_COUNT {
            keys[k + 1] = key_of(&item.mcq.distractors[k], OptionRole::Distractor);
            fixtures.push(CacheRecord {
                cache_key: keys[k + 1].clone(),
                text: item.feedback[k].clone(),
                recorded_at: None,
            });
        }
        augmented.push(AugmentedMcq {
            base: item.mcq.clone(),
            reasoning: item.reasoning,
            feedback: item.feedback,
            metadata: GenerationMetadata {
                model: generation.model_name.clone(),
                template_version: template.version.clone(),
                cache_keys: keys,
                generated_at: None,
            },
        });
        distributions.push(avg);
        mcqs.push(item.mcq);
    }
    let corpus = Corpus::new(
        mcqs,
        Provenance {
            name: "synthetic-teacher".into(),
            source: format!("seed {}", spec.seed),
            window: None,
        },
    )?;
    Ok(TeacherData {
        corpus,
        augmented,
        fixtures,
        distributions,
    })
}

pub fn fixtures_to_jsonl(records: &[CacheRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
