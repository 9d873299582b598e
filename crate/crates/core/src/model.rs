//! Student interaction and difficulty prediction.
//!
//! A sampled knowledge level is projected into the encoder's feature space;
//! its dot products with the four option features, passed through a softmax,
//! give that student's selection likelihoods. The population average of
//! those distributions is fed to the difficulty head.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::AugmentedMcq;
use crate::encoder::{Encoder, EncoderError, EncoderSpec, LatentFeature};
use crate::irt::{sample_knowledge, KnowledgeMatrix, DEFAULT_KNOWLEDGE_DIM, DEFAULT_POPULATION};
use crate::nn::{Activation, Linear, Mlp};
use crate::simplex::SelectionDistribution;
use crate::OPTION_COUNT;

pub const INTERACTION_HIDDEN: usize = 64;
pub const HEAD_HIDDEN: [usize; 3] = [64, 32, 16];
pub const LEAKY_SLOPE: f64 = 0.01;
const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite option score")]
    NonFiniteScore,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Knowledge level projected into feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentProjection(pub Array1<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    /// Number of sampled students.
    pub population: usize,
    /// Knowledge-level dimensionality.
    pub knowledge_dim: usize,
    pub knowledge_seed: u64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec::default(),
            population: DEFAULT_POPULATION,
            knowledge_dim: DEFAULT_KNOWLEDGE_DIM,
            knowledge_seed: 0,
            init_seed: 0,
        }
    }
}

pub fn interaction_mlp(knowledge_dim: usize, feature_dim: usize, rng: &mut ChaCha8Rng) -> Mlp {
    Mlp::init(
        &[knowledge_dim, INTERACTION_HIDDEN, feature_dim],
        Activation::LeakyRelu { slope: LEAKY_SLOPE },
        rng,
    )
}

pub fn head_mlp(rng: &mut ChaCha8Rng) -> Mlp {
    let widths = [OPTION_COUNT, HEAD_HIDDEN[0], HEAD_HIDDEN[1], HEAD_HIDDEN[2], 1];
    Mlp::init(&widths, Activation::Tanh, rng)
}

/// Encoder, interaction MLP, difficulty head and the fixed student sample.
#[derive(Debug, Clone)]
pub struct DifficultyModel {
    pub encoder: Encoder,
    pub interaction: Mlp,
    pub head: Mlp,
    pub knowledge: KnowledgeMatrix,
}

// ============================================================================
// Free-standing forward operations
// ============================================================================

pub fn project_knowledge(level: ArrayView1<f64>, interaction: &Mlp) -> Result<StudentProjection> {
    if level.len() != interaction.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: interaction.input_dim(),
            got: level.len(),
        });
    }
    let out = interaction.forward(level.insert_axis(Axis(0)));
    Ok(StudentProjection(out.row(0).to_owned()))
}

pub fn feature_matrix(features: &[LatentFeature; OPTION_COUNT]) -> Result<Array2<f64>> {
    let dim = features[0].values.len();
    let mut out = Array2::zeros((OPTION_COUNT, dim));
    for (k, f) in features.iter().enumerate() {
        if f.values.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: f.values.len(),
            });
        }
        out.row_mut(k).assign(&f.values);
    }
    Ok(out)
}

/// Softmax of the four feature/projection dot products for one student.
pub fn selection_likelihoods(
    features: &[LatentFeature; OPTION_COUNT],
    student: &StudentProjection,
) -> Result<SelectionDistribution> {
    let h = feature_matrix(features)?;
    if h.ncols() != student.0.len() {
        return Err(ModelError::DimensionMismatch {
            expected: h.ncols(),
            got: student.0.len(),
        });
    }
    let scores = h.dot(&student.0);
    SelectionDistribution::softmax([scores[0], scores[1], scores[2], scores[3]])
        .ok_or(ModelError::NonFiniteScore)
}

/// Column-wise softmax of an options x students score matrix, in place.
pub(crate) fn softmax_columns(scores: &mut Array2<f64>) -> Result<()> {
    for mut col in scores.columns_mut() {
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(ModelError::NonFiniteScore);
        }
        col.mapv_inplace(|s| (s - max).exp());
        let total = col.sum();
        col /= total;
    }
    Ok(())
}

/// Per-student distributions (options x students) for given features and
/// projections (students x E).
pub(crate) fn student_distributions(features: ArrayView2<f64>, projections: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut s = features.dot(&projections.t());
    softmax_columns(&mut s)?;
    Ok(s)
}

pub(crate) fn mean_distribution(per_student: &Array2<f64>) -> SelectionDistribution {
    let m = per_student.mean_axis(Axis(1)).expect("at least one student");
    SelectionDistribution([m[0], m[1], m[2], m[3]])
}

/// Mean over the sampled population of each student's selection distribution.
pub fn population_likelihoods(
    features: &[LatentFeature; OPTION_COUNT],
    knowledge: &KnowledgeMatrix,
    interaction: &Mlp,
) -> Result<SelectionDistribution> {
    if knowledge.d() != interaction.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: interaction.input_dim(),
            got: knowledge.d(),
        });
    }
    let h = feature_matrix(features)?;
    let t = interaction.forward(knowledge.values());
    if h.ncols() != t.ncols() {
        return Err(ModelError::DimensionMismatch {
            expected: h.ncols(),
            got: t.ncols(),
        });
    }
    Ok(mean_distribution(&student_distributions(h.view(), t.view())?))
}

/// Difficulty head applied to a (population-average) distribution.
pub fn predict_difficulty(avg: &SelectionDistribution, head: &Mlp) -> f64 {
    let x = ndarray::arr2(&[avg.0]);
    head.forward(x.view())[[0, 0]]
}

// ============================================================================
// Composite model
// ============================================================================

impl DifficultyModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let encoder = Encoder::new(&cfg.encoder)?;
        let knowledge = sample_knowledge(cfg.population, cfg.knowledge_dim, cfg.knowledge_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let interaction = interaction_mlp(cfg.knowledge_dim, encoder.dim(), &mut rng);
        let head = head_mlp(&mut rng);
        Ok(Self {
            encoder,
            interaction,
            head,
            knowledge,
        })
    }

    pub fn project_knowledge(&self, level: ArrayView1<f64>) -> Result<StudentProjection> {
        project_knowledge(level, &self.interaction)
    }

    /// Projections of every sampled student (M x E).
    pub fn projections(&self) -> Array2<f64> {
        self.interaction.forward(self.knowledge.values())
    }

    /// Adapted features of an item's options (4 x E).
    pub fn option_features(&self, aug: &AugmentedMcq) -> Result<Array2<f64>> {
        let raw = self.encoder.raw_options(aug, true)?;
        Ok(self.encoder.adapt(raw.view()))
    }

    pub fn population_distribution(&self, aug: &AugmentedMcq) -> Result<SelectionDistribution> {
        let h = self.option_features(aug)?;
        Ok(mean_distribution(&student_distributions(h.view(), self.projections().view())?))
    }

    pub fn predict(&self, aug: &AugmentedMcq) -> Result<f64> {
        Ok(predict_difficulty(&self.population_distribution(aug)?, &self.head))
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            encoder: self.encoder.spec.clone(),
            adapter: self.encoder.adapter.clone(),
            interaction: self.interaction.clone(),
            head: self.head.clone(),
            population: self.knowledge.m(),
            knowledge_dim: self.knowledge.d(),
            knowledge_seed: self.knowledge.seed(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            encoder: Encoder::with_adapter(&ckpt.encoder, ckpt.adapter.clone())?,
            interaction: ckpt.interaction.clone(),
            head: ckpt.head.clone(),
            knowledge: sample_knowledge(ckpt.population, ckpt.knowledge_dim, ckpt.knowledge_seed),
        })
    }
}

/// Everything needed to rebuild a trained model. The knowledge matrix is
/// stored by its (M, d, seed) and regenerated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub encoder: EncoderSpec,
    pub adapter: Linear,
    pub interaction: Mlp,
    pub head: Mlp,
    pub population: usize,
    pub knowledge_dim: usize,
    pub knowledge_seed: u64,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| ModelError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(err(format!("unsupported checkpoint format {}", ckpt.format)));
        }
        Ok(ckpt)
    }
}

/// Hex SHA-256 of a config's JSON serialization.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}
