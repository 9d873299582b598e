//! Predicting the difficulty of math multiple-choice questions from their
//! text by simulating how a population of students chooses among the
//! options.
//!
//! The pipeline: load a corpus of MCQs with response counts ([`corpus`]),
//! calibrate difficulty labels with item response theory ([`irt`]),
//! generate key reasoning and distractor feedback ([`augment`]), encode each
//! option ([`encoder`]), simulate student selections and regress difficulty
//! ([`model`], [`training`]), and compare against baselines ([`baselines`],
//! [`eval`]).

pub mod augment;
pub mod baselines;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod irt;
pub mod model;
pub mod nn;
pub mod simplex;
pub mod synth;
pub mod training;

/// Options per question: the key followed by the distractors.
pub const OPTION_COUNT: usize = 4;
pub const DISTRACTOR_COUNT: usize = 3;

pub use augment::{AugmentedMcq, GenerationConfig, Generator};
pub use corpus::{Corpus, FoldPlan, Mcq, ResponseRecord};
pub use encoder::{EncoderSpec, LatentFeature};
pub use eval::{Method, MetricReport};
pub use irt::{ItemParams, KnowledgeMatrix};
pub use model::{DifficultyModel, ModelConfig, StudentProjection};
pub use simplex::SelectionDistribution;
pub use training::{LossBreakdown, TrainConfig};
