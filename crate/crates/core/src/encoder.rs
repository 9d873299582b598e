//! Feature extraction: maps (stem, option, auxiliary text) to a latent vector.
//!
//! Backends are looked up by id. The built-in `hashed` backend is a
//! deterministic stand-in for a pretrained encoder: each token is expanded
//! into a pseudo-random Gaussian vector seeded by a hash of the token, the
//! token vectors are pooled, and a trainable affine adapter (initialized to
//! the identity) maps the pooled vector to the feature. Only the adapter
//! receives gradients.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::AugmentedMcq;
use crate::nn::Linear;
use crate::OPTION_COUNT;

pub const HASHED_BACKEND: &str = "hashed";
pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_HASHED_DIM: usize = 64;

#[derive(Error, Debug)]
pub enum EncoderError {
    #[error("encoder backend {0:?} is not available in this build")]
    BackendUnavailable(String),
    #[error("cannot encode empty text")]
    EmptyInput,
    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Summary vector standing in for the sequence-start token, unit norm.
    SequenceStart,
    /// Mean of token vectors.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub backend: String,
    pub max_tokens: usize,
    pub pooling: Pooling,
    pub trainable: bool,
    /// Hidden size E.
    pub dim: usize,
    /// Hash seed for the `hashed` backend.
    pub seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            backend: HASHED_BACKEND.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            pooling: Pooling::SequenceStart,
            trainable: true,
            dim: DEFAULT_HASHED_DIM,
            seed: 0,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 || self.dim == 0 {
            return Err(EncoderError::InvalidSpec(
                "max_tokens and dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFeature {
    pub values: Array1<f64>,
    /// Canonical option index (0 = key).
    pub option: usize,
    pub truncated: bool,
}

/// Packs one option with its auxiliary text. An empty `aux` keeps the
/// trailing "Explanation: " so field positions never move.
pub fn pack_input(stem: &str, option: &str, aux: &str) -> String {
    format!("Question: {stem}\nOption: {option}\nExplanation: {aux}")
}

/// Lower-cased alphanumeric runs; every other non-space character is a token
/// on its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// A text backend producing fixed (non-trainable) pooled vectors.
pub trait TextBackend: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Pooled representation and whether the input was truncated.
    fn embed(&self, text: &str) -> Result<(Array1<f64>, bool)>;
}

pub struct HashedBackend {
    dim: usize,
    seed: u64,
    max_tokens: usize,
    pooling: Pooling,
}

impl HashedBackend {
    pub fn new(spec: &EncoderSpec) -> Self {
        Self {
            dim: spec.dim,
            seed: spec.seed,
            max_tokens: spec.max_tokens,
            pooling: spec.pooling,
        }
    }

    fn token_vector(&self, token: &str) -> Array1<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let scale = 1.0 / (self.dim as f64).sqrt();
        Array1::from_shape_simple_fn(self.dim, || scale * rng.sample::<f64, _>(StandardNormal))
    }
}

impl TextBackend for HashedBackend {
    fn id(&self) -> &str {
        HASHED_BACKEND
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<(Array1<f64>, bool)> {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let truncated = tokens.len() > self.max_tokens;
        if truncated {
            log::warn!(
                "input of {} tokens truncated to {}",
                tokens.len(),
                self.max_tokens
            );
            tokens.truncate(self.max_tokens);
        }
        let mut acc = Array1::<f64>::zeros(self.dim);
        for t in &tokens {
            acc += &self.token_vector(t);
        }
        match self.pooling {
            Pooling::SequenceStart => {
                let norm = acc.dot(&acc).sqrt();
                if norm > 0.0 {
                    acc /= norm;
                }
            }
            Pooling::Mean => acc /= tokens.len() as f64,
        }
        Ok((acc, truncated))
    }
}

/// Resolves a backend id. Only the built-in `hashed` backend ships; other
/// ids report [`EncoderError::BackendUnavailable`].
pub fn backend_for(spec: &EncoderSpec) -> Result<Box<dyn TextBackend>> {
    spec.validate()?;
    match spec.backend.as_str() {
        HASHED_BACKEND => Ok(Box::new(HashedBackend::new(spec))),
        other => Err(EncoderError::BackendUnavailable(other.to_string())),
    }
}

/// Backend plus trainable adapter.
pub struct Encoder {
    pub spec: EncoderSpec,
    backend: Box<dyn TextBackend>,
    pub adapter: Linear,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder")
            .field("spec", &self.spec)
            .field("adapter", &self.adapter)
            .finish()
    }
}

impl Clone for Encoder {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            backend: backend_for(&self.spec).expect("spec was valid at construction"),
            adapter: self.adapter.clone(),
        }
    }
}

impl Encoder {
    pub fn new(spec: &EncoderSpec) -> Result<Self> {
        let backend = backend_for(spec)?;
        let dim = backend.dim();
        Ok(Self {
            spec: spec.clone(),
            backend,
            adapter: Linear::identity(dim),
        })
    }

    pub fn with_adapter(spec: &EncoderSpec, adapter: Linear) -> Result<Self> {
        let mut enc = Self::new(spec)?;
        if adapter.inputs() != enc.dim() || adapter.outputs() != enc.dim() {
            return Err(EncoderError::InvalidSpec(format!(
                "adapter shape {}x{} does not match dim {}",
                adapter.inputs(),
                adapter.outputs(),
                enc.dim()
            )));
        }
        enc.adapter = adapter;
        Ok(enc)
    }

    pub fn dim(&self) -> usize {
        self.backend.dim()
    }

    /// Fixed pooled vector before the adapter.
    pub fn raw(&self, packed: &str) -> Result<(Array1<f64>, bool)> {
        if packed.trim().is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        self.backend.embed(packed)
    }

    /// Raw vectors for the four options of an item, one per row (key first).
    pub fn raw_options(&self, aug: &AugmentedMcq, with_aux: bool) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((OPTION_COUNT, self.dim()));
        for (k, option) in aug.base.options().iter().enumerate() {
            let aux = if with_aux { aug.aux(k) } else { "" };
            let (v, _) = self.raw(&pack_input(&aug.base.stem, option, aux))?;
            out.row_mut(k).assign(&v);
        }
        Ok(out)
    }

    /// Applies the adapter to raw rows.
    pub fn adapt(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        self.adapter.forward(raw)
    }

    pub fn encode_option(&self, packed: &str, option: usize) -> Result<LatentFeature> {
        let (raw, truncated) = self.raw(packed)?;
        let h = self.adapt(raw.view().insert_axis(ndarray::Axis(0)));
        Ok(LatentFeature {
            values: h.row(0).to_owned(),
            option,
            truncated,
        })
    }

    /// Features for (key, d1, d2, d3), each computed from that option alone.
    pub fn encode_mcq(&self, aug: &AugmentedMcq) -> Result<[LatentFeature; OPTION_COUNT]> {
        let mut out = Vec::with_capacity(OPTION_COUNT);
        for (k, option) in aug.base.options().iter().enumerate() {
            out.push(self.encode_option(&pack_input(&aug.base.stem, option, aug.aux(k)), k)?);
        }
        Ok(out.try_into().expect("four features"))
    }
}

/// One-shot encoding with an identity adapter.
pub fn encode_option(packed: &str, spec: &EncoderSpec) -> Result<LatentFeature> {
    Encoder::new(spec)?.encode_option(packed, 0)
}

pub fn encode_mcq(aug: &AugmentedMcq, spec: &EncoderSpec) -> Result<[LatentFeature; OPTION_COUNT]> {
    Encoder::new(spec)?.encode_mcq(aug)
}
