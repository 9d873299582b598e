//! Run configuration: a TOML file merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcqdiff::baselines::FtConfig;
use mcqdiff::corpus::FOLD_COUNT;
use mcqdiff::eval::ExperimentConfig;
use mcqdiff::irt::CalibrationConfig;
use mcqdiff::synth::{IrtSynthSpec, TeacherSpec};
use mcqdiff::{GenerationConfig, Method, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a command may need. Missing sections fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Short name printed in reports.
    pub dataset: String,
    pub corpus: Option<PathBuf>,
    /// Source layout of `corpus`: canonical or lettered.
    pub format: String,
    pub responses: Option<PathBuf>,
    pub augmented: Option<PathBuf>,
    /// Replay fixtures; when set, augmentation never touches the network.
    pub replay: Option<PathBuf>,
    pub out: PathBuf,
    pub fold_seed: u64,
    pub folds: usize,
    pub methods: Vec<Method>,
    /// Reject items whose encoder input was truncated.
    pub strict: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ft: FtConfig,
    pub generation: GenerationConfig,
    pub calibration: CalibrationConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub irt: IrtSynthSpec,
    pub teacher: TeacherSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "corpus".into(),
            corpus: None,
            format: "canonical".into(),
            responses: None,
            augmented: None,
            replay: None,
            out: PathBuf::from("out"),
            fold_seed: 0,
            folds: FOLD_COUNT,
            methods: vec![Method::Ours, Method::Lr, Method::Ft, Method::Ftwr],
            strict: false,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            ft: FtConfig::default(),
            generation: GenerationConfig::default(),
            calibration: CalibrationConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Points every named seed at `seed`.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.fold_seed = seed;
        self.model.knowledge_seed = seed;
        self.model.init_seed = seed;
        self.train.seed = seed;
        self.ft.seed = seed;
        self.synth.irt.seed = seed;
        self.synth.teacher.seed = seed;
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            fold: self.fold_seed,
            knowledge: self.model.knowledge_seed,
            init: self.model.init_seed,
            train_shuffle: self.train.seed,
            ft: self.ft.seed,
            synth_irt: self.synth.irt.seed,
            synth_teacher: self.synth.teacher.seed,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let mut train = self.train.clone();
        train.strict = train.strict || self.strict;
        ExperimentConfig {
            model: self.model.clone(),
            train,
            ft: self.ft.clone(),
        }
    }

    /// Checks that the inputs a command reads exist before any work starts.
    pub fn require(&self, paths: &[(&str, &Option<PathBuf>)]) -> Result<()> {
        for (name, p) in paths {
            match p {
                None => bail!("missing input: {name} (pass --{name} or set `{name}` in the config)"),
                Some(p) if !p.exists() => bail!("{name} path {} does not exist", p.display()),
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating output dir {}", self.out.display()))
    }
}

/// Every seed a run consumes, recorded alongside its reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub fold: u64,
    pub knowledge: u64,
    pub init: u64,
    pub train_shuffle: u64,
    pub ft: u64,
    pub synth_irt: u64,
    pub synth_teacher: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str("methods = [\"ours\", \"lr\"]\n[train]\nalpha = 0.0\nepochs = 3\n").unwrap();
        assert_eq!(cfg.methods, vec![Method::Ours, Method::Lr]);
        assert_eq!(cfg.train.alpha, 0.0);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut cfg = RunConfig::default();
        cfg.set_all_seeds(42);
        let s = cfg.seeds();
        for v in [s.fold, s.knowledge, s.init, s.train_shuffle, s.ft, s.synth_irt, s.synth_teacher] {
            assert_eq!(v, 42);
        }
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
