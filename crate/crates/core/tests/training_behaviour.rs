//! End-to-end training behaviour on a small teacher corpus.

use mcqdiff::corpus::split_folds;
use mcqdiff::model::Checkpoint;
use mcqdiff::synth::{teacher_corpus, TeacherSpec};
use mcqdiff::training::{loss_and_gradients, mean_kl, prepare_items, total_loss, train, PreparedItem};
use mcqdiff::{AugmentedMcq, DifficultyModel, EncoderSpec, GenerationConfig, ModelConfig, TrainConfig};

struct Split {
    train: Vec<AugmentedMcq>,
    validation: Vec<AugmentedMcq>,
    test: Vec<AugmentedMcq>,
}

fn split(items: usize) -> Split {
    let spec = TeacherSpec {
        items,
        ..Default::default()
    };
    let data = teacher_corpus(&spec, &GenerationConfig::default()).unwrap();
    let fold = &split_folds(&data.corpus, 3).unwrap().folds[0];
    let pick = |ids: &[String]| -> Vec<AugmentedMcq> {
        ids.iter()
            .map(|id| data.augmented.iter().find(|a| &a.base.id == id).unwrap().clone())
            .collect()
    };
    Split {
        train: pick(&fold.train),
        validation: pick(&fold.validation),
        test: pick(&fold.test),
    }
}

fn model_config() -> ModelConfig {
    ModelConfig {
        population: 200,
        encoder: EncoderSpec {
            dim: 32,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn prepared(model: &DifficultyModel, items: &[AugmentedMcq]) -> Vec<PreparedItem> {
    prepare_items(model, items, true).unwrap()
}

#[test]
fn validation_loss_halves() {
    let s = split(150);
    let model = DifficultyModel::new(&model_config()).unwrap();
    let (tr, va) = (prepared(&model, &s.train), prepared(&model, &s.validation));
    let out = train(model, &tr, &va, &TrainConfig::default(), None).unwrap();
    let start = out.log[0].val_total;
    let best = out.log[out.best_epoch].val_total;
    assert!(best <= 0.5 * start, "epoch 0 {start}, best {best}");
}

#[test]
fn same_seed_same_weights() {
    let s = split(60);
    let cfg = TrainConfig {
        epochs: 5,
        ..Default::default()
    };
    let run = || {
        let model = DifficultyModel::new(&model_config()).unwrap();
        let (tr, va) = (prepared(&model, &s.train), prepared(&model, &s.validation));
        train(model, &tr, &va, &cfg, None).unwrap().model
    };
    let (a, b) = (run(), run());
    assert_eq!(a.head, b.head);
    assert_eq!(a.interaction, b.interaction);
    assert_eq!(a.encoder.adapter, b.encoder.adapter);
}

#[test]
fn checkpoint_reload_reproduces_validation_loss() {
    let s = split(60);
    let model = DifficultyModel::new(&model_config()).unwrap();
    let (tr, va) = (prepared(&model, &s.train), prepared(&model, &s.validation));
    let cfg = TrainConfig {
        epochs: 5,
        ..Default::default()
    };
    let out = train(model, &tr, &va, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.to_checkpoint("test").save(&path).unwrap();
    let reloaded = DifficultyModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    let before = total_loss(&out.model, &va, cfg.alpha).unwrap().total;
    let after = total_loss(&reloaded, &prepared(&reloaded, &s.validation), cfg.alpha).unwrap().total;
    assert!((before - after).abs() <= 1e-10, "{before} vs {after}");
}

#[test]
fn tiny_gradient_step_does_not_increase_loss() {
    let s = split(40);
    let mut model = DifficultyModel::new(&model_config()).unwrap();
    let batch: Vec<PreparedItem> = prepared(&model, &s.train).into_iter().take(10).collect();
    let alpha = TrainConfig::default().alpha;
    let (before, g) = loss_and_gradients(&model, &batch, alpha).unwrap();
    let lr = 1e-6;
    let step = |layer: &mut mcqdiff::nn::Linear, grad: &mcqdiff::nn::LinearGrad| {
        layer.weight.scaled_add(-lr, &grad.weight);
        layer.bias.scaled_add(-lr, &grad.bias);
    };
    step(&mut model.encoder.adapter, &g.adapter);
    for (l, gl) in model.interaction.layers.iter_mut().zip(&g.interaction) {
        step(l, gl);
    }
    for (l, gl) in model.head.layers.iter_mut().zip(&g.head) {
        step(l, gl);
    }
    let after = total_loss(&model, &batch, alpha).unwrap();
    assert!(after.total <= before.total, "{} -> {}", before.total, after.total);
}

#[test]
fn strong_kl_weight_fits_held_out_distributions() {
    let s = split(120);
    let fit = |alpha: f64| {
        let model = DifficultyModel::new(&model_config()).unwrap();
        let (tr, va, te) = (
            prepared(&model, &s.train),
            prepared(&model, &s.validation),
            prepared(&model, &s.test),
        );
        let cfg = TrainConfig {
            epochs: 60,
            alpha,
            ..Default::default()
        };
        let out = train(model, &tr, &va, &cfg, None).unwrap();
        mean_kl(&out.model, &te).unwrap()
    };
    let (strong, none) = (fit(100.0), fit(0.0));
    assert!(strong < none, "alpha=100 KL {strong}, alpha=0 KL {none}");
}
