//! Joint training of the adapter, interaction MLP and difficulty head.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use ndarray::{arr2, Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentedMcq;
use crate::corpus::selection_distribution;
use crate::encoder::EncoderError;
use crate::model::{mean_distribution, student_distributions, DifficultyModel, ModelError};
use crate::nn::{grad_tensors, Adam, LinearGrad};
use crate::simplex::SelectionDistribution;
use crate::OPTION_COUNT;

/// Floor applied to predicted probabilities inside the KL term.
pub const KL_FLOOR: f64 = 1e-12;
pub const DEFAULT_ALPHA: f64 = 0.0886;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("item {0} has no difficulty label")]
    MissingLabel(String),
    #[error("no labelled training items")]
    NoTrainingItems,
    #[error("non-finite loss at epoch {epoch} in batch {batch:?}")]
    NonFinite { epoch: usize, batch: Vec<String> },
    #[error("non-finite difficulty")]
    NonFiniteInput,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoder: f64,
    pub lr_interaction: f64,
    pub lr_head: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Write a checkpoint every this many epochs when a directory is given.
    pub checkpoint_every: Option<usize>,
    /// Reject unlabelled items instead of skipping them.
    pub strict: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 300,
            lr_encoder: 1e-5,
            lr_interaction: 1e-2,
            lr_head: 1e-2,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            patience: None,
            checkpoint_every: None,
            strict: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(TrainError::InvalidConfig("alpha must be finite and non-negative".into()));
        }
        for lr in [self.lr_encoder, self.lr_interaction, self.lr_head] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(TrainError::InvalidConfig("learning rates must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_d: f64,
    pub l_kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_d.is_finite() && self.l_kl.is_finite() && self.total.is_finite()
    }
}

/// Squared error between labelled and predicted difficulty.
pub fn difficulty_loss(df: f64, df_hat: f64) -> Result<f64> {
    if !df.is_finite() || !df_hat.is_finite() {
        return Err(TrainError::NonFiniteInput);
    }
    Ok(squared_error(df, df_hat))
}

fn squared_error(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

/// KL(gt || pred) with predicted entries floored at [`KL_FLOOR`]. Terms with
/// zero ground-truth mass contribute nothing.
pub fn kl_loss(gt: &SelectionDistribution, pred: &SelectionDistribution) -> f64 {
    let mut total = 0.0;
    for (&g, &p) in gt.0.iter().zip(pred.0.iter()) {
        if g > 0.0 {
            if p < KL_FLOOR {
                warn!("predicted probability {p:e} floored at {KL_FLOOR:e} in KL term");
            }
            total += g * (g / p.max(KL_FLOOR)).ln();
        }
    }
    total
}

/// An item ready for training: raw encoder rows plus targets.
#[derive(Debug, Clone)]
pub struct PreparedItem {
    pub id: String,
    /// Raw (pre-adapter) option vectors, 4 x E.
    pub raw: Array2<f64>,
    pub difficulty: f64,
    /// Observed selection distribution; `None` for items without responses.
    pub target: Option<SelectionDistribution>,
}

/// Encodes items once. Unlabelled items are rejected in strict mode and
/// skipped (with a warning) otherwise.
pub fn prepare_items(model: &DifficultyModel, items: &[AugmentedMcq], strict: bool) -> Result<Vec<PreparedItem>> {
    let mut out = Vec::with_capacity(items.len());
    for aug in items {
        let Some(difficulty) = aug.base.difficulty else {
            if strict {
                return Err(TrainError::MissingLabel(aug.base.id.clone()));
            }
            warn!("skipping unlabelled item {}", aug.base.id);
            continue;
        };
        out.push(PreparedItem {
            id: aug.base.id.clone(),
            raw: model.encoder.raw_options(aug, true)?,
            difficulty,
            target: selection_distribution(&aug.base).ok(),
        });
    }
    Ok(out)
}

/// Gradients of the batch loss for the three parameter groups.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub adapter: LinearGrad,
    pub interaction: Vec<LinearGrad>,
    pub head: Vec<LinearGrad>,
}

/// Batch-mean loss without gradients.
pub fn total_loss(model: &DifficultyModel, batch: &[PreparedItem], alpha: f64) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Ok(LossBreakdown::default());
    }
    let t = model.projections();
    let mut sum = LossBreakdown::default();
    for item in batch {
        let h = model.encoder.adapt(item.raw.view());
        let avg = mean_distribution(&student_distributions(h.view(), t.view())?);
        let x = arr2(&[avg.0]);
        let df_hat = model.head.forward(x.view())[[0, 0]];
        sum.l_d += squared_error(item.difficulty, df_hat);
        if let Some(gt) = &item.target {
            sum.l_kl += kl_loss(gt, &avg);
        }
    }
    Ok(finish(sum, batch.len(), alpha))
}

fn finish(sum: LossBreakdown, n: usize, alpha: f64) -> LossBreakdown {
    let l_d = sum.l_d / n as f64;
    let l_kl = sum.l_kl / n as f64;
    LossBreakdown {
        l_d,
        l_kl,
        total: l_d + alpha * l_kl,
    }
}

/// Batch-mean loss and its gradients with respect to every trainable
/// parameter.
pub fn loss_and_gradients(
    model: &DifficultyModel,
    batch: &[PreparedItem],
    alpha: f64,
) -> Result<(LossBreakdown, Gradients)> {
    let t_trace = model.interaction.forward_trace(model.knowledge.values());
    let t = &t_trace.output;
    let m = t.nrows() as f64;
    let n = batch.len().max(1) as f64;

    let mut d_t = Array2::<f64>::zeros(t.raw_dim());
    let mut adapter = model.encoder.adapter.zero_grad();
    let mut head = model.head.zero_grads();
    let mut sum = LossBreakdown::default();

    for item in batch {
        let h = model.encoder.adapt(item.raw.view());
        let p = student_distributions(h.view(), t.view())?;
        let avg = mean_distribution(&p);
        let x = arr2(&[avg.0]);
        let head_trace = model.head.forward_trace(x.view());
        let df_hat = head_trace.output[[0, 0]];

        sum.l_d += squared_error(item.difficulty, df_hat);
        let g_out = arr2(&[[2.0 * (df_hat - item.difficulty) / n]]);
        let (hg, g_avg) = model.head.backward(&head_trace, g_out.view());
        for (acc, g) in head.iter_mut().zip(&hg) {
            acc.add_assign(g);
        }

        let mut g = g_avg.row(0).to_owned();
        if let Some(gt) = &item.target {
            sum.l_kl += kl_loss(gt, &avg);
            for k in 0..OPTION_COUNT {
                // The floor is a constant below KL_FLOOR, so no gradient there.
                if gt.0[k] > 0.0 && avg.0[k] >= KL_FLOOR {
                    g[k] -= alpha / n * gt.0[k] / avg.0[k];
                }
            }
        }

        // Softmax Jacobian per student, averaged over the population.
        let weighted: Array1<f64> = p.t().dot(&g);
        let mut d_s = p.clone();
        for ((o, j), v) in d_s.indexed_iter_mut() {
            *v *= (g[o] - weighted[j]) / m;
        }
        let d_h = d_s.dot(t);
        d_t += &d_s.t().dot(&h);
        let (ag, _) = model.encoder.adapter.backward(item.raw.view(), d_h.view());
        adapter.add_assign(&ag);
    }

    let (interaction, _) = model.interaction.backward(&t_trace, d_t.view());
    Ok((
        finish(sum, batch.len().max(1), alpha),
        Gradients {
            adapter,
            interaction,
            head,
        },
    ))
}

/// Per-epoch loss record, one JSON object per line in the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ld: f64,
    pub train_lkl: f64,
    pub val_ld: f64,
    pub val_lkl: f64,
    pub val_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation total loss.
    pub model: DifficultyModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

pub fn write_log(log: &[EpochRecord], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in log {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

struct Optimizers {
    encoder: Adam,
    interaction: Adam,
    head: Adam,
}

impl Optimizers {
    fn step(&mut self, model: &mut DifficultyModel, grads: &Gradients, train_encoder: bool) {
        if train_encoder {
            let [w, b] = model.encoder.adapter.tensors_mut();
            self.encoder.update(vec![w, b], grad_tensors(std::slice::from_ref(&grads.adapter)));
        }
        self.interaction
            .update(model.interaction.tensors_mut(), grad_tensors(&grads.interaction));
        self.head.update(model.head.tensors_mut(), grad_tensors(&grads.head));
    }
}

/// Trains from the model's current parameters. `checkpoint_dir`, when set
/// together with `checkpoint_every`, receives periodic checkpoints.
pub fn train(
    mut model: DifficultyModel,
    train_items: &[PreparedItem],
    val_items: &[PreparedItem],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_items.is_empty() {
        return Err(TrainError::NoTrainingItems);
    }
    let train_encoder = model.encoder.spec.trainable;
    let mut opt = Optimizers {
        encoder: Adam::new(cfg.lr_encoder),
        interaction: Adam::new(cfg.lr_interaction),
        head: Adam::new(cfg.lr_head),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    // Selection falls back to training loss when there is no validation split.
    let selection = |m: &DifficultyModel, train: LossBreakdown| -> Result<LossBreakdown> {
        if val_items.is_empty() {
            Ok(train)
        } else {
            total_loss(m, val_items, cfg.alpha)
        }
    };

    let train0 = total_loss(&model, train_items, cfg.alpha)?;
    let val0 = selection(&model, train0)?;
    let mut log = vec![record(0, train0, val0)];
    let mut best = (val0.total, 0, model.clone());
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PreparedItem> = chunk.iter().map(|&i| train_items[i].clone()).collect();
            let (loss, grads) = loss_and_gradients(&model, &batch, cfg.alpha)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch.iter().map(|b| b.id.clone()).collect(),
                });
            }
            let w = batch.len() as f64;
            acc.l_d += loss.l_d * w;
            acc.l_kl += loss.l_kl * w;
            opt.step(&mut model, &grads, train_encoder);
        }
        let train_loss = finish(acc, train_items.len(), cfg.alpha);
        let val = selection(&model, train_loss)?;
        if !val.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: val_items.iter().map(|b| b.id.clone()).collect(),
            });
        }
        log.push(record(epoch, train_loss, val));
        if val.total < best.0 {
            best = (val.total, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, checkpoint_dir) {
            if every > 0 && epoch % every == 0 {
                let hash = crate::model::config_hash(cfg);
                model
                    .to_checkpoint(&hash)
                    .save(&dir.join(format!("epoch-{epoch:04}.json")))?;
            }
        }
        if cfg.patience.is_some_and(|p| since_best >= p) {
            info!("early stop at epoch {epoch}; best epoch {}", best.1);
            break;
        }
    }
    let (_, best_epoch, model) = best;
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

fn record(epoch: usize, train: LossBreakdown, val: LossBreakdown) -> EpochRecord {
    EpochRecord {
        epoch,
        train_ld: train.l_d,
        train_lkl: train.l_kl,
        val_ld: val.l_d,
        val_lkl: val.l_kl,
        val_total: val.total,
    }
}

/// Predicted difficulty for prepared items.
pub fn predict_prepared(model: &DifficultyModel, items: &[PreparedItem]) -> Result<Vec<f64>> {
    let t = model.projections();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let h = model.encoder.adapt(item.raw.view());
        let avg = mean_distribution(&student_distributions(h.view(), t.view())?);
        let x = arr2(&[avg.0]);
        out.push(model.head.forward(x.view())[[0, 0]]);
    }
    Ok(out)
}

/// Population-average distributions for prepared items.
pub fn distributions_prepared(model: &DifficultyModel, items: &[PreparedItem]) -> Result<Vec<SelectionDistribution>> {
    let t = model.projections();
    items
        .iter()
        .map(|item| {
            let h = model.encoder.adapt(item.raw.view());
            Ok(mean_distribution(&student_distributions(h.view(), t.view())?))
        })
        .collect()
}

/// Mean KL(gt || pred) over items that have observed responses.
pub fn mean_kl(model: &DifficultyModel, items: &[PreparedItem]) -> Result<f64> {
    let dists = distributions_prepared(model, items)?;
    let (sum, n) = items
        .iter()
        .zip(&dists)
        .filter_map(|(i, d)| i.target.as_ref().map(|gt| kl_loss(gt, d)))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_model() -> DifficultyModel {
        DifficultyModel::new(&ModelConfig {
            population: 40,
            encoder: crate::encoder::EncoderSpec {
                dim: 8,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap()
    }

    fn items(model: &DifficultyModel) -> Vec<PreparedItem> {
        let mut out = Vec::new();
        for i in 0..6 {
            let mut aug = crate::encoder::tests::sample_aug();
            aug.base.id = format!("i{i}");
            aug.base.stem = format!("Compute {i} + {}", i * 3);
            aug.base.counts = [10 + i as u64 * 5, 5, 3 + i as u64, 2];
            aug.base.difficulty = Some(i as f64 * 0.3 - 0.5);
            out.push(aug);
        }
        prepare_items(model, &out, true).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = SelectionDistribution([0.5, 0.2, 0.2, 0.1]);
        let q = SelectionDistribution([0.4, 0.3, 0.2, 0.1]);
        let direct = 0.5 * (0.5f64 / 0.4).ln() + 0.2 * (0.2f64 / 0.3).ln();
        assert!((kl_loss(&p, &q) - direct).abs() < 1e-15);
        assert_eq!(kl_loss(&p, &p), 0.0);
        let g = SelectionDistribution([0.0, 0.5, 0.5, 0.0]);
        assert!(kl_loss(&g, &SelectionDistribution::UNIFORM) > 0.0);
        assert_eq!(difficulty_loss(0.0, 2.0).unwrap(), 4.0);
        assert!(matches!(difficulty_loss(f64::NAN, 1.0), Err(TrainError::NonFiniteInput)));
    }

    #[test]
    fn total_composes_terms() {
        let model = tiny_model();
        let it = items(&model);
        let l = total_loss(&model, &it, 0.5).unwrap();
        assert!((l.total - (l.l_d + 0.5 * l.l_kl)).abs() < 1e-15);
        let l0 = total_loss(&model, &it, 0.0).unwrap();
        assert_eq!(l0.total, l0.l_d);
    }

    #[test]
    fn gradients_match_forward_loss() {
        let model = tiny_model();
        let it = items(&model);
        let (l, _) = loss_and_gradients(&model, &it, DEFAULT_ALPHA).unwrap();
        let f = total_loss(&model, &it, DEFAULT_ALPHA).unwrap();
        assert!((l.total - f.total).abs() < 1e-12);
    }

    #[test]
    fn head_gradient_matches_finite_difference() {
        let model = tiny_model();
        let it = items(&model);
        let (_, g) = loss_and_gradients(&model, &it, DEFAULT_ALPHA).unwrap();
        let h = 1e-6;
        let mut up = model.clone();
        up.head.layers[0].weight[[1, 2]] += h;
        let mut dn = model.clone();
        dn.head.layers[0].weight[[1, 2]] -= h;
        let fd = (total_loss(&up, &it, DEFAULT_ALPHA).unwrap().total
            - total_loss(&dn, &it, DEFAULT_ALPHA).unwrap().total)
            / (2.0 * h);
        let an = g.head[0].weight[[1, 2]];
        assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-6), "{fd} {an}");
    }

    #[test]
    fn strict_and_tolerant_label_handling() {
        let model = tiny_model();
        let mut aug = crate::encoder::tests::sample_aug();
        aug.base.difficulty = None;
        assert!(matches!(
            prepare_items(&model, std::slice::from_ref(&aug), true),
            Err(TrainError::MissingLabel(_))
        ));
        assert!(prepare_items(&model, &[aug], false).unwrap().is_empty());
    }

    #[test]
    fn zero_count_items_skip_kl() {
        let model = tiny_model();
        let mut aug = crate::encoder::tests::sample_aug();
        aug.base.counts = [0; 4];
        let it = prepare_items(&model, &[aug], true).unwrap();
        assert!(it[0].target.is_none());
        assert_eq!(total_loss(&model, &it, 1.0).unwrap().l_kl, 0.0);
    }

    #[test]
    fn training_logs_epoch_zero_and_reduces_loss() {
        let model = tiny_model();
        let it = items(&model);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 3,
            ..Default::default()
        };
        let out = train(model, &it, &it, &cfg, None).unwrap();
        assert_eq!(out.log.len(), 31);
        assert_eq!(out.log[0].epoch, 0);
        let best = out.log.iter().map(|r| r.val_total).fold(f64::INFINITY, f64::min);
        assert_eq!(out.log[out.best_epoch].val_total, best);
        assert!(best < out.log[0].val_total);
        let again = total_loss(&out.model, &it, cfg.alpha).unwrap().total;
        assert_eq!(again.to_bits(), best.to_bits());
    }

    #[test]
    fn non_finite_labels_abort_with_batch_ids() {
        let model = tiny_model();
        let mut it = items(&model);
        it[2].difficulty = f64::NAN;
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 6,
            ..Default::default()
        };
        match train(model, &it, &[], &cfg, None) {
            Err(TrainError::NonFinite { epoch, batch }) => {
                assert_eq!(epoch, 1);
                assert!(batch.contains(&"i2".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }
}
