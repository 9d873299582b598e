//! Metrics, the cross-validated experiment driver, and per-student analysis.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use ndarray::{arr2, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentedMcq;
use crate::baselines::{
    extract_features, fit_linear, train_ft, BaselineError, FtConfig, FtEpoch, PackVariant,
};
use crate::corpus::{Fold, FoldPlan};
use crate::model::{mean_distribution, student_distributions, DifficultyModel, ModelConfig, ModelError};
use crate::training::{
    mean_kl, predict_prepared, prepare_items, train, EpochRecord, PreparedItem, TrainConfig, TrainError,
};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("length mismatch: {pred} predictions vs {gt} ground-truth values")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("ground truth is constant")]
    ConstantGroundTruth,
    #[error("every ground-truth pair is tied")]
    AllTied,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("fold {fold} refers to unknown item {id}")]
    UnknownItem { fold: usize, id: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

// ============================================================================
// Metrics
// ============================================================================

fn check_lengths(pred: &[f64], gt: &[f64], needed: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if gt.len() < needed {
        return Err(EvalError::TooFew {
            needed,
            got: gt.len(),
        });
    }
    Ok(())
}

pub fn mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_lengths(pred, gt, 1)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / gt.len() as f64)
}

/// `1 - SS_res / SS_tot`; equivalently `1 - mse / var` with the population
/// variance of `gt`.
pub fn r_squared(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_lengths(pred, gt, 2)?;
    let mean = gt.iter().sum::<f64>() / gt.len() as f64;
    let ss_tot: f64 = gt.iter().map(|g| (g - mean) * (g - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantGroundTruth);
    }
    let ss_res: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Fenwick tree over prediction ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `i`.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Fraction of pairs with distinct ground truth whose predictions are
/// ordered the same way. Ground-truth ties are left out of the denominator;
/// tied predictions never match. O(N log N).
pub fn match_metric(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_lengths(pred, gt, 2)?;
    let n = gt.len();
    // Dense ranks of predictions (equal values share a rank).
    let mut by_pred: Vec<usize> = (0..n).collect();
    by_pred.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && pred[by_pred[k]] != pred[by_pred[k - 1]] {
            r += 1;
        }
        rank[by_pred[k]] = r;
    }
    let mut by_gt: Vec<usize> = (0..n).collect();
    by_gt.sort_by(|&a, &b| gt[a].total_cmp(&gt[b]));

    let mut tree = Fenwick(vec![0; r + 2]);
    let mut concordant = 0u64;
    let mut tied_pairs = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && gt[by_gt[end]] == gt[by_gt[start]] {
            end += 1;
        }
        let group = &by_gt[start..end];
        for &i in group {
            concordant += tree.below(rank[i]);
        }
        for &i in group {
            tree.add(rank[i]);
        }
        let g = (end - start) as u64;
        tied_pairs += g * (g - 1) / 2;
        start = end;
    }
    let total = (n as u64) * (n as u64 - 1) / 2 - tied_pairs;
    if total == 0 {
        return Err(EvalError::AllTied);
    }
    Ok(concordant as f64 / total as f64)
}

/// Pearson correlation; NaN when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

// ============================================================================
// Reports
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    Lr,
    Ft,
    Ftwr,
    MeanPredictor,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ours => "Ours",
            Method::Lr => "LR",
            Method::Ft => "FT",
            Method::Ftwr => "FTWR",
            Method::MeanPredictor => "Mean",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Ours => "ours",
            Method::Lr => "lr",
            Method::Ft => "ft",
            Method::Ftwr => "ftwr",
            Method::MeanPredictor => "mean",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ours" => Ok(Method::Ours),
            "lr" => Ok(Method::Lr),
            "ft" => Ok(Method::Ft),
            "ftwr" => Ok(Method::Ftwr),
            "mean" => Ok(Method::MeanPredictor),
            other => Err(EvalError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n - 1).
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, sd })
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub mse: f64,
    pub r_squared: f64,
    #[serde(rename = "match")]
    pub match_rate: f64,
    /// Mean KL(observed || predicted) on the test items (full method only).
    pub held_out_kl: Option<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub dataset: String,
    pub folds: Vec<FoldMetrics>,
    pub mse: Option<MeanSd>,
    pub r_squared: Option<MeanSd>,
    #[serde(rename = "match")]
    pub match_rate: Option<MeanSd>,
    pub held_out_kl: Option<MeanSd>,
    pub complete: bool,
    pub failure: Option<FoldFailure>,
}

impl MetricReport {
    fn from_folds(method: Method, dataset: &str, folds: Vec<FoldMetrics>, failure: Option<FoldFailure>) -> Self {
        let col = |f: fn(&FoldMetrics) -> f64| MeanSd::of(&folds.iter().map(f).collect::<Vec<_>>());
        let kls: Vec<f64> = folds.iter().filter_map(|f| f.held_out_kl).collect();
        Self {
            method,
            dataset: dataset.to_string(),
            mse: col(|f| f.mse),
            r_squared: col(|f| f.r_squared),
            match_rate: col(|f| f.match_rate),
            held_out_kl: if kls.len() == folds.len() { MeanSd::of(&kls) } else { None },
            complete: failure.is_none(),
            failure,
            folds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned comparison table, one row per method.
pub fn format_table(reports: &[MetricReport]) -> String {
    let cell = |m: &Option<MeanSd>| m.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
    let mut rows = vec![[
        "Method".to_string(),
        "MSE".to_string(),
        "R²".to_string(),
        "MATCH".to_string(),
    ]];
    for r in reports {
        let mut name = r.method.label().to_string();
        if !r.complete {
            name.push_str(" (incomplete)");
        }
        rows.push([name, cell(&r.mse), cell(&r.r_squared), cell(&r.match_rate)]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if let Some(r) = reports.first() {
        out.push_str(&format!("Dataset: {}\n", r.dataset));
    }
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

// ============================================================================
// Cross-validation
// ============================================================================

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ft: FtConfig,
}

/// Artifacts from one fold, in addition to its metrics.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: usize,
    pub metrics: FoldMetrics,
    /// (id, ground truth, prediction) for each test item.
    pub predictions: Vec<(String, f64, f64)>,
    pub train_log: Option<Vec<EpochRecord>>,
    pub ft_log: Option<Vec<FtEpoch>>,
    pub model: Option<DifficultyModel>,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: MetricReport,
    pub runs: Vec<FoldRun>,
}

struct Split<'a> {
    train: Vec<&'a AugmentedMcq>,
    validation: Vec<&'a AugmentedMcq>,
    test: Vec<&'a AugmentedMcq>,
}

fn resolve<'a>(index: &HashMap<&str, &'a AugmentedMcq>, fold_no: usize, fold: &Fold) -> Result<Split<'a>> {
    let pick = |ids: &[String]| -> Result<Vec<&'a AugmentedMcq>> {
        ids.iter()
            .map(|id| {
                index.get(id.as_str()).copied().ok_or_else(|| EvalError::UnknownItem {
                    fold: fold_no,
                    id: id.clone(),
                })
            })
            .collect()
    };
    Ok(Split {
        train: pick(&fold.train)?,
        validation: pick(&fold.validation)?,
        test: pick(&fold.test)?,
    })
}

fn labelled(items: &[&AugmentedMcq]) -> (Vec<f64>, Vec<usize>) {
    let mut y = Vec::new();
    let mut keep = Vec::new();
    for (i, a) in items.iter().enumerate() {
        match a.base.difficulty {
            Some(d) => {
                y.push(d);
                keep.push(i);
            }
            None => warn!("item {} has no difficulty; left out of metrics", a.base.id),
        }
    }
    (y, keep)
}

fn owned(items: &[&AugmentedMcq]) -> Vec<AugmentedMcq> {
    items.iter().map(|a| (*a).clone()).collect()
}

fn run_fold(method: Method, fold_no: usize, split: &Split, cfg: &ExperimentConfig) -> Result<FoldRun> {
    let (test_y, test_keep) = labelled(&split.test);
    let test_items: Vec<&AugmentedMcq> = test_keep.iter().map(|&i| split.test[i]).collect();
    let ids: Vec<String> = test_items.iter().map(|a| a.base.id.clone()).collect();
    let mut run = FoldRun {
        fold: fold_no,
        metrics: FoldMetrics {
            fold: fold_no,
            n_test: test_items.len(),
            mse: 0.0,
            r_squared: 0.0,
            match_rate: 0.0,
            held_out_kl: None,
            best_epoch: None,
        },
        predictions: Vec::new(),
        train_log: None,
        ft_log: None,
        model: None,
    };
    let pred: Vec<f64> = match method {
        Method::MeanPredictor => {
            let (y, _) = labelled(&split.train);
            if y.is_empty() {
                return Err(TrainError::NoTrainingItems.into());
            }
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            vec![mean; test_items.len()]
        }
        Method::Lr => {
            let (y, keep) = labelled(&split.train);
            let x: Vec<_> = keep
                .iter()
                .map(|&i| extract_features(&split.train[i].base).to_array())
                .collect();
            let model = fit_linear(&x, &y)?;
            test_items
                .iter()
                .map(|a| model.predict(&extract_features(&a.base).to_array()))
                .collect()
        }
        Method::Ft | Method::Ftwr => {
            let variant = if method == Method::Ft { PackVariant::Ft } else { PackVariant::Ftwr };
            let pairs = |items: &[&AugmentedMcq]| -> Vec<(String, f64)> {
                items
                    .iter()
                    .filter_map(|a| a.base.difficulty.map(|d| (variant.pack(a), d)))
                    .collect()
            };
            let out = train_ft(&cfg.model.encoder, &pairs(&split.train), &pairs(&split.validation), &cfg.ft)?;
            run.metrics.best_epoch = Some(out.best_epoch);
            let pred = test_items
                .iter()
                .map(|a| out.regressor.predict(&variant.pack(a)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            run.ft_log = Some(out.log);
            pred
        }
        Method::Ours => {
            let model = DifficultyModel::new(&cfg.model)?;
            let strict = cfg.train.strict;
            let train_items = prepare_items(&model, &owned(&split.train), strict)?;
            let val_items = prepare_items(&model, &owned(&split.validation), strict)?;
            let test_prepared: Vec<PreparedItem> = prepare_items(&model, &owned(&test_items), true)?;
            let out = train(model, &train_items, &val_items, &cfg.train, None)?;
            run.metrics.best_epoch = Some(out.best_epoch);
            run.metrics.held_out_kl = Some(mean_kl(&out.model, &test_prepared)?);
            let pred = predict_prepared(&out.model, &test_prepared)?;
            run.train_log = Some(out.log);
            run.model = Some(out.model);
            pred
        }
    };
    run.metrics.mse = mse(&pred, &test_y)?;
    run.metrics.r_squared = r_squared(&pred, &test_y)?;
    run.metrics.match_rate = match_metric(&pred, &test_y)?;
    run.predictions = ids
        .into_iter()
        .zip(test_y.iter().zip(&pred))
        .map(|(id, (g, p))| (id, *g, *p))
        .collect();
    Ok(run)
}

/// Runs one method over every fold of a shared plan. A failing fold stops
/// the run; the report is then marked incomplete and names that fold.
pub fn cross_validate_detailed(
    method: Method,
    items: &[AugmentedMcq],
    plan: &FoldPlan,
    cfg: &ExperimentConfig,
    dataset: &str,
) -> CrossValidation {
    let index: HashMap<&str, &AugmentedMcq> = items.iter().map(|a| (a.base.id.as_str(), a)).collect();
    let mut runs = Vec::with_capacity(plan.folds.len());
    let mut failure = None;
    for (k, fold) in plan.folds.iter().enumerate() {
        match resolve(&index, k, fold).and_then(|split| run_fold(method, k, &split, cfg)) {
            Ok(run) => runs.push(run),
            Err(e) => {
                warn!("{method} fold {k} failed: {e}");
                failure = Some(FoldFailure {
                    fold: k,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    let folds = runs.iter().map(|r| r.metrics.clone()).collect();
    CrossValidation {
        report: MetricReport::from_folds(method, dataset, folds, failure),
        runs,
    }
}

pub fn cross_validate(
    method: Method,
    items: &[AugmentedMcq],
    plan: &FoldPlan,
    cfg: &ExperimentConfig,
    dataset: &str,
) -> MetricReport {
    cross_validate_detailed(method, items, plan, cfg, dataset).report
}

// ============================================================================
// Per-student analysis
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct PerStudentDifficulty {
    /// Knowledge levels (M x d).
    pub knowledge: Array2<f64>,
    pub difficulties: Vec<f64>,
}

pub const DEFAULT_BINS: usize = 20;

/// Applies the difficulty head to each sampled student's own selection
/// distribution.
pub fn per_student_difficulty(model: &DifficultyModel, aug: &AugmentedMcq) -> Result<PerStudentDifficulty> {
    let h = model.option_features(aug)?;
    let p = student_distributions(h.view(), model.projections().view())?;
    let difficulties = p
        .columns()
        .into_iter()
        .map(|c| {
            let x = arr2(&[[c[0], c[1], c[2], c[3]]]);
            model.head.forward(x.view())[[0, 0]]
        })
        .collect();
    Ok(PerStudentDifficulty {
        knowledge: model.knowledge.values().to_owned(),
        difficulties,
    })
}

/// The head applied to the population mean distribution, for comparison with
/// the mean of per-student difficulties.
pub fn population_difficulty(model: &DifficultyModel, aug: &AugmentedMcq) -> Result<f64> {
    let h = model.option_features(aug)?;
    let avg = mean_distribution(&student_distributions(h.view(), model.projections().view())?);
    Ok(crate::model::predict_difficulty(&avg, &model.head))
}

impl PerStudentDifficulty {
    fn coords(&self, j: usize) -> (f64, f64) {
        let row = self.knowledge.row(j);
        (row[0], row.get(1).copied().unwrap_or(0.0))
    }

    pub fn write_scatter_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.knowledge.ncols() != 2 {
            warn!(
                "knowledge dimension is {}; scatter uses the first two coordinates",
                self.knowledge.ncols()
            );
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["student", "l1", "l2", "difficulty"])?;
        for (j, d) in self.difficulties.iter().enumerate() {
            let (x, y) = self.coords(j);
            w.write_record([j.to_string(), x.to_string(), y.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Equal-width bins over the value range; a single bin when all values
    /// coincide.
    pub fn histogram(&self, bins: usize) -> Vec<HistogramBin> {
        let lo = self.difficulties.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.difficulties.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if self.difficulties.is_empty() {
            return Vec::new();
        }
        if lo == hi || bins <= 1 {
            return vec![HistogramBin {
                lower: lo,
                upper: hi,
                count: self.difficulties.len(),
            }];
        }
        let width = (hi - lo) / bins as f64;
        let mut out: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                lower: lo + b as f64 * width,
                upper: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
                count: 0,
            })
            .collect();
        for d in &self.difficulties {
            let b = (((d - lo) / width) as usize).min(bins - 1);
            out[b].count += 1;
        }
        out
    }

    pub fn write_histogram_csv<W: Write>(&self, bins: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lower", "upper", "count"])?;
        for b in self.histogram(bins) {
            w.write_record([b.lower.to_string(), b.upper.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Static SVG: knowledge-level scatter coloured by difficulty (left) and
    /// the histogram (right).
    pub fn to_svg(&self, bins: usize) -> String {
        let (w, h, pad) = (360.0, 300.0, 30.0);
        let lo = self.difficulties.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.difficulties.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = |v: &[f64]| {
            let a = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let b = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (a, if b > a { b - a } else { 1.0 })
        };
        let xs: Vec<f64> = (0..self.difficulties.len()).map(|j| self.coords(j).0).collect();
        let ys: Vec<f64> = (0..self.difficulties.len()).map(|j| self.coords(j).1).collect();
        let (x0, xr) = span(&xs);
        let (y0, yr) = span(&ys);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{h}\">\n",
            2.0 * w
        );
        for j in 0..self.difficulties.len() {
            let t = if hi > lo { (self.difficulties[j] - lo) / (hi - lo) } else { 0.5 };
            let cx = pad + (xs[j] - x0) / xr * (w - 2.0 * pad);
            let cy = h - pad - (ys[j] - y0) / yr * (h - 2.0 * pad);
            let (r, b) = ((255.0 * t) as u8, (255.0 * (1.0 - t)) as u8);
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2\" fill=\"rgb({r},0,{b})\"/>\n"
            ));
        }
        let hist = self.histogram(bins);
        let max = hist.iter().map(|b| b.count).max().unwrap_or(1).max(1) as f64;
        let bw = (w - 2.0 * pad) / hist.len().max(1) as f64;
        for (k, b) in hist.iter().enumerate() {
            let bh = b.count as f64 / max * (h - 2.0 * pad);
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"steelblue\"/>\n",
                w + pad + k as f64 * bw,
                h - pad - bh,
                bw * 0.9
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}
