//! One function per subcommand. Each returns an error tagged with the stage
//! that failed; data goes to the output directory, diagnostics to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use mcqdiff::augment::{
    augment_corpus, augmented_to_jsonl, load_augmented, AugmentError, CompletionCache, HttpProvider,
};
use mcqdiff::corpus::{aggregate_responses, load_corpus, load_responses, split_folds_k, CorpusFormat, Provenance};
use mcqdiff::eval::{cross_validate_detailed, format_table, per_student_difficulty, CrossValidation, DEFAULT_BINS};
use mcqdiff::irt::calibrate;
use mcqdiff::model::{config_hash, Checkpoint};
use mcqdiff::synth::{fixtures_to_jsonl, irt_synth, teacher_corpus, write_truth_csv};
use mcqdiff::training::{prepare_items, train, write_log};
use mcqdiff::{AugmentedMcq, Corpus, DifficultyModel, FoldPlan, Generator, Method, MetricReport};
use serde::Serialize;

use crate::config::{RunConfig, Seeds};

// ============================================================================
// Helpers
// ============================================================================

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn corpus_of(items: &[AugmentedMcq], dataset: &str) -> Result<Corpus> {
    Ok(Corpus::new(
        items.iter().map(|a| a.base.clone()).collect(),
        Provenance {
            name: dataset.to_string(),
            source: "augmented".into(),
            window: None,
        },
    )?)
}

fn generator(cfg: &RunConfig) -> Result<Generator> {
    match &cfg.replay {
        Some(path) => {
            let fixtures = CompletionCache::fixtures(path)?;
            Ok(Generator::replay(cfg.generation.clone(), fixtures)?)
        }
        None => {
            let provider = HttpProvider::from_env()?;
            let cache = CompletionCache::open(&cfg.out.join("cache.jsonl"))?;
            Ok(Generator::live(cfg.generation.clone(), Box::new(provider), cache)?)
        }
    }
}

/// Augmented items from `augmented`, or generated from `corpus` when only
/// that is given.
fn load_items(cfg: &RunConfig) -> Result<Vec<AugmentedMcq>> {
    if let Some(path) = &cfg.augmented {
        cfg.require(&[("augmented", &cfg.augmented)])?;
        return load_augmented(path).context("augment stage: loading augmented items");
    }
    cfg.require(&[("corpus", &cfg.corpus)])?;
    let corpus = read_corpus(cfg)?;
    let generator = generator(cfg).context("augment stage")?;
    augment_corpus(&generator, &corpus).context("augment stage")
}

fn read_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg.corpus.as_ref().ok_or_else(|| anyhow!("missing input: corpus"))?;
    let format: CorpusFormat = cfg.format.parse().map_err(|e: String| anyhow!(e))?;
    Ok(load_corpus(path, format)?)
}

fn fold_plan(cfg: &RunConfig, items: &[AugmentedMcq]) -> Result<FoldPlan> {
    let corpus = corpus_of(items, &cfg.dataset)?;
    Ok(split_folds_k(&corpus, cfg.fold_seed, cfg.folds)?)
}

/// Effective configuration recorded next to the reports.
#[derive(Serialize)]
struct ExperimentRecord<'a> {
    config: &'a RunConfig,
    seeds: Seeds,
    config_hash: String,
}

// ============================================================================
// synth
// ============================================================================

pub fn synth(cfg: &RunConfig, kind: &str) -> Result<()> {
    cfg.prepare_out()?;
    match kind {
        "irt" => {
            let data = irt_synth(&cfg.synth.irt)?;
            data.corpus.write_jsonl(&cfg.out.join("corpus.jsonl"))?;
            write_truth_csv(&data.items, create(&cfg.out.join("truth.csv"))?)?;
            write_file(
                &cfg.out.join("responses.jsonl"),
                mcqdiff::corpus::responses_to_jsonl(&data.responses),
            )?;
            let mut abilities = create(&cfg.out.join("abilities_truth.csv"))?;
            writeln!(abilities, "student_id,theta")?;
            for (id, theta) in &data.abilities {
                writeln!(abilities, "{id},{theta}")?;
            }
            info!("wrote {} items, {} responses", data.corpus.len(), data.responses.len());
        }
        "teacher" => {
            let data = teacher_corpus(&cfg.synth.teacher, &cfg.generation)?;
            data.corpus.write_jsonl(&cfg.out.join("corpus.jsonl"))?;
            write_file(&cfg.out.join("augmented.jsonl"), augmented_to_jsonl(&data.augmented))?;
            write_file(&cfg.out.join("fixtures.jsonl"), fixtures_to_jsonl(&data.fixtures))?;
            info!("wrote {} items and {} fixtures", data.corpus.len(), data.fixtures.len());
        }
        other => bail!("unknown synth kind {other:?} (expected irt or teacher)"),
    }
    Ok(())
}

// ============================================================================
// ingest / calibrate / augment
// ============================================================================

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    cfg.require(&[("corpus", &cfg.corpus)])?;
    cfg.prepare_out()?;
    let mut corpus = read_corpus(cfg)?;
    if let Some(path) = &cfg.responses {
        cfg.require(&[("responses", &cfg.responses)])?;
        corpus = aggregate_responses(&load_responses(path)?, &corpus)?;
    }
    let unanswered = corpus.unanswered_ids();
    if !unanswered.is_empty() {
        warn!("{} item(s) have no responses: {}", unanswered.len(), unanswered.join(", "));
    }
    corpus.write_jsonl(&cfg.out.join("corpus.jsonl"))?;
    corpus.write_counts_csv(create(&cfg.out.join("counts.csv"))?)?;
    info!("ingested {} items", corpus.len());
    Ok(())
}

pub fn calibrate_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.require(&[("responses", &cfg.responses), ("corpus", &cfg.corpus)])?;
    cfg.prepare_out()?;
    let records = load_responses(cfg.responses.as_ref().expect("checked"))?;
    let corpus = read_corpus(cfg)?;
    let cal = calibrate(&records, &cfg.calibration)?;
    cal.write_items_csv(create(&cfg.out.join("items.csv"))?)?;
    cal.write_abilities_csv(create(&cfg.out.join("abilities.csv"))?)?;
    let labelled = corpus.with_difficulties(&cal.difficulties());
    labelled.write_jsonl(&cfg.out.join("corpus.jsonl"))?;
    let degenerate = cal.items.iter().filter(|i| i.degenerate).count();
    if degenerate > 0 {
        warn!("{degenerate} item(s) answered identically by everyone; difficulty clamped");
    }
    info!(
        "calibrated {} items in {} iterations (log-likelihood {:.3})",
        cal.items.len(),
        cal.iterations,
        cal.log_likelihood
    );
    Ok(())
}

pub fn augment(cfg: &RunConfig) -> Result<()> {
    cfg.require(&[("corpus", &cfg.corpus)])?;
    cfg.prepare_out()?;
    let corpus = read_corpus(cfg)?;
    let generator = generator(cfg)?;
    match augment_corpus(&generator, &corpus) {
        Ok(items) => write_file(&cfg.out.join("augmented.jsonl"), augmented_to_jsonl(&items)),
        Err(AugmentError::Partial { completed, failed }) => {
            write_file(&cfg.out.join("augmented.partial.jsonl"), augmented_to_jsonl(&completed))?;
            let detail: Vec<String> = failed.iter().map(|(id, e)| format!("{id}: {e}")).collect();
            bail!("{} item(s) failed:\n  {}", failed.len(), detail.join("\n  "))
        }
        Err(e) => Err(e.into()),
    }
}

// ============================================================================
// train
// ============================================================================

pub fn train_cmd(cfg: &RunConfig, fold: usize) -> Result<()> {
    let items = load_items(cfg)?;
    cfg.prepare_out()?;
    let plan = fold_plan(cfg, &items)?;
    let f = plan
        .folds
        .get(fold)
        .ok_or_else(|| anyhow!("fold {fold} out of range (plan has {})", plan.fold_count()))?;
    let by_id: BTreeMap<&str, &AugmentedMcq> = items.iter().map(|a| (a.base.id.as_str(), a)).collect();
    let pick = |ids: &[String]| -> Vec<AugmentedMcq> { ids.iter().map(|id| by_id[id.as_str()].clone()).collect() };

    let exp = cfg.experiment();
    let model = DifficultyModel::new(&exp.model)?;
    let train_items = prepare_items(&model, &pick(&f.train), exp.train.strict)?;
    let val_items = prepare_items(&model, &pick(&f.validation), exp.train.strict)?;
    let ckpt_dir = cfg.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let outcome = train(model, &train_items, &val_items, &exp.train, Some(&ckpt_dir))?;
    let hash = config_hash(&exp);
    outcome
        .model
        .to_checkpoint(&hash)
        .save(&cfg.out.join(format!("checkpoint_fold{fold}.json")))?;
    write_log(&outcome.log, &cfg.out.join(format!("train_log_fold{fold}.jsonl")))?;
    info!("fold {fold}: best epoch {}", outcome.best_epoch);
    Ok(())
}

// ============================================================================
// evaluate
// ============================================================================

fn write_run_artifacts(out: &Path, method: Method, cv: &CrossValidation, hash: &str) -> Result<()> {
    let logs = out.join("logs");
    let ckpts = out.join("checkpoints");
    fs::create_dir_all(&logs)?;
    fs::create_dir_all(&ckpts)?;
    let mut preds = create(&out.join(format!("predictions_{method}.csv")))?;
    writeln!(preds, "fold,id,difficulty,predicted")?;
    for run in &cv.runs {
        let k = run.fold;
        for (id, gt, p) in &run.predictions {
            writeln!(preds, "{k},{id},{gt},{p}")?;
        }
        if let Some(log) = &run.train_log {
            write_log(log, &logs.join(format!("train_{method}_fold{k}.jsonl")))?;
        }
        if let Some(log) = &run.ft_log {
            let mut f = create(&logs.join(format!("train_{method}_fold{k}.jsonl")))?;
            for r in log {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
        }
        if let Some(model) = &run.model {
            model
                .to_checkpoint(hash)
                .save(&ckpts.join(format!("{method}_fold{k}.json")))?;
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    if cfg.methods.is_empty() {
        bail!("no methods selected");
    }
    let items = load_items(cfg)?;
    cfg.prepare_out()?;
    let plan = fold_plan(cfg, &items).context("fold stage")?;
    write_file(&cfg.out.join("folds.json"), serde_json::to_string_pretty(&plan)?)?;

    let exp = cfg.experiment();
    let hash = config_hash(&exp);
    let record = ExperimentRecord {
        config: cfg,
        seeds: cfg.seeds(),
        config_hash: hash.clone(),
    };
    write_file(&cfg.out.join("experiment.json"), serde_json::to_string_pretty(&record)?)?;

    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for &method in &cfg.methods {
        info!("evaluating {method} over {} folds", plan.fold_count());
        let cv = cross_validate_detailed(method, &items, &plan, &exp, &cfg.dataset);
        write_run_artifacts(&cfg.out, method, &cv, &hash)?;
        write_file(&cfg.out.join(format!("report_{method}.json")), cv.report.to_json())?;
        if let Some(f) = &cv.report.failure {
            failed.push(format!("{method} fold {}: {}", f.fold, f.message));
        }
        reports.push(cv.report);
    }
    let table = format_table(&reports);
    write_file(&cfg.out.join("table.txt"), &table)?;
    print!("{table}");
    if !failed.is_empty() {
        bail!("training stage failed: {}", failed.join("; "));
    }
    Ok(())
}

// ============================================================================
// report
// ============================================================================

const METHOD_ORDER: [Method; 5] = [Method::Ours, Method::Lr, Method::Ft, Method::Ftwr, Method::MeanPredictor];

/// Re-renders the comparison table from `report_*.json` files in `dir`.
pub fn report_table(dir: &Path, out: &Path) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
        })
        .collect();
    if paths.is_empty() {
        bail!("no report_*.json files in {}", dir.display());
    }
    paths.sort();
    let mut reports = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        reports.push(r);
    }
    let rank = |m: Method| METHOD_ORDER.iter().position(|&x| x == m).unwrap_or(METHOD_ORDER.len());
    reports.sort_by_key(|r| rank(r.method));
    let table = format_table(&reports);
    fs::create_dir_all(out)?;
    write_file(&out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Per-student difficulties of one item under a saved model.
pub fn report_item(cfg: &RunConfig, checkpoint: &Path, item: &str, bins: Option<usize>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = DifficultyModel::from_checkpoint(&ckpt)?;
    let items = load_items(cfg)?;
    let aug = items
        .iter()
        .find(|a| a.base.id == item)
        .ok_or_else(|| anyhow!("item {item} not found"))?;
    cfg.prepare_out()?;
    let per = per_student_difficulty(&model, aug)?;
    let bins = bins.unwrap_or(DEFAULT_BINS);
    per.write_scatter_csv(create(&cfg.out.join(format!("scatter_{item}.csv")))?)?;
    per.write_histogram_csv(bins, create(&cfg.out.join(format!("histogram_{item}.csv")))?)?;
    write_file(&cfg.out.join(format!("per_student_{item}.svg")), per.to_svg(bins))?;
    info!("{item}: {} per-student difficulties", per.difficulties.len());
    Ok(())
}
