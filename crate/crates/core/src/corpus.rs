//! MCQ data model, JSONL ingestion, response aggregation and fold planning.
//!
//! Items are stored canonically with the key first, so option index 0 is the
//! key everywhere downstream. The letters an item was displayed with (when
//! known) are carried in [`Mcq::labels`] for reporting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::SelectionDistribution;
use crate::{DISTRACTOR_COUNT, OPTION_COUNT};

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record ({field}): {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("item {id}: expected {DISTRACTOR_COUNT} distractors, found {found}")]
    DistractorCount { id: String, found: usize },
    #[error("item {id}: expected {OPTION_COUNT} counts, found {found}")]
    CountArity { id: String, found: usize },
    #[error("item {id}: key text duplicates a distractor")]
    KeyDuplicatesDistractor { id: String },
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    Empty,
    #[error("responses reference unknown items: {0:?}")]
    UnknownItems(Vec<String>),
    #[error("response by {student} on {item} selects option {selected}, expected 0..=3")]
    InvalidSelection {
        student: String,
        item: String,
        selected: u8,
    },
    #[error("item {0} has no responses; its selection distribution is undefined")]
    ZeroCounts(String),
    #[error("corpus of {0} items is too small for a 5-way split (need at least 10)")]
    TooSmallForFolds(usize),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

// ============================================================================
// Domain types
// ============================================================================

/// One multiple-choice question in canonical (key-first) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mcq {
    pub id: String,
    pub stem: String,
    pub key: String,
    pub distractors: [String; DISTRACTOR_COUNT],
    /// Selection counts, key first.
    pub counts: [u64; OPTION_COUNT],
    /// Ground-truth difficulty on the IRT logit scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
    /// Display letters of (key, d1, d2, d3) in the source material.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<[String; OPTION_COUNT]>,
}

impl Mcq {
    /// Option texts in canonical order.
    pub fn options(&self) -> [&str; OPTION_COUNT] {
        [
            &self.key,
            &self.distractors[0],
            &self.distractors[1],
            &self.distractors[2],
        ]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.distractors.iter().any(|d| d == &self.key) {
            return Err(CorpusError::KeyDuplicatesDistractor {
                id: self.id.clone(),
            });
        }
        Ok(())
    }
}

/// Single student response as exported by an assessment platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub student_id: String,
    pub mcq_id: String,
    /// Canonical option index, 0 = key.
    pub selected: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl ResponseRecord {
    pub fn is_correct(&self) -> bool {
        self.selected == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub source: String,
    /// Aggregation window of the response counts, e.g. "2008-2024".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
}

/// A validated collection of MCQs with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    items: Vec<Mcq>,
    index: HashMap<String, usize>,
    pub provenance: Provenance,
}

/// Supported on-disk record layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `{id, stem, key, distractors[3], counts[4], difficulty?, labels?}`, key first.
    Canonical,
    /// `{id, stem, options: {letter: text}, answer: letter, counts: {letter: n}, difficulty?}`
    Lettered,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "canonical" | "jsonl" => Ok(Self::Canonical),
            "lettered" => Ok(Self::Lettered),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

impl Corpus {
    pub fn new(items: Vec<Mcq>, provenance: Provenance) -> Result<Self> {
        if items.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            item.validate()?;
            if index.insert(item.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self {
            items,
            index,
            provenance,
        })
    }

    pub fn items(&self) -> &[Mcq] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Mcq> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|m| m.id.as_str())
    }

    /// Items without any recorded response. They stay usable for prediction
    /// but carry no selection-distribution signal.
    pub fn unanswered_ids(&self) -> Vec<&str> {
        self.items
            .iter()
            .filter(|m| m.total_count() == 0)
            .map(|m| m.id.as_str())
            .collect()
    }

    /// Copy of the corpus with every difficulty replaced from `difficulties`
    /// (ids missing from the map keep their current value).
    pub fn with_difficulties(&self, difficulties: &HashMap<String, f64>) -> Self {
        let mut out = self.clone();
        for item in &mut out.items {
            if let Some(&b) = difficulties.get(&item.id) {
                item.difficulty = Some(b);
            }
        }
        out
    }

    /// Canonical JSONL text: one record per line, fixed field order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("Mcq serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// CSV of counts and normalized distributions (blank distribution for
    /// unanswered items).
    pub fn write_counts_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "id", "n_key", "n_d1", "n_d2", "n_d3", "p_key", "p_d1", "p_d2", "p_d3",
        ])?;
        for item in &self.items {
            let mut row: Vec<String> = vec![item.id.clone()];
            row.extend(item.counts.iter().map(|c| c.to_string()));
            match selection_distribution(item) {
                Ok(d) => row.extend(d.0.iter().map(|p| p.to_string())),
                Err(_) => row.extend(std::iter::repeat_n(String::new(), OPTION_COUNT)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| CorpusError::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

// ============================================================================
// Ingestion
// ============================================================================

#[derive(Deserialize)]
struct CanonicalRecord {
    id: String,
    stem: String,
    key: String,
    distractors: Vec<String>,
    counts: Vec<u64>,
    #[serde(default)]
    difficulty: Option<f64>,
    #[serde(default)]
    labels: Option<[String; OPTION_COUNT]>,
}

#[derive(Deserialize)]
struct LetteredRecord {
    id: String,
    stem: String,
    options: BTreeMap<String, String>,
    answer: String,
    #[serde(default)]
    counts: BTreeMap<String, u64>,
    #[serde(default)]
    difficulty: Option<f64>,
}

fn parse_error(line: usize, err: serde_json::Error) -> CorpusError {
    // serde_json messages look like "missing field `key` at line 1 column 40"
    let message = err.to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "record".to_string());
    CorpusError::Parse {
        line,
        field,
        message,
    }
}

fn from_canonical(rec: CanonicalRecord) -> Result<Mcq> {
    let found = rec.distractors.len();
    let distractors: [String; DISTRACTOR_COUNT] = rec
        .distractors
        .try_into()
        .map_err(|_| CorpusError::DistractorCount {
            id: rec.id.clone(),
            found,
        })?;
    let found = rec.counts.len();
    let counts: [u64; OPTION_COUNT] =
        rec.counts
            .try_into()
            .map_err(|_| CorpusError::CountArity {
                id: rec.id.clone(),
                found,
            })?;
    Ok(Mcq {
        id: rec.id,
        stem: rec.stem,
        key: rec.key,
        distractors,
        counts,
        difficulty: rec.difficulty,
        labels: rec.labels,
    })
}

fn from_lettered(rec: LetteredRecord, line: usize) -> Result<Mcq> {
    if rec.options.len() != OPTION_COUNT {
        return Err(CorpusError::DistractorCount {
            id: rec.id,
            found: rec.options.len().saturating_sub(1),
        });
    }
    let key = rec.options.get(&rec.answer).ok_or_else(|| CorpusError::Parse {
        line,
        field: "answer".into(),
        message: format!("answer letter {:?} is not among the options", rec.answer),
    })?;
    let mut labels = vec![rec.answer.clone()];
    let mut distractors = Vec::with_capacity(DISTRACTOR_COUNT);
    let mut counts = vec![rec.counts.get(&rec.answer).copied().unwrap_or(0)];
    for (letter, text) in &rec.options {
        if letter != &rec.answer {
            labels.push(letter.clone());
            distractors.push(text.clone());
            counts.push(rec.counts.get(letter).copied().unwrap_or(0));
        }
    }
    Ok(Mcq {
        id: rec.id,
        stem: rec.stem,
        key: key.clone(),
        distractors: distractors.try_into().expect("three distractors"),
        counts: counts.try_into().expect("four counts"),
        difficulty: rec.difficulty,
        labels: Some(labels.try_into().expect("four labels")),
    })
}

/// Parses corpus text in the given format. Blank lines are skipped.
pub fn parse_corpus(text: &str, format: CorpusFormat, provenance: Provenance) -> Result<Corpus> {
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let item = match format {
            CorpusFormat::Canonical => {
                from_canonical(serde_json::from_str(raw).map_err(|e| parse_error(line, e))?)?
            }
            CorpusFormat::Lettered => {
                from_lettered(serde_json::from_str(raw).map_err(|e| parse_error(line, e))?, line)?
            }
        };
        items.push(item);
    }
    Corpus::new(items, provenance)
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_corpus(
        &text,
        format,
        Provenance {
            name,
            source: path.display().to_string(),
            window: None,
        },
    )
}

pub fn load_responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_error(i + 1, e)))
        .collect()
}

pub fn responses_to_jsonl(records: &[ResponseRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

// ============================================================================
// Aggregation and ground-truth distributions
// ============================================================================

/// Recounts option selections from raw responses. Existing counts are
/// replaced; items nobody answered end up with zero counts.
pub fn aggregate_responses(records: &[ResponseRecord], corpus: &Corpus) -> Result<Corpus> {
    let mut unknown: Vec<String> = records
        .iter()
        .filter(|r| corpus.get(&r.mcq_id).is_none())
        .map(|r| r.mcq_id.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(CorpusError::UnknownItems(unknown));
    }
    let mut out = corpus.clone();
    for item in &mut out.items {
        item.counts = [0; OPTION_COUNT];
    }
    for r in records {
        if r.selected as usize >= OPTION_COUNT {
            return Err(CorpusError::InvalidSelection {
                student: r.student_id.clone(),
                item: r.mcq_id.clone(),
                selected: r.selected,
            });
        }
        let idx = out.index[&r.mcq_id];
        out.items[idx].counts[r.selected as usize] += 1;
    }
    for id in out.unanswered_ids() {
        log::warn!("item {id} has no responses after aggregation");
    }
    Ok(out)
}

/// Observed selection frequencies of an item.
pub fn selection_distribution(mcq: &Mcq) -> Result<SelectionDistribution> {
    SelectionDistribution::from_weights(mcq.counts.map(|c| c as f64))
        .ok_or_else(|| CorpusError::ZeroCounts(mcq.id.clone()))
}

// ============================================================================
// Fold planning
// ============================================================================

pub const FOLD_COUNT: usize = 5;
const TRAIN_SHARE: f64 = 6.5;
const VALIDATION_SHARE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }
}

/// Splits `remaining` into (train, validation) sizes in a 6.5:1.5 ratio by
/// largest-remainder apportionment; a tied remainder goes to train.
fn apportion_train_validation(remaining: usize) -> (usize, usize) {
    let total = TRAIN_SHARE + VALIDATION_SHARE;
    let train_quota = remaining as f64 * TRAIN_SHARE / total;
    let val_quota = remaining as f64 * VALIDATION_SHARE / total;
    let (mut train, mut val) = (train_quota.floor() as usize, val_quota.floor() as usize);
    if train + val < remaining {
        if val_quota.fract() > train_quota.fract() {
            val += 1;
        } else {
            train += 1;
        }
    }
    (train, val)
}

/// Five-fold plan whose test sets partition the corpus. Within each fold the
/// non-test items are split 6.5:1.5 into train and validation.
pub fn split_folds(corpus: &Corpus, seed: u64) -> Result<FoldPlan> {
    split_folds_k(corpus, seed, FOLD_COUNT)
}

/// [`split_folds`] with a custom fold count (at least 2).
pub fn split_folds_k(corpus: &Corpus, seed: u64, fold_count: usize) -> Result<FoldPlan> {
    let n = corpus.len();
    if n < 10 || fold_count < 2 || n < 2 * fold_count {
        return Err(CorpusError::TooSmallForFolds(n));
    }
    let mut order: Vec<&str> = corpus.ids().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / fold_count;
    let extra = n % fold_count;
    let mut folds = Vec::with_capacity(fold_count);
    let mut start = 0;
    for f in 0..fold_count {
        let test_len = base + usize::from(f < extra);
        let (_, val_len) = apportion_train_validation(n - test_len);
        // Validation takes the ids that follow the test block cyclically.
        let rotated = order
            .iter()
            .cycle()
            .skip(start + test_len)
            .take(n - test_len);
        let rest: Vec<String> = rotated.map(|s| s.to_string()).collect();
        let test = order[start..start + test_len]
            .iter()
            .map(|s| s.to_string())
            .collect();
        folds.push(Fold {
            validation: rest[..val_len].to_vec(),
            train: rest[val_len..].to_vec(),
            test,
        });
        start += test_len;
    }
    Ok(FoldPlan { seed, folds })
}
