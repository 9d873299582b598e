//! Comparison methods: linear regression over syntactic features, and an
//! encoder regressor over packed item text with or without generated
//! explanations.

use std::collections::HashSet;
use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentedMcq;
use crate::corpus::Mcq;
use crate::encoder::{Encoder, EncoderError, EncoderSpec};
use crate::nn::{Adam, Linear};

pub const FEATURE_COUNT: usize = 9;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "sentences",
    "nouns",
    "unique_nouns",
    "prepositions",
    "flesch_kincaid",
    "numeric_values",
    "number_words",
    "operators",
    "unique_operators",
];
const RIDGE: f64 = 1e-8;

#[derive(Error, Debug)]
pub enum BaselineError {
    #[error("need more than {needed} items to fit, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("feature/target length mismatch: {features} vs {targets}")]
    LengthMismatch { features: usize, targets: usize },
    #[error("linear system could not be solved")]
    Singular,
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("no training items")]
    Empty,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

// ============================================================================
// Syntactic features
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntacticFeatures {
    pub sentences: f64,
    pub nouns: f64,
    pub unique_nouns: f64,
    pub prepositions: f64,
    pub flesch_kincaid: f64,
    pub numeric_values: f64,
    pub number_words: f64,
    pub operators: f64,
    pub unique_operators: f64,
}

impl SyntacticFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.sentences,
            self.nouns,
            self.unique_nouns,
            self.prepositions,
            self.flesch_kincaid,
            self.numeric_values,
            self.number_words,
            self.operators,
            self.unique_operators,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosTag {
    Noun,
    Preposition,
    Other,
}

/// Part-of-speech tagging over lower-cased word tokens.
pub trait PosTagger {
    fn tag(&self, words: &[String]) -> Vec<PosTag>;
}

/// Rule/lexicon tagger: closed-class preposition list, a small domain noun
/// lexicon, noun suffixes, and "determiner + word" as a noun cue.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconTagger;

const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beneath", "beside", "between", "beyond", "by", "down", "during", "except",
    "for", "from", "in", "inside", "into", "like", "near", "of", "off", "on", "onto", "out",
    "outside", "over", "past", "per", "since", "through", "throughout", "till", "to", "toward",
    "towards", "under", "underneath", "until", "up", "upon", "with", "within", "without",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "his", "her", "their",
    "its", "my", "your", "our", "some", "any", "no", "another",
];

const FUNCTION_WORDS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "has", "have",
    "had", "and", "or", "but", "if", "then", "than", "so", "not", "what", "which", "who", "whom",
    "whose", "when", "where", "why", "how", "it", "he", "she", "they", "we", "you", "i", "me",
    "him", "them", "us", "can", "could", "will", "would", "should", "may", "might", "must",
    "shall", "there", "here", "very", "more", "most", "less", "least", "same", "other", "all",
    "both", "many", "much", "few", "several",
];

const NOUNS: &[&str] = &[
    "number", "answer", "equation", "value", "sum", "product", "difference", "quotient",
    "fraction", "decimal", "percent", "percentage", "angle", "triangle", "square", "circle",
    "area", "perimeter", "length", "width", "height", "side", "shape", "graph", "line", "point",
    "total", "cost", "price", "time", "hour", "minute", "day", "week", "year", "pound", "metre",
    "meter", "apple", "student", "class", "question", "expression", "term", "factor",
    "multiple", "integer", "ratio", "volume", "mean", "median", "mode", "range", "probability",
    "coordinate", "axis", "money", "box", "step", "sequence", "pattern", "digit", "place",
    "result", "solution", "variable", "coefficient", "denominator", "numerator", "remainder",
    "rectangle", "polygon", "radius", "diameter", "distance", "speed", "weight", "temperature",
    "sign", "power", "root", "exponent", "unit", "table", "chart", "bag", "ball", "car", "book",
    "friend", "teacher", "school", "shop", "item", "group", "team", "game", "child", "children",
    "people", "person", "boy", "girl", "man", "woman", "statement", "option",
];

const NOUN_SUFFIXES: &[&str] = &["tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship"];

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety", "hundred",
    "thousand",
];

const OPERATORS: &[char] = &['+', '-', '−', '×', '÷', '*', '/', '=', '^', '<', '>', '≤', '≥', '%'];

fn is_noun_word(w: &str) -> bool {
    if NOUNS.contains(&w) {
        return true;
    }
    let singular = [w.strip_suffix("es"), w.strip_suffix('s')];
    if singular.iter().flatten().any(|s| NOUNS.contains(s)) {
        return true;
    }
    w.len() > 5 && NOUN_SUFFIXES.iter().any(|s| w.ends_with(s))
}

impl PosTagger for LexiconTagger {
    fn tag(&self, words: &[String]) -> Vec<PosTag> {
        let mut tags = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let w = w.as_str();
            let tag = if PREPOSITIONS.contains(&w) {
                PosTag::Preposition
            } else if !w.chars().all(char::is_alphabetic)
                || FUNCTION_WORDS.contains(&w)
                || DETERMINERS.contains(&w)
                || NUMBER_WORDS.contains(&w)
            {
                PosTag::Other
            } else if is_noun_word(w) {
                PosTag::Noun
            } else {
                let after_det = i > 0 && DETERMINERS.contains(&words[i - 1].as_str());
                let next_is_noun = words.get(i + 1).is_some_and(|n| is_noun_word(n));
                if after_det && !next_is_noun && !w.ends_with("ly") {
                    PosTag::Noun
                } else {
                    PosTag::Other
                }
            };
            tags.push(tag);
        }
        tags
    }
}

fn words_of(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sentence count: runs of `.`, `?` or `!` that close a span containing a
/// word. A period between digits is a decimal point. Trailing text without a
/// terminator counts as one more sentence.
fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_word = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            has_word = true;
        } else if matches!(c, '.' | '?' | '!') {
            let decimal = c == '.'
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if !decimal && has_word {
                count += 1;
                has_word = false;
            }
        }
    }
    count + usize::from(has_word)
}

fn syllables(word: &str) -> usize {
    if word.chars().any(|c| c.is_ascii_digit()) {
        return 1;
    }
    let mut groups = 0;
    let mut prev_vowel = false;
    for c in word.chars() {
        let v = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    if word.len() > 2 && word.ends_with('e') && !word.ends_with("le") && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// Grade-level score; zero for text without words.
pub fn flesch_kincaid(text: &str) -> f64 {
    let words = words_of(text);
    if words.is_empty() {
        return 0.0;
    }
    let sentences = count_sentences(text).max(1) as f64;
    let n = words.len() as f64;
    let syl: usize = words.iter().map(|w| syllables(w)).sum();
    0.39 * (n / sentences) + 11.8 * (syl as f64 / n) - 15.59
}

/// Numeric literals: digit runs, joined across a single `.` or `,` between
/// digits.
fn count_numbers(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() {
            count += 1;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || (matches!(chars[i], '.' | ',')
                        && i > 0
                        && chars[i - 1].is_ascii_digit()
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())))
            {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    count
}

/// Operator characters. A minus directly before a digit whose previous
/// non-space character is not alphanumeric or `)` is a sign; a hyphen
/// between two letters is punctuation.
fn operators(text: &str) -> Vec<char> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        if !OPERATORS.contains(&c) {
            continue;
        }
        if c == '-' || c == '−' {
            let next = chars.get(i + 1).copied();
            let prev_adjacent = if i > 0 { Some(chars[i - 1]) } else { None };
            if prev_adjacent.is_some_and(char::is_alphabetic) && next.is_some_and(char::is_alphabetic) {
                continue;
            }
            let prev = chars[..i].iter().rev().find(|p| !p.is_whitespace()).copied();
            let sign = next.is_some_and(|n| n.is_ascii_digit())
                && !prev.is_some_and(|p| p.is_alphanumeric() || p == ')');
            if sign {
                continue;
            }
            out.push('-');
        } else {
            out.push(c);
        }
    }
    out
}

/// The nine features over stem and options concatenated.
pub fn extract_features(mcq: &Mcq) -> SyntacticFeatures {
    extract_features_with(mcq, &LexiconTagger)
}

pub fn extract_features_with(mcq: &Mcq, tagger: &dyn PosTagger) -> SyntacticFeatures {
    let options = mcq.options();
    let parts: Vec<&str> = std::iter::once(mcq.stem.as_str()).chain(options).collect();
    text_features(&parts, tagger)
}

/// `parts[0]` is the stem; operators are scanned per part so a sign at the
/// start of an option is not mistaken for subtraction.
fn text_features(parts: &[&str], tagger: &dyn PosTagger) -> SyntacticFeatures {
    let stem = parts[0];
    let text = parts.join("\n");
    let words = words_of(&text);
    let tags = tagger.tag(&words);
    let nouns: Vec<&String> = words
        .iter()
        .zip(&tags)
        .filter(|(_, t)| **t == PosTag::Noun)
        .map(|(w, _)| w)
        .collect();
    let unique_nouns: HashSet<&String> = nouns.iter().copied().collect();
    let ops: Vec<char> = parts.iter().flat_map(|p| operators(p)).collect();
    let unique_ops: HashSet<char> = ops.iter().copied().collect();
    SyntacticFeatures {
        // Options are answer fragments, not sentences.
        sentences: count_sentences(stem) as f64,
        nouns: nouns.len() as f64,
        unique_nouns: unique_nouns.len() as f64,
        prepositions: tags.iter().filter(|t| **t == PosTag::Preposition).count() as f64,
        flesch_kincaid: flesch_kincaid(stem),
        numeric_values: count_numbers(&text) as f64,
        number_words: words.iter().filter(|w| NUMBER_WORDS.contains(&w.as_str())).count() as f64,
        operators: ops.len() as f64,
        unique_operators: unique_ops.len() as f64,
    }
}

pub fn write_features_csv<W: Write>(items: &[Mcq], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for mcq in items {
        let f = extract_features(mcq).to_array();
        let mut row = vec![mcq.id.clone()];
        row.extend(f.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ============================================================================
// Linear regression
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: [f64; FEATURE_COUNT],
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Closed-form least squares with intercept. A singular Gram matrix is
/// retried with a `1e-8` ridge on the diagonal.
pub fn fit_linear(features: &[[f64; FEATURE_COUNT]], targets: &[f64]) -> Result<LinearModel> {
    if features.len() != targets.len() {
        return Err(BaselineError::LengthMismatch {
            features: features.len(),
            targets: targets.len(),
        });
    }
    let n = features.len();
    if n <= FEATURE_COUNT {
        return Err(BaselineError::TooFewItems {
            needed: FEATURE_COUNT,
            got: n,
        });
    }
    let p = FEATURE_COUNT + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
    let y = DVector::from_column_slice(targets);
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * y;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            warn!("singular Gram matrix; adding ridge {RIDGE:e}");
            let ridged = gram + DMatrix::identity(p, p) * RIDGE;
            ridged.lu().solve(&rhs).ok_or(BaselineError::Singular)?
        }
    };
    let mut coefficients = [0.0; FEATURE_COUNT];
    for (k, c) in coefficients.iter_mut().enumerate() {
        *c = beta[k + 1];
    }
    if !beta.iter().all(|v| v.is_finite()) {
        return Err(BaselineError::Singular);
    }
    Ok(LinearModel {
        coefficients,
        intercept: beta[0],
    })
}

// ============================================================================
// Encoder regressors
// ============================================================================

/// `[stem, key, d1, d2, d3]`, newline separated.
pub fn ft_pack(mcq: &Mcq) -> String {
    let o = mcq.options();
    format!("{}\n{}\n{}\n{}\n{}", mcq.stem, o[0], o[1], o[2], o[3])
}

/// `[stem, reasoning, key, f1, d1, f2, d2, f3, d3]`, newline separated.
pub fn ftwr_pack(aug: &AugmentedMcq) -> String {
    let m = &aug.base;
    format!(
        "{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}",
        m.stem,
        aug.reasoning,
        m.key,
        aug.feedback[0],
        m.distractors[0],
        aug.feedback[1],
        m.distractors[1],
        aug.feedback[2],
        m.distractors[2]
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoder: f64,
    /// Learning rate of the regression head.
    pub lr_head: f64,
    pub seed: u64,
}

impl Default for FtConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 30,
            lr_encoder: 1e-5,
            lr_head: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PackVariant {
    Ft,
    Ftwr,
}

impl PackVariant {
    pub fn pack(&self, aug: &AugmentedMcq) -> String {
        match self {
            PackVariant::Ft => ft_pack(&aug.base),
            PackVariant::Ftwr => ftwr_pack(aug),
        }
    }
}

/// Encoder with a linear head on the pooled vector.
#[derive(Debug, Clone)]
pub struct FtRegressor {
    pub encoder: Encoder,
    pub head: Linear,
}

impl FtRegressor {
    pub fn raw(&self, text: &str) -> Result<Array1<f64>> {
        Ok(self.encoder.raw(text)?.0)
    }

    fn predict_raw(&self, raw: &Array2<f64>) -> Array1<f64> {
        let h = self.encoder.adapt(raw.view());
        self.head.forward(h.view()).column(0).to_owned()
    }

    pub fn predict(&self, text: &str) -> Result<f64> {
        let raw = self.raw(text)?.insert_axis(Axis(0));
        Ok(self.predict_raw(&raw)[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct FtOutcome {
    pub regressor: FtRegressor,
    pub best_epoch: usize,
    pub log: Vec<FtEpoch>,
}

fn stack(rows: &[Array1<f64>]) -> Array2<f64> {
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::stack(Axis(0), &views).expect("equal widths")
}

fn batch_mse(reg: &FtRegressor, raw: &Array2<f64>, y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let pred = reg.predict_raw(raw);
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Trains on (text, difficulty) pairs; keeps the epoch with minimum
/// validation MSE (training MSE when there is no validation data).
pub fn train_ft(
    spec: &EncoderSpec,
    train: &[(String, f64)],
    val: &[(String, f64)],
    cfg: &FtConfig,
) -> Result<FtOutcome> {
    if train.is_empty() {
        return Err(BaselineError::Empty);
    }
    let encoder = Encoder::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = Linear::init(encoder.dim(), 1, &mut rng);
    head.bias[0] = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
    let mut reg = FtRegressor { encoder, head };

    let encode = |items: &[(String, f64)]| -> Result<(Array2<f64>, Vec<f64>)> {
        let rows = items.iter().map(|(t, _)| reg.raw(t)).collect::<Result<Vec<_>>>()?;
        let raw = if rows.is_empty() {
            Array2::zeros((0, reg.encoder.dim()))
        } else {
            stack(&rows)
        };
        Ok((raw, items.iter().map(|(_, y)| *y).collect()))
    };
    let (train_raw, train_y) = encode(train)?;
    let (val_raw, val_y) = encode(val)?;
    let select = |r: &FtRegressor, train_mse: f64| {
        if val_y.is_empty() {
            train_mse
        } else {
            batch_mse(r, &val_raw, &val_y)
        }
    };

    let mut enc_opt = Adam::new(cfg.lr_encoder);
    let mut head_opt = Adam::new(cfg.lr_head);
    let train0 = batch_mse(&reg, &train_raw, &train_y);
    let val0 = select(&reg, train0);
    let mut log = vec![FtEpoch {
        epoch: 0,
        train_mse: train0,
        val_mse: val0,
    }];
    let mut best = (val0, 0, reg.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let raw = train_raw.select(Axis(0), chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| train_y[i]).collect();
            let h = reg.encoder.adapt(raw.view());
            let pred = reg.head.forward(h.view());
            let n = chunk.len() as f64;
            let mut g = Array2::zeros((chunk.len(), 1));
            for (i, t) in y.iter().enumerate() {
                let r = pred[[i, 0]] - t;
                sse += r * r;
                g[[i, 0]] = 2.0 * r / n;
            }
            let (hg, gh) = reg.head.backward(h.view(), g.view());
            let (ag, _) = reg.encoder.adapter.backward(raw.view(), gh.view());
            if reg.encoder.spec.trainable {
                let [w, b] = reg.encoder.adapter.tensors_mut();
                let [gw, gb] = ag.tensors();
                enc_opt.update(vec![w, b], vec![gw, gb]);
            }
            let [w, b] = reg.head.tensors_mut();
            let [gw, gb] = hg.tensors();
            head_opt.update(vec![w, b], vec![gw, gb]);
        }
        let train_mse = sse / train.len() as f64;
        if !train_mse.is_finite() {
            return Err(BaselineError::NonFinite { epoch });
        }
        let val_mse = select(&reg, train_mse);
        log.push(FtEpoch {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best.0 {
            best = (val_mse, epoch, reg.clone());
        }
    }
    let (_, best_epoch, regressor) = best;
    Ok(FtOutcome {
        regressor,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::item;
    use rand::Rng;

    fn mcq(stem: &str, options: [&str; 4]) -> Mcq {
        let mut m = item("x", [1, 1, 1, 1]);
        m.stem = stem.into();
        m.key = options[0].into();
        m.distractors = [options[1].into(), options[2].into(), options[3].into()];
        m
    }

    #[test]
    fn arithmetic_stem_counts() {
        let f = extract_features(&mcq("2 + 2 = ?", ["4", "3", "5", "22"]));
        assert!(f.numeric_values >= 3.0);
        assert_eq!(f.operators, 2.0);
        assert_eq!(f.unique_operators, 2.0);
    }

    #[test]
    fn signs_are_not_operators() {
        let f = extract_features(&mcq("Solve this equation: (-11) + 7 = ?", ["-4", "18", "-18", "-5"]));
        assert_eq!(f.operators, 2.0);
        assert_eq!(f.numeric_values, 6.0);
        let g = extract_features(&mcq("5 - 3 = ?", ["2", "8", "-2", "1"]));
        assert_eq!(g.operators, 2.0);
        assert_eq!(operators("a well-known rule"), Vec::<char>::new());
    }

    #[test]
    fn no_numbers_means_zero_numeric_features() {
        let f = extract_features(&mcq("Which shape has the most sides?", ["hexagon", "square", "triangle", "kite"]));
        assert_eq!(f.numeric_values, 0.0);
        assert_eq!(f.number_words, 0.0);
    }

    #[test]
    fn repeated_operator_counts_once_as_unique() {
        let f = extract_features(&mcq("a + + b", ["p", "q", "r", "s"]));
        assert_eq!(f.operators, 2.0);
        assert_eq!(f.unique_operators, 1.0);
    }

    #[test]
    fn number_words_and_sentences() {
        let f = extract_features(&mcq(
            "Tom has twenty apples. He gives away three. How many are left?",
            ["seventeen", "23", "3.5", "none"],
        ));
        assert_eq!(f.number_words, 3.0);
        assert_eq!(f.sentences, 3.0);
        assert_eq!(f.numeric_values, 2.0);
        assert!(f.nouns >= 1.0);
    }

    #[test]
    fn flesch_kincaid_empty_and_known_value() {
        assert_eq!(flesch_kincaid(""), 0.0);
        // 4 words, 1 sentence, syllables 1+1+1+1.
        let v = flesch_kincaid("The cat sat down.");
        assert!((v - (0.39 * 4.0 + 11.8 - 15.59)).abs() < 1e-12);
        assert_eq!(syllables("table"), 2);
        assert_eq!(syllables("equation"), 3);
    }

    #[test]
    fn tagger_finds_prepositions_and_nouns() {
        let words = words_of("The sum of the angles in a triangle");
        let tags = LexiconTagger.tag(&words);
        assert_eq!(tags.iter().filter(|t| **t == PosTag::Preposition).count(), 2);
        assert_eq!(tags.iter().filter(|t| **t == PosTag::Noun).count(), 3);
    }

    fn random_design(n: usize, seed: u64) -> Vec<[f64; FEATURE_COUNT]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn exact_linear_recovery_with_zero_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<[f64; 9]> = (0..30)
            .map(|_| {
                let mut r = [0.0; 9];
                r[0] = rng.random_range(-3.0..3.0);
                r
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_linear(&x, &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
        assert!(m.coefficients[1..].iter().all(|c| c.abs() < 1e-8));
    }

    #[test]
    fn constant_targets_fit_the_mean() {
        let x = random_design(40, 4);
        let m = fit_linear(&x, &[0.7; 40]).unwrap();
        assert!((m.intercept - 0.7).abs() < 1e-10);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn residuals_are_orthogonal_to_features() {
        let x = random_design(60, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = fit_linear(&x, &y).unwrap();
        let res: Vec<f64> = x.iter().zip(&y).map(|(r, t)| t - m.predict(r)).collect();
        for j in 0..FEATURE_COUNT {
            let dot: f64 = x.iter().zip(&res).map(|(r, e)| r[j] * e).sum();
            assert!(dot.abs() < 1e-8, "column {j}: {dot}");
        }
        assert!(res.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn closed_form_matches_gradient_descent() {
        let x = random_design(50, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v * (j as f64 - 4.0)).sum::<f64>() + rng.random_range(-0.5..0.5))
            .collect();
        let m = fit_linear(&x, &y).unwrap();
        let mut beta = [0.0; 10];
        for _ in 0..20_000 {
            let mut g = [0.0; 10];
            for (r, t) in x.iter().zip(&y) {
                let pred = beta[0] + (0..9).map(|j| beta[j + 1] * r[j]).sum::<f64>();
                let e = pred - t;
                g[0] += e;
                for j in 0..9 {
                    g[j + 1] += e * r[j];
                }
            }
            for k in 0..10 {
                beta[k] -= 0.05 * g[k] / x.len() as f64;
            }
        }
        assert!((beta[0] - m.intercept).abs() < 1e-6);
        for j in 0..9 {
            assert!((beta[j + 1] - m.coefficients[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_items_is_an_error() {
        let x = random_design(9, 1);
        assert!(matches!(
            fit_linear(&x, &[0.0; 9]),
            Err(BaselineError::TooFewItems { .. })
        ));
    }

    fn sample_aug() -> AugmentedMcq {
        let mut a = crate::encoder::tests::sample_aug();
        a.base.stem = "STEM".into();
        a.base.key = "KEY".into();
        a.base.distractors = ["DA".into(), "DB".into(), "DC".into()];
        a.reasoning = "REASON".into();
        a.feedback = ["FA".into(), "FB".into(), "FC".into()];
        a
    }

    #[test]
    fn pack_orders() {
        let a = sample_aug();
        let ft = ft_pack(&a.base);
        let pos: Vec<usize> = ["STEM", "KEY", "DA", "DB", "DC"].iter().map(|s| ft.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let ftwr = ftwr_pack(&a);
        let order = ["STEM", "REASON", "KEY", "FA", "DA", "FB", "DB", "FC", "DC"];
        let pos: Vec<usize> = order.iter().map(|s| ftwr.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        for s in order {
            assert_eq!(ftwr.matches(s).count(), 1);
        }
        assert_eq!(ftwr, ftwr_pack(&a));
    }

    fn topic_data(n: usize, seed: u64) -> Vec<(String, f64)> {
        let topics = ["fractions", "angles", "negative", "percent", "algebra"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let t = rng.random_range(0..topics.len());
                let filler = rng.random_range(0..1000);
                (format!("question about {} item {filler}", topics[t]), t as f64 - 2.0)
            })
            .collect()
    }

    #[test]
    fn ft_beats_mean_predictor_and_is_deterministic() {
        let train = topic_data(120, 1);
        let val = topic_data(40, 2);
        let cfg = FtConfig::default();
        let spec = EncoderSpec::default();
        let out = train_ft(&spec, &train, &val, &cfg).unwrap();
        let mean = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
        let mean_mse = val.iter().map(|(_, y)| (y - mean).powi(2)).sum::<f64>() / val.len() as f64;
        let best = out.log[out.best_epoch].val_mse;
        assert!(best < mean_mse, "{best} vs {mean_mse}");
        let again = train_ft(&spec, &train, &val, &cfg).unwrap();
        assert_eq!(again.log, out.log);
    }
}
