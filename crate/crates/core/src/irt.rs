//! Item response theory: 2PL/3PL response functions, joint maximum-likelihood
//! calibration, knowledge-level sampling and a response simulator.
//!
//! Calibration maximizes the joint log-likelihood of all responses with a
//! standard-normal penalty on abilities, using diagonal Fisher-scoring steps
//! with backtracking. After every step abilities are re-standardized (and the
//! item parameters transformed to match) which pins the latent scale; the
//! likelihood is invariant under that transform.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ResponseRecord;
use crate::DISTRACTOR_COUNT;

/// Upper bound for the 3PL guessing parameter.
pub const MAX_GUESSING: f64 = 0.35;
/// Difficulty assigned to items that every respondent got right (negated for
/// items nobody got right).
pub const DEGENERATE_DIFFICULTY: f64 = 4.0;

const MIN_LOG_A: f64 = -3.0; // a >= 0.05
const MAX_LOG_A: f64 = 2.0794415416798357; // a <= 8
const PROB_EPS: f64 = 1e-12;

#[derive(Error, Debug)]
pub enum IrtError {
    #[error("invalid item parameters: {0}")]
    InvalidParams(String),
    #[error("item {item} has {count} responses, below the floor of {floor}")]
    TooFewResponses {
        item: String,
        count: usize,
        floor: usize,
    },
    #[error("no responses to calibrate")]
    NoResponses,
    #[error("ability missing for student {0}")]
    MissingAbility(String),
    #[error(
        "calibration did not converge after {iterations} iterations \
         (last improvement {last_improvement:.3e}, log-likelihood {log_likelihood:.6})"
    )]
    NotConverged {
        iterations: usize,
        last_improvement: f64,
        log_likelihood: f64,
    },
    #[error("distractor profile for item {item} is not a probability vector: {profile:?}")]
    InvalidProfile {
        item: String,
        profile: [f64; DISTRACTOR_COUNT],
    },
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IrtError>;

// ============================================================================
// Response functions
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrtModel {
    #[serde(rename = "2PL")]
    TwoPl,
    #[serde(rename = "3PL")]
    ThreePl,
}

impl std::str::FromStr for IrtModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "2pl" => Ok(Self::TwoPl),
            "3pl" => Ok(Self::ThreePl),
            other => Err(format!("unknown IRT model {other:?}")),
        }
    }
}

impl std::fmt::Display for IrtModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoPl => "2PL",
            Self::ThreePl => "3PL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub model: IrtModel,
    /// Discrimination.
    pub a: f64,
    /// Difficulty (logit scale).
    pub b: f64,
    /// Guessing; always 0 for 2PL.
    pub c: f64,
}

impl ItemParams {
    pub fn two_pl(a: f64, b: f64) -> Result<Self> {
        Self::new(IrtModel::TwoPl, a, b, 0.0)
    }

    pub fn three_pl(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(IrtModel::ThreePl, a, b, c)
    }

    pub fn new(model: IrtModel, a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Self { model, a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(IrtError::InvalidParams(format!("a = {} must be > 0", self.a)));
        }
        if !self.b.is_finite() {
            return Err(IrtError::InvalidParams(format!("b = {} must be finite", self.b)));
        }
        if !(0.0..=MAX_GUESSING).contains(&self.c) {
            return Err(IrtError::InvalidParams(format!(
                "c = {} outside [0, {MAX_GUESSING}]",
                self.c
            )));
        }
        if self.model == IrtModel::TwoPl && self.c != 0.0 {
            return Err(IrtError::InvalidParams("2PL items carry c = 0".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a student of ability `theta` answers the item correctly.
#[inline]
pub fn prob_correct(theta: f64, params: &ItemParams) -> f64 {
    params.c + (1.0 - params.c) * sigmoid(params.a * (theta - params.b))
}

// ============================================================================
// Knowledge levels
// ============================================================================

/// Fixed population of sampled student knowledge levels (rows), drawn
/// i.i.d. from a standard normal. Never mutated after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeMatrix {
    values: Array2<f64>,
    seed: u64,
}

impl KnowledgeMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.row(j)
    }

    /// Population size.
    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    /// Dimensionality of a knowledge level.
    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub const DEFAULT_POPULATION: usize = 1000;
pub const DEFAULT_KNOWLEDGE_DIM: usize = 2;

/// Draws an `m` x `d` matrix of standard-normal knowledge levels.
///
/// # Panics
/// If `m` or `d` is zero.
pub fn sample_knowledge(m: usize, d: usize, seed: u64) -> KnowledgeMatrix {
    assert!(m >= 1 && d >= 1, "knowledge matrix needs m >= 1 and d >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((m, d), || rng.sample(StandardNormal));
    KnowledgeMatrix { values, seed }
}

// ============================================================================
// Simulation
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedItem {
    pub id: String,
    pub params: ItemParams,
    /// Probability of each distractor given an incorrect response.
    pub distractor_profile: [f64; DISTRACTOR_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    /// (student id, ability) in generation order.
    pub abilities: Vec<(String, f64)>,
    pub items: Vec<SimulatedItem>,
    pub responses: Vec<ResponseRecord>,
}

pub fn student_id(index: usize) -> String {
    format!("s{index:06}")
}

/// Simulates every student answering every item. Correctness follows
/// [`prob_correct`]; a wrong answer picks a distractor from the item's profile.
pub fn simulate_responses(
    items: &[SimulatedItem],
    cohort_size: usize,
    seed: u64,
) -> Result<SyntheticCohort> {
    for item in items {
        item.params.validate()?;
        let p = &item.distractor_profile;
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(IrtError::InvalidProfile {
                item: item.id.clone(),
                profile: *p,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abilities: Vec<(String, f64)> = (0..cohort_size)
        .map(|s| (student_id(s), rng.sample(StandardNormal)))
        .collect();
    let mut responses = Vec::with_capacity(cohort_size * items.len());
    for (student, theta) in &abilities {
        for item in items {
            let correct = rng.random::<f64>() < prob_correct(*theta, &item.params);
            let selected = if correct {
                0
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = 1;
                for (k, p) in item.distractor_profile.iter().enumerate() {
                    if *p > 0.0 {
                        acc += p;
                        pick = k + 1;
                        if u < acc {
                            break;
                        }
                    }
                }
                pick as u8
            };
            responses.push(ResponseRecord {
                student_id: student.clone(),
                mcq_id: item.id.clone(),
                selected,
                timestamp: None,
            });
        }
    }
    Ok(SyntheticCohort {
        abilities,
        items: items.to_vec(),
        responses,
    })
}

// ============================================================================
// Calibration
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub model: IrtModel,
    /// Minimum responses per item.
    pub min_responses: usize,
    pub max_iterations: usize,
    /// Objective improvement considered negligible.
    pub tolerance: f64,
    /// Consecutive negligible improvements required to stop.
    pub patience: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            model: IrtModel::TwoPl,
            min_responses: 20,
            max_iterations: 2000,
            tolerance: 1e-6,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedItem {
    pub id: String,
    pub params: ItemParams,
    pub responses: usize,
    /// Every respondent answered identically; `b` was clamped.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub items: Vec<CalibratedItem>,
    pub abilities: Vec<(String, f64)>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl Calibration {
    pub fn difficulties(&self) -> HashMap<String, f64> {
        self.items
            .iter()
            .map(|i| (i.id.clone(), i.params.b))
            .collect()
    }

    /// CSV of (item id, a, b, c, response count).
    pub fn write_items_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "a", "b", "c", "responses"])?;
        for item in &self.items {
            w.write_record([
                item.id.clone(),
                item.params.a.to_string(),
                item.params.b.to_string(),
                item.params.c.to_string(),
                item.responses.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV of (student id, theta).
    pub fn write_abilities_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["student_id", "theta"])?;
        for (id, theta) in &self.abilities {
            w.write_record([id.clone(), theta.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unconstrained parameters: `log_a`, `b`, `guess_logit` per item, `theta`
/// per student. Guessing is `MAX_GUESSING * sigmoid(guess_logit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParams {
    pub theta: Vec<f64>,
    pub log_a: Vec<f64>,
    pub b: Vec<f64>,
    pub guess_logit: Vec<f64>,
}

impl FreeParams {
    fn axpy(&self, step: f64, dir: &FreeParams) -> FreeParams {
        let f = |x: &[f64], d: &[f64]| -> Vec<f64> {
            x.iter().zip(d).map(|(x, d)| x + step * d).collect()
        };
        FreeParams {
            theta: f(&self.theta, &dir.theta),
            log_a: f(&self.log_a, &dir.log_a)
                .into_iter()
                .map(|v| v.clamp(MIN_LOG_A, MAX_LOG_A))
                .collect(),
            b: f(&self.b, &dir.b),
            guess_logit: f(&self.guess_logit, &dir.guess_logit),
        }
    }
}

/// Dichotomous response data indexed for calibration.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub model: IrtModel,
    pub student_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// (student index, item index, correct)
    responses: Vec<(u32, u32, bool)>,
    /// Items whose parameters are optimized (non-degenerate).
    active_item: Vec<bool>,
    /// Whether ability estimates are free (false when abilities are given).
    free_abilities: bool,
}

struct Derivs {
    grad: FreeParams,
    info: FreeParams,
}

impl CalibrationProblem {
    pub fn new(records: &[ResponseRecord], model: IrtModel) -> Self {
        let mut students = BTreeMap::new();
        let mut items = BTreeMap::new();
        for r in records {
            students.entry(r.student_id.clone()).or_insert(0u32);
            items.entry(r.mcq_id.clone()).or_insert(0u32);
        }
        for (i, v) in students.values_mut().enumerate() {
            *v = i as u32;
        }
        for (i, v) in items.values_mut().enumerate() {
            *v = i as u32;
        }
        let responses = records
            .iter()
            .map(|r| (students[&r.student_id], items[&r.mcq_id], r.is_correct()))
            .collect();
        let n_items = items.len();
        Self {
            model,
            student_ids: students.into_keys().collect(),
            item_ids: items.into_keys().collect(),
            responses,
            active_item: vec![true; n_items],
            free_abilities: true,
        }
    }

    pub fn initial_params(&self) -> FreeParams {
        let guess0 = match self.model {
            IrtModel::TwoPl => 0.0,
            // c = 0.15
            IrtModel::ThreePl => (0.15f64 / MAX_GUESSING / (1.0 - 0.15 / MAX_GUESSING)).ln(),
        };
        // Start abilities and difficulties from standardized logits of the
        // observed proportions.
        let mut s_tot = vec![(0.0f64, 0.0f64); self.student_ids.len()];
        let mut i_tot = vec![(0.0f64, 0.0f64); self.item_ids.len()];
        for &(s, i, y) in &self.responses {
            let y = f64::from(u8::from(y));
            s_tot[s as usize].0 += y;
            s_tot[s as usize].1 += 1.0;
            i_tot[i as usize].0 += y;
            i_tot[i as usize].1 += 1.0;
        }
        let logit = |(k, n): (f64, f64)| {
            let p = (k + 0.5) / (n + 1.0);
            (p / (1.0 - p)).ln()
        };
        let mut theta: Vec<f64> = s_tot.into_iter().map(logit).collect();
        standardize_in_place(&mut theta);
        FreeParams {
            theta,
            log_a: vec![0.0; self.item_ids.len()],
            b: i_tot.into_iter().map(|t| -logit(t)).collect(),
            guess_logit: vec![guess0; self.item_ids.len()],
        }
    }

    fn guessing(&self, g: f64) -> (f64, f64) {
        match self.model {
            IrtModel::TwoPl => (0.0, 0.0),
            IrtModel::ThreePl => {
                let s = sigmoid(g);
                (MAX_GUESSING * s, MAX_GUESSING * s * (1.0 - s))
            }
        }
    }

    /// Joint log-likelihood of the active items minus `0.5 * sum(theta^2)`
    /// over free abilities.
    pub fn objective(&self, p: &FreeParams) -> f64 {
        let mut ll = 0.0;
        for &(s, i, y) in &self.responses {
            let (s, i) = (s as usize, i as usize);
            if !self.active_item[i] {
                continue;
            }
            let a = p.log_a[i].exp();
            let (c, _) = self.guessing(p.guess_logit[i]);
            let prob = (c + (1.0 - c) * sigmoid(a * (p.theta[s] - p.b[i])))
                .clamp(PROB_EPS, 1.0 - PROB_EPS);
            ll += if y { prob.ln() } else { (1.0 - prob).ln() };
        }
        if self.free_abilities {
            ll -= 0.5 * p.theta.iter().map(|t| t * t).sum::<f64>();
        }
        ll
    }

    fn derivs(&self, p: &FreeParams) -> Derivs {
        let zeros = |n: usize| vec![0.0; n];
        let (ns, ni) = (self.student_ids.len(), self.item_ids.len());
        let mut grad = FreeParams {
            theta: zeros(ns),
            log_a: zeros(ni),
            b: zeros(ni),
            guess_logit: zeros(ni),
        };
        let mut info = grad.clone();
        for &(s, i, y) in &self.responses {
            let (s, i) = (s as usize, i as usize);
            if !self.active_item[i] {
                continue;
            }
            let a = p.log_a[i].exp();
            let (c, dc) = self.guessing(p.guess_logit[i]);
            let diff = p.theta[s] - p.b[i];
            let z = a * diff;
            let sg = sigmoid(z);
            let prob = (c + (1.0 - c) * sg).clamp(PROB_EPS, 1.0 - PROB_EPS);
            let pq = prob * (1.0 - prob);
            let resid = (f64::from(u8::from(y)) - prob) / pq;
            let dp_dz = (1.0 - c) * sg * (1.0 - sg);
            // dP/d(param) for theta, log_a, b, guess_logit
            let d_theta = dp_dz * a;
            let d_loga = dp_dz * z;
            let d_b = -dp_dz * a;
            let d_g = (1.0 - sg) * dc;
            grad.theta[s] += resid * d_theta;
            info.theta[s] += d_theta * d_theta / pq;
            grad.log_a[i] += resid * d_loga;
            info.log_a[i] += d_loga * d_loga / pq;
            grad.b[i] += resid * d_b;
            info.b[i] += d_b * d_b / pq;
            grad.guess_logit[i] += resid * d_g;
            info.guess_logit[i] += d_g * d_g / pq;
        }
        if self.free_abilities {
            for (g, (h, t)) in grad.theta.iter_mut().zip(info.theta.iter_mut().zip(&p.theta)) {
                *g -= t;
                *h += 1.0;
            }
        } else {
            grad.theta.fill(0.0);
        }
        if self.model == IrtModel::TwoPl {
            grad.guess_logit.fill(0.0);
        }
        for i in 0..ni {
            if !self.active_item[i] {
                grad.log_a[i] = 0.0;
                grad.b[i] = 0.0;
                grad.guess_logit[i] = 0.0;
            }
        }
        Derivs { grad, info }
    }

    /// Analytic gradient of [`CalibrationProblem::objective`].
    pub fn gradient(&self, p: &FreeParams) -> FreeParams {
        self.derivs(p).grad
    }

    fn scoring_direction(&self, p: &FreeParams) -> FreeParams {
        let Derivs { grad, info } = self.derivs(p);
        let step = |g: &[f64], h: &[f64], cap: f64| -> Vec<f64> {
            g.iter()
                .zip(h)
                .map(|(g, h)| (g / (h + 1e-8)).clamp(-cap, cap))
                .collect()
        };
        FreeParams {
            theta: step(&grad.theta, &info.theta, 1.0),
            log_a: step(&grad.log_a, &info.log_a, 0.5),
            b: step(&grad.b, &info.b, 1.0),
            guess_logit: step(&grad.guess_logit, &info.guess_logit, 1.0),
        }
    }

    /// Rescales abilities to mean 0 / sd 1 and transforms item parameters so
    /// every response probability is unchanged.
    fn standardize(&self, p: &mut FreeParams) {
        let n = p.theta.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = p.theta.iter().sum::<f64>() / n;
        let sd = (p.theta.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 1e-12) {
            return;
        }
        for t in &mut p.theta {
            *t = (*t - mean) / sd;
        }
        for i in 0..p.b.len() {
            if self.active_item[i] {
                p.b[i] = (p.b[i] - mean) / sd;
                p.log_a[i] = (p.log_a[i] + sd.ln()).clamp(MIN_LOG_A, MAX_LOG_A);
            }
        }
    }

    fn optimize(&self, mut p: FreeParams, cfg: &CalibrationConfig) -> Result<(FreeParams, usize, f64)> {
        let mut obj = self.objective(&p);
        let mut quiet = 0;
        let mut last_improvement = f64::INFINITY;
        for iter in 1..=cfg.max_iterations {
            let dir = self.scoring_direction(&p);
            let mut step = 1.0;
            let mut next = None;
            // Candidates are compared on the anchored scale, where the
            // ability penalty is constant.
            for _ in 0..30 {
                let mut cand = p.axpy(step, &dir);
                if self.free_abilities {
                    self.standardize(&mut cand);
                }
                let cand_obj = self.objective(&cand);
                if cand_obj >= obj {
                    next = Some((cand, cand_obj));
                    break;
                }
                step *= 0.5;
            }
            if let Some((cand, cand_obj)) = next {
                last_improvement = cand_obj - obj;
                p = cand;
                obj = cand_obj;
            } else {
                last_improvement = 0.0;
            }
            if last_improvement.abs() < cfg.tolerance {
                quiet += 1;
                if quiet >= cfg.patience {
                    return Ok((p, iter, obj));
                }
            } else {
                quiet = 0;
            }
        }
        Err(IrtError::NotConverged {
            iterations: cfg.max_iterations,
            last_improvement,
            log_likelihood: obj,
        })
    }
}

fn standardize_in_place(v: &mut [f64]) {
    let n = v.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    for t in v.iter_mut() {
        *t = if sd > 1e-12 { (*t - mean) / sd } else { 0.0 };
    }
}

fn prepare(
    records: &[ResponseRecord],
    cfg: &CalibrationConfig,
) -> Result<(CalibrationProblem, Vec<usize>, Vec<Option<f64>>)> {
    if records.is_empty() {
        return Err(IrtError::NoResponses);
    }
    let mut problem = CalibrationProblem::new(records, cfg.model);
    let ni = problem.item_ids.len();
    let mut counts = vec![0usize; ni];
    let mut correct = vec![0usize; ni];
    for &(_, i, y) in &problem.responses {
        counts[i as usize] += 1;
        correct[i as usize] += usize::from(y);
    }
    let mut clamped = vec![None; ni];
    for i in 0..ni {
        if counts[i] < cfg.min_responses {
            return Err(IrtError::TooFewResponses {
                item: problem.item_ids[i].clone(),
                count: counts[i],
                floor: cfg.min_responses,
            });
        }
        if correct[i] == 0 || correct[i] == counts[i] {
            let b = if correct[i] == 0 {
                DEGENERATE_DIFFICULTY
            } else {
                -DEGENERATE_DIFFICULTY
            };
            log::warn!(
                "item {} answered {} by every respondent; difficulty clamped to {b}",
                problem.item_ids[i],
                if correct[i] == 0 { "wrongly" } else { "correctly" }
            );
            problem.active_item[i] = false;
            clamped[i] = Some(b);
        }
    }
    Ok((problem, counts, clamped))
}

fn collect_items(
    problem: &CalibrationProblem,
    p: &FreeParams,
    counts: &[usize],
    clamped: &[Option<f64>],
) -> Vec<CalibratedItem> {
    (0..problem.item_ids.len())
        .map(|i| {
            let (params, degenerate) = match clamped[i] {
                Some(b) => (
                    ItemParams {
                        model: problem.model,
                        a: 1.0,
                        b,
                        c: 0.0,
                    },
                    true,
                ),
                None => (
                    ItemParams {
                        model: problem.model,
                        a: p.log_a[i].exp(),
                        b: p.b[i],
                        c: problem.guessing(p.guess_logit[i]).0,
                    },
                    false,
                ),
            };
            CalibratedItem {
                id: problem.item_ids[i].clone(),
                params,
                responses: counts[i],
                degenerate,
            }
        })
        .collect()
}

/// Jointly estimates item parameters and student abilities from dichotomous
/// (key vs. not key) responses.
pub fn calibrate(records: &[ResponseRecord], cfg: &CalibrationConfig) -> Result<Calibration> {
    let (problem, counts, clamped) = prepare(records, cfg)?;
    let init = problem.initial_params();
    let (p, iterations, _) = problem.optimize(init, cfg)?;
    let abilities = problem
        .student_ids
        .iter()
        .cloned()
        .zip(p.theta.iter().copied())
        .collect();
    let no_penalty = CalibrationProblem {
        free_abilities: false,
        ..problem.clone()
    };
    Ok(Calibration {
        items: collect_items(&problem, &p, &counts, &clamped),
        abilities,
        iterations,
        log_likelihood: no_penalty.objective(&p),
    })
}

/// Estimates item parameters with student abilities held at known values.
pub fn calibrate_items(
    records: &[ResponseRecord],
    abilities: &HashMap<String, f64>,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    let (mut problem, counts, clamped) = prepare(records, cfg)?;
    problem.free_abilities = false;
    let mut init = problem.initial_params();
    for (k, id) in problem.student_ids.iter().enumerate() {
        init.theta[k] = *abilities
            .get(id)
            .ok_or_else(|| IrtError::MissingAbility(id.clone()))?;
    }
    let (p, iterations, ll) = problem.optimize(init, cfg)?;
    Ok(Calibration {
        items: collect_items(&problem, &p, &counts, &clamped),
        abilities: problem
            .student_ids
            .iter()
            .cloned()
            .zip(p.theta.iter().copied())
            .collect(),
        iterations,
        log_likelihood: ll,
    })
}
