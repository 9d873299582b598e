//! Reasoning and feedback generation through a chat-completion provider.
//!
//! Every completion is keyed by a stable hash of (template version, model,
//! stem, option, role) and appended to a JSONL cache as soon as it arrives,
//! so interrupted batch runs resume where they stopped. In replay mode the
//! same file format is read as a fixture set and the network is never used;
//! a request without a fixture is a hard error.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Mcq};
use crate::DISTRACTOR_COUNT;

#[derive(Error, Debug)]
pub enum AugmentError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("stem and option must be non-empty")]
    EmptyInput,
    #[error("provider failed after {attempts} attempts (last status {status:?}): {message}")]
    Provider {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("provider returned an empty completion for {0}")]
    EmptyCompletion(String),
    #[error("replay fixture missing for cache key {0}")]
    MissingFixture(String),
    #[error("cache file {path}: {message}")]
    Cache { path: String, message: String },
    #[error("augmentation failed for {} item(s): {failed:?}", failed.len())]
    Partial {
        /// Items that completed; their completions are already cached.
        completed: Vec<AugmentedMcq>,
        /// (item id, error message)
        failed: Vec<(String, String)>,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
}

pub type Result<T> = std::result::Result<T, AugmentError>;

// ============================================================================
// Configuration and domain types
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub max_attempts: u32,
    /// Initial retry delay; doubles after each transient failure.
    pub backoff_ms: u64,
    pub requests_per_minute: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-4o".into(),
            temperature: 1.0,
            max_tokens: 1000,
            top_p: 0.95,
            max_attempts: 4,
            backoff_ms: 1000,
            requests_per_minute: 60,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(AugmentError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(AugmentError::InvalidConfig("max_tokens must be > 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(AugmentError::InvalidConfig("top_p must lie in (0, 1]".into()));
        }
        if self.max_attempts == 0 || self.requests_per_minute == 0 {
            return Err(AugmentError::InvalidConfig(
                "max_attempts and requests_per_minute must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionRole {
    Key,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub model: String,
    pub template_version: String,
    /// Cache keys for (reasoning, feedback 1..3).
    pub cache_keys: [String; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

/// An MCQ together with generated key reasoning and per-distractor feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedMcq {
    pub base: Mcq,
    pub reasoning: String,
    pub feedback: [String; DISTRACTOR_COUNT],
    pub metadata: GenerationMetadata,
}

impl AugmentedMcq {
    /// Auxiliary text of option `k` (0 = key).
    pub fn aux(&self, k: usize) -> &str {
        if k == 0 {
            &self.reasoning
        } else {
            &self.feedback[k - 1]
        }
    }

    /// Swaps two distractors together with their feedback and counts.
    pub fn swap_distractors(&mut self, i: usize, j: usize) {
        self.base.distractors.swap(i, j);
        self.feedback.swap(i, j);
        self.base.counts.swap(i + 1, j + 1);
        self.metadata.cache_keys.swap(i + 1, j + 1);
    }
}

pub fn augmented_to_jsonl(items: &[AugmentedMcq]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("AugmentedMcq serializes"));
        out.push('\n');
    }
    out
}

pub fn load_augmented(path: &Path) -> Result<Vec<AugmentedMcq>> {
    let text = fs::read_to_string(path).map_err(|e| AugmentError::Cache {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AugmentError::Cache {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

// ============================================================================
// Prompt template
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub stem: String,
    pub option: String,
    pub role: OptionRole,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Instructions plus exactly four worked demonstrations. The version string
/// participates in cache keys, so editing a demonstration must bump it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub instruction: String,
    pub demonstrations: [Demonstration; 4],
}

const INSTRUCTION: &str = "You are an experienced mathematics teacher. You will be shown a \
multiple-choice math question and one of its options.\n\
If the option is the correct answer, write the reasoning steps a student needs to reach it: \
number the steps, show every intermediate result, and finish by stating the answer.\n\
If the option is an incorrect answer, write a short feedback message that explains the most \
likely error or misconception that would lead a student to select it. Show the faulty \
computation when there is one.\n\
Reply with the reasoning steps or the feedback message only.";

impl Default for PromptTemplate {
    fn default() -> Self {
        let demo = |stem: &str, option: &str, role, completion: &str| Demonstration {
            stem: stem.into(),
            option: option.into(),
            role,
            completion: completion.into(),
        };
        Self {
            version: "reasoning-feedback-v1".into(),
            instruction: INSTRUCTION.into(),
            demonstrations: [
                demo(
                    "The sum of three consecutive even numbers is 48. What is the middle value?",
                    "16",
                    OptionRole::Key,
                    "To find the middle value of three consecutive even numbers that sum up to 48, \
                     let's represent the three consecutive even numbers as x, x+2, and x+4. \
                     Here's the step-by-step solution: 1. Add the three numbers together: \
                     x + (x+2) + (x+4) = 48; 2. Combine like terms: 3x + 6 = 48; 3. Subtract 6 \
                     from both sides to isolate the term with x: 3x = 42; 4. Divide both sides \
                     by 3 to solve for x: x = 14 So, the three consecutive even numbers are 14, \
                     16, and 18. The middle number is 16.",
                ),
                demo(
                    "What is 15% of 80?",
                    "12",
                    OptionRole::Key,
                    "1. Write 15% as a decimal: 15 / 100 = 0.15; 2. Multiply by the whole: \
                     0.15 × 80 = 12. So 15% of 80 is 12.",
                ),
                demo(
                    "Work out 3/4 + 1/8.",
                    "4/12",
                    OptionRole::Distractor,
                    "The student added the numerators (3 + 1 = 4) and the denominators \
                     (4 + 8 = 12) separately. Fractions can only be added once they share a \
                     denominator: 3/4 = 6/8, so the sum is 6/8 + 1/8 = 7/8.",
                ),
                demo(
                    "Solve 2x + 5 = 17.",
                    "11",
                    OptionRole::Distractor,
                    "The student added 5 to both sides instead of subtracting it, giving \
                     2x = 22 and x = 11. Undoing + 5 requires subtracting 5: 2x = 12, so x = 6.",
                ),
            ],
        }
    }
}

impl PromptTemplate {
    fn user_turn(stem: &str, option: &str, role: OptionRole) -> String {
        match role {
            OptionRole::Key => format!(
                "Question: {stem}\nCorrect Answer: {option}\nReasoning steps for the correct answer:"
            ),
            OptionRole::Distractor => format!(
                "Question: {stem}\nIncorrect Answer: {option}\nFeedback for the incorrect answer:"
            ),
        }
    }

    pub fn render(&self, stem: &str, option: &str, role: OptionRole) -> Vec<ChatMessage> {
        let mut msgs = vec![ChatMessage::new("system", self.instruction.clone())];
        for d in &self.demonstrations {
            msgs.push(ChatMessage::new("user", Self::user_turn(&d.stem, &d.option, d.role)));
            msgs.push(ChatMessage::new("assistant", d.completion.clone()));
        }
        msgs.push(ChatMessage::new("user", Self::user_turn(stem, option, role)));
        msgs
    }
}

/// Stable cache key: SHA-256 over a JSON array with fixed element order.
pub fn cache_key(template_version: &str, model: &str, stem: &str, option: &str, role: OptionRole) -> String {
    let role = match role {
        OptionRole::Key => "key",
        OptionRole::Distractor => "distractor",
    };
    let canonical = serde_json::to_string(&[template_version, model, stem, option, role])
        .expect("strings serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

// ============================================================================
// Providers
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderFailure {
    pub status: Option<u16>,
    pub message: String,
    pub transient: bool,
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderFailure>;
}

pub const ENDPOINT_ENV: &str = "MCQDIFF_LLM_ENDPOINT";
pub const TOKEN_ENV: &str = "MCQDIFF_LLM_TOKEN";

/// OpenAI-compatible `chat/completions` endpoint.
pub struct HttpProvider {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            token,
            agent,
        }
    }

    /// Reads the endpoint and auth token from the environment.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| {
            AugmentError::InvalidConfig(format!("{ENDPOINT_ENV} is not set"))
        })?;
        Ok(Self::new(endpoint, std::env::var(TOKEN_ENV).ok()))
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderFailure> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(request) {
            Ok(mut resp) => {
                let body: ChatResponse = resp.body_mut().read_json().map_err(|e| ProviderFailure {
                    status: Some(resp.status().as_u16()),
                    message: format!("unreadable response body: {e}"),
                    transient: false,
                })?;
                body.choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or_else(|| ProviderFailure {
                        status: Some(200),
                        message: "response has no choices".into(),
                        transient: false,
                    })
            }
            Err(ureq::Error::StatusCode(code)) => Err(ProviderFailure {
                status: Some(code),
                message: format!("HTTP {code}"),
                transient: code == 429 || code >= 500,
            }),
            Err(e) => Err(ProviderFailure {
                status: None,
                message: e.to_string(),
                transient: true,
            }),
        }
    }
}

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        let capacity = f64::from(per_minute.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a request may be issued.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second)
                    .min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                Duration::from_secs_f64((1.0 - tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

// ============================================================================
// Cache
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub cache_key: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<u64>,
}

/// Append-only completion store: concurrent readers, serialized appends.
pub struct CompletionCache {
    entries: RwLock<HashMap<String, CacheRecord>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl CompletionCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    fn read_records(path: &Path) -> Result<Vec<CacheRecord>> {
        let text = fs::read_to_string(path).map_err(|e| AugmentError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| AugmentError::Cache {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    /// Opens (creating if needed) a cache file and loads its records. Later
    /// records for a key win.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for rec in Self::read_records(path)? {
                entries.insert(rec.cache_key.clone(), rec);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| AugmentError::Cache {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    /// Read-only view of a fixture file.
    pub fn fixtures(path: &Path) -> Result<Self> {
        let entries = Self::read_records(path)?
            .into_iter()
            .map(|r| (r.cache_key.clone(), r))
            .collect();
        Ok(Self {
            entries: RwLock::new(entries),
            file: None,
        })
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: CacheRecord) -> Result<()> {
        if let Some((path, file)) = &self.file {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            let mut f = file.lock().expect("cache file lock");
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| AugmentError::Cache {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(record.cache_key.clone(), record);
        Ok(())
    }
}

// ============================================================================
// Generator
// ============================================================================

pub enum Backend {
    Live {
        provider: Box<dyn CompletionProvider>,
        limiter: RateLimiter,
    },
    Replay(CompletionCache),
}

/// Produces reasoning and feedback texts, consulting the cache first.
pub struct Generator {
    pub template: PromptTemplate,
    pub config: GenerationConfig,
    cache: CompletionCache,
    backend: Backend,
}

impl Generator {
    pub fn live(
        config: GenerationConfig,
        provider: Box<dyn CompletionProvider>,
        cache: CompletionCache,
    ) -> Result<Self> {
        config.validate()?;
        let limiter = RateLimiter::new(config.requests_per_minute);
        Ok(Self {
            template: PromptTemplate::default(),
            config,
            cache,
            backend: Backend::Live { provider, limiter },
        })
    }

    pub fn replay(config: GenerationConfig, fixtures: CompletionCache) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            template: PromptTemplate::default(),
            config,
            cache: CompletionCache::in_memory(),
            backend: Backend::Replay(fixtures),
        })
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }

    pub fn key_for(&self, stem: &str, option: &str, role: OptionRole) -> String {
        cache_key(&self.template.version, &self.config.model_name, stem, option, role)
    }

    fn call_with_retries(&self, provider: &dyn CompletionProvider, limiter: &RateLimiter, req: &CompletionRequest) -> Result<String> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = None;
        for attempt in 1..=self.config.max_attempts {
            limiter.acquire();
            match provider.complete(req) {
                Ok(text) => return Ok(text),
                Err(f) => {
                    log::warn!("provider attempt {attempt} failed: {}", f.message);
                    let transient = f.transient;
                    last = Some(f);
                    if !transient || attempt == self.config.max_attempts {
                        break;
                    }
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        let last = last.expect("at least one attempt");
        Err(AugmentError::Provider {
            attempts: self.config.max_attempts,
            status: last.status,
            message: last.message,
        })
    }

    fn generate(&self, stem: &str, option: &str, role: OptionRole) -> Result<CacheRecord> {
        if stem.trim().is_empty() || option.trim().is_empty() {
            return Err(AugmentError::EmptyInput);
        }
        let key = self.key_for(stem, option, role);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        match &self.backend {
            Backend::Replay(fixtures) => fixtures
                .get(&key)
                .ok_or(AugmentError::MissingFixture(key)),
            Backend::Live { provider, limiter } => {
                let req = CompletionRequest {
                    model: self.config.model_name.clone(),
                    messages: self.template.render(stem, option, role),
                    temperature: self.config.temperature,
                    max_tokens: self.config.max_tokens,
                    top_p: self.config.top_p,
                };
                let text = self.call_with_retries(provider.as_ref(), limiter, &req)?;
                if text.trim().is_empty() {
                    return Err(AugmentError::EmptyCompletion(key));
                }
                let record = CacheRecord {
                    cache_key: key,
                    text,
                    recorded_at: std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .ok()
                        .map(|d| d.as_secs()),
                };
                self.cache.insert(record.clone())?;
                Ok(record)
            }
        }
    }

    /// Reasoning steps that reach the key.
    pub fn generate_reasoning(&self, stem: &str, key: &str) -> Result<String> {
        Ok(self.generate(stem, key, OptionRole::Key)?.text)
    }

    /// Feedback explaining the error behind a distractor.
    pub fn generate_feedback(&self, stem: &str, distractor: &str) -> Result<String> {
        Ok(self.generate(stem, distractor, OptionRole::Distractor)?.text)
    }

    pub fn augment_item(&self, mcq: &Mcq) -> Result<AugmentedMcq> {
        let reasoning = self.generate(&mcq.stem, &mcq.key, OptionRole::Key)?;
        let mut feedback = Vec::with_capacity(DISTRACTOR_COUNT);
        for d in &mcq.distractors {
            feedback.push(self.generate(&mcq.stem, d, OptionRole::Distractor)?);
        }
        let generated_at = std::iter::once(&reasoning)
            .chain(feedback.iter())
            .filter_map(|r| r.recorded_at)
            .max();
        let keys = [
            reasoning.cache_key.clone(),
            feedback[0].cache_key.clone(),
            feedback[1].cache_key.clone(),
            feedback[2].cache_key.clone(),
        ];
        Ok(AugmentedMcq {
            base: mcq.clone(),
            reasoning: reasoning.text,
            feedback: feedback
                .into_iter()
                .map(|r| r.text)
                .collect::<Vec<_>>()
                .try_into()
                .expect("three feedback texts"),
            metadata: GenerationMetadata {
                model: self.config.model_name.clone(),
                template_version: self.template.version.clone(),
                cache_keys: keys,
                generated_at,
            },
        })
    }
}

/// Augments every item. Cached completions are reused; on failure the
/// completed items are returned inside [`AugmentError::Partial`].
pub fn augment_corpus(generator: &Generator, corpus: &Corpus) -> Result<Vec<AugmentedMcq>> {
    if corpus.is_empty() {
        return Err(AugmentError::EmptyCorpus);
    }
    let mut done = Vec::with_capacity(corpus.len());
    let mut failed = Vec::new();
    for (n, item) in corpus.items().iter().enumerate() {
        match generator.augment_item(item) {
            Ok(a) => done.push(a),
            Err(e) => {
                log::error!("augmenting {} failed: {e}", item.id);
                failed.push((item.id.clone(), e.to_string()));
            }
        }
        if (n + 1) % 50 == 0 {
            log::info!("augmented {}/{} items", n + 1, corpus.len());
        }
    }
    if failed.is_empty() {
        Ok(done)
    } else {
        Err(AugmentError::Partial {
            completed: done,
            failed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Provenance;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Echoes the last user turn and counts calls.
    struct Echo {
        calls: Arc<AtomicUsize>,
        fail_on: Option<String>,
    }

    impl CompletionProvider for Echo {
        fn complete(&self, req: &CompletionRequest) -> std::result::Result<String, ProviderFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let last = &req.messages.last().unwrap().content;
            if let Some(bad) = &self.fail_on {
                if last.contains(bad.as_str()) {
                    return Err(ProviderFailure {
                        status: Some(400),
                        message: "rejected".into(),
                        transient: false,
                    });
                }
            }
            Ok(format!("completion for [{last}]"))
        }
    }

    fn fast_config() -> GenerationConfig {
        GenerationConfig {
            backoff_ms: 1,
            requests_per_minute: 60_000,
            ..Default::default()
        }
    }

    fn mcq(id: &str, stem: &str) -> Mcq {
        Mcq {
            id: id.into(),
            stem: stem.into(),
            key: "-4".into(),
            distractors: ["18".into(), "-18".into(), "-5".into()],
            counts: [1, 1, 1, 1],
            difficulty: None,
            labels: None,
        }
    }

    fn two_items() -> Corpus {
        Corpus::new(
            vec![mcq("a", "(-11) + 7 = ?"), mcq("b", "(-12) + 8 = ?")],
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn template_has_four_demonstrations_and_alternating_turns() {
        let t = PromptTemplate::default();
        let msgs = t.render("Q?", "7", OptionRole::Key);
        assert_eq!(msgs.len(), 1 + 2 * 4 + 1);
        assert!(msgs[2].content.contains("3x + 6 = 48"));
        assert_eq!(
            msgs.last().unwrap().content,
            "Question: Q?\nCorrect Answer: 7\nReasoning steps for the correct answer:"
        );
    }

    #[test]
    fn cache_keys_are_stable_and_sensitive() {
        let k = cache_key("v1", "m", "s", "o", OptionRole::Key);
        assert_eq!(k, cache_key("v1", "m", "s", "o", OptionRole::Key));
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("v2", "m", "s", "o", OptionRole::Key));
        assert_ne!(k, cache_key("v1", "m", "s", "o", OptionRole::Distractor));
        // Field boundaries matter.
        assert_ne!(
            cache_key("v1", "m", "ab", "c", OptionRole::Key),
            cache_key("v1", "m", "a", "bc", OptionRole::Key)
        );
    }

    #[test]
    fn cold_then_warm_cache_call_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let calls = Arc::new(AtomicUsize::new(0));
        let provider = || Box::new(Echo { calls: calls.clone(), fail_on: None });
        let gen = Generator::live(fast_config(), provider(), CompletionCache::open(&path).unwrap()).unwrap();
        let first = augment_corpus(&gen, &two_items()).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 8);
        assert_eq!(first.len(), 2);
        assert!(first.iter().all(|a| a.feedback.len() == 3));

        // Fresh generator over the persisted cache file.
        let gen = Generator::live(fast_config(), provider(), CompletionCache::open(&path).unwrap()).unwrap();
        let second = augment_corpus(&gen, &two_items()).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 8);
        assert_eq!(first, second);
        let warm = gen.generate_reasoning("(-11) + 7 = ?", "-4").unwrap();
        assert_eq!(warm, first[0].reasoning);
    }

    #[test]
    fn partial_failure_keeps_completed_items() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gen = Generator::live(
            fast_config(),
            Box::new(Echo {
                calls: calls.clone(),
                fail_on: Some("(-12)".into()),
            }),
            CompletionCache::in_memory(),
        )
        .unwrap();
        match augment_corpus(&gen, &two_items()) {
            Err(AugmentError::Partial { completed, failed }) => {
                assert_eq!(completed.len(), 1);
                assert_eq!(failed[0].0, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gen.cache().len(), 4);
    }

    #[test]
    fn transient_failures_are_retried_then_reported() {
        struct Flaky(AtomicUsize);
        impl CompletionProvider for Flaky {
            fn complete(&self, _: &CompletionRequest) -> std::result::Result<String, ProviderFailure> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(ProviderFailure {
                    status: Some(503),
                    message: "busy".into(),
                    transient: true,
                })
            }
        }
        let gen = Generator::live(fast_config(), Box::new(Flaky(AtomicUsize::new(0))), CompletionCache::in_memory()).unwrap();
        match gen.generate_reasoning("s", "k") {
            Err(AugmentError::Provider { attempts: 4, status: Some(503), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_completion_is_an_error() {
        struct Blank;
        impl CompletionProvider for Blank {
            fn complete(&self, _: &CompletionRequest) -> std::result::Result<String, ProviderFailure> {
                Ok("  ".into())
            }
        }
        let gen = Generator::live(fast_config(), Box::new(Blank), CompletionCache::in_memory()).unwrap();
        assert!(matches!(gen.generate_feedback("s", "d"), Err(AugmentError::EmptyCompletion(_))));
        assert!(matches!(gen.generate_feedback("", "d"), Err(AugmentError::EmptyInput)));
    }

    #[test]
    fn replay_misses_are_hard_errors() {
        let gen = Generator::replay(fast_config(), CompletionCache::in_memory()).unwrap();
        let expected = gen.key_for("s", "k", OptionRole::Key);
        match gen.generate_reasoning("s", "k") {
            Err(AugmentError::MissingFixture(key)) => assert_eq!(key, expected),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(GenerationConfig::default().validate().is_ok());
        for bad in [
            GenerationConfig { top_p: 0.0, ..Default::default() },
            GenerationConfig { max_tokens: 0, ..Default::default() },
            GenerationConfig { temperature: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn rate_limiter_spaces_requests_beyond_burst() {
        let limiter = RateLimiter::new(600); // 10 per second, burst 600
        let start = Instant::now();
        for _ in 0..600 {
            limiter.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(200));
        limiter.acquire();
        assert!(start.elapsed() >= Duration::from_millis(50));
    }
}
