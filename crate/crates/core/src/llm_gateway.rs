//! Provider-agnostic access to chat-completion and text-embedding endpoints.
//!
//! Four provider kinds share one [`Gateway`] surface:
//!
//! * `remote_chat` / `remote_embed` speak the OpenAI-compatible wire shape
//!   over HTTP with bearer auth, bounded parallelism and jittered
//!   exponential backoff on transient failures.
//! * `replay_chat` answers from a transcript file keyed by the SHA-256
//!   digest of the full [`PromptBundle`]. A missing key is an error
//!   ([`GatewayError::ReplayMiss`]), never a fallback.
//! * `hash_embed` is a seeded term-frequency feature hasher, so embeddings
//!   are reproducible without network access.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::normalize_text;

/// Credential variable used when a remote provider does not name one.
pub const DEFAULT_API_KEY_ENV: &str = "DEVINV_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("credential environment variable {0} is not set")]
    CredentialMissing(String),
    #[error("provider gave up after retries: {0}")]
    Exhausted(String),
    #[error("provider rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no scripted response for bundle digest {0}")]
    ReplayMiss(String),
    #[error("empty input")]
    EmptyInput,
    #[error("expected embedding dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("provider {id} does not support {operation}")]
    Unsupported { id: String, operation: &'static str },
    #[error("invalid provider config {id}: {reason}")]
    InvalidConfig { id: String, reason: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("transcript store: {0}")]
    Transcript(String),
    #[error("gateway io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteChat,
    RemoteEmbed,
    ReplayChat,
    HashEmbed,
}

impl ProviderKind {
    pub fn is_remote(self) -> bool {
        matches!(self, ProviderKind::RemoteChat | ProviderKind::RemoteEmbed)
    }

    pub fn is_chat(self) -> bool {
        matches!(self, ProviderKind::RemoteChat | ProviderKind::ReplayChat)
    }

    pub fn is_embed(self) -> bool {
        matches!(self, ProviderKind::RemoteEmbed | ProviderKind::HashEmbed)
    }
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_parallel() -> usize {
    4
}
fn default_retry_base_ms() -> u64 {
    1000
}
fn default_dimension() -> usize {
    1536
}
fn default_seed() -> u64 {
    42
}
fn default_max_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Stable identity recorded in outcomes, reports and index headers.
    #[serde(default)]
    pub id: String,
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// First backoff delay; doubles on every further retry.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    /// Largest number of texts sent in one embedding request.
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    /// Upper bound on prompt context length (chars), if the model has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context_chars: Option<usize>,
}

impl ProviderConfig {
    fn base(id: &str, kind: ProviderKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            endpoint_url: None,
            model_name: None,
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_parallel: default_max_parallel(),
            retry_base_ms: default_retry_base_ms(),
            dimension: default_dimension(),
            seed: default_seed(),
            transcript_path: None,
            max_batch: default_max_batch(),
            max_context_chars: None,
        }
    }

    pub fn hash_embed(id: &str, dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            ..Self::base(id, ProviderKind::HashEmbed)
        }
    }

    pub fn replay_chat(id: &str, transcript_path: impl Into<PathBuf>) -> Self {
        Self {
            transcript_path: Some(transcript_path.into()),
            ..Self::base(id, ProviderKind::ReplayChat)
        }
    }

    pub fn remote_chat(id: &str, endpoint_url: &str, model_name: &str) -> Self {
        Self {
            endpoint_url: Some(endpoint_url.to_string()),
            model_name: Some(model_name.to_string()),
            api_key_env: Some(DEFAULT_API_KEY_ENV.to_string()),
            ..Self::base(id, ProviderKind::RemoteChat)
        }
    }

    pub fn remote_embed(id: &str, endpoint_url: &str, model_name: &str, dimension: usize) -> Self {
        Self {
            endpoint_url: Some(endpoint_url.to_string()),
            model_name: Some(model_name.to_string()),
            api_key_env: Some(DEFAULT_API_KEY_ENV.to_string()),
            dimension,
            ..Self::base(id, ProviderKind::RemoteEmbed)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |reason: &str| GatewayError::InvalidConfig {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.kind.is_remote() {
            if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                return Err(invalid("remote providers require endpoint_url"));
            }
            if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                return Err(invalid("remote providers require api_key_env"));
            }
        } else if self.endpoint_url.is_some() || self.api_key_env.is_some() {
            return Err(invalid("offline providers must not set endpoint_url or api_key_env"));
        }
        if self.max_parallel == 0 {
            return Err(invalid("max_parallel must be positive"));
        }
        if self.max_batch == 0 {
            return Err(invalid("max_batch must be positive"));
        }
        if self.kind.is_embed() && self.dimension < 2 {
            return Err(invalid("dimension must be at least 2"));
        }
        if self.kind == ProviderKind::ReplayChat && self.transcript_path.is_none() {
            return Err(invalid("replay providers require transcript_path"));
        }
        Ok(())
    }
}

/// The three-part prompt: introduction, supporting context, question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptBundle {
    pub intro: String,
    pub context: String,
    pub question: String,
}

impl PromptBundle {
    pub fn new(
        intro: impl Into<String>,
        context: impl Into<String>,
        question: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        Ok(Self {
            intro: intro.into(),
            context: context.into(),
            question,
        })
    }

    /// Hex SHA-256 over a length-prefixed encoding of all three parts.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"devinv-bundle-v1\n");
        for part in [&self.intro, &self.context, &self.question] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Chat messages in send order; an empty context is omitted.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(3);
        if !self.intro.is_empty() {
            out.push(ChatMessage {
                role: "system".into(),
                content: self.intro.clone(),
            });
        }
        if !self.context.is_empty() {
            out.push(ChatMessage {
                role: "user".into(),
                content: self.context.clone(),
            });
        }
        out.push(ChatMessage {
            role: "user".into(),
            content: self.question.clone(),
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// A fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::MalformedResponse("non-finite embedding entry".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sequential Euclidean norm; retrieval code relies on this exact summation
/// order for bitwise-reproducible scores.
pub fn l2_norm(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v * v;
    }
    sum.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatOutcome {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    /// Decoding settings used; remote calls leave them at provider defaults.
    pub decoding: String,
}

/// Bucket index of `token` under `seed`: first 8 bytes (LE) of
/// SHA-256(seed_le || token), reduced modulo `dimension`.
pub fn hash_bucket(token: &str, seed: u64, dimension: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) % dimension as u64) as usize
}

/// Term-frequency feature hashing of the normalized text, L2-normalized.
pub fn hash_embed(text: &str, dimension: usize, seed: u64) -> Result<EmbeddingVector, GatewayError> {
    if dimension < 2 {
        return Err(GatewayError::InvalidConfig {
            id: "hash_embed".into(),
            reason: "dimension must be at least 2".into(),
        });
    }
    let normalized = normalize_text(text);
    let mut buckets = vec![0.0f64; dimension];
    let mut tokens = 0usize;
    for token in normalized.split(' ').filter(|t| !t.is_empty()) {
        buckets[hash_bucket(token, seed, dimension)] += 1.0;
        tokens += 1;
    }
    if tokens == 0 {
        return Err(GatewayError::EmptyInput);
    }
    let norm = l2_norm(&buckets);
    for b in &mut buckets {
        *b /= norm;
    }
    EmbeddingVector::new(buckets)
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptLine {
    digest: String,
    response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

/// Scripted chat responses keyed by bundle digest.
#[derive(Debug, Clone, Default)]
pub struct TranscriptStore {
    entries: HashMap<String, String>,
    notes: HashMap<String, String>,
    order: Vec<String>,
}

impl TranscriptStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let file = fs::File::open(path.as_ref())?;
        Self::read(BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, GatewayError> {
        let mut store = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptLine =
                serde_json::from_str(&line).map_err(|e| GatewayError::Transcript(format!("line {}: {e}", idx + 1)))?;
            if let Some(existing) = store.entries.get(&entry.digest) {
                if *existing != entry.response {
                    return Err(GatewayError::Transcript(format!(
                        "line {}: conflicting responses for digest {}",
                        idx + 1,
                        entry.digest
                    )));
                }
                continue;
            }
            store.insert(&entry.digest, entry.response, entry.note);
        }
        Ok(store)
    }

    pub fn insert(&mut self, digest: &str, response: String, note: Option<String>) {
        if self.entries.insert(digest.to_string(), response).is_none() {
            self.order.push(digest.to_string());
        }
        if let Some(note) = note {
            self.notes.insert(digest.to_string(), note);
        }
    }

    /// Records `response` for `bundle`.
    pub fn script(&mut self, bundle: &PromptBundle, response: impl Into<String>, note: Option<String>) {
        self.insert(&bundle.digest(), response.into(), note);
    }

    pub fn get(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for digest in &self.order {
            let line = TranscriptLine {
                digest: digest.clone(),
                response: self.entries[digest].clone(),
                note: self.notes.get(digest).cloned(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Delay before retry number `retry` (1-based): `base * 2^(retry-1)` plus
/// up to half that again as jitter.
pub fn backoff_delay(base: Duration, retry: u32, rng: &mut impl Rng) -> Duration {
    let floor = base.saturating_mul(1u32 << (retry.saturating_sub(1)).min(20));
    let jitter_cap = floor.as_nanos() as u64 / 2;
    let jitter = if jitter_cap == 0 {
        0
    } else {
        rng.random_range(0..=jitter_cap)
    };
    floor + Duration::from_nanos(jitter)
}

/// Counting semaphore bounding in-flight requests per provider.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

enum Backend {
    Remote(ureq::Agent),
    Replay(TranscriptStore),
    Hash,
}

enum Failure {
    Transient(String),
    Fatal(GatewayError),
}

/// A configured provider, safe to share across threads.
pub struct Gateway {
    config: ProviderConfig,
    limiter: Limiter,
    backend: Backend,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend = match config.kind {
            ProviderKind::RemoteChat | ProviderKind::RemoteEmbed => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
                    .http_status_as_error(false)
                    .build()
                    .into();
                Backend::Remote(agent)
            }
            ProviderKind::ReplayChat => {
                let path = config.transcript_path.as_ref().expect("validated");
                Backend::Replay(TranscriptStore::load(path)?)
            }
            ProviderKind::HashEmbed => Backend::Hash,
        };
        Ok(Self {
            limiter: Limiter::new(config.max_parallel),
            config,
            backend,
        })
    }

    /// A replay provider over an in-memory store.
    pub fn with_transcripts(id: &str, store: TranscriptStore) -> Self {
        let mut config = ProviderConfig::base(id, ProviderKind::ReplayChat);
        config.transcript_path = Some(PathBuf::from("<memory>"));
        Self {
            limiter: Limiter::new(config.max_parallel),
            config,
            backend: Backend::Replay(store),
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn chat(&self, bundle: &PromptBundle) -> Result<ChatOutcome, GatewayError> {
        if !self.config.kind.is_chat() {
            return Err(GatewayError::Unsupported {
                id: self.config.id.clone(),
                operation: "chat",
            });
        }
        let start = Instant::now();
        match &self.backend {
            Backend::Replay(store) => {
                let digest = bundle.digest();
                let text = store.get(&digest).ok_or(GatewayError::ReplayMiss(digest))?;
                Ok(ChatOutcome {
                    text: text.to_string(),
                    provider_id: self.config.id.clone(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempt_count: 1,
                    decoding: "replay".into(),
                })
            }
            Backend::Remote(agent) => {
                let key = self.credential()?;
                let body = serde_json::json!({
                    "model": self.config.model_name,
                    "messages": bundle.messages(),
                });
                let (resp, attempts): (ChatResponse, u32) =
                    self.with_retry(|| post_json(agent, self.endpoint(), &key, &body))?;
                let text = resp
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
                Ok(ChatOutcome {
                    text,
                    provider_id: self.config.id.clone(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempt_count: attempts,
                    decoding: "provider_default".into(),
                })
            }
            Backend::Hash => unreachable!("hash providers are not chat-capable"),
        }
    }

    /// Embeds `texts` in order, splitting into provider-sized chunks.
    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if !self.config.kind.is_embed() {
            return Err(GatewayError::Unsupported {
                id: self.config.id.clone(),
                operation: "embed",
            });
        }
        if texts.is_empty() || texts.iter().any(|t| normalize_text(t.as_ref()).is_empty()) {
            return Err(GatewayError::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.max_batch) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_chunk<S: AsRef<str>>(&self, chunk: &[S]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        match &self.backend {
            Backend::Hash => chunk
                .iter()
                .map(|t| hash_embed(t.as_ref(), self.config.dimension, self.config.seed))
                .collect(),
            Backend::Remote(agent) => {
                let key = self.credential()?;
                let input: Vec<&str> = chunk.iter().map(AsRef::as_ref).collect();
                let body = serde_json::json!({ "model": self.config.model_name, "input": input });
                let (resp, _): (EmbedResponse, u32) =
                    self.with_retry(|| post_json(agent, self.endpoint(), &key, &body))?;
                if resp.data.len() != chunk.len() {
                    return Err(GatewayError::MalformedResponse(format!(
                        "expected {} embeddings, got {}",
                        chunk.len(),
                        resp.data.len()
                    )));
                }
                let mut data = resp.data;
                if data.iter().all(|d| d.index.is_some()) {
                    data.sort_by_key(|d| d.index);
                }
                data.into_iter()
                    .map(|d| {
                        if d.embedding.len() != self.config.dimension {
                            return Err(GatewayError::DimensionMismatch {
                                expected: self.config.dimension,
                                actual: d.embedding.len(),
                            });
                        }
                        EmbeddingVector::new(d.embedding)
                    })
                    .collect()
            }
            Backend::Replay(_) => unreachable!("replay providers are not embed-capable"),
        }
    }

    fn endpoint(&self) -> &str {
        self.config.endpoint_url.as_deref().expect("validated")
    }

    fn credential(&self) -> Result<String, GatewayError> {
        let var = self.config.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
        std::env::var(var)
            .ok()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| GatewayError::CredentialMissing(var.to_string()))
    }

    fn with_retry<T>(&self, mut call: impl FnMut() -> Result<T, Failure>) -> Result<(T, u32), GatewayError> {
        let _permit = self.limiter.acquire();
        let base = Duration::from_millis(self.config.retry_base_ms);
        let mut rng = rand::rng();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok((v, attempt)),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    if attempt > self.config.max_retries {
                        return Err(GatewayError::Exhausted(msg));
                    }
                    let delay = backoff_delay(base, attempt, &mut rng);
                    tracing::warn!(provider = %self.config.id, attempt, ?delay, error = %msg, "retrying");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

fn post_json<T: serde::de::DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    key: &str,
    body: &serde_json::Value,
) -> Result<T, Failure> {
    let mut resp = agent
        .post(url)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(body)
        .map_err(|e| Failure::Transient(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(Failure::Transient(format!("HTTP {status}")));
    }
    if !(200..300).contains(&status) {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(Failure::Fatal(GatewayError::Rejected { status, body }));
    }
    resp.body_mut()
        .read_json::<T>()
        .map_err(|e| Failure::Fatal(GatewayError::MalformedResponse(e.to_string())))
}

/// One-shot chat against `config`.
pub fn chat(bundle: &PromptBundle, config: &ProviderConfig) -> Result<ChatOutcome, GatewayError> {
    Gateway::new(config.clone())?.chat(bundle)
}

/// One-shot batch embedding against `config`.
pub fn embed_batch<S: AsRef<str>>(texts: &[S], config: &ProviderConfig) -> Result<Vec<EmbeddingVector>, GatewayError> {
    Gateway::new(config.clone())?.embed_batch(texts)
}
