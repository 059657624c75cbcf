//! Turns text and image references into unit vectors.
//!
//! Two providers exist: a deterministic mock that hashes the payload into a
//! seed and draws a Gaussian direction, and a JSON-over-HTTP client for a
//! remote embedding service. Payloads starting with `fixture:` bypass both
//! and are parsed as a literal comma-separated vector.
//!
//! This module also hosts the expansion-term providers used by feedback
//! driven query expansion.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::Document;
use crate::vecmath::{self, UnitVector};

pub const FIXTURE_SIGIL: &str = "fixture:";
pub const MAX_TEXT_BYTES: usize = 8192;
pub const MAX_BATCH: usize = 256;
pub const MAX_EXPANSION_TERMS: usize = 8;
/// Number of terms the stub expansion provider returns at most.
pub const STUB_EXPANSION_TERMS: usize = 3;
/// Metadata key the stub expansion provider reads; values are comma separated.
pub const TAGS_KEY: &str = "tags";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct EmbedRequest {
    pub kind: EmbedKind,
    pub payload: String,
}

impl EmbedRequest {
    pub fn text(payload: impl Into<String>) -> Self {
        EmbedRequest { kind: EmbedKind::Text, payload: payload.into() }
    }

    pub fn image(payload: impl Into<String>) -> Self {
        EmbedRequest { kind: EmbedKind::Image, payload: payload.into() }
    }

    fn fixture_components(&self) -> Option<&str> {
        self.payload.trim().strip_prefix(FIXTURE_SIGIL)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixture_components().is_some() {
            return Ok(());
        }
        match self.kind {
            EmbedKind::Text => {
                if self.payload.trim().is_empty() {
                    return Err(Error::BadPayload("text payload is empty".into()));
                }
                if self.payload.len() > MAX_TEXT_BYTES {
                    return Err(Error::BadPayload(format!(
                        "text payload is {} bytes, limit is {MAX_TEXT_BYTES}",
                        self.payload.len()
                    )));
                }
            }
            EmbedKind::Image => {
                let is_url = url::Url::parse(&self.payload).is_ok_and(|u| u.has_host() || u.scheme() == "data" || u.scheme() == "file");
                if !is_url && !std::path::Path::new(&self.payload).exists() {
                    return Err(Error::BadPayload(format!(
                        "image reference `{}` is neither a URL nor an existing path",
                        self.payload
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub provider: Provider,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub dimension: usize,
    pub mock_seed: u64,
    /// Maximum concurrent requests to the remote provider.
    pub pool_size: usize,
}

impl EmbedderConfig {
    pub fn mock(dimension: usize, mock_seed: u64) -> Self {
        EmbedderConfig {
            provider: Provider::Mock,
            endpoint: None,
            timeout: Duration::from_secs(10),
            dimension,
            mock_seed,
            pool_size: 16,
        }
    }

    pub fn remote(endpoint: impl Into<String>, dimension: usize) -> Self {
        EmbedderConfig {
            provider: Provider::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::mock(dimension, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.timeout.is_zero() {
            return Err(Error::Config("embedding timeout must be positive".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("embedding pool size must be positive".into()));
        }
        if self.provider == Provider::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Config("remote embedder needs an endpoint".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding in-flight remote calls.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits { available: Mutex::new(n), freed: Condvar::new() }
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
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct RemoteEmbedBody<'a> {
    inputs: &'a [&'a EmbedRequest],
}

#[derive(Deserialize)]
struct RemoteEmbedResponse {
    vectors: Vec<Vec<f64>>,
    dimension: usize,
}

fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn unavailable(endpoint: &str, err: impl std::fmt::Display) -> Error {
    Error::ProviderUnavailable(format!("{endpoint}: {err}"))
}

#[derive(Debug)]
struct RemoteClient {
    url: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl RemoteClient {
    fn embed(&self, reqs: &[&EmbedRequest], dimension: usize) -> Result<Vec<UnitVector>> {
        let _permit = self.permits.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(RemoteEmbedBody { inputs: reqs })
            .map_err(|e| unavailable(&self.url, e))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(if (400..500).contains(&status) {
                Error::BadPayload(format!("embedding service rejected request ({status}): {body}"))
            } else {
                unavailable(&self.url, format!("status {status}"))
            });
        }
        let parsed: RemoteEmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(&self.url, format!("invalid response: {e}")))?;
        if parsed.vectors.len() != reqs.len() {
            return Err(unavailable(
                &self.url,
                format!("sent {} inputs, received {} vectors", reqs.len(), parsed.vectors.len()),
            ));
        }
        if parsed.dimension != dimension {
            return Err(Error::DimensionMismatch { expected: dimension, found: parsed.dimension });
        }
        parsed
            .vectors
            .into_iter()
            .map(|raw| {
                if raw.len() != dimension {
                    return Err(Error::DimensionMismatch { expected: dimension, found: raw.len() });
                }
                UnitVector::from_components(raw)
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct Embedder {
    config: EmbedderConfig,
    remote: Option<RemoteClient>,
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let remote = match config.provider {
            Provider::Mock => None,
            Provider::Remote => {
                let base = config.endpoint.as_deref().unwrap_or_default().trim_end_matches('/');
                Some(RemoteClient {
                    url: format!("{base}/embed"),
                    agent: http_agent(config.timeout),
                    permits: Permits::new(config.pool_size),
                })
            }
        };
        Ok(Embedder { config, remote })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn embed(&self, req: &EmbedRequest) -> Result<UnitVector> {
        req.validate()?;
        if let Some(v) = self.fixture(req)? {
            return Ok(v);
        }
        match &self.remote {
            None => Ok(mock_vector(&req.payload, self.config.mock_seed, self.config.dimension)),
            Some(client) => Ok(client.embed(&[req], self.config.dimension)?.remove(0)),
        }
    }

    /// Embeds every request, preserving order. The first failing item fails
    /// the whole batch and is reported by index.
    pub fn embed_batch(&self, reqs: &[EmbedRequest]) -> Result<Vec<UnitVector>> {
        if reqs.is_empty() {
            return Err(Error::BadPayload("empty batch".into()));
        }
        if reqs.len() > MAX_BATCH {
            return Err(Error::BadPayload(format!(
                "batch of {} exceeds the limit of {MAX_BATCH}",
                reqs.len()
            )));
        }
        let at = |index: usize| move |e: Error| Error::BatchItem { index, source: Box::new(e) };
        let mut out: Vec<Option<UnitVector>> = Vec::with_capacity(reqs.len());
        let mut remote_items = Vec::new();
        for (i, req) in reqs.iter().enumerate() {
            req.validate().map_err(at(i))?;
            match self.fixture(req).map_err(at(i))? {
                Some(v) => out.push(Some(v)),
                None if self.remote.is_none() => out.push(Some(mock_vector(
                    &req.payload,
                    self.config.mock_seed,
                    self.config.dimension,
                ))),
                None => {
                    remote_items.push(i);
                    out.push(None);
                }
            }
        }
        if let (Some(client), false) = (&self.remote, remote_items.is_empty()) {
            let batch: Vec<&EmbedRequest> = remote_items.iter().map(|&i| &reqs[i]).collect();
            let vectors = client.embed(&batch, self.config.dimension)?;
            for (i, v) in remote_items.into_iter().zip(vectors) {
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }

    fn fixture(&self, req: &EmbedRequest) -> Result<Option<UnitVector>> {
        let Some(list) = req.fixture_components() else {
            return Ok(None);
        };
        let raw = list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::BadPayload(format!("bad fixture vector `{list}`: {e}")))?;
        if raw.len() != self.config.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.config.dimension,
                found: raw.len(),
            });
        }
        vecmath::normalize(&raw).map(Some)
    }
}

/// Deterministic pseudo-embedding: `dimension` standard normals drawn from a
/// ChaCha stream keyed by `sha256(seed || payload)`, then normalized. Outputs
/// are uniform on the sphere and carry no semantics.
pub fn mock_vector(payload: &str, seed: u64, dimension: usize) -> UnitVector {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(payload.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    loop {
        let raw: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v) = vecmath::normalize(&raw) {
            return v;
        }
    }
}

/// Source of query expansion terms derived from documents the user liked.
pub trait ExpansionProvider: Send + Sync {
    fn expansion_terms(&self, query: &str, feedback: &[Document]) -> Result<Vec<String>>;
}

/// Deterministic stand-in for an LLM: the most frequent `tags` metadata
/// values among the feedback documents, ties broken lexicographically.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubExpansion;

impl ExpansionProvider for StubExpansion {
    fn expansion_terms(&self, _query: &str, feedback: &[Document]) -> Result<Vec<String>> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in feedback {
            let Some(tags) = doc.metadata.get(TAGS_KEY) else { continue };
            let mut seen: Vec<&str> = tags.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
            seen.sort_unstable();
            seen.dedup();
            for tag in seen {
                *counts.entry(tag).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked
            .into_iter()
            .take(STUB_EXPANSION_TERMS)
            .map(|(t, _)| t.to_owned())
            .collect())
    }
}

#[derive(Serialize)]
struct RemoteExpandBody<'a> {
    query: &'a str,
    feedback: Vec<RemoteFeedbackDoc<'a>>,
}

#[derive(Serialize)]
struct RemoteFeedbackDoc<'a> {
    id: &'a str,
    title: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    media_ref: Option<&'a str>,
    metadata: &'a std::collections::BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RemoteExpandResponse {
    terms: Vec<String>,
}

/// Client for an external expansion service (typically a vision-capable LLM
/// behind an adapter): `POST {endpoint}/expand` with
/// `{"query", "feedback": [{id, title, media_ref?, metadata}]}`, answering
/// `{"terms": [...]}`.
#[derive(Debug)]
pub struct RemoteExpansion {
    url: String,
    agent: ureq::Agent,
}

impl RemoteExpansion {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        RemoteExpansion {
            url: format!("{}/expand", endpoint.trim_end_matches('/')),
            agent: http_agent(timeout),
        }
    }
}

impl ExpansionProvider for RemoteExpansion {
    fn expansion_terms(&self, query: &str, feedback: &[Document]) -> Result<Vec<String>> {
        let body = RemoteExpandBody {
            query,
            feedback: feedback
                .iter()
                .map(|d| RemoteFeedbackDoc {
                    id: &d.id,
                    title: &d.title,
                    media_ref: d.media_ref.as_deref(),
                    metadata: &d.metadata,
                })
                .collect(),
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(body)
            .map_err(|e| unavailable(&self.url, e))?;
        if resp.status().as_u16() != 200 {
            return Err(unavailable(&self.url, format!("status {}", resp.status())));
        }
        let parsed: RemoteExpandResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(&self.url, format!("invalid response: {e}")))?;
        Ok(parsed
            .terms
            .into_iter()
            .map(|t| t.trim().to_owned())
            .filter(|t| !t.is_empty())
            .take(MAX_EXPANSION_TERMS)
            .collect())
    }
}
