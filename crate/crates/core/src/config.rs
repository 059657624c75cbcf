//! Deployment settings: a TOML file overlaid with `VL_*` environment variables.
//!
//! ```toml
//! dimension = 512
//! bind = "127.0.0.1:8080"
//! templates = "templates.json"
//! snapshot = "corpus.jsonl"
//! walk_defaults = "L=3,C=3,k=20"
//! context_alpha = 0.7
//!
//! [embedder]
//! provider = "remote"
//! endpoint = "http://localhost:9000"
//! timeout_ms = 10000
//!
//! [expansion]
//! provider = "stub"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::embedder::{Embedder, EmbedderConfig, Provider, RemoteExpansion};
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::query::{DEFAULT_CONTEXT_ALPHA, DEFAULT_DEMOTE_WEIGHT, DEFAULT_EXPANSION_WEIGHT};
use crate::recommender::WalkParams;

pub const DEFAULT_DIMENSION: usize = 512;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    pub provider: Provider,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub mock_seed: u64,
    pub pool_size: usize,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings {
            provider: Provider::Mock,
            endpoint: None,
            timeout_ms: 10_000,
            mock_seed: 0,
            pool_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSettings {
    pub provider: ExpansionKind,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub dimension: usize,
    pub bind: String,
    /// JSON template registry; the built-in registry is used when absent.
    pub templates: Option<PathBuf>,
    /// Snapshot restored at startup when the file exists.
    pub snapshot: Option<PathBuf>,
    /// Allowed CORS origin for the console; `*` allows any.
    pub cors_origin: Option<String>,
    /// Static console bundle served under `/console`.
    pub console_dir: Option<PathBuf>,
    pub walk_defaults: String,
    pub context_alpha: f64,
    pub demote_weight: f64,
    pub expansion_weight: f64,
    pub embedder: EmbedderSettings,
    pub expansion: ExpansionSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            dimension: DEFAULT_DIMENSION,
            bind: DEFAULT_BIND.to_owned(),
            templates: None,
            snapshot: None,
            cors_origin: None,
            console_dir: None,
            walk_defaults: "L=3,C=3,k=20".to_owned(),
            context_alpha: DEFAULT_CONTEXT_ALPHA,
            demote_weight: DEFAULT_DEMOTE_WEIGHT,
            expansion_weight: DEFAULT_EXPANSION_WEIGHT,
            embedder: EmbedderSettings::default(),
            expansion: ExpansionSettings::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::FileUnreadable { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    /// File (if any) overlaid with the process environment.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let mut s = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        s.apply_env(|k| std::env::var(k).ok())?;
        Ok(s)
    }

    /// Applies `VL_*` overrides read through `lookup`. Setting
    /// `VL_EMBED_ENDPOINT` switches the embedder to the remote provider.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = lookup("VL_EMBED_ENDPOINT") {
            self.embedder.endpoint = Some(v);
            self.embedder.provider = Provider::Remote;
        }
        if let Some(v) = lookup("VL_EMBED_TIMEOUT_MS") {
            self.embedder.timeout_ms = parse_env("VL_EMBED_TIMEOUT_MS", &v)?;
        }
        if let Some(v) = lookup("VL_EMBED_DIM") {
            self.dimension = parse_env("VL_EMBED_DIM", &v)?;
        }
        if let Some(v) = lookup("VL_MOCK_SEED") {
            self.embedder.mock_seed = parse_env("VL_MOCK_SEED", &v)?;
        }
        if let Some(v) = lookup("VL_CONTEXT_ALPHA") {
            self.context_alpha = parse_env("VL_CONTEXT_ALPHA", &v)?;
        }
        if let Some(v) = lookup("VL_DEMOTE_WEIGHT") {
            self.demote_weight = parse_env("VL_DEMOTE_WEIGHT", &v)?;
        }
        if let Some(v) = lookup("VL_EXPANSION_WEIGHT") {
            self.expansion_weight = parse_env("VL_EXPANSION_WEIGHT", &v)?;
        }
        if let Some(v) = lookup("VL_WALK_DEFAULTS") {
            self.walk_defaults = v;
        }
        if let Some(v) = lookup("VL_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("VL_TEMPLATES") {
            self.templates = Some(v.into());
        }
        if let Some(v) = lookup("VL_SNAPSHOT") {
            self.snapshot = Some(v.into());
        }
        if let Some(v) = lookup("VL_CORS_ORIGIN") {
            self.cors_origin = Some(v);
        }
        if let Some(v) = lookup("VL_EXPANSION_ENDPOINT") {
            self.expansion.endpoint = Some(v);
            self.expansion.provider = ExpansionKind::Remote;
        }
        Ok(())
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        EmbedderConfig {
            provider: self.embedder.provider,
            endpoint: self.embedder.endpoint.clone(),
            timeout: Duration::from_millis(self.embedder.timeout_ms),
            dimension: self.dimension,
            mock_seed: self.embedder.mock_seed,
            pool_size: self.embedder.pool_size,
        }
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        Ok(EngineConfig {
            context_alpha: self.context_alpha,
            demote_weight: self.demote_weight,
            expansion_weight: self.expansion_weight,
            walk_defaults: self.walk_defaults.parse::<WalkParams>()?,
        })
    }

    /// Builds the engine, loading templates and restoring the snapshot when
    /// configured.
    pub fn build_engine(&self) -> Result<Engine> {
        let embedder = Embedder::new(self.embedder_config())?;
        let mut engine = Engine::new(embedder, self.engine_config()?)?;
        if let Some(path) = &self.templates {
            engine = engine.with_template_file(path.clone())?;
        }
        if self.expansion.provider == ExpansionKind::Remote {
            let endpoint = self
                .expansion
                .endpoint
                .as_deref()
                .ok_or_else(|| Error::Config("remote expansion provider needs an endpoint".into()))?;
            engine = engine.with_expansion(Box::new(RemoteExpansion::new(
                endpoint,
                Duration::from_millis(self.embedder.timeout_ms),
            )));
        }
        if let Some(path) = &self.snapshot {
            if path.exists() {
                engine.index().restore_snapshot(path)?;
            }
        }
        Ok(engine)
    }
}
