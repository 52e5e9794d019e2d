//! Declarative configuration: one TOML document with a nested provider table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use devinv_core::extraction::DEFAULT_BATCH_PATTERN;
use devinv_core::{AnswerParser, ProviderConfig, RubricConfig};
use serde::Deserialize;

use crate::AppError;

pub const CONFIG_ENV: &str = "DEVINV_CONFIG";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_corpus")]
    pub corpus_path: PathBuf,
    #[serde(default = "default_index")]
    pub index_path: PathBuf,
    #[serde(default = "default_templates")]
    pub template_dir: PathBuf,
    #[serde(default)]
    pub overrides_path: Option<PathBuf>,
    #[serde(default = "default_providers")]
    pub providers: BTreeMap<String, ProviderConfig>,
    #[serde(default = "default_chat")]
    pub default_chat: String,
    #[serde(default = "default_embed")]
    pub default_embed: String,
    #[serde(default = "default_batch_pattern")]
    pub batch_id_pattern: String,
    #[serde(default = "default_bind")]
    pub service_bind_address: String,
    #[serde(default)]
    pub rubric: RubricSection,
    #[serde(default)]
    pub rag: RagSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricSection {
    #[serde(default = "default_accurate")]
    pub accurate_f1: f64,
    #[serde(default = "default_acceptable")]
    pub acceptable_f1: f64,
}

impl Default for RubricSection {
    fn default() -> Self {
        Self {
            accurate_f1: default_accurate(),
            acceptable_f1: default_acceptable(),
        }
    }
}

impl From<&RubricSection> for RubricConfig {
    fn from(r: &RubricSection) -> Self {
        RubricConfig {
            accurate_f1: r.accurate_f1,
            acceptable_f1: r.acceptable_f1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagSection {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

impl Default for RagSection {
    fn default() -> Self {
        Self {
            top_k: default_top_k(),
            max_chars: default_max_chars(),
            audit_log: None,
        }
    }
}

fn default_corpus() -> PathBuf {
    "corpus.jsonl".into()
}
fn default_index() -> PathBuf {
    "index.dvix".into()
}
fn default_templates() -> PathBuf {
    "templates".into()
}
fn default_chat() -> String {
    "replay".into()
}
fn default_embed() -> String {
    "hash64".into()
}
fn default_batch_pattern() -> String {
    DEFAULT_BATCH_PATTERN.into()
}
fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_accurate() -> f64 {
    0.8
}
fn default_acceptable() -> f64 {
    0.4
}
fn default_top_k() -> usize {
    3
}
fn default_max_chars() -> usize {
    8000
}

fn default_providers() -> BTreeMap<String, ProviderConfig> {
    let mut m = BTreeMap::new();
    m.insert("hash64".into(), ProviderConfig::hash_embed("hash64", 64, 42));
    m.insert(
        "replay".into(),
        ProviderConfig::replay_chat("replay", "transcripts.jsonl"),
    );
    m
}

impl Default for AppConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        for (name, p) in cfg.providers.iter_mut() {
            if p.id.is_empty() {
                p.id = name.clone();
            } else if p.id != *name {
                return Err(AppError::Config(format!("provider {name:?} declares id {:?}", p.id)));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// `--config`, then `DEVINV_CONFIG`, then built-in defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, AppError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        fix(&mut self.index_path);
        fix(&mut self.template_dir);
        if let Some(p) = self.overrides_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.rag.audit_log.as_mut() {
            fix(p);
        }
        for p in self.providers.values_mut() {
            if let Some(t) = p.transcript_path.as_mut() {
                fix(t);
            }
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        for (role, name) in [
            ("default_chat", &self.default_chat),
            ("default_embed", &self.default_embed),
        ] {
            if !self.providers.contains_key(name) {
                return Err(AppError::Config(format!("{role} names unknown provider {name:?}")));
            }
        }
        for p in self.providers.values() {
            p.validate().map_err(|e| AppError::Config(e.to_string()))?;
        }
        AnswerParser::new(&self.batch_id_pattern).map_err(|e| AppError::Config(format!("batch_id_pattern: {e}")))?;
        Ok(())
    }

    pub fn provider(&self, name: &str) -> Result<&ProviderConfig, AppError> {
        self.providers
            .get(name)
            .ok_or_else(|| AppError::Usage(format!("unknown provider {name:?}")))
    }
}
