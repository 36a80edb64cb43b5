//! Service configuration: a TOML file, then `TABOT_*` environment overrides.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tabot_core::dialogue::DialogueConfig;
use tabot_core::generator::{MatcherConfig, DEFAULT_MAX_EXPANDED_INTENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Static files for the browser UI, served under `/`.
    pub ui_dir: Option<PathBuf>,
    pub categorical_threshold: usize,
    pub max_expanded_intents: usize,
    pub accept_threshold: f64,
    pub w_lex: f64,
    pub w_slot: f64,
    pub page_size: usize,
    pub max_retries: u8,
    pub session_ttl_secs: i64,
    pub fallback_url: Option<String>,
    pub fallback_timeout_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        let m = MatcherConfig::default();
        let d = DialogueConfig::default();
        Self {
            port: 8080,
            data_dir: PathBuf::from("tabot-data"),
            ui_dir: None,
            categorical_threshold: 10,
            max_expanded_intents: DEFAULT_MAX_EXPANDED_INTENTS,
            accept_threshold: m.accept_threshold,
            w_lex: m.w_lex,
            w_slot: m.w_slot,
            page_size: d.page_size,
            max_retries: d.max_retries,
            session_ttl_secs: d.session_ttl_secs,
            fallback_url: None,
            fallback_timeout_secs: 10,
        }
    }
}

impl Config {
    /// Reads `path` when given, then applies the environment.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: String) -> anyhow::Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| anyhow::anyhow!("{key}: {e}"))
        }
        macro_rules! env {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse($key, v)?;
                }
            };
        }
        env!("TABOT_PORT", self.port);
        env!("TABOT_CATEGORICAL_THRESHOLD", self.categorical_threshold);
        env!("TABOT_MAX_EXPANDED_INTENTS", self.max_expanded_intents);
        env!("TABOT_ACCEPT_THRESHOLD", self.accept_threshold);
        env!("TABOT_W_LEX", self.w_lex);
        env!("TABOT_W_SLOT", self.w_slot);
        env!("TABOT_PAGE_SIZE", self.page_size);
        env!("TABOT_MAX_RETRIES", self.max_retries);
        env!("TABOT_SESSION_TTL_SECS", self.session_ttl_secs);
        env!("TABOT_FALLBACK_TIMEOUT_SECS", self.fallback_timeout_secs);
        if let Some(v) = get("TABOT_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("TABOT_UI_DIR") {
            self.ui_dir = Some(v.into());
        }
        if let Some(v) = get("TABOT_FALLBACK_URL") {
            self.fallback_url = (!v.is_empty()).then_some(v);
        }
        Ok(())
    }

    pub fn matcher(&self) -> MatcherConfig {
        MatcherConfig {
            w_lex: self.w_lex,
            w_slot: self.w_slot,
            accept_threshold: self.accept_threshold,
        }
    }

    pub fn dialogue(&self) -> DialogueConfig {
        DialogueConfig {
            page_size: self.page_size,
            max_retries: self.max_retries,
            session_ttl_secs: self.session_ttl_secs,
        }
    }
}
