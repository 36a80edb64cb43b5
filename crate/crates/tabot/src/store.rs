//! Directory-per-dataset persistence.
//!
//! ```text
//! <root>/<dataset_id>/
//!     source.csv          uploaded bytes, unchanged
//!     dataset.json        source metadata and CSV options
//!     schema/v0001.json   one file per schema version
//!     bundle.json         active bot bundle
//!     bundle.meta.json    what the active bundle was built from
//!     log.jsonl           interaction log, one line per turn or rating
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use tabot_core::dialogue::{InteractionLog, InteractionRecord, Rating};
use tabot_core::generator::{BotBundle, BundleError, Strategy};
use tabot_core::ingest::{IngestError, SourceMeta, Table};
use tabot_core::schema::{DataSchema, SchemaError};

use crate::csv_source::{load_csv, CsvOptions};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("dataset `{0}` has no bot yet")]
    NoBundle(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dataset_id: String,
    pub source: SourceMeta,
    pub csv: CsvOptions,
}

/// How the strategy is chosen: automatically, or forced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    #[default]
    Auto,
    Expanded,
    Generic,
}

impl StrategyChoice {
    pub fn forced(self) -> Option<Strategy> {
        match self {
            StrategyChoice::Auto => None,
            StrategyChoice::Expanded => Some(Strategy::Expanded),
            StrategyChoice::Generic => Some(Strategy::Generic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub schema_version: u32,
    pub strategy: Strategy,
    #[serde(default)]
    pub requested: StrategyChoice,
    pub intent_count: usize,
    pub entity_count: usize,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum LogLine {
    Turn(InteractionRecord),
    Rating {
        session_id: String,
        turn_index: usize,
        rating: Rating,
        timestamp: NaiveDateTime,
    },
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes through a temporary file so readers never see half a document.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        let d = self.root.join(id);
        if !valid_id(id) || !d.is_dir() {
            return Err(StoreError::UnknownDataset(id.to_string()));
        }
        Ok(d)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).is_ok()
    }

    /// Parses the bytes and, when they load, stores them under a fresh id.
    pub fn create(&self, bytes: &[u8], source: SourceMeta, csv: CsvOptions) -> Result<(String, Table), StoreError> {
        let table = load_csv(bytes, source.clone(), &csv)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        fs::create_dir_all(dir.join("schema"))?;
        fs::write(dir.join("source.csv"), bytes)?;
        let meta = DatasetMeta {
            dataset_id: id.clone(),
            source,
            csv,
        };
        write_atomic(&dir.join("dataset.json"), serde_json::to_string_pretty(&meta).unwrap().as_bytes())?;
        Ok((id, table))
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("dataset.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn meta(&self, id: &str) -> Result<DatasetMeta, StoreError> {
        read_json(&self.dir(id)?.join("dataset.json"))
    }

    pub fn load_table(&self, id: &str) -> Result<Table, StoreError> {
        let dir = self.dir(id)?;
        let meta = self.meta(id)?;
        let bytes = fs::read(dir.join("source.csv"))?;
        Ok(load_csv(bytes.as_slice(), meta.source, &meta.csv)?)
    }

    fn schema_path(dir: &Path, version: u32) -> PathBuf {
        dir.join("schema").join(format!("v{version:04}.json"))
    }

    pub fn schema_versions(&self, id: &str) -> Result<Vec<u32>, StoreError> {
        let dir = self.dir(id)?.join("schema");
        let mut v: Vec<u32> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_prefix('v')?.strip_suffix(".json")?.parse().ok()
            })
            .collect();
        v.sort_unstable();
        Ok(v)
    }

    /// Stores `schema` as the next version and returns that version.
    pub fn push_schema(&self, id: &str, schema: &DataSchema) -> Result<u32, StoreError> {
        let dir = self.dir(id)?;
        let next = self.schema_versions(id)?.last().copied().unwrap_or(0) + 1;
        write_atomic(&Self::schema_path(&dir, next), schema.to_json().as_bytes())?;
        Ok(next)
    }

    pub fn schema(&self, id: &str, version: u32) -> Result<DataSchema, StoreError> {
        let path = Self::schema_path(&self.dir(id)?, version);
        Ok(DataSchema::from_json(&fs::read_to_string(path)?)?)
    }

    pub fn latest_schema(&self, id: &str) -> Result<(u32, DataSchema), StoreError> {
        let v = self
            .schema_versions(id)?
            .last()
            .copied()
            .ok_or_else(|| StoreError::Corrupt {
                path: self.root.join(id).join("schema"),
                reason: "no schema version".into(),
            })?;
        Ok((v, self.schema(id, v)?))
    }

    pub fn save_bundle(&self, id: &str, bundle: &BotBundle, meta: &BundleMeta) -> Result<(), StoreError> {
        let dir = self.dir(id)?;
        write_atomic(&dir.join("bundle.json"), bundle.to_json().as_bytes())?;
        write_atomic(&dir.join("bundle.meta.json"), serde_json::to_string_pretty(meta).unwrap().as_bytes())?;
        Ok(())
    }

    pub fn load_bundle(&self, id: &str) -> Result<(BotBundle, BundleMeta), StoreError> {
        let dir = self.dir(id)?;
        let path = dir.join("bundle.json");
        if !path.is_file() {
            return Err(StoreError::NoBundle(id.to_string()));
        }
        let bundle = BotBundle::from_json(&fs::read_to_string(path)?)?;
        let meta = read_json(&dir.join("bundle.meta.json"))?;
        Ok((bundle, meta))
    }

    /// Appends one line and flushes it.
    pub fn append_log(&self, id: &str, line: &LogLine) -> Result<(), StoreError> {
        let path = self.dir(id)?.join("log.jsonl");
        let mut text = serde_json::to_string(line).expect("log lines serialize");
        text.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Replays the log file. Ratings are folded into the turns they name.
    pub fn read_log(&self, id: &str) -> Result<InteractionLog, StoreError> {
        let path = self.dir(id)?.join("log.jsonl");
        let mut log = InteractionLog::default();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(log),
            Err(e) => return Err(e.into()),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: LogLine = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                reason: format!("line {}: {e}", i + 1),
            })?;
            match entry {
                LogLine::Turn(r) => log.append(r),
                LogLine::Rating {
                    session_id,
                    turn_index,
                    rating,
                    timestamp,
                } => {
                    let _ = log.record_rating(&session_id, turn_index, rating, timestamp);
                }
            }
        }
        Ok(log)
    }
}
