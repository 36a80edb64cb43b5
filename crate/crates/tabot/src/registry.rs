//! Datasets, their active bots and chat sessions, backed by a [`Store`].
//!
//! Every method blocks; the HTTP layer calls them from blocking tasks.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use tabot_core::dialogue::{Answer, Bot, FallbackClient, InteractionLog, InteractionRecord, LogError, Rating, Session};
use tabot_core::generator::{generate, select_strategy};
use tabot_core::ingest::{SourceMeta, Table};
use tabot_core::intent::Engine;
use tabot_core::patterns::{catalog, Catalog};
use tabot_core::schema::{build_default_schema, DataSchema, Enrichment, SchemaError};

use crate::config::Config;
use crate::csv_source::CsvOptions;
use crate::store::{BundleMeta, LogLine, Store, StoreError, StrategyChoice};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub index: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("schema edits rejected")]
    Rejected(Vec<Diagnostic>),
    #[error("generation already in progress for dataset `{0}`")]
    GenerationInProgress(String),
    #[error("dataset `{0}` has no bot yet")]
    NoActiveBundle(String),
    #[error(transparent)]
    UnknownTurn(#[from] LogError),
}

pub fn schema_error_code(e: &SchemaError) -> &'static str {
    match e {
        SchemaError::UnknownField(_) => "unknown_field",
        SchemaError::SynonymCollision { .. } => "synonym_collision",
        SchemaError::GroupMembershipConflict { .. } => "group_membership_conflict",
        SchemaError::CompositeShadowsField(_) => "composite_shadows_field",
        SchemaError::InvalidEdit(_) => "invalid_edit",
        SchemaError::SchemaVersionMismatch { .. } => "schema_version_mismatch",
        SchemaError::IntegrityViolation { .. } => "integrity_violation",
        SchemaError::Malformed(_) => "malformed",
    }
}

/// The bot a dataset currently answers with.
pub struct ActiveBot {
    pub engine: Engine,
    pub meta: BundleMeta,
}

pub struct Dataset {
    pub id: String,
    pub table: Table,
    edits: tokio::sync::Mutex<()>,
    generating: AtomicBool,
    active: RwLock<Option<Arc<ActiveBot>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    log: Mutex<InteractionLog>,
}

impl Dataset {
    pub fn active(&self) -> Option<Arc<ActiveBot>> {
        self.active.read().unwrap().clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub dataset_id: String,
    pub version: u32,
    pub schema: DataSchema,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BotDoc {
    pub dataset_id: String,
    #[serde(flatten)]
    pub meta: BundleMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatReply {
    pub session_id: String,
    pub turn_index: usize,
    pub state: String,
    pub answer: Answer,
}

pub struct Registry {
    store: Store,
    config: Config,
    catalog: Catalog,
    fallback: Arc<dyn FallbackClient + Send + Sync>,
    datasets: Mutex<HashMap<String, Arc<Dataset>>>,
}

impl Registry {
    pub fn new(store: Store, config: Config, fallback: Arc<dyn FallbackClient + Send + Sync>) -> Registry {
        Registry {
            store,
            config,
            catalog: catalog(),
            fallback,
            datasets: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Loads a dataset, its active bot and its log on first use.
    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, RegistryError> {
        if let Some(d) = self.datasets.lock().unwrap().get(id) {
            return Ok(d.clone());
        }
        let table = self.store.load_table(id)?;
        let active = match self.store.load_bundle(id) {
            Ok((bundle, meta)) => Some(Arc::new(ActiveBot {
                engine: Engine::new(bundle),
                meta,
            })),
            Err(StoreError::NoBundle(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let log = self.store.read_log(id)?;
        let d = Arc::new(Dataset {
            id: id.to_string(),
            table,
            edits: tokio::sync::Mutex::new(()),
            generating: AtomicBool::new(false),
            active: RwLock::new(active),
            sessions: Mutex::new(HashMap::new()),
            log: Mutex::new(log),
        });
        Ok(self
            .datasets
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert(d)
            .clone())
    }

    /// Stores the CSV and its default schema as version 1.
    pub fn upload(&self, bytes: &[u8], source: SourceMeta, csv: CsvOptions) -> Result<SchemaDoc, RegistryError> {
        let (id, table) = self.store.create(bytes, source, csv)?;
        let schema = build_default_schema(&table, self.config.categorical_threshold, "en");
        let version = self.store.push_schema(&id, &schema)?;
        Ok(SchemaDoc {
            dataset_id: id,
            version,
            schema,
        })
    }

    pub fn schema(&self, id: &str) -> Result<SchemaDoc, RegistryError> {
        self.dataset(id)?;
        let (version, schema) = self.store.latest_schema(id)?;
        Ok(SchemaDoc {
            dataset_id: id.to_string(),
            version,
            schema,
        })
    }

    /// Applies all commands or none. A dataset with a bot gets it rebuilt
    /// from the new version with the same strategy choice.
    pub fn patch(&self, id: &str, commands: &[Enrichment]) -> Result<SchemaDoc, RegistryError> {
        let ds = self.dataset(id)?;
        let _turn = ds.edits.blocking_lock();
        let (_, mut schema) = self.store.latest_schema(id)?;
        let mut diagnostics = Vec::new();
        for (index, c) in commands.iter().enumerate() {
            match schema.apply(c) {
                Ok(s) => schema = s,
                Err(e) => diagnostics.push(Diagnostic {
                    index,
                    code: schema_error_code(&e).to_string(),
                    message: e.to_string(),
                }),
            }
        }
        if !diagnostics.is_empty() {
            return Err(RegistryError::Rejected(diagnostics));
        }
        let version = self.store.push_schema(id, &schema)?;
        if let Some(active) = ds.active() {
            self.build(&ds, active.meta.requested, version, &schema)?;
        }
        Ok(SchemaDoc {
            dataset_id: id.to_string(),
            version,
            schema,
        })
    }

    /// Builds a bot from the latest schema and makes it active.
    pub fn generate(&self, id: &str, choice: StrategyChoice) -> Result<BotDoc, RegistryError> {
        let ds = self.dataset(id)?;
        if ds
            .generating
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(RegistryError::GenerationInProgress(id.to_string()));
        }
        let result = (|| {
            let _turn = ds.edits.blocking_lock();
            let (version, schema) = self.store.latest_schema(id)?;
            self.build(&ds, choice, version, &schema)
        })();
        ds.generating.store(false, Ordering::Release);
        result
    }

    fn build(&self, ds: &Dataset, choice: StrategyChoice, version: u32, schema: &DataSchema) -> Result<BotDoc, RegistryError> {
        let strategy = select_strategy(schema, &self.catalog, self.config.max_expanded_intents, choice.forced());
        let bundle = generate(schema, &self.catalog, strategy, self.config.matcher());
        let meta = BundleMeta {
            schema_version: version,
            strategy,
            requested: choice,
            intent_count: bundle.intents.len(),
            entity_count: bundle.entities.len(),
            generator_version: bundle.generator_version.clone(),
        };
        self.store.save_bundle(&ds.id, &bundle, &meta)?;
        *ds.active.write().unwrap() = Some(Arc::new(ActiveBot {
            engine: Engine::new(bundle),
            meta: meta.clone(),
        }));
        Ok(BotDoc {
            dataset_id: ds.id.clone(),
            meta,
        })
    }

    /// One chat turn. Turns of one session run one at a time.
    pub fn chat(
        &self,
        id: &str,
        session_id: Option<&str>,
        utterance: &str,
        now: NaiveDateTime,
    ) -> Result<ChatReply, RegistryError> {
        let ds = self.dataset(id)?;
        let active = ds.active().ok_or_else(|| RegistryError::NoActiveBundle(id.to_string()))?;
        let sid = session_id
            .map(str::to_string)
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        let session = ds
            .sessions
            .lock()
            .unwrap()
            .entry(sid.clone())
            .or_insert_with(|| Arc::new(Mutex::new(Session::new(&sid, active.engine.locale()))))
            .clone();
        let mut session = session.lock().unwrap_or_else(|p| p.into_inner());
        if session.turns == 0 {
            // Resume the numbering of a session seen before a restart.
            session.turns = ds.log.lock().unwrap().for_session(&sid).count();
        }
        let bot = Bot {
            engine: &active.engine,
            table: &ds.table,
            fallback: &*self.fallback,
            config: self.config.dialogue(),
        };
        let out = bot.handle_turn(&mut session, utterance, now);
        {
            let mut log = ds.log.lock().unwrap();
            self.store.append_log(id, &LogLine::Turn(out.record.clone()))?;
            log.append(out.record.clone());
        }
        Ok(ChatReply {
            session_id: sid,
            turn_index: out.record.turn_index,
            state: session.state.name().to_string(),
            answer: out.answer,
        })
    }

    pub fn rate(
        &self,
        id: &str,
        session_id: &str,
        turn_index: usize,
        rating: Rating,
        now: NaiveDateTime,
    ) -> Result<InteractionRecord, RegistryError> {
        let ds = self.dataset(id)?;
        let mut log = ds.log.lock().unwrap();
        let record = log.record_rating(session_id, turn_index, rating, now)?.clone();
        self.store.append_log(
            id,
            &LogLine::Rating {
                session_id: session_id.to_string(),
                turn_index,
                rating,
                timestamp: now,
            },
        )?;
        Ok(record)
    }

    pub fn log(&self, id: &str) -> Result<InteractionLog, RegistryError> {
        Ok(self.dataset(id)?.log.lock().unwrap().clone())
    }
}
