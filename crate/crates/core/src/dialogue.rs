//! Per-session conversation handling: clarification, group choice,
//! presentation of long results, the fallback route and the interaction log.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::generator::{Binding, Intent};
use crate::ingest::{FieldType, Table, Value};
use crate::intent::{Engine, EntityMention, IntentError, MatchResult, MentionValue};
use crate::patterns::{Action, FieldExpr, MetaKind, PatternCategory, SlotKind};
use crate::query::{build_plan, execute, parse_sql, ResultSet, Shape};
use crate::text::{fold, humanize};

pub const DEFAULT_PAGE_SIZE: usize = 10;
pub const DEFAULT_MAX_RETRIES: u8 = 2;
pub const DEFAULT_SESSION_TTL_SECS: i64 = 30 * 60;
pub const HISTORY_LIMIT: usize = 20;
pub const HELP_QUESTION: &str = "What kind of questions can I ask?";

const SHOW_PAGE: &str = "Show the first page";
const SHOW_ALL: &str = "Show all";
const COUNT_ONLY: &str = "Just the count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueConfig {
    pub page_size: usize,
    pub max_retries: u8,
    pub session_ttl_secs: i64,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            page_size: DEFAULT_PAGE_SIZE,
            max_retries: DEFAULT_MAX_RETRIES,
            session_ttl_secs: DEFAULT_SESSION_TTL_SECS,
        }
    }
}

/// A result waiting for the user to say how to show it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingResult {
    pub result: ResultSet,
    pub notes: Vec<String>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    AwaitingSlot {
        slot: String,
        pending: Box<MatchResult>,
        retries: u8,
    },
    AwaitingGroupChoice {
        group: String,
        pending: Box<MatchResult>,
        retries: u8,
    },
    AwaitingPresentationChoice {
        pending: Box<PendingResult>,
    },
    AwaitingPage {
        pending: Box<PendingResult>,
        /// Rows already shown.
        cursor: usize,
    },
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::AwaitingSlot { .. } => "awaiting_slot",
            SessionState::AwaitingGroupChoice { .. } => "awaiting_group_choice",
            SessionState::AwaitingPresentationChoice { .. } => "awaiting_presentation_choice",
            SessionState::AwaitingPage { .. } => "awaiting_page",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSummary {
    pub utterance: String,
    pub kind: AnswerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub locale: String,
    pub state: SessionState,
    pub history: VecDeque<TurnSummary>,
    pub turns: usize,
    pub last_active: Option<NaiveDateTime>,
}

impl Session {
    pub fn new(session_id: &str, locale: &str) -> Session {
        Session {
            session_id: session_id.to_string(),
            locale: locale.to_string(),
            state: SessionState::Idle,
            history: VecDeque::new(),
            turns: 0,
            last_active: None,
        }
    }

    pub fn expired(&self, now: NaiveDateTime, ttl_secs: i64) -> bool {
        self.last_active
            .is_some_and(|t| (now - t).num_seconds() > ttl_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Direct,
    Clarification,
    Paged,
    FallbackAnswer,
    Error,
    Help,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub shape: Shape,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Index of the first row shown.
    pub offset: usize,
    pub total_row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub kind: AnswerKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<ResultPage>,
    pub fallback_warning: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interpretation_notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suggested_replies: Vec<String>,
}

impl Answer {
    fn new(kind: AnswerKind, text: impl Into<String>) -> Answer {
        Answer {
            kind,
            text: text.into(),
            payload: None,
            fallback_warning: false,
            interpretation_notes: Vec::new(),
            suggested_replies: Vec::new(),
        }
    }

    fn error_with_help(text: impl Into<String>) -> Answer {
        let mut a = Answer::new(AnswerKind::Error, text);
        a.suggested_replies.push(HELP_QUESTION.to_string());
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Hit { intent: String, confidence: f64 },
    Miss,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub timestamp: NaiveDateTime,
    pub rating: Rating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub timestamp: NaiveDateTime,
    pub session_id: String,
    pub turn_index: usize,
    pub utterance: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub answer_kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_rating: Option<Rating>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rating_history: Vec<RatingEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    #[error("no turn {turn_index} in session `{session_id}`")]
    UnknownTurn { session_id: String, turn_index: usize },
}

/// Hits and misses in arrival order. Records are only ever appended; a
/// rating updates the record it names and keeps every rating event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub records: Vec<InteractionRecord>,
}

impl InteractionLog {
    pub fn append(&mut self, r: InteractionRecord) {
        self.records.push(r);
    }

    pub fn record_rating(
        &mut self,
        session_id: &str,
        turn_index: usize,
        rating: Rating,
        now: NaiveDateTime,
    ) -> Result<&InteractionRecord, LogError> {
        let r = self
            .records
            .iter_mut()
            .find(|r| r.session_id == session_id && r.turn_index == turn_index)
            .ok_or_else(|| LogError::UnknownTurn {
                session_id: session_id.to_string(),
                turn_index,
            })?;
        r.user_rating = Some(rating);
        r.rating_history.push(RatingEvent { timestamp: now, rating });
        Ok(r)
    }

    pub fn for_session<'a>(&'a self, session_id: &'a str) -> impl Iterator<Item = &'a InteractionRecord> {
        self.records.iter().filter(move |r| r.session_id == session_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
}

/// What the text-to-SQL service receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRequest {
    pub question: String,
    pub fields: Vec<FieldSummary>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FallbackError {
    #[error("fallback unavailable: {0}")]
    Unavailable(String),
    #[error("fallback timed out")]
    Timeout,
    #[error("fallback declined: {0}")]
    Declined(String),
}

/// Translates a question the bot did not understand into SQL.
pub trait FallbackClient {
    fn translate(&self, request: &FallbackRequest) -> Result<String, FallbackError>;
}

/// Client used when no fallback service is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubFallback;

impl FallbackClient for StubFallback {
    fn translate(&self, _: &FallbackRequest) -> Result<String, FallbackError> {
        Err(FallbackError::Unavailable("no fallback service configured".into()))
    }
}

/// Everything a turn needs besides the session.
pub struct Bot<'a> {
    pub engine: &'a Engine,
    pub table: &'a Table,
    pub fallback: &'a dyn FallbackClient,
    pub config: DialogueConfig,
}

pub struct TurnOutput {
    pub answer: Answer,
    pub record: InteractionRecord,
}

fn display(engine: &Engine, field: &str) -> String {
    let schema = &engine.bundle().schema;
    schema
        .field(field)
        .and_then(|f| f.display_names.get(&schema.language).cloned())
        .unwrap_or_else(|| humanize(field))
}

fn is_cancel(text: &str) -> bool {
    matches!(fold(text.trim_end_matches(['.', '!'])).as_str(), "cancel" | "stop" | "never mind" | "start over")
}

enum Choice {
    Page,
    All,
    Count,
}

fn presentation_choice(text: &str) -> Option<Choice> {
    let t = fold(text.trim().trim_end_matches(['.', '!', '?']));
    let has = |w: &str| t.split(' ').any(|x| x == w);
    if t == "1" || has("first") || has("page") {
        Some(Choice::Page)
    } else if t == "2" || has("all") || has("everything") {
        Some(Choice::All)
    } else if t == "3" || has("count") || has("number") {
        Some(Choice::Count)
    } else {
        None
    }
}

fn is_next(text: &str) -> bool {
    matches!(
        fold(text.trim().trim_end_matches(['.', '!', '?'])).as_str(),
        "next" | "more" | "next page" | "show more" | "continue"
    )
}

impl Bot<'_> {
    /// Runs one user turn. Never panics on user input; every failure becomes
    /// an `Error` answer. Exactly one record is produced per call.
    pub fn handle_turn(&self, session: &mut Session, utterance: &str, now: NaiveDateTime) -> TurnOutput {
        if session.expired(now, self.config.session_ttl_secs) {
            session.state = SessionState::Idle;
        }
        let (answer, outcome) = self.step(session, utterance);
        session.last_active = Some(now);
        let record = InteractionRecord {
            timestamp: now,
            session_id: session.session_id.clone(),
            turn_index: session.turns,
            utterance: utterance.to_string(),
            outcome,
            answer_kind: answer.kind,
            user_rating: None,
            rating_history: Vec::new(),
        };
        session.turns += 1;
        session.history.push_back(TurnSummary {
            utterance: utterance.to_string(),
            kind: answer.kind,
        });
        while session.history.len() > HISTORY_LIMIT {
            session.history.pop_front();
        }
        TurnOutput { answer, record }
    }

    fn step(&self, session: &mut Session, text: &str) -> (Answer, Outcome) {
        let engine = self.engine;
        let parsed = match engine.tokenize(text) {
            Ok(u) => u,
            Err(IntentError::EmptyUtterance) => {
                return (Answer::error_with_help("Please type a question."), Outcome::Miss);
            }
        };
        if is_cancel(text) {
            session.state = SessionState::Idle;
            return (Answer::new(AnswerKind::Direct, "Okay, let's start over."), Outcome::Miss);
        }
        let mentions = engine.recognize(&parsed);
        let state = core::mem::replace(&mut session.state, SessionState::Idle);
        match state {
            SessionState::Idle => self.question(session, text, &parsed, &mentions),
            SessionState::AwaitingSlot { slot, pending, retries } => {
                if let Some(m) = engine.bind_reply(&pending, &slot, &mentions) {
                    return self.proceed(session, m);
                }
                if let Some(r) = self.new_question(session, text, &parsed, &mentions) {
                    return r;
                }
                let outcome = hit(&pending);
                if retries >= self.config.max_retries {
                    return (self.abandon(), outcome);
                }
                let mut a = self.ask_slot(&pending, &slot);
                a.text = format!("Sorry, I did not get that. {}", a.text);
                session.state = SessionState::AwaitingSlot {
                    slot,
                    pending,
                    retries: retries + 1,
                };
                (a, outcome)
            }
            SessionState::AwaitingGroupChoice { group, pending, retries } => {
                if let Some(member) = self.group_reply(&pending, text, &mentions) {
                    if let Some(m) = engine.resolve_group(&pending, &member) {
                        return self.proceed(session, m);
                    }
                }
                if let Some(r) = self.new_question(session, text, &parsed, &mentions) {
                    return r;
                }
                let outcome = hit(&pending);
                if retries >= self.config.max_retries {
                    return (self.abandon(), outcome);
                }
                let mut a = self.ask_group(&pending);
                a.text = format!("Sorry, I did not get that. {}", a.text);
                session.state = SessionState::AwaitingGroupChoice {
                    group,
                    pending,
                    retries: retries + 1,
                };
                (a, outcome)
            }
            SessionState::AwaitingPresentationChoice { pending } => {
                let outcome = if pending.fallback { Outcome::Fallback } else { Outcome::Miss };
                match presentation_choice(text) {
                    Some(Choice::Page) => (self.page(session, pending, 0), outcome),
                    Some(Choice::All) => {
                        let n = pending.result.rows.len();
                        let mut a = self.rows_answer(&pending, 0, n);
                        a.kind = if pending.fallback { AnswerKind::FallbackAnswer } else { AnswerKind::Direct };
                        (a, outcome)
                    }
                    Some(Choice::Count) => {
                        let mut a = Answer::new(
                            if pending.fallback { AnswerKind::FallbackAnswer } else { AnswerKind::Direct },
                            format!("{}{} results.", warn(pending.fallback), pending.result.total_row_count),
                        );
                        a.fallback_warning = pending.fallback;
                        a.interpretation_notes = pending.notes.clone();
                        (a, outcome)
                    }
                    None => {
                        if let Some(r) = self.new_question(session, text, &parsed, &mentions) {
                            return r;
                        }
                        let a = self.presentation_prompt(&pending, true);
                        session.state = SessionState::AwaitingPresentationChoice { pending };
                        (a, Outcome::Miss)
                    }
                }
            }
            SessionState::AwaitingPage { pending, cursor } => {
                let outcome = if pending.fallback { Outcome::Fallback } else { Outcome::Miss };
                if is_next(text) {
                    if cursor >= pending.result.rows.len() {
                        return (Answer::new(AnswerKind::Direct, "There are no more rows."), outcome);
                    }
                    return (self.page(session, pending, cursor), outcome);
                }
                if let Some(r) = self.new_question(session, text, &parsed, &mentions) {
                    return r;
                }
                let mut a = Answer::new(AnswerKind::Clarification, "Say \"next\" to see more rows, or ask another question.");
                a.suggested_replies.push("next".into());
                a.fallback_warning = pending.fallback;
                session.state = SessionState::AwaitingPage { pending, cursor };
                (a, Outcome::Miss)
            }
        }
    }

    /// Handles `text` as a fresh question when the matcher accepts it.
    fn new_question(
        &self,
        session: &mut Session,
        text: &str,
        parsed: &crate::intent::Utterance,
        mentions: &[EntityMention],
    ) -> Option<(Answer, Outcome)> {
        let m = self.engine.match_intent(parsed, mentions);
        if !m.accepted(self.engine.threshold()) || !m.missing_required.is_empty() {
            return None;
        }
        Some(self.question(session, text, parsed, mentions))
    }

    fn abandon(&self) -> Answer {
        Answer::error_with_help(format!(
            "I still could not understand, so let's start over. You can ask \"{HELP_QUESTION}\""
        ))
    }

    fn question(
        &self,
        session: &mut Session,
        text: &str,
        parsed: &crate::intent::Utterance,
        mentions: &[EntityMention],
    ) -> (Answer, Outcome) {
        let m = self.engine.match_intent(parsed, mentions);
        if !m.accepted(self.engine.threshold()) {
            return self.route_fallback(session, text);
        }
        self.proceed(session, m)
    }

    /// Continues with an accepted match: ask what is missing, else answer.
    fn proceed(&self, session: &mut Session, m: MatchResult) -> (Answer, Outcome) {
        let outcome = hit(&m);
        if let Some(choice) = &m.group_choice {
            let a = self.ask_group(&m);
            session.state = SessionState::AwaitingGroupChoice {
                group: choice.group.clone(),
                pending: Box::new(m),
                retries: 0,
            };
            return (a, outcome);
        }
        if let Some(slot) = m.missing_required.first().cloned() {
            let a = self.ask_slot(&m, &slot);
            session.state = SessionState::AwaitingSlot {
                slot,
                pending: Box::new(m),
                retries: 0,
            };
            return (a, outcome);
        }
        let Some(intent) = self.engine.bundle().intent(&m.intent) else {
            return (Answer::error_with_help("That question type is not available."), Outcome::Miss);
        };
        if let Action::Meta(kind) = &intent.action {
            return (self.meta(*kind), outcome);
        }
        let plan = match build_plan(intent, &m, self.engine.bundle()) {
            Ok(Some(p)) => p,
            Ok(None) => return (Answer::error_with_help("Nothing to compute."), outcome),
            Err(e) => return (Answer::error_with_help(format!("I could not build that query: {e}.")), outcome),
        };
        let result = match execute(&plan, self.table, &self.engine.bundle().schema) {
            Ok(r) => r,
            Err(e) => return (Answer::error_with_help(format!("I could not run that query: {e}.")), outcome),
        };
        let mut notes = Vec::new();
        if let Some(n) = &intent.note {
            notes.push(self.fill_note(intent, &m, n));
        }
        if result.tie_at_limit {
            notes.push("more rows tie with the last one shown".into());
        }
        let pending = PendingResult {
            result,
            notes,
            fallback: false,
        };
        (self.present(session, pending), outcome)
    }

    fn fill_note(&self, intent: &Intent, m: &MatchResult, note: &str) -> String {
        let mut out = String::from(note);
        for slot in intent.bound.keys().chain(m.bindings.keys()) {
            let field = match (intent.bound.get(slot), m.bindings.get(slot).map(|b| &b.value)) {
                (Some(Binding::Field(f)), _) | (None, Some(MentionValue::Field { name: f })) => f.clone(),
                _ => continue,
            };
            out = out.replace(&format!("{{{slot}}}"), &display(self.engine, &field));
        }
        out
    }

    fn present(&self, session: &mut Session, pending: PendingResult) -> Answer {
        let r = &pending.result;
        match r.shape {
            Shape::Scalar => {
                let value = r.scalar().cloned().unwrap_or(Value::Missing);
                let text = if pending.fallback {
                    format!("⚠ approximate: {value}")
                } else {
                    format!("{}: {value}", r.columns.first().map(String::as_str).unwrap_or("result"))
                };
                let mut a = Answer::new(kind_for(&pending, AnswerKind::Direct), text);
                a.payload = Some(page_of(r, 0, r.rows.len()));
                a.fallback_warning = pending.fallback;
                a.interpretation_notes = pending.notes.clone();
                a
            }
            Shape::GroupedPairs | Shape::Rows if r.rows.len() <= self.config.page_size => {
                let mut a = self.rows_answer(&pending, 0, r.rows.len());
                a.kind = kind_for(&pending, AnswerKind::Direct);
                a
            }
            _ => {
                let a = self.presentation_prompt(&pending, false);
                session.state = SessionState::AwaitingPresentationChoice {
                    pending: Box::new(pending),
                };
                a
            }
        }
    }

    fn presentation_prompt(&self, pending: &PendingResult, retry: bool) -> Answer {
        let mut a = Answer::new(
            AnswerKind::Clarification,
            format!(
                "{}{}There are {} results. How do you want to see them?",
                if retry { "Please pick one of the options. " } else { "" },
                warn(pending.fallback),
                pending.result.rows.len()
            ),
        );
        a.suggested_replies = alloc::vec![SHOW_PAGE.into(), SHOW_ALL.into(), COUNT_ONLY.into()];
        a.fallback_warning = pending.fallback;
        a.interpretation_notes = pending.notes.clone();
        a
    }

    fn page(&self, session: &mut Session, pending: Box<PendingResult>, start: usize) -> Answer {
        let end = (start + self.config.page_size).min(pending.result.rows.len());
        let mut a = self.rows_answer(&pending, start, end);
        let more = end < pending.result.rows.len();
        if more || start > 0 {
            a.kind = AnswerKind::Paged;
            if more {
                a.suggested_replies.push("next".into());
            }
            session.state = SessionState::AwaitingPage { pending, cursor: end };
        } else {
            a.kind = kind_for(&pending, AnswerKind::Direct);
        }
        a
    }

    fn rows_answer(&self, pending: &PendingResult, start: usize, end: usize) -> Answer {
        let r = &pending.result;
        let mut lines = Vec::new();
        let count = r.rows.len();
        lines.push(match (r.shape, count) {
            (_, 0) => String::from("No results."),
            (Shape::GroupedPairs, _) => String::new(),
            (_, n) if end - start < n => format!("Results {} to {} of {n}:", start + 1, end),
            (_, 1) => String::from("1 result:"),
            (_, n) => format!("{n} results:"),
        });
        for row in &r.rows[start..end] {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            lines.push(if r.shape == Shape::GroupedPairs {
                cells.join(": ")
            } else {
                cells.join(", ")
            });
        }
        lines.retain(|l| !l.is_empty());
        let mut text = lines.join("\n");
        if pending.fallback {
            text = format!("{}{text}", warn(true));
        }
        let mut a = Answer::new(AnswerKind::Direct, text);
        a.payload = Some(page_of(r, start, end));
        a.fallback_warning = pending.fallback;
        a.interpretation_notes = pending.notes.clone();
        a
    }

    fn meta(&self, kind: MetaKind) -> Answer {
        let schema = &self.engine.bundle().schema;
        match kind {
            MetaKind::Source => Answer::new(
                AnswerKind::Direct,
                format!("The data comes from {}.", schema.source.origin),
            ),
            MetaKind::Age => match schema.source.imported_at {
                Some(t) => Answer::new(
                    AnswerKind::Direct,
                    format!("The data was imported on {}.", t.format("%Y-%m-%d %H:%M")),
                ),
                None => {
                    let mut a = Answer::new(AnswerKind::Direct, "I do not know when the data was last updated.");
                    a.interpretation_notes.push("the import time is unknown".into());
                    a
                }
            },
            MetaKind::Help => self.help(),
        }
    }

    /// Lists the question categories with one example each.
    pub fn help(&self) -> Answer {
        let bundle = self.engine.bundle();
        let mut lines = alloc::vec![String::from("You can ask:")];
        let mut suggestions = Vec::new();
        for cat in [
            PatternCategory::DatasetLevel,
            PatternCategory::FieldLevel,
            PatternCategory::CellValueLevel,
            PatternCategory::Aggregation,
            PatternCategory::Meta,
        ] {
            let example = bundle
                .intents
                .iter()
                .filter(|i| i.category == cat)
                .flat_map(|i| i.training_sentences.get(self.engine.locale()).into_iter().flatten())
                .find(|s| s.split(|c: char| !c.is_alphanumeric()).all(|w| w.is_empty() || !crate::patterns::is_placeholder_shape(w)));
            match example {
                Some(e) => {
                    lines.push(format!("- {} (e.g. \"{e}\")", cat.label()));
                    suggestions.push(e.clone());
                }
                None => lines.push(format!("- {}", cat.label())),
            }
        }
        let mut a = Answer::new(AnswerKind::Help, lines.join("\n"));
        a.suggested_replies = suggestions;
        a
    }

    fn ask_slot(&self, m: &MatchResult, slot: &str) -> Answer {
        let bundle = self.engine.bundle();
        let Some(intent) = bundle.intent(&m.intent) else {
            return Answer::new(AnswerKind::Clarification, "Could you give me more detail?");
        };
        let Some(spec) = intent.slot(slot) else {
            return Answer::new(AnswerKind::Clarification, "Could you give me more detail?");
        };
        let field_of = |slot_name: &str| -> Option<String> {
            match (intent.bound.get(slot_name), m.bindings.get(slot_name).map(|b| &b.value)) {
                (Some(Binding::Field(f)), _) | (None, Some(MentionValue::Field { name: f })) => Some(f.clone()),
                _ => None,
            }
        };
        let mut suggestions = Vec::new();
        let text = match &spec.kind {
            SlotKind::Value | SlotKind::Text => {
                let mut ctx = None;
                if let Action::Query(t) = &intent.action {
                    for f in &t.filters {
                        if !f.values.iter().any(|v| v == slot) {
                            continue;
                        }
                        let field = match &f.field {
                            FieldExpr::Slot(s) => field_of(s),
                            FieldExpr::Label => bundle.label_field.clone(),
                            FieldExpr::OwnerOf(_) => None,
                        };
                        let op = match &f.op {
                            crate::patterns::OpExpr::Slot(s) => match (intent.bound.get(s), m.bindings.get(s).map(|b| &b.value)) {
                                (Some(Binding::Operator(id)), _) | (None, Some(MentionValue::Operator { id })) => {
                                    bundle.operator(id).and_then(|o| {
                                        o.surfaces(self.engine.locale())
                                            .iter()
                                            .find(|s| s.chars().any(char::is_alphabetic))
                                            .cloned()
                                    })
                                }
                                _ => None,
                            },
                            crate::patterns::OpExpr::Fixed(op) => Some(String::from(match op {
                                crate::query::FilterOp::Between => "between",
                                crate::query::FilterOp::NameMatch => "called",
                                _ => "compared with",
                            })),
                        };
                        ctx = Some((field, op, f.values.len() > 1));
                    }
                }
                match ctx {
                    Some((Some(f), Some(op), false)) if op == "called" => {
                        let _ = f;
                        String::from("What name should I look for?")
                    }
                    Some((Some(f), Some(op), false)) => format!("What value should {} be {op}?", display(self.engine, &f)),
                    Some((Some(f), _, true)) => format!("What is the {} range (two values)?", display(self.engine, &f)),
                    Some((Some(f), None, _)) => format!("What value of {} do you mean?", display(self.engine, &f)),
                    _ => String::from("Which value do you mean?"),
                }
            }
            SlotKind::Field(p) => {
                for f in &bundle.schema.fields {
                    if crate::patterns::FieldView::of(&bundle.schema, &f.canonical_name).is_some_and(|v| p.accepts(&v)) {
                        suggestions.push(display(self.engine, &f.canonical_name));
                    }
                }
                String::from("Which field do you mean?")
            }
            SlotKind::Operator { .. } => {
                let f = intent
                    .slots
                    .iter()
                    .find(|s| matches!(s.kind, SlotKind::Field(_)))
                    .and_then(|s| field_of(&s.name))
                    .or_else(|| intent.bound_field.clone());
                match f {
                    Some(f) => format!("How should {} be compared (for example \"greater than\")?", display(self.engine, &f)),
                    None => String::from("How should the value be compared (for example \"greater than\")?"),
                }
            }
            SlotKind::Number => String::from("How many?"),
            SlotKind::Category(_) => {
                if let Some(o) = &spec.owner {
                    if let Some(f) = bundle.schema.field(o) {
                        suggestions.extend(f.stats.value_lexicon.iter().cloned());
                    }
                    format!("Which {} do you mean?", display(self.engine, o))
                } else {
                    String::from("Which value do you mean?")
                }
            }
        };
        let mut a = Answer::new(AnswerKind::Clarification, text);
        a.suggested_replies = suggestions;
        a
    }

    fn ask_group(&self, m: &MatchResult) -> Answer {
        let Some(choice) = &m.group_choice else {
            return Answer::new(AnswerKind::Clarification, "Which field do you mean?");
        };
        let names: Vec<String> = choice.members.iter().map(|f| display(self.engine, f)).collect();
        let mut a = Answer::new(
            AnswerKind::Clarification,
            format!("Which {} do you mean: {}?", humanize(&choice.group), names.join(" or ")),
        );
        a.suggested_replies = names;
        a
    }

    fn group_reply(&self, pending: &MatchResult, text: &str, mentions: &[EntityMention]) -> Option<String> {
        let choice = pending.group_choice.as_ref()?;
        for m in mentions {
            if let MentionValue::Field { name } = &m.value {
                if choice.members.contains(name) {
                    return Some(name.clone());
                }
            }
        }
        let t = fold(text.trim().trim_end_matches(['.', '!', '?']));
        if let Ok(n) = t.parse::<usize>() {
            return choice.members.get(n.checked_sub(1)?).cloned();
        }
        choice
            .members
            .iter()
            .find(|f| fold(&display(self.engine, f)) == t || fold(f) == t)
            .cloned()
    }

    /// Sends the question to the fallback service and answers from the SQL
    /// it returns, always with a warning. Failures become `Error` answers.
    pub fn route_fallback(&self, session: &mut Session, text: &str) -> (Answer, Outcome) {
        let schema = &self.engine.bundle().schema;
        let request = FallbackRequest {
            question: text.to_string(),
            fields: schema
                .fields
                .iter()
                .map(|f| FieldSummary {
                    name: f.canonical_name.clone(),
                    field_type: f.field_type,
                })
                .collect(),
            language: schema.language.clone(),
        };
        let sql = match self.fallback.translate(&request) {
            Ok(sql) => sql,
            Err(_) => {
                return (
                    Answer::error_with_help(format!(
                        "Sorry, I did not understand the question. Try \"{HELP_QUESTION}\""
                    )),
                    Outcome::Miss,
                )
            }
        };
        let result = parse_sql(&sql, schema)
            .ok()
            .and_then(|plan| execute(&plan, self.table, schema).ok());
        let Some(result) = result else {
            return (
                Answer::error_with_help("Sorry, the fallback produced an invalid query."),
                Outcome::Miss,
            );
        };
        let pending = PendingResult {
            result,
            notes: alloc::vec![String::from("answered by the automatic SQL translation; it may be inaccurate")],
            fallback: true,
        };
        (self.present(session, pending), Outcome::Fallback)
    }
}

fn warn(fallback: bool) -> &'static str {
    if fallback {
        "⚠ approximate answer. "
    } else {
        ""
    }
}

fn kind_for(p: &PendingResult, k: AnswerKind) -> AnswerKind {
    if p.fallback {
        AnswerKind::FallbackAnswer
    } else {
        k
    }
}

fn hit(m: &MatchResult) -> Outcome {
    Outcome::Hit {
        intent: m.intent.clone(),
        confidence: m.confidence,
    }
}

fn page_of(r: &ResultSet, start: usize, end: usize) -> ResultPage {
    ResultPage {
        shape: r.shape,
        columns: r.columns.clone(),
        rows: r.rows[start..end].to_vec(),
        offset: start,
        total_row_count: r.total_row_count,
    }
}
