//! Batch matching of questions against a bot, for regression checks.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use tabot_core::dialogue::{AnswerKind, Bot, DialogueConfig, Session, StubFallback};
use tabot_core::ingest::Table;
use tabot_core::intent::Engine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLine {
    pub question: String,
    pub intent: String,
    pub confidence: f64,
    pub accepted: bool,
    pub kind: AnswerKind,
    pub answer: String,
}

/// Every training sentence of the bot, in bundle order.
pub fn training_questions(engine: &Engine) -> Vec<String> {
    let locale = engine.locale().to_string();
    engine
        .bundle()
        .intents
        .iter()
        .flat_map(|i| i.training_sentences.get(&locale).cloned().unwrap_or_default())
        .collect()
}

/// Runs each question in a fresh session without a fallback service.
pub fn evaluate(engine: &Engine, table: &Table, questions: &[String], at: NaiveDateTime) -> Vec<EvalLine> {
    let bot = Bot {
        engine,
        table,
        fallback: &StubFallback,
        config: DialogueConfig::default(),
    };
    questions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let (intent, confidence, accepted) = match engine.match_text(q) {
                Ok((_, _, m)) => {
                    let ok = m.accepted(engine.threshold());
                    (m.intent, m.confidence, ok)
                }
                Err(_) => (String::new(), 0.0, false),
            };
            let mut session = Session::new(&format!("eval-{i}"), engine.locale());
            let out = bot.handle_turn(&mut session, q, at);
            EvalLine {
                question: q.clone(),
                intent,
                confidence,
                accepted,
                kind: out.answer.kind,
                answer: out.answer.text,
            }
        })
        .collect()
}

/// One JSON document per line.
pub fn report(lines: &[EvalLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("eval lines serialize"));
        out.push('\n');
    }
    out
}
