use chrono::{NaiveDate, NaiveDateTime};

use tabot_core::dialogue::{
    AnswerKind, Bot, DialogueConfig, FallbackClient, FallbackError, FallbackRequest, InteractionLog, LogError, Outcome,
    Rating, Session, StubFallback, HELP_QUESTION,
};
use tabot_core::fixtures::{officials, officials_enriched_schema, simple_csv};
use tabot_core::generator::{generate, MatcherConfig, Strategy};
use tabot_core::ingest::{SourceMeta, Table};
use tabot_core::intent::Engine;
use tabot_core::patterns::catalog;
use tabot_core::schema::{build_default_schema, Enrichment};

fn t(min: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 5, 1).unwrap().and_hms_opt(10, min, 0).unwrap()
}

fn engine(s: Strategy) -> Engine {
    Engine::new(generate(&officials_enriched_schema(), &catalog(), s, MatcherConfig::default()))
}

struct Sql(&'static str);

impl FallbackClient for Sql {
    fn translate(&self, r: &FallbackRequest) -> Result<String, FallbackError> {
        assert_eq!(r.language, "en");
        assert!(r.fields.iter().any(|f| f.name == "salary"));
        Ok(self.0.to_string())
    }
}

fn bot<'a>(e: &'a Engine, table: &'a Table, fb: &'a dyn FallbackClient) -> Bot<'a> {
    Bot {
        engine: e,
        table,
        fallback: fb,
        config: DialogueConfig::default(),
    }
}

#[test]
fn direct_answer_is_a_hit() {
    let table = officials();
    for s in [Strategy::Expanded, Strategy::Generic] {
        let e = engine(s);
        let b = bot(&e, &table, &StubFallback);
        let mut sess = Session::new("s1", "en");
        let out = b.handle_turn(&mut sess, "How many women are there?", t(0));
        assert_eq!(out.answer.kind, AnswerKind::Direct);
        assert!(out.answer.text.ends_with('4'), "{}", out.answer.text);
        assert!(matches!(out.record.outcome, Outcome::Hit { .. }));
        assert_eq!(out.record.turn_index, 0);
        assert_eq!(sess.state.name(), "idle");
    }
}

#[test]
fn clarification_fills_the_missing_value() {
    let table = officials();
    for s in [Strategy::Expanded, Strategy::Generic] {
        let e = engine(s);
        let b = bot(&e, &table, &StubFallback);
        let mut sess = Session::new("s", "en");
        let q = b.handle_turn(&mut sess, "Give me the rows with salary >", t(0));
        assert_eq!(q.answer.kind, AnswerKind::Clarification);
        assert_eq!(q.answer.text, "What value should salary be greater than?");
        assert_eq!(sess.state.name(), "awaiting_slot");
        let a = b.handle_turn(&mut sess, "120000", t(1));
        assert_eq!(a.answer.kind, AnswerKind::Direct, "{}", a.answer.text);
        assert_eq!(a.answer.payload.unwrap().rows.len(), 2);
        assert_eq!(a.record.turn_index, 1);
        assert_eq!(sess.state.name(), "idle");
    }
}

#[test]
fn repeated_failed_replies_abandon_the_question() {
    let table = officials();
    let e = engine(Strategy::Expanded);
    let b = bot(&e, &table, &StubFallback);
    let mut sess = Session::new("s", "en");
    b.handle_turn(&mut sess, "Give me the rows with salary >", t(0));
    for i in 0..2 {
        let a = b.handle_turn(&mut sess, "blorp", t(1 + i));
        assert_eq!(a.answer.kind, AnswerKind::Clarification);
        assert!(a.answer.text.starts_with("Sorry"));
    }
    let a = b.handle_turn(&mut sess, "blorp", t(5));
    assert_eq!(a.answer.kind, AnswerKind::Error);
    assert!(a.answer.suggested_replies.iter().any(|r| r == HELP_QUESTION));
    assert_eq!(sess.state.name(), "idle");
}

#[test]
fn cancel_returns_to_idle() {
    let table = officials();
    let e = engine(Strategy::Generic);
    let b = bot(&e, &table, &StubFallback);
    let mut sess = Session::new("s", "en");
    b.handle_turn(&mut sess, "Give me the rows with salary >", t(0));
    b.handle_turn(&mut sess, "cancel", t(1));
    assert_eq!(sess.state.name(), "idle");
}

#[test]
fn long_results_offer_a_menu_and_pages() {
    let table = officials();
    let e = engine(Strategy::Expanded);
    let mut b = bot(&e, &table, &StubFallback);
    b.config.page_size = 3;
    let mut sess = Session::new("s", "en");
    let menu = b.handle_turn(&mut sess, "Who has a salary greater than 1000?", t(0));
    assert_eq!(menu.answer.kind, AnswerKind::Clarification);
    assert_eq!(menu.answer.suggested_replies.len(), 3);
    let p1 = b.handle_turn(&mut sess, "Show the first page", t(1));
    assert_eq!(p1.answer.kind, AnswerKind::Paged);
    assert_eq!(p1.answer.payload.as_ref().unwrap().rows.len(), 3);
    let p2 = b.handle_turn(&mut sess, "next", t(2));
    assert_eq!(p2.answer.payload.as_ref().unwrap().offset, 3);
    let p3 = b.handle_turn(&mut sess, "next", t(3));
    assert_eq!(p3.answer.kind, AnswerKind::Paged);
    assert_eq!(p3.answer.payload.as_ref().unwrap().rows.len(), 2);
    let end = b.handle_turn(&mut sess, "next", t(3));
    assert_eq!(end.answer.text, "There are no more rows.");
    assert_eq!(sess.state.name(), "idle");

    b.handle_turn(&mut sess, "Who has a salary greater than 1000?", t(4));
    let c = b.handle_turn(&mut sess, "Just the count", t(5));
    assert!(c.answer.text.contains('8'), "{}", c.answer.text);
    b.handle_turn(&mut sess, "Who has a salary greater than 1000?", t(6));
    let all = b.handle_turn(&mut sess, "Show all", t(7));
    assert_eq!(all.answer.payload.unwrap().rows.len(), 8);
}

#[test]
fn fallback_answers_carry_a_warning() {
    let table = officials();
    let e = engine(Strategy::Generic);
    let ok = Sql("SELECT COUNT(*) FROM officials");
    let b = bot(&e, &table, &ok);
    let mut sess = Session::new("s", "en");
    let a = b.handle_turn(&mut sess, "qwzx flurble", t(0));
    assert_eq!(a.answer.kind, AnswerKind::FallbackAnswer);
    assert_eq!(a.answer.text, "⚠ approximate: 8");
    assert!(a.answer.fallback_warning);
    assert_eq!(a.record.outcome, Outcome::Fallback);

    let bad = Sql("DELETE FROM officials");
    let b = bot(&e, &table, &bad);
    let a = b.handle_turn(&mut sess, "qwzx flurble", t(1));
    assert_eq!(a.answer.kind, AnswerKind::Error);
    assert!(a.answer.text.contains("invalid query"));
    assert_eq!(a.record.outcome, Outcome::Miss);

    let b = bot(&e, &table, &StubFallback);
    let a = b.handle_turn(&mut sess, "qwzx flurble", t(2));
    assert_eq!(a.answer.kind, AnswerKind::Error);
    assert!(a.answer.suggested_replies.iter().any(|r| r == HELP_QUESTION));
}

#[test]
fn meta_questions() {
    let table = officials();
    let e = engine(Strategy::Expanded);
    let b = bot(&e, &table, &StubFallback);
    let mut sess = Session::new("s", "en");
    let a = b.handle_turn(&mut sess, "Where does the data come from?", t(0));
    assert!(a.answer.text.contains("officials.csv"));
    let a = b.handle_turn(&mut sess, "How old is the data?", t(1));
    assert!(!a.answer.interpretation_notes.is_empty());
    let a = b.handle_turn(&mut sess, HELP_QUESTION, t(2));
    assert_eq!(a.answer.kind, AnswerKind::Help);
    assert!(a.answer.text.contains("the data itself"), "{}", a.answer.text);
    assert!(!a.answer.suggested_replies.is_empty());
}

#[test]
fn group_question_asks_which_member() {
    let table = simple_csv(
        "name,gross_salary,net_salary,department\n\
         Ana,100,80,Sales\nBo,200,150,Sales\nCy,300,210,Ops\nDi,50,40,Ops\n",
        SourceMeta::default(),
    );
    let schema = build_default_schema(&table, 10, "en")
        .apply(&Enrichment::AddGroup {
            group_id: "salary".into(),
            members: vec!["gross_salary".into(), "net_salary".into()],
            default_member: None,
        })
        .unwrap();
    for s in [Strategy::Expanded, Strategy::Generic] {
        let e = Engine::new(generate(&schema, &catalog(), s, MatcherConfig::default()));
        let b = bot(&e, &table, &StubFallback);
        let mut sess = Session::new("g", "en");
        let q = b.handle_turn(&mut sess, "What is the average salary?", t(0));
        assert_eq!(q.answer.kind, AnswerKind::Clarification, "{s:?} {}", q.answer.text);
        assert_eq!(sess.state.name(), "awaiting_group_choice");
        assert_eq!(q.answer.suggested_replies.len(), 2);
        let a = b.handle_turn(&mut sess, "net salary", t(1));
        assert_eq!(a.answer.kind, AnswerKind::Direct, "{s:?} {}", a.answer.text);
        assert!(a.answer.text.ends_with("120"), "{}", a.answer.text);
    }
}

#[test]
fn expired_sessions_restart() {
    let table = officials();
    let e = engine(Strategy::Expanded);
    let b = bot(&e, &table, &StubFallback);
    let mut sess = Session::new("s", "en");
    b.handle_turn(&mut sess, "Give me the rows with salary >", t(0));
    let later = t(0) + chrono::Duration::seconds(31 * 60);
    let a = b.handle_turn(&mut sess, "120000", later);
    assert_ne!(a.answer.kind, AnswerKind::Direct);
}

#[test]
fn ratings_update_the_named_turn() {
    let table = officials();
    let e = engine(Strategy::Expanded);
    let b = bot(&e, &table, &StubFallback);
    let mut sess = Session::new("s", "en");
    let mut log = InteractionLog::default();
    log.append(b.handle_turn(&mut sess, "How many women are there?", t(0)).record);
    log.append(b.handle_turn(&mut sess, "qwzx flurble", t(1)).record);
    log.record_rating("s", 0, Rating::Down, t(2)).unwrap();
    let r = log.record_rating("s", 0, Rating::Up, t(3)).unwrap();
    assert_eq!(r.user_rating, Some(Rating::Up));
    assert_eq!(r.rating_history.len(), 2);
    assert_eq!(
        log.record_rating("s", 7, Rating::Up, t(4)),
        Err(LogError::UnknownTurn {
            session_id: "s".into(),
            turn_index: 7
        })
    );
    assert_eq!(log.for_session("s").count(), 2);
    let json = serde_json::to_string(&log).unwrap();
    assert_eq!(serde_json::from_str::<InteractionLog>(&json).unwrap(), log);
}
