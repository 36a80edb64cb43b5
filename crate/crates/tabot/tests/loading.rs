use chrono::NaiveDate;
use tabot::config::Config;
use tabot::csv_source::{load_csv_str, CsvOptions};
use tabot::store::{BundleMeta, LogLine, Store, StoreError, StrategyChoice};
use tabot_core::dialogue::{AnswerKind, InteractionRecord, Outcome, Rating};
use tabot_core::fixtures::{officials_enriched_schema, OFFICIALS_CSV};
use tabot_core::generator::{generate, MatcherConfig, Strategy};
use tabot_core::ingest::{FieldType, IngestError, SourceMeta, Value};
use tabot_core::patterns::catalog;
use tabot_core::schema::build_default_schema;

fn meta() -> SourceMeta {
    SourceMeta {
        origin: "t.csv".into(),
        imported_at: None,
    }
}

#[test]
fn f1_loads_eight_rows() {
    let t = load_csv_str(OFFICIALS_CSV, meta(), &CsvOptions::default()).unwrap();
    assert_eq!(t.row_count(), 8);
    assert_eq!(t.columns().len(), 6);
    assert_eq!(t.column("salary").unwrap().field_type, FieldType::Integer);
}

#[test]
fn header_only_is_an_empty_table() {
    let t = load_csv_str("a,b\n", meta(), &CsvOptions::default()).unwrap();
    assert_eq!(t.row_count(), 0);
    assert_eq!(t.columns().len(), 2);
}

#[test]
fn ragged_rows_and_empty_input_are_rejected() {
    let five = "a,b,c,d,e,f\n1,2,3,4,5,6\n1,2,3,4,5\n";
    match load_csv_str(five, meta(), &CsvOptions::default()) {
        Err(IngestError::MalformedCsv { row, reason }) => {
            assert_eq!(row, 2);
            assert!(reason.contains("arity mismatch"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(load_csv_str("", meta(), &CsvOptions::default()), Err(IngestError::EmptyInput));
    assert!(matches!(
        load_csv_str("a,A \n1,2\n", meta(), &CsvOptions::default()),
        Err(IngestError::DuplicateColumnName(_))
    ));
}

#[test]
fn quoted_cells_keep_commas_and_newlines() {
    let text = "\u{feff}name,note\n\"Colau, Ada\",\"two\nlines\"\n\"say \"\"hi\"\"\",x\n";
    let t = load_csv_str(text, meta(), &CsvOptions::default()).unwrap();
    let name = t.column("name").unwrap();
    assert_eq!(name.values[0], Value::Text("Colau, Ada".into()));
    assert_eq!(name.values[1], Value::Text("say \"hi\"".into()));
    assert_eq!(t.column("note").unwrap().values[0], Value::Text("two\nlines".into()));
}

#[test]
fn delimiter_and_headerless_options() {
    let opts = CsvOptions {
        delimiter: ';',
        has_header: false,
        ..CsvOptions::default()
    };
    let t = load_csv_str("1;x\n2;y\n", meta(), &opts).unwrap();
    assert_eq!(t.row_count(), 2);
    assert_eq!(t.columns()[1].name, "column_2");
}

#[test]
fn config_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tabot.toml");
    std::fs::write(&path, "port = 9000\npage_size = 5\nfallback_url = \"http://localhost:1/sql\"\n").unwrap();
    let mut c: Config = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(c.port, 9000);
    assert_eq!(c.accept_threshold, MatcherConfig::default().accept_threshold);
    c.apply_env(|k| match k {
        "TABOT_PORT" => Some("7000".into()),
        "TABOT_FALLBACK_URL" => Some(String::new()),
        "TABOT_W_LEX" => Some("0.7".into()),
        _ => None,
    })
    .unwrap();
    assert_eq!(c.port, 7000);
    assert_eq!(c.page_size, 5);
    assert_eq!(c.fallback_url, None);
    assert_eq!(c.matcher().w_lex, 0.7);
    assert!(c.apply_env(|k| (k == "TABOT_PORT").then(|| "x".into())).is_err());
    let loaded = Config::load(Some(&path)).unwrap();
    assert_eq!(loaded.page_size, 5);
}

fn record(turn: usize) -> InteractionRecord {
    InteractionRecord {
        timestamp: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(9, 0, 0).unwrap(),
        session_id: "s".into(),
        turn_index: turn,
        utterance: "How many rows are there?".into(),
        outcome: Outcome::Hit {
            intent: "row_count".into(),
            confidence: 1.0,
        },
        answer_kind: AnswerKind::Direct,
        user_rating: None,
        rating_history: vec![],
    }
}

#[test]
fn store_round_trips_everything() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let (id, table) = store
        .create(OFFICIALS_CSV.as_bytes(), meta(), CsvOptions::default())
        .unwrap();
    assert_eq!(store.list().unwrap(), [id.clone()]);
    assert_eq!(store.load_table(&id).unwrap(), table);

    let s1 = build_default_schema(&table, 10, "en");
    assert_eq!(store.push_schema(&id, &s1).unwrap(), 1);
    let s2 = officials_enriched_schema();
    assert_eq!(store.push_schema(&id, &s2).unwrap(), 2);
    assert_eq!(store.schema_versions(&id).unwrap(), [1, 2]);
    assert_eq!(store.latest_schema(&id).unwrap(), (2, s2.clone()));
    assert_eq!(store.schema(&id, 1).unwrap(), s1);

    assert!(matches!(store.load_bundle(&id), Err(StoreError::NoBundle(_))));
    let bundle = generate(&s2, &catalog(), Strategy::Generic, MatcherConfig::default());
    let bm = BundleMeta {
        schema_version: 2,
        strategy: Strategy::Generic,
        requested: StrategyChoice::Generic,
        intent_count: bundle.intents.len(),
        entity_count: bundle.entities.len(),
        generator_version: bundle.generator_version.clone(),
    };
    store.save_bundle(&id, &bundle, &bm).unwrap();
    assert_eq!(store.load_bundle(&id).unwrap(), (bundle, bm));

    let t = record(0).timestamp;
    store.append_log(&id, &LogLine::Turn(record(0))).unwrap();
    store.append_log(&id, &LogLine::Turn(record(1))).unwrap();
    for rating in [Rating::Down, Rating::Up] {
        store
            .append_log(
                &id,
                &LogLine::Rating {
                    session_id: "s".into(),
                    turn_index: 1,
                    rating,
                    timestamp: t,
                },
            )
            .unwrap();
    }
    let log = store.read_log(&id).unwrap();
    assert_eq!(log.records.len(), 2);
    assert_eq!(log.records[1].user_rating, Some(Rating::Up));
    assert_eq!(log.records[1].rating_history.len(), 2);

    assert!(matches!(store.meta("../x"), Err(StoreError::UnknownDataset(_))));
}

#[test]
fn log_lines_are_single_json_documents() {
    let line = serde_json::to_string(&LogLine::Turn(record(3))).unwrap();
    assert!(!line.contains('\n'));
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["entry"], "turn");
    assert_eq!(v["outcome"], "hit");
    assert_eq!(serde_json::from_str::<LogLine>(&line).unwrap(), LogLine::Turn(record(3)));
}

mod robustness {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn arbitrary_csv_never_panics(s in "[a-c0-9,\"\\n ;.-]{0,80}") {
            if let Ok(t) = load_csv_str(&s, meta(), &CsvOptions::default()) {
                for c in t.columns() {
                    prop_assert_eq!(c.values.len(), t.row_count());
                }
            }
        }
    }
}
