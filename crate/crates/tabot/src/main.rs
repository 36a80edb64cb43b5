use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use chrono::NaiveDateTime;
use clap::{Parser, Subcommand, ValueEnum};
use tabot::config::Config;
use tabot::csv_source::CsvOptions;
use tabot::eval::{evaluate, report, training_questions};
use tabot::fallback::HttpFallback;
use tabot::registry::{Registry, RegistryError};
use tabot::store::{Store, StrategyChoice};
use tabot_core::dialogue::{FallbackClient, StubFallback};
use tabot_core::ingest::{IngestOptions, SourceMeta};
use tabot_core::schema::Enrichment;

#[derive(Parser)]
#[command(name = "tabot", version, about = "Generate and run chatbots over CSV data")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TABOT_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Expanded,
    Generic,
}

#[derive(Subcommand)]
enum Command {
    /// Store a CSV file as a new dataset and print its default schema.
    Ingest {
        csv: PathBuf,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        #[arg(long)]
        no_header: bool,
        /// Import time recorded in the schema, `YYYY-MM-DDTHH:MM:SS`.
        #[arg(long)]
        imported_at: Option<NaiveDateTime>,
    },
    /// Apply a JSON array of schema edits.
    Enrich { dataset: String, commands: PathBuf },
    /// Build the dataset's bot from its latest schema.
    Generate {
        dataset: String,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Chat with a dataset's bot on the terminal.
    Repl { dataset: String },
    /// Match questions (one per line, default: the training sentences) and
    /// print one JSON line per question.
    Eval {
        dataset: String,
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Clock used for the turns, `YYYY-MM-DDTHH:MM:SS`.
        #[arg(long)]
        at: Option<NaiveDateTime>,
    },
}

fn now() -> NaiveDateTime {
    chrono::Local::now().naive_local()
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn explain(e: RegistryError) -> anyhow::Error {
    match e {
        RegistryError::Rejected(diags) => {
            let lines: Vec<String> = diags
                .iter()
                .map(|d| format!("  command {}: {} ({})", d.index, d.message, d.code))
                .collect();
            anyhow::anyhow!("schema edits rejected:\n{}", lines.join("\n"))
        }
        e => e.into(),
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(d) = cli.data_dir {
        config.data_dir = d;
    }
    let fallback: Arc<dyn FallbackClient + Send + Sync> = match &config.fallback_url {
        Some(url) => Arc::new(HttpFallback::new(url, Duration::from_secs(config.fallback_timeout_secs))?),
        None => Arc::new(StubFallback),
    };
    let store = Store::open(&config.data_dir)?;
    let port = config.port;
    let registry = Arc::new(Registry::new(store, config, fallback));

    match cli.command {
        Command::Ingest {
            csv,
            delimiter,
            no_header,
            imported_at,
        } => {
            let bytes = std::fs::read(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let opts = CsvOptions {
                delimiter,
                has_header: !no_header,
                ingest: IngestOptions {
                    categorical_threshold: registry.config().categorical_threshold,
                    ..Default::default()
                },
            };
            let source = SourceMeta {
                origin: csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                imported_at: Some(imported_at.unwrap_or_else(now)),
            };
            print_json(&registry.upload(&bytes, source, opts).map_err(explain)?)
        }
        Command::Enrich { dataset, commands } => {
            let text = std::fs::read_to_string(&commands)?;
            let edits: Vec<Enrichment> = serde_json::from_str(&text).context("parsing schema edits")?;
            print_json(&registry.patch(&dataset, &edits).map_err(explain)?)
        }
        Command::Generate { dataset, strategy } => {
            let choice = match strategy {
                StrategyArg::Auto => StrategyChoice::Auto,
                StrategyArg::Expanded => StrategyChoice::Expanded,
                StrategyArg::Generic => StrategyChoice::Generic,
            };
            print_json(&registry.generate(&dataset, choice).map_err(explain)?)
        }
        Command::Serve { port: p } => {
            let port = p.unwrap_or(port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                eprintln!("listening on port {port}");
                axum::serve(listener, tabot::service::router(registry)).await?;
                anyhow::Ok(())
            })
        }
        Command::Repl { dataset } => {
            let session = format!("repl-{}", uuid::Uuid::new_v4().simple());
            let stdin = std::io::stdin();
            let mut out = std::io::stdout();
            write!(out, "> ")?;
            out.flush()?;
            for line in stdin.lock().lines() {
                let line = line?;
                if line.trim().is_empty() {
                    write!(out, "> ")?;
                    out.flush()?;
                    continue;
                }
                let reply = registry.chat(&dataset, Some(&session), &line, now()).map_err(explain)?;
                writeln!(out, "{}", reply.answer.text)?;
                for note in &reply.answer.interpretation_notes {
                    writeln!(out, "  ({note})")?;
                }
                for (i, s) in reply.answer.suggested_replies.iter().enumerate() {
                    writeln!(out, "  {}. {s}", i + 1)?;
                }
                write!(out, "> ")?;
                out.flush()?;
            }
            Ok(())
        }
        Command::Eval { dataset, questions, at } => {
            let ds = registry.dataset(&dataset).map_err(explain)?;
            let Some(active) = ds.active() else {
                bail!("dataset `{dataset}` has no bot yet; run `tabot generate {dataset}`");
            };
            let qs = match questions {
                Some(p) => std::fs::read_to_string(p)?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(str::to_string)
                    .collect(),
                None => training_questions(&active.engine),
            };
            let lines = evaluate(&active.engine, &ds.table, &qs, at.unwrap_or_else(now));
            emit(&report(&lines))?;
            Ok(())
        }
    }
}
