//! RFC 4180 reading into a typed [`Table`].

use std::io::Read;

use serde::{Deserialize, Serialize};
use tabot_core::ingest::{IngestError, IngestOptions, SourceMeta, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub delimiter: char,
    pub has_header: bool,
    #[serde(flatten)]
    pub ingest: IngestOptions,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            ingest: IngestOptions::default(),
        }
    }
}

/// Reads every record, then types the columns. Without a header the
/// columns are named `column_1`, `column_2`, ...
pub fn load_csv<R: Read>(source: R, meta: SourceMeta, opts: &CsvOptions) -> Result<Table, IngestError> {
    let delimiter = u8::try_from(opts.delimiter).map_err(|_| IngestError::MalformedCsv {
        row: 0,
        reason: format!("delimiter `{}` is not a single byte", opts.delimiter),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::MalformedCsv {
            row: i,
            reason: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<String>>());
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let header = if opts.has_header {
        let mut h = rows.remove(0);
        if let Some(first) = h.first_mut() {
            if let Some(stripped) = first.strip_prefix('\u{feff}') {
                *first = stripped.to_string();
            }
        }
        h
    } else {
        (1..=rows[0].len()).map(|i| format!("column_{i}")).collect()
    };
    Table::from_records(header, rows, meta, &opts.ingest)
}

pub fn load_csv_str(text: &str, meta: SourceMeta, opts: &CsvOptions) -> Result<Table, IngestError> {
    load_csv(text.as_bytes(), meta, opts)
}
