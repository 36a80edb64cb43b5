//! In-memory tables and per-column statistics.
//!
//! Raw records are parsed by the caller (the std crate reads CSV); this module
//! turns them into typed, immutable columns and derives the diversity and
//! categorical status of every field.

mod infer;
mod value;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

pub use infer::{
    infer_column, infer_field_type, is_missing, parse_bool, parse_date, parse_datetime, parse_float,
    parse_int, vote_date_order, DateOrder, Inference,
};
pub use value::{FieldType, Value, ValueKey};

use crate::text::fold;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("malformed CSV at row {row}: {reason}")]
    MalformedCsv { row: usize, reason: String },
    #[error("duplicate column name `{0}`")]
    DuplicateColumnName(String),
    #[error("empty input")]
    EmptyInput,
    #[error("unknown field `{0}`")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Maximum distinct-value count for a field to be considered categorical.
    pub categorical_threshold: usize,
    /// Share of non-missing cells that must parse as a type for it to win.
    pub type_consensus_ratio: f64,
    /// Case-insensitive cell contents treated as missing.
    pub missing_markers: Vec<String>,
    /// Accept `1.234,5` style numbers.
    pub decimal_comma: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            categorical_threshold: 10,
            type_consensus_ratio: 0.97,
            missing_markers: ["", "NA", "N/A", "null"].iter().map(|s| s.to_string()).collect(),
            decimal_comma: false,
        }
    }
}

/// Where a table came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceMeta {
    pub origin: String,
    pub imported_at: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnData {
    pub name: String,
    pub field_type: FieldType,
    pub date_order: Option<DateOrder>,
    pub values: Vec<Value>,
    /// Original text of cells that did not parse as the column type and were
    /// stored as missing.
    pub dirty: BTreeMap<usize, String>,
}

impl ColumnData {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_missing()).count()
    }
}

/// Immutable typed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<ColumnData>,
    row_count: usize,
    source: SourceMeta,
}

impl Table {
    /// Builds a table from a header and string records, inferring column types.
    pub fn from_records(
        header: Vec<String>,
        records: Vec<Vec<String>>,
        source: SourceMeta,
        opts: &IngestOptions,
    ) -> Result<Self, IngestError> {
        if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty() && records.is_empty()) {
            return Err(IngestError::EmptyInput);
        }
        let mut seen = BTreeSet::new();
        for h in &header {
            if !seen.insert(fold(h)) {
                return Err(IngestError::DuplicateColumnName(h.trim().to_string()));
            }
        }
        for (i, r) in records.iter().enumerate() {
            if r.len() != header.len() {
                return Err(IngestError::MalformedCsv {
                    row: i + 1,
                    reason: alloc::format!(
                        "arity mismatch: expected {} cells, found {}",
                        header.len(),
                        r.len()
                    ),
                });
            }
        }
        let columns = header
            .iter()
            .enumerate()
            .map(|(ci, name)| {
                let cells: Vec<&str> = records.iter().map(|r| r[ci].as_str()).collect();
                build_column(name.trim().to_string(), &cells, opts)
            })
            .collect();
        Ok(Self {
            columns,
            row_count: records.len(),
            source,
        })
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn source(&self) -> &SourceMeta {
        &self.source
    }

    /// Case- and accent-insensitive column lookup.
    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        let key = fold(name);
        self.columns.iter().find(|c| fold(&c.name) == key)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = fold(name);
        self.columns.iter().position(|c| fold(&c.name) == key)
    }
}

fn build_column(name: String, cells: &[&str], opts: &IngestOptions) -> ColumnData {
    let inf = infer_column(cells, opts);
    let mut dirty = BTreeMap::new();
    let values = cells
        .iter()
        .enumerate()
        .map(|(i, c)| match infer::parse_cell(c, &inf, opts) {
            Some(v) => v,
            None => {
                dirty.insert(i, c.to_string());
                Value::Missing
            }
        })
        .collect();
    ColumnData {
        name,
        field_type: inf.field_type,
        date_order: inf.date_order,
        values,
        dirty,
    }
}

/// Diversity and categorical status of one field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldStats {
    pub inferred_type: FieldType,
    pub diversity: usize,
    pub missing_count: usize,
    pub is_categorical: bool,
    /// Distinct values, populated only for categorical fields.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub value_lexicon: Vec<String>,
}

/// Computes [`FieldStats`] for `field`.
///
/// A field is categorical when it has between 1 and `threshold` distinct
/// values, its type is Text, Boolean or Integer, and (except for Boolean) at
/// least one value repeats. A column whose every value is unique behaves as a
/// row identifier rather than a category.
pub fn compute_field_stats(
    table: &Table,
    field: &str,
    threshold: usize,
) -> Result<FieldStats, IngestError> {
    let col = table
        .column(field)
        .ok_or_else(|| IngestError::UnknownField(field.to_string()))?;
    let mut distinct: BTreeMap<ValueKey, String> = BTreeMap::new();
    for v in &col.values {
        if let Some(k) = v.key() {
            distinct.entry(k).or_insert_with(|| v.to_string());
        }
    }
    let missing_count = col.missing_count();
    let present = col.values.len() - missing_count;
    let diversity = distinct.len();
    let eligible_type = matches!(
        col.field_type,
        FieldType::Text | FieldType::Boolean | FieldType::Integer
    );
    let repeats = diversity < present || col.field_type == FieldType::Boolean;
    let is_categorical = eligible_type && diversity >= 1 && diversity <= threshold && repeats;
    Ok(FieldStats {
        inferred_type: col.field_type,
        diversity,
        missing_count,
        is_categorical,
        value_lexicon: if is_categorical {
            distinct.into_values().collect()
        } else {
            Vec::new()
        },
    })
}
