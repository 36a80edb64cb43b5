//! Cell parsers and the type-inference ladder.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::value::{FieldType, Value};
use super::IngestOptions;
use crate::text::fold;

/// Order of the day and month components in slash-separated dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateOrder {
    DayFirst,
    MonthFirst,
}

/// Result of running the ladder over one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inference {
    pub field_type: FieldType,
    pub date_order: Option<DateOrder>,
    /// Column holds only `0`/`1`, which is read as a boolean.
    pub binary_digits: bool,
}

pub fn is_missing(cell: &str, opts: &IngestOptions) -> bool {
    let t = cell.trim();
    opts.missing_markers.iter().any(|m| m.trim().eq_ignore_ascii_case(t))
}

pub fn parse_bool(cell: &str) -> Option<bool> {
    match fold(cell).as_str() {
        "true" | "yes" | "si" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// Removes digit-group separators, returning the plain numeric text with `.`
/// as the decimal point. Groups must be exactly three digits wide.
fn strip_grouping(cell: &str, decimal_comma: bool) -> Option<String> {
    let t = cell.trim();
    let (group, decimal) = if decimal_comma { ('.', ',') } else { (',', '.') };
    let (int_part, frac_part) = match t.find(decimal) {
        Some(i) => (&t[..i], Some(&t[i + 1..])),
        None => (t, None),
    };
    let mut out = String::with_capacity(t.len());
    if int_part.contains(group) {
        let (sign, digits) = match int_part.strip_prefix(['-', '+']) {
            Some(rest) => (&int_part[..1], rest),
            None => ("", int_part),
        };
        let mut parts = digits.split(group);
        let first = parts.next()?;
        if first.is_empty() || first.len() > 3 || !first.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        out.push_str(sign);
        out.push_str(first);
        for p in parts {
            if p.len() != 3 || !p.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            out.push_str(p);
        }
    } else {
        out.push_str(int_part);
    }
    if let Some(f) = frac_part {
        if f.contains(group) || f.contains(decimal) {
            return None;
        }
        out.push('.');
        out.push_str(f);
    }
    Some(out)
}

pub fn parse_int(cell: &str, decimal_comma: bool) -> Option<i64> {
    let s = strip_grouping(cell, decimal_comma)?;
    let digits = s.strip_prefix(['-', '+']).unwrap_or(&s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub fn parse_float(cell: &str, decimal_comma: bool) -> Option<f64> {
    let s = strip_grouping(cell, decimal_comma)?;
    let body = s.strip_prefix(['-', '+']).unwrap_or(&s);
    // Reject the words "inf"/"nan" and other non-numeric spellings Rust accepts.
    if !body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        || !body
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+'))
    {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn slash_components(cell: &str) -> Option<(u32, u32, i32)> {
    let mut it = cell.trim().split('/');
    let a = it.next()?;
    let b = it.next()?;
    let c = it.next()?;
    if it.next().is_some() || c.len() != 4 || a.is_empty() || a.len() > 2 || b.is_empty() || b.len() > 2 {
        return None;
    }
    Some((a.parse().ok()?, b.parse().ok()?, c.parse().ok()?))
}

pub fn parse_date(cell: &str, order: Option<DateOrder>) -> Option<NaiveDate> {
    let t = cell.trim();
    if t.len() == 10 && t.as_bytes().get(4) == Some(&b'-') {
        return NaiveDate::parse_from_str(t, "%Y-%m-%d").ok();
    }
    let (a, b, y) = slash_components(t)?;
    match order? {
        DateOrder::DayFirst => NaiveDate::from_ymd_opt(y, b, a),
        DateOrder::MonthFirst => NaiveDate::from_ymd_opt(y, a, b),
    }
}

pub fn parse_datetime(cell: &str) -> Option<NaiveDateTime> {
    let t = cell.trim().trim_end_matches('Z');
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(t, f).ok())
}

/// Votes on day/month order across all slash dates of a column. Only cells
/// with a component above 12 are informative; a tie yields `None`.
pub fn vote_date_order<'a>(cells: impl Iterator<Item = &'a str>) -> Option<DateOrder> {
    let (mut day_first, mut month_first) = (0usize, 0usize);
    for c in cells {
        if let Some((a, b, _)) = slash_components(c) {
            if a > 12 && b <= 12 {
                day_first += 1;
            } else if b > 12 && a <= 12 {
                month_first += 1;
            }
        }
    }
    match day_first.cmp(&month_first) {
        core::cmp::Ordering::Greater => Some(DateOrder::DayFirst),
        core::cmp::Ordering::Less => Some(DateOrder::MonthFirst),
        core::cmp::Ordering::Equal => None,
    }
}

/// Runs the precedence ladder Boolean → Integer → Float → Date → Datetime →
/// Text, returning the first type accepted by at least
/// `opts.type_consensus_ratio` of the non-missing cells.
pub fn infer_column(cells: &[&str], opts: &IngestOptions) -> Inference {
    let present: Vec<&str> = cells
        .iter()
        .copied()
        .filter(|c| !is_missing(c, opts))
        .collect();
    let mut inf = Inference {
        field_type: FieldType::Empty,
        date_order: None,
        binary_digits: false,
    };
    if present.is_empty() {
        return inf;
    }
    let n = present.len() as f64;
    let accepts = |count: usize| count as f64 / n >= opts.type_consensus_ratio;
    let count = |f: &dyn Fn(&str) -> bool| present.iter().filter(|c| f(c)).count();

    let distinct: BTreeSet<&str> = present.iter().map(|c| c.trim()).collect();
    if distinct.len() == 2 && distinct.contains("0") && distinct.contains("1") {
        inf.field_type = FieldType::Boolean;
        inf.binary_digits = true;
        return inf;
    }
    if accepts(count(&|c| parse_bool(c).is_some())) {
        inf.field_type = FieldType::Boolean;
        return inf;
    }
    let dc = opts.decimal_comma;
    if accepts(count(&|c| parse_int(c, dc).is_some())) {
        inf.field_type = FieldType::Integer;
        return inf;
    }
    if accepts(count(&|c| parse_float(c, dc).is_some())) {
        inf.field_type = FieldType::Float;
        return inf;
    }
    let order = vote_date_order(present.iter().copied());
    if accepts(count(&|c| parse_date(c, order).is_some())) {
        inf.field_type = FieldType::Date;
        inf.date_order = order;
        return inf;
    }
    if accepts(count(&|c| parse_datetime(c).is_some())) {
        inf.field_type = FieldType::Datetime;
        return inf;
    }
    inf.field_type = FieldType::Text;
    inf
}

/// Type of a raw column under the default ladder.
pub fn infer_field_type(cells: &[&str], opts: &IngestOptions) -> FieldType {
    infer_column(cells, opts).field_type
}

/// Parses a single cell under an already inferred column type. Cells that do
/// not fit come back as `None` and are stored as missing.
pub fn parse_cell(cell: &str, inf: &Inference, opts: &IngestOptions) -> Option<Value> {
    if is_missing(cell, opts) {
        return Some(Value::Missing);
    }
    let dc = opts.decimal_comma;
    match inf.field_type {
        FieldType::Empty => Some(Value::Missing),
        FieldType::Boolean if inf.binary_digits => match cell.trim() {
            "1" => Some(Value::Bool(true)),
            "0" => Some(Value::Bool(false)),
            _ => None,
        },
        FieldType::Boolean => parse_bool(cell).map(Value::Bool),
        FieldType::Integer => parse_int(cell, dc).map(Value::Int),
        FieldType::Float => parse_float(cell, dc).map(Value::Float),
        FieldType::Date => parse_date(cell, inf.date_order).map(Value::Date),
        FieldType::Datetime => parse_datetime(cell).map(Value::Datetime),
        FieldType::Text => Some(Value::Text(String::from(cell.trim()))),
    }
}
