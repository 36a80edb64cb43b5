//! Brute-force evaluator over the raw CSV strings.
//!
//! Nothing here calls into the query engine. Cells are parsed from text,
//! filters are linear scans and every aggregate is recomputed from scratch.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use tabot_core::ingest::Value;
use tabot_core::query::{AggFn, Direction, FilterOp, GroupPost, OrderKey, Projection, QueryPlan, ResultSet, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
    Date,
}

#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub kinds: Vec<Kind>,
    pub rows: Vec<Vec<String>>,
    /// (name, parts, separator)
    pub composites: Vec<(String, Vec<String>, String)>,
}

impl RawTable {
    pub fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn composite(&self, name: &str) -> Option<&(String, Vec<String>, String)> {
        self.composites.iter().find(|c| c.0 == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Int(i64),
    Float(f64),
    Text(String),
    Date(NaiveDate),
}

impl Cell {
    fn show(&self) -> String {
        match self {
            Cell::Missing => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => f.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Date(d) => d.format("%Y-%m-%d").to_string(),
        }
    }

    fn num(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Int(i64),
    Float(u64),
    Date(NaiveDate),
    Text(String),
}

fn lower(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn key(c: &Cell) -> Option<Key> {
    Some(match c {
        Cell::Missing => return None,
        Cell::Int(i) => Key::Int(*i),
        Cell::Float(f) => Key::Float(if *f == 0.0 { 0 } else { f.to_bits() }),
        Cell::Date(d) => Key::Date(*d),
        Cell::Text(s) => Key::Text(lower(s)),
    })
}

/// Missing sorts after everything.
fn total(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Missing, Cell::Missing) => Ordering::Equal,
        (Cell::Missing, _) => Ordering::Greater,
        (_, Cell::Missing) => Ordering::Less,
        (Cell::Int(x), Cell::Int(y)) => x.cmp(y),
        (Cell::Text(x), Cell::Text(y)) => lower(x).cmp(&lower(y)),
        (Cell::Date(x), Cell::Date(y)) => x.cmp(y),
        _ => a.num().unwrap().partial_cmp(&b.num().unwrap()).unwrap(),
    }
}

fn directed(a: &Cell, b: &Cell, dir: Direction) -> Ordering {
    match (a, b) {
        (Cell::Missing, _) | (_, Cell::Missing) => total(a, b),
        _ if dir == Direction::Desc => total(b, a),
        _ => total(a, b),
    }
}

pub fn parse(raw: &str, kind: Kind) -> Cell {
    let raw = raw.trim();
    if ["", "NA", "N/A", "null"].contains(&raw) {
        return Cell::Missing;
    }
    match kind {
        Kind::Int => Cell::Int(raw.parse().unwrap()),
        Kind::Float => Cell::Float(raw.parse().unwrap()),
        Kind::Date => Cell::Date(NaiveDate::parse_from_str(raw, "%Y-%m-%d").unwrap()),
        Kind::Text => Cell::Text(raw.to_string()),
    }
}

fn literal(v: &Value) -> Cell {
    match v {
        Value::Missing => Cell::Missing,
        Value::Int(i) => Cell::Int(*i),
        Value::Float(f) => Cell::Float(*f),
        Value::Text(s) => Cell::Text(s.clone()),
        Value::Date(d) => Cell::Date(*d),
        other => panic!("oracle has no reading for {other:?}"),
    }
}

fn cell(t: &RawTable, field: &str, row: usize) -> Cell {
    if let Some(i) = t.col(field) {
        return parse(&t.rows[row][i], t.kinds[i]);
    }
    let (_, parts, sep) = t.composite(field).unwrap_or_else(|| panic!("no field {field}"));
    let mut shown = Vec::new();
    for p in parts {
        match cell(t, p, row) {
            Cell::Missing => return Cell::Missing,
            c => shown.push(c.show()),
        }
    }
    Cell::Text(shown.join(sep))
}

fn same_value(c: &Cell, lit: &Cell) -> Option<Ordering> {
    match (c, lit) {
        (Cell::Missing, _) | (_, Cell::Missing) => None,
        (Cell::Text(a), Cell::Text(b)) => Some(lower(a).cmp(&lower(b))),
        (Cell::Text(_), _) | (_, Cell::Text(_)) => None,
        (Cell::Date(a), Cell::Date(b)) => Some(a.cmp(b)),
        (Cell::Date(_), _) | (_, Cell::Date(_)) => None,
        _ => c.num().unwrap().partial_cmp(&lit.num().unwrap()),
    }
}

fn names(t: &RawTable, field: &str, row: usize, needle: &str) -> bool {
    let needle = lower(needle);
    let Some((_, parts, sep)) = t.composite(field) else {
        return matches!(cell(t, field, row), Cell::Text(s) if lower(&s) == needle);
    };
    let joiner = if sep.is_empty() { " " } else { sep.as_str() };
    let shown: Vec<Option<String>> = parts
        .iter()
        .map(|p| match cell(t, p, row) {
            Cell::Missing => None,
            c => Some(c.show()),
        })
        .collect();
    for start in 0..shown.len() {
        for end in start + 1..=shown.len() {
            let run = &shown[start..end];
            if run.iter().any(Option::is_none) {
                break;
            }
            let joined: Vec<&str> = run.iter().map(|s| s.as_deref().unwrap()).collect();
            if lower(&joined.join(joiner)) == needle {
                return true;
            }
        }
    }
    false
}

fn keep(t: &RawTable, row: usize, field: &str, op: FilterOp, values: &[Value]) -> bool {
    if op == FilterOp::NameMatch {
        return names(t, field, row, &literal(&values[0]).show());
    }
    let c = cell(t, field, row);
    if c == Cell::Missing {
        return false;
    }
    let lit = literal(&values[0]);
    let o = same_value(&c, &lit);
    let text = lower(&c.show());
    let pat = lower(&lit.show());
    match op {
        FilterOp::Eq => o == Some(Ordering::Equal),
        FilterOp::Ne => o.is_some() && o != Some(Ordering::Equal),
        FilterOp::Lt | FilterOp::Before => o == Some(Ordering::Less),
        FilterOp::Le => o.is_some() && o != Some(Ordering::Greater),
        FilterOp::Gt | FilterOp::After => o == Some(Ordering::Greater),
        FilterOp::Ge => o.is_some() && o != Some(Ordering::Less),
        FilterOp::Between => {
            let a = lit;
            let b = literal(&values[1]);
            let (lo, hi) = if total(&a, &b) == Ordering::Greater { (b, a) } else { (a, b) };
            matches!(same_value(&c, &lo), Some(Ordering::Greater | Ordering::Equal))
                && matches!(same_value(&c, &hi), Some(Ordering::Less | Ordering::Equal))
        }
        FilterOp::Contains => text.contains(&pat),
        FilterOp::StartsWith => text.starts_with(&pat),
        FilterOp::EndsWith => text.ends_with(&pat),
        FilterOp::NameMatch => unreachable!(),
    }
}

fn label(f: AggFn) -> &'static str {
    match f {
        AggFn::Count => "count",
        AggFn::Sum => "total",
        AggFn::Avg => "average",
        AggFn::Min => "minimum",
        AggFn::Max => "maximum",
    }
}

fn fold_values(func: AggFn, cells: &[Cell], rows: usize) -> Cell {
    if func == AggFn::Count {
        return Cell::Int(rows as i64);
    }
    let present: Vec<&Cell> = cells.iter().filter(|c| **c != Cell::Missing).collect();
    if present.is_empty() {
        return Cell::Missing;
    }
    let ints: Option<Vec<i64>> = present
        .iter()
        .map(|c| match c {
            Cell::Int(i) => Some(*i),
            _ => None,
        })
        .collect();
    let floats = || present.iter().map(|c| c.num().unwrap()).sum::<f64>();
    match func {
        AggFn::Sum => match ints {
            Some(v) => Cell::Int(v.iter().sum()),
            None => Cell::Float(floats()),
        },
        AggFn::Avg => match ints {
            Some(v) => Cell::Float(v.iter().map(|&i| i as i128).sum::<i128>() as f64 / v.len() as f64),
            None => Cell::Float(floats() / present.len() as f64),
        },
        AggFn::Min => {
            let mut best = present[0];
            for c in &present[1..] {
                if total(c, best) == Ordering::Less {
                    best = c;
                }
            }
            best.clone()
        }
        AggFn::Max => {
            let mut best = present[0];
            for c in &present[1..] {
                if total(c, best) != Ordering::Less {
                    best = c;
                }
            }
            best.clone()
        }
        AggFn::Count => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub shape: Shape,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub total_row_count: usize,
    pub tie_at_limit: bool,
}

fn scalar(column: &str, c: Cell) -> Expected {
    Expected {
        shape: Shape::Scalar,
        columns: vec![column.to_string()],
        rows: vec![vec![c]],
        total_row_count: 1,
        tie_at_limit: false,
    }
}

pub fn evaluate(plan: &QueryPlan, t: &RawTable) -> Expected {
    let hits: Vec<usize> = (0..t.rows.len())
        .filter(|&r| plan.filters.iter().all(|f| keep(t, r, &f.field, f.op, &f.values)))
        .collect();

    if let Some(g) = &plan.group_by {
        let mut groups: BTreeMap<Key, (Cell, Vec<usize>)> = BTreeMap::new();
        for &r in &hits {
            let c = cell(t, &g.field, r);
            if let Some(k) = key(&c) {
                groups.entry(k).or_insert((c, Vec::new())).1.push(r);
            }
        }
        let (metric, mut pairs): (String, Vec<(Key, Cell, Cell)>) = match &g.post {
            GroupPost::ArgmaxCount => {
                let mut p: Vec<_> = groups
                    .into_iter()
                    .map(|(k, (c, rows))| (k, c, Cell::Int(rows.len() as i64)))
                    .collect();
                p.sort_by(|a, b| total(&b.2, &a.2).then(a.0.cmp(&b.0)));
                ("count".into(), p)
            }
            GroupPost::CompareCounts(vals) => {
                let p = vals
                    .iter()
                    .map(|v| {
                        let lit = literal(v);
                        let k = key(&lit).unwrap();
                        match groups.get(&k) {
                            Some((c, rows)) => (k, c.clone(), Cell::Int(rows.len() as i64)),
                            None => (k, lit, Cell::Int(0)),
                        }
                    })
                    .collect();
                ("count".into(), p)
            }
            GroupPost::PerGroupAggregate { func, field } => {
                let mut p: Vec<_> = groups
                    .into_iter()
                    .map(|(k, (c, rows))| {
                        let cells: Vec<Cell> = rows.iter().map(|&r| cell(t, field, r)).collect();
                        (k, c, fold_values(*func, &cells, rows.len()))
                    })
                    .collect();
                if let Some(o) = plan.order_by.as_ref().filter(|o| o.key == OrderKey::Aggregate) {
                    p.sort_by(|a, b| directed(&a.2, &b.2, o.direction).then(a.0.cmp(&b.0)));
                }
                (format!("{} {}", label(*func), field), p)
            }
        };
        let n = pairs.len();
        let mut tie = false;
        if let Some(k) = plan.limit.filter(|&k| k < n) {
            tie = total(&pairs[k - 1].2, &pairs[k].2) == Ordering::Equal;
            pairs.truncate(k);
        }
        return Expected {
            shape: Shape::GroupedPairs,
            columns: vec![g.field.clone(), metric],
            rows: pairs.into_iter().map(|(_, c, m)| vec![c, m]).collect(),
            total_row_count: n,
            tie_at_limit: tie,
        };
    }

    match &plan.projection {
        Projection::RowCount => return scalar("count", Cell::Int(hits.len() as i64)),
        Projection::ColumnCount => return scalar("columns", Cell::Int(t.header.len() as i64)),
        Projection::DistinctCount(f) => {
            let keys: BTreeSet<Key> = hits.iter().filter_map(|&r| key(&cell(t, f, r))).collect();
            return scalar("distinct", Cell::Int(keys.len() as i64));
        }
        _ => {}
    }

    if let Some(a) = &plan.aggregate {
        let cells: Vec<Cell> = match &a.field {
            Some(f) => hits.iter().map(|&r| cell(t, f, r)).collect(),
            None => Vec::new(),
        };
        let name = match &a.field {
            Some(f) => format!("{} {}", label(a.func), f),
            None => label(a.func).to_string(),
        };
        return scalar(&name, fold_values(a.func, &cells, hits.len()));
    }

    let columns = match &plan.projection {
        Projection::Fields(fs) => fs.clone(),
        _ => t.header.clone(),
    };
    let mut order = hits;
    let sort = plan.order_by.as_ref().and_then(|o| match &o.key {
        OrderKey::Field(f) => Some((f.clone(), o.direction)),
        OrderKey::Aggregate => None,
    });
    if let Some((f, dir)) = &sort {
        // Stable, so equal keys keep row order.
        order.sort_by(|&a, &b| directed(&cell(t, f, a), &cell(t, f, b), *dir));
    }
    let n = order.len();
    let mut tie = false;
    if let Some(k) = plan.limit.filter(|&k| k < n) {
        if let Some((f, dir)) = &sort {
            tie = directed(&cell(t, f, order[k - 1]), &cell(t, f, order[k]), *dir) == Ordering::Equal;
        }
        order.truncate(k);
    }
    Expected {
        shape: Shape::Rows,
        rows: order
            .iter()
            .map(|&r| columns.iter().map(|c| cell(t, c, r)).collect())
            .collect(),
        columns,
        total_row_count: n,
        tie_at_limit: tie,
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn agrees(v: &Value, c: &Cell) -> bool {
    match (v, c) {
        (Value::Missing, Cell::Missing) => true,
        (Value::Int(a), Cell::Int(b)) => a == b,
        (Value::Float(a), Cell::Float(b)) => close(*a, *b),
        (Value::Text(a), Cell::Text(b)) => a == b,
        (Value::Date(a), Cell::Date(b)) => a == b,
        _ => false,
    }
}

/// Explains the first disagreement between the engine and the oracle.
pub fn diff(got: &ResultSet, want: &Expected) -> Option<String> {
    if got.shape != want.shape || got.columns != want.columns {
        return Some(format!(
            "shape/columns {:?} {:?} vs {:?} {:?}",
            got.shape, got.columns, want.shape, want.columns
        ));
    }
    if got.total_row_count != want.total_row_count || got.tie_at_limit != want.tie_at_limit {
        return Some(format!(
            "total/tie {} {} vs {} {}",
            got.total_row_count, got.tie_at_limit, want.total_row_count, want.tie_at_limit
        ));
    }
    if got.rows.len() != want.rows.len() {
        return Some(format!("{} rows vs {}", got.rows.len(), want.rows.len()));
    }
    for (i, (g, w)) in got.rows.iter().zip(&want.rows).enumerate() {
        if g.len() != w.len() || !g.iter().zip(w).all(|(v, c)| agrees(v, c)) {
            return Some(format!("row {i}: {g:?} vs {w:?}"));
        }
    }
    None
}
