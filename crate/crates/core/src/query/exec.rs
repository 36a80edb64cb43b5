use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::ingest::{Table, Value, ValueKey};
use crate::schema::DataSchema;
use crate::text::fold;

use super::plan::{AggFn, Direction, Filter, FilterOp, GroupPost, OrderKey, Projection, QueryPlan};
use super::validate::{validate_plan, PlanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    Rows,
    GroupedPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub shape: Shape,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Row or group count before the limit was applied.
    pub total_row_count: usize,
    /// The limit cut through a run of equal sort keys.
    #[serde(default)]
    pub tie_at_limit: bool,
}

impl ResultSet {
    pub fn scalar(&self) -> Option<&Value> {
        match self.shape {
            Shape::Scalar => self.rows.first().and_then(|r| r.first()),
            _ => None,
        }
    }

    fn scalar_of(column: &str, v: Value) -> ResultSet {
        ResultSet {
            shape: Shape::Scalar,
            columns: alloc::vec![column.to_string()],
            rows: alloc::vec![alloc::vec![v]],
            total_row_count: 1,
            tie_at_limit: false,
        }
    }
}

/// Reads one cell of a real or composite field. Composite cells are the
/// joined parts, or Missing when any part is missing.
fn cell(table: &Table, schema: &DataSchema, field: &str, row: usize) -> Value {
    if let Some(c) = table.column(field) {
        return c.values[row].clone();
    }
    if let Some(comp) = schema.composite(field) {
        let mut parts = Vec::with_capacity(comp.parts.len());
        for p in &comp.parts {
            match table.column(p).map(|c| &c.values[row]) {
                Some(Value::Missing) | None => return Value::Missing,
                Some(v) => parts.push(v.to_string()),
            }
        }
        return Value::Text(parts.join(&comp.join_separator));
    }
    Value::Missing
}

/// Compares a cell with a literal of the same field type. Dates compare with
/// datetimes on their calendar day.
fn compare(c: &Value, lit: &Value) -> Option<Ordering> {
    match (c, lit) {
        (Value::Missing, _) | (_, Value::Missing) => None,
        (Value::Datetime(a), Value::Date(b)) => Some(a.date().cmp(b)),
        (Value::Date(a), Value::Datetime(b)) => Some(a.cmp(&b.date())),
        (Value::Text(a), Value::Text(b)) => Some(fold(a).cmp(&fold(b))),
        (Value::Text(_), _) | (_, Value::Text(_)) => None,
        (a, b) if a.as_f64().is_some() != b.as_f64().is_some() => None,
        (a, b) => Some(a.sort_cmp(b)),
    }
}

fn name_match(table: &Table, schema: &DataSchema, field: &str, row: usize, lit: &Value) -> bool {
    let needle = fold(&lit.to_string());
    let Some(comp) = schema.composite(field) else {
        return matches!(cell(table, schema, field, row), Value::Text(ref s) if fold(s) == needle);
    };
    let parts: Vec<Option<String>> = comp
        .parts
        .iter()
        .map(|p| match table.column(p).map(|c| &c.values[row]) {
            Some(Value::Missing) | None => None,
            Some(v) => Some(fold(&v.to_string())),
        })
        .collect();
    let sep = fold(&comp.join_separator);
    for i in 0..parts.len() {
        let mut joined = String::new();
        for (j, p) in parts[i..].iter().enumerate() {
            let Some(p) = p else { break };
            if j > 0 {
                joined.push_str(if sep.is_empty() { " " } else { &sep });
            }
            joined.push_str(p);
            if fold(&joined) == needle {
                return true;
            }
        }
    }
    false
}

fn passes(table: &Table, schema: &DataSchema, f: &Filter, row: usize) -> bool {
    if f.op == FilterOp::NameMatch {
        return name_match(table, schema, &f.field, row, &f.values[0]);
    }
    let c = cell(table, schema, &f.field, row);
    if c.is_missing() {
        return false;
    }
    let text = |v: &Value| fold(&v.to_string());
    match f.op {
        FilterOp::Eq => compare(&c, &f.values[0]) == Some(Ordering::Equal),
        FilterOp::Ne => matches!(compare(&c, &f.values[0]), Some(o) if o != Ordering::Equal),
        FilterOp::Lt | FilterOp::Before => compare(&c, &f.values[0]) == Some(Ordering::Less),
        FilterOp::Gt | FilterOp::After => compare(&c, &f.values[0]) == Some(Ordering::Greater),
        FilterOp::Le => matches!(compare(&c, &f.values[0]), Some(Ordering::Less | Ordering::Equal)),
        FilterOp::Ge => matches!(compare(&c, &f.values[0]), Some(Ordering::Greater | Ordering::Equal)),
        FilterOp::Between => {
            matches!(compare(&c, &f.values[0]), Some(Ordering::Greater | Ordering::Equal))
                && matches!(compare(&c, &f.values[1]), Some(Ordering::Less | Ordering::Equal))
        }
        FilterOp::Contains => text(&c).contains(&text(&f.values[0])),
        FilterOp::StartsWith => text(&c).starts_with(&text(&f.values[0])),
        FilterOp::EndsWith => text(&c).ends_with(&text(&f.values[0])),
        FilterOp::NameMatch => unreachable!(),
    }
}

/// Folds present values; Missing cells are skipped. An empty input yields
/// Missing for every function except count.
fn aggregate(func: AggFn, values: &[Value], row_count: usize) -> Value {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_missing()).collect();
    match func {
        AggFn::Count => Value::Int(row_count as i64),
        _ if present.is_empty() => Value::Missing,
        AggFn::Sum => {
            if present.iter().all(|v| matches!(v, Value::Int(_))) {
                let mut acc: i64 = 0;
                for v in &present {
                    if let Value::Int(i) = v {
                        match acc.checked_add(*i) {
                            Some(s) => acc = s,
                            None => return Value::Float(present.iter().filter_map(|v| v.as_f64()).sum()),
                        }
                    }
                }
                Value::Int(acc)
            } else {
                Value::Float(present.iter().filter_map(|v| v.as_f64()).sum())
            }
        }
        AggFn::Avg => {
            // Integer columns are summed exactly before the single division.
            if present.iter().all(|v| matches!(v, Value::Int(_))) {
                let s: i128 = present
                    .iter()
                    .map(|v| if let Value::Int(i) = v { *i as i128 } else { 0 })
                    .sum();
                Value::Float(s as f64 / present.len() as f64)
            } else {
                let s: f64 = present.iter().filter_map(|v| v.as_f64()).sum();
                Value::Float(s / present.len() as f64)
            }
        }
        AggFn::Min => present
            .iter()
            .copied()
            .min_by(|a, b| a.sort_cmp(b))
            .cloned()
            .unwrap_or(Value::Missing),
        AggFn::Max => present
            .iter()
            .copied()
            .max_by(|a, b| a.sort_cmp(b))
            .cloned()
            .unwrap_or(Value::Missing),
    }
}

fn ordered(a: &Value, b: &Value, dir: Direction) -> Ordering {
    match (a.is_missing(), b.is_missing()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => match dir {
            Direction::Asc => a.sort_cmp(b),
            Direction::Desc => b.sort_cmp(a),
        },
    }
}

/// Runs a plan. The plan is validated first; validation errors are the only
/// failure mode.
pub fn execute(plan: &QueryPlan, table: &Table, schema: &DataSchema) -> Result<ResultSet, PlanError> {
    let plan = validate_plan(plan, schema)?;
    let matching: Vec<usize> = (0..table.row_count())
        .filter(|&r| plan.filters.iter().all(|f| passes(table, schema, f, r)))
        .collect();

    if let Some(g) = &plan.group_by {
        return Ok(grouped(&plan, g.field.as_str(), &g.post, table, schema, &matching));
    }
    match &plan.projection {
        Projection::RowCount => return Ok(ResultSet::scalar_of("count", Value::Int(matching.len() as i64))),
        Projection::ColumnCount => {
            return Ok(ResultSet::scalar_of("columns", Value::Int(table.columns().len() as i64)))
        }
        Projection::DistinctCount(f) => {
            let mut keys = alloc::collections::BTreeSet::new();
            for &r in &matching {
                if let Some(k) = cell(table, schema, f, r).key() {
                    keys.insert(k);
                }
            }
            return Ok(ResultSet::scalar_of("distinct", Value::Int(keys.len() as i64)));
        }
        _ => {}
    }
    if let Some(a) = &plan.aggregate {
        let values: Vec<Value> = match &a.field {
            Some(f) => matching.iter().map(|&r| cell(table, schema, f, r)).collect(),
            None => Vec::new(),
        };
        let label = match &a.field {
            Some(f) => alloc::format!("{} {}", a.func.label(), f),
            None => a.func.label().to_string(),
        };
        return Ok(ResultSet::scalar_of(&label, aggregate(a.func, &values, matching.len())));
    }

    let columns: Vec<String> = match &plan.projection {
        Projection::Fields(fs) => fs.clone(),
        _ => table.columns().iter().map(|c| c.name.clone()).collect(),
    };
    let mut order = matching;
    let mut key_of: Option<(String, Direction)> = None;
    if let Some(o) = &plan.order_by {
        if let OrderKey::Field(f) = &o.key {
            key_of = Some((f.clone(), o.direction));
            let keys: BTreeMap<usize, Value> = order.iter().map(|&r| (r, cell(table, schema, f, r))).collect();
            order.sort_by(|a, b| ordered(&keys[a], &keys[b], o.direction).then(a.cmp(b)));
        }
    }
    let total = order.len();
    let mut tie = false;
    if let Some(k) = plan.limit {
        if k < total {
            if let Some((f, dir)) = &key_of {
                let last = cell(table, schema, f, order[k - 1]);
                let next = cell(table, schema, f, order[k]);
                tie = ordered(&last, &next, *dir) == Ordering::Equal;
            }
            order.truncate(k);
        }
    }
    let rows = order
        .iter()
        .map(|&r| columns.iter().map(|c| cell(table, schema, c, r)).collect())
        .collect();
    Ok(ResultSet {
        shape: Shape::Rows,
        columns,
        rows,
        total_row_count: total,
        tie_at_limit: tie,
    })
}

fn grouped(
    plan: &QueryPlan,
    field: &str,
    post: &GroupPost,
    table: &Table,
    schema: &DataSchema,
    matching: &[usize],
) -> ResultSet {
    // Groups keyed by folded value; the first spelling seen names the group.
    let mut groups: BTreeMap<ValueKey, (Value, Vec<usize>)> = BTreeMap::new();
    for &r in matching {
        let v = cell(table, schema, field, r);
        if let Some(k) = v.key() {
            groups.entry(k).or_insert_with(|| (v, Vec::new())).1.push(r);
        }
    }
    let (metric, mut pairs): (String, Vec<(ValueKey, Value, Value)>) = match post {
        GroupPost::ArgmaxCount => {
            let mut p: Vec<_> = groups
                .into_iter()
                .map(|(k, (v, rows))| (k, v, Value::Int(rows.len() as i64)))
                .collect();
            p.sort_by(|a, b| b.2.sort_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
            ("count".into(), p)
        }
        GroupPost::CompareCounts(vals) => {
            let p = vals
                .iter()
                .filter_map(|v| {
                    let k = v.key()?;
                    let (name, n) = match groups.get(&k) {
                        Some((name, rows)) => (name.clone(), rows.len()),
                        None => (v.clone(), 0),
                    };
                    Some((k, name, Value::Int(n as i64)))
                })
                .collect();
            ("count".into(), p)
        }
        GroupPost::PerGroupAggregate { func, field: f } => {
            let mut p: Vec<_> = groups
                .into_iter()
                .map(|(k, (v, rows))| {
                    let vals: Vec<Value> = rows.iter().map(|&r| cell(table, schema, f, r)).collect();
                    (k, v, aggregate(*func, &vals, rows.len()))
                })
                .collect();
            let dir = match &plan.order_by {
                Some(o) if o.key == OrderKey::Aggregate => Some(o.direction),
                _ => None,
            };
            if let Some(d) = dir {
                p.sort_by(|a, b| ordered(&a.2, &b.2, d).then_with(|| a.0.cmp(&b.0)));
            }
            (alloc::format!("{} {}", func.label(), f), p)
        }
    };
    let total = pairs.len();
    let mut tie = false;
    if let Some(k) = plan.limit {
        if k < total {
            tie = pairs[k - 1].2.sort_cmp(&pairs[k].2) == Ordering::Equal;
            pairs.truncate(k);
        }
    }
    ResultSet {
        shape: Shape::GroupedPairs,
        columns: alloc::vec![field.to_string(), metric],
        rows: pairs.into_iter().map(|(_, v, m)| alloc::vec![v, m]).collect(),
        total_row_count: total,
        tie_at_limit: tie,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::officials;
    use crate::query::{Aggregate, GroupBy, OrderBy};
    use crate::schema::{build_default_schema, Enrichment};

    fn f1() -> (Table, DataSchema) {
        let t = officials();
        let s = build_default_schema(&t, 10, "en")
            .apply(&Enrichment::AddComposite {
                name: "full_name".into(),
                parts: alloc::vec!["first_name".into(), "last_name".into()],
                separator: None,
            })
            .unwrap();
        (t, s)
    }

    fn text(s: &str) -> Value {
        Value::Text(s.into())
    }

    #[test]
    fn salary_filter() {
        let (t, s) = f1();
        let plan = QueryPlan::new(Projection::All).filter("salary", FilterOp::Gt, alloc::vec![Value::Int(120000)]);
        let r = execute(&plan, &t, &s).unwrap();
        assert_eq!(r.total_row_count, 2);
        let names: Vec<String> = r.rows.iter().map(|row| row[1].to_string()).collect();
        assert_eq!(names, ["Colau", "Bonet"]);
    }

    #[test]
    fn count_women() {
        let (t, s) = f1();
        let plan = QueryPlan::new(Projection::RowCount).filter("gender", FilterOp::Eq, alloc::vec![text("f")]);
        assert_eq!(execute(&plan, &t, &s).unwrap().scalar(), Some(&Value::Int(4)));
    }

    #[test]
    fn average_bcomu() {
        let (t, s) = f1();
        let mut plan = QueryPlan::new(Projection::All).filter("political_party", FilterOp::Eq, alloc::vec![text("BComu")]);
        plan.aggregate = Some(Aggregate {
            func: AggFn::Avg,
            field: Some("salary".into()),
        });
        let v = execute(&plan, &t, &s).unwrap();
        assert_eq!(v.scalar(), Some(&Value::Float((130000.0 + 88000.0 + 101000.0) / 3.0)));
    }

    #[test]
    fn top_three_salaries() {
        let (t, s) = f1();
        let mut plan = QueryPlan::new(Projection::Fields(alloc::vec!["full_name".into(), "salary".into()]));
        plan.order_by = Some(OrderBy {
            key: OrderKey::Field("salary".into()),
            direction: Direction::Desc,
        });
        plan.limit = Some(3);
        let r = execute(&plan, &t, &s).unwrap();
        assert_eq!(
            r.rows,
            alloc::vec![
                alloc::vec![text("Ada Colau"), Value::Int(130000)],
                alloc::vec![text("Laia Bonet"), Value::Int(121000)],
                alloc::vec![text("Marc Serra"), Value::Int(101000)],
            ]
        );
        assert_eq!(r.total_row_count, 8);
        assert!(!r.tie_at_limit);
    }

    #[test]
    fn name_match_on_composite() {
        let (t, s) = f1();
        for lit in ["Colau", "ada colau", "Ada"] {
            let plan = QueryPlan::new(Projection::All).filter("full_name", FilterOp::NameMatch, alloc::vec![text(lit)]);
            assert_eq!(execute(&plan, &t, &s).unwrap().total_row_count, 1, "{lit}");
        }
        let plan = QueryPlan::new(Projection::All).filter("full_name", FilterOp::NameMatch, alloc::vec![text("Colau Ada")]);
        assert_eq!(execute(&plan, &t, &s).unwrap().total_row_count, 0);
    }

    #[test]
    fn groups_by_average() {
        let (t, s) = f1();
        let mut plan = QueryPlan::new(Projection::All);
        plan.group_by = Some(GroupBy {
            field: "political_party".into(),
            post: GroupPost::PerGroupAggregate {
                func: AggFn::Avg,
                field: "salary".into(),
            },
        });
        plan.order_by = Some(OrderBy {
            key: OrderKey::Aggregate,
            direction: Direction::Desc,
        });
        plan.limit = Some(3);
        let r = execute(&plan, &t, &s).unwrap();
        let keys: Vec<String> = r.rows.iter().map(|row| row[0].to_string()).collect();
        // PSC 108000, BComu 106333.3, PP 76000, ERC 64000
        assert_eq!(keys, ["PSC", "BComu", "PP"]);
        assert_eq!(r.total_row_count, 4);
    }

    #[test]
    fn compare_counts_and_argmax() {
        let (t, s) = f1();
        let mut plan = QueryPlan::new(Projection::All);
        plan.group_by = Some(GroupBy {
            field: "gender".into(),
            post: GroupPost::CompareCounts(alloc::vec![text("F"), text("M")]),
        });
        let r = execute(&plan, &t, &s).unwrap();
        assert_eq!(r.rows[0], alloc::vec![text("F"), Value::Int(4)]);
        assert_eq!(r.rows[1], alloc::vec![text("M"), Value::Int(4)]);
        plan.group_by = Some(GroupBy {
            field: "political_party".into(),
            post: GroupPost::ArgmaxCount,
        });
        let r = execute(&plan, &t, &s).unwrap();
        assert_eq!(r.rows[0], alloc::vec![text("BComu"), Value::Int(3)]);
    }

    #[test]
    fn between_bounds_normalized() {
        let (t, s) = f1();
        let plan = QueryPlan::new(Projection::All).filter(
            "salary",
            FilterOp::Between,
            alloc::vec![Value::Int(100000), Value::Int(80000)],
        );
        let v = validate_plan(&plan, &s).unwrap();
        assert_eq!(v.filters[0].values, [Value::Int(80000), Value::Int(100000)]);
        assert_eq!(execute(&plan, &t, &s).unwrap().total_row_count, 3);
    }

    #[test]
    fn ill_typed_plans_rejected() {
        let (_, s) = f1();
        let plan = QueryPlan::new(Projection::All).filter("first_name", FilterOp::Gt, alloc::vec![Value::Int(1000)]);
        assert!(matches!(validate_plan(&plan, &s), Err(PlanError::OperatorTypeMismatch { .. })));
        let plan = QueryPlan::new(Projection::All).filter("salary", FilterOp::Eq, alloc::vec![text("lots")]);
        assert!(matches!(validate_plan(&plan, &s), Err(PlanError::ValueTypeMismatch { .. })));
        let mut plan = QueryPlan::new(Projection::All);
        plan.aggregate = Some(Aggregate {
            func: AggFn::Avg,
            field: Some("gender".into()),
        });
        assert!(matches!(validate_plan(&plan, &s), Err(PlanError::AggregateTypeMismatch { .. })));
        let mut plan = QueryPlan::new(Projection::All);
        plan.limit = Some(0);
        assert_eq!(validate_plan(&plan, &s), Err(PlanError::InvalidLimit));
    }

    #[test]
    fn missing_fails_filters_and_is_ignored() {
        let t = crate::fixtures::simple_csv("a,b\n1,x\n,y\n3,x\n", Default::default());
        let s = build_default_schema(&t, 10, "en");
        let plan = QueryPlan::new(Projection::RowCount).filter("a", FilterOp::Ne, alloc::vec![Value::Int(1)]);
        assert_eq!(execute(&plan, &t, &s).unwrap().scalar(), Some(&Value::Int(1)));
        let mut plan = QueryPlan::new(Projection::All);
        plan.aggregate = Some(Aggregate {
            func: AggFn::Avg,
            field: Some("a".into()),
        });
        assert_eq!(execute(&plan, &t, &s).unwrap().scalar(), Some(&Value::Float(2.0)));
        plan.aggregate = Some(Aggregate {
            func: AggFn::Count,
            field: Some("a".into()),
        });
        assert_eq!(execute(&plan, &t, &s).unwrap().scalar(), Some(&Value::Int(3)));
    }

    #[test]
    fn tie_at_limit_flagged() {
        let t = crate::fixtures::simple_csv("n,v\na,5\nb,7\nc,7\nd,1\n", Default::default());
        let s = build_default_schema(&t, 10, "en");
        let mut plan = QueryPlan::new(Projection::All);
        plan.order_by = Some(OrderBy {
            key: OrderKey::Field("v".into()),
            direction: Direction::Desc,
        });
        plan.limit = Some(1);
        let r = execute(&plan, &t, &s).unwrap();
        assert!(r.tie_at_limit);
        assert_eq!(r.rows[0][0], text("b"));
    }
}
