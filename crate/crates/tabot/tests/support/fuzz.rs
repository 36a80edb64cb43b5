//! Random tables and valid plans over them.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use tabot_core::ingest::Value;
use tabot_core::query::{
    AggFn, Aggregate, Direction, FilterOp, GroupBy, GroupPost, OrderBy, OrderKey, Projection, QueryPlan,
};

use super::oracle::{parse, Cell, Kind, RawTable};

const COLORS: [&str; 6] = ["red", "blue", "green", "teal", "amber", "ivory"];
const CONSONANTS: [char; 9] = ['b', 'd', 'k', 'l', 'm', 'r', 's', 't', 'v'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn word(rng: &mut impl Rng) -> String {
    let mut w = String::new();
    for _ in 0..rng.gen_range(2..=3) {
        w.push(*CONSONANTS.choose(rng).unwrap());
        w.push(*VOWELS.choose(rng).unwrap());
    }
    w
}

fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn recase(rng: &mut impl Rng, w: &str) -> String {
    match rng.gen_range(0..3) {
        0 => w.to_lowercase(),
        1 => w.to_uppercase(),
        _ => capitalized(&w.to_lowercase()),
    }
}

fn gap(rng: &mut impl Rng, row: usize) -> bool {
    row > 0 && rng.gen_bool(0.1)
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

/// Columns `qty` (integer), `price` (float), `color` (few values, mixed
/// case), `first` and `last` (names), `day` (ISO date) and the composite
/// `full = first + last`. Every column but `first` has missing cells; the
/// first row is complete so each column keeps its type.
pub fn table(rng: &mut impl Rng) -> RawTable {
    let firsts: Vec<String> = (0..8).map(|_| capitalized(&word(rng))).collect();
    let lasts: Vec<String> = (0..6).map(|_| capitalized(&word(rng))).collect();
    let n = rng.gen_range(1..=100);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let qty = if gap(rng, i) { String::new() } else { rng.gen_range(-20..200).to_string() };
        let price = if gap(rng, i) {
            String::new()
        } else {
            format!("{:.2}", rng.gen_range(0.5..500.0))
        };
        let color = if gap(rng, i) {
            String::new()
        } else {
            let c = *COLORS.choose(rng).unwrap();
            recase(rng, c)
        };
        let first = firsts.choose(rng).unwrap().clone();
        let last = if gap(rng, i) { String::new() } else { lasts.choose(rng).unwrap().clone() };
        let day = if gap(rng, i) {
            String::new()
        } else {
            (base_date() + Duration::days(rng.gen_range(0..1500))).format("%Y-%m-%d").to_string()
        };
        rows.push(vec![qty, price, color, first, last, day]);
    }
    RawTable {
        header: ["qty", "price", "color", "first", "last", "day"].map(String::from).to_vec(),
        kinds: vec![Kind::Int, Kind::Float, Kind::Text, Kind::Text, Kind::Text, Kind::Date],
        rows,
        composites: vec![("full".into(), vec!["first".into(), "last".into()], " ".into())],
    }
}

const NUMERIC: [&str; 2] = ["qty", "price"];
const REAL: [&str; 6] = ["qty", "price", "color", "first", "last", "day"];
const ALL: [&str; 7] = ["qty", "price", "color", "first", "last", "day", "full"];

fn kind_of(f: &str) -> Kind {
    match f {
        "qty" => Kind::Int,
        "price" => Kind::Float,
        "day" => Kind::Date,
        _ => Kind::Text,
    }
}

fn present(t: &RawTable, rng: &mut impl Rng, f: &str) -> Option<String> {
    let row = t.rows.choose(rng)?;
    let shown = match f {
        "full" => {
            let (a, b) = (&row[3], &row[4]);
            if b.is_empty() {
                return None;
            }
            format!("{a} {b}")
        }
        _ => row[t.header.iter().position(|h| h == f).unwrap()].clone(),
    };
    (!shown.is_empty()).then_some(shown)
}

fn value(t: &RawTable, rng: &mut impl Rng, f: &str) -> Value {
    let seen = if rng.gen_bool(0.6) { present(t, rng, f) } else { None };
    match kind_of(f) {
        Kind::Int => Value::Int(match seen {
            Some(s) => s.parse().unwrap(),
            None => rng.gen_range(-30..220),
        }),
        Kind::Float => {
            let s = seen.unwrap_or_else(|| format!("{:.2}", rng.gen_range(0.0..520.0)));
            Value::Float(s.parse().unwrap())
        }
        Kind::Date => match seen {
            Some(s) => match parse(&s, Kind::Date) {
                Cell::Date(d) => Value::Date(d),
                _ => unreachable!(),
            },
            None => Value::Date(base_date() + Duration::days(rng.gen_range(-30..1530))),
        },
        Kind::Text => {
            let s = seen.unwrap_or_else(|| capitalized(&word(rng)));
            Value::Text(recase(rng, &s))
        }
    }
}

/// A piece of an existing text cell, for the substring operators.
fn fragment(t: &RawTable, rng: &mut impl Rng, f: &str, op: FilterOp) -> Value {
    let Some(s) = present(t, rng, f) else {
        return Value::Text(word(rng));
    };
    let chars: Vec<char> = s.chars().collect();
    let len = rng.gen_range(1..=chars.len());
    let start = match op {
        FilterOp::StartsWith => 0,
        FilterOp::EndsWith => chars.len() - len,
        _ => rng.gen_range(0..=chars.len() - len),
    };
    Value::Text(recase(rng, &chars[start..start + len].iter().collect::<String>()))
}

fn filter(t: &RawTable, rng: &mut impl Rng, plan: QueryPlan) -> QueryPlan {
    let f = *ALL.choose(rng).unwrap();
    let ops: &[FilterOp] = match (f, kind_of(f)) {
        ("full", _) => &[
            FilterOp::Eq,
            FilterOp::Ne,
            FilterOp::NameMatch,
            FilterOp::Contains,
            FilterOp::StartsWith,
            FilterOp::EndsWith,
        ],
        (_, Kind::Int | Kind::Float) => &[
            FilterOp::Eq,
            FilterOp::Ne,
            FilterOp::Lt,
            FilterOp::Le,
            FilterOp::Gt,
            FilterOp::Ge,
            FilterOp::Between,
        ],
        (_, Kind::Date) => &[FilterOp::Eq, FilterOp::Ne, FilterOp::Before, FilterOp::After, FilterOp::Between],
        (_, Kind::Text) => &[
            FilterOp::Eq,
            FilterOp::Ne,
            FilterOp::Contains,
            FilterOp::StartsWith,
            FilterOp::EndsWith,
            FilterOp::NameMatch,
        ],
    };
    let op = *ops.choose(rng).unwrap();
    let values = match op {
        FilterOp::Between => vec![value(t, rng, f), value(t, rng, f)],
        FilterOp::Contains | FilterOp::StartsWith | FilterOp::EndsWith => vec![fragment(t, rng, f, op)],
        FilterOp::NameMatch if f == "full" && rng.gen_bool(0.5) => {
            let part = if rng.gen_bool(0.5) { "first" } else { "last" };
            vec![value(t, rng, part)]
        }
        _ => vec![value(t, rng, f)],
    };
    plan.filter(f, op, values)
}

fn direction(rng: &mut impl Rng) -> Direction {
    if rng.gen_bool(0.5) {
        Direction::Asc
    } else {
        Direction::Desc
    }
}

fn limit(rng: &mut impl Rng) -> Option<usize> {
    rng.gen_bool(0.5).then(|| rng.gen_range(1..=8))
}

/// An aggregate function with a field it is defined for.
fn metric(rng: &mut impl Rng) -> (AggFn, String) {
    let func = *[AggFn::Count, AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max].choose(rng).unwrap();
    let field = match func {
        AggFn::Count => *REAL.choose(rng).unwrap(),
        AggFn::Sum | AggFn::Avg => *NUMERIC.choose(rng).unwrap(),
        AggFn::Min | AggFn::Max => *["qty", "price", "day"].choose(rng).unwrap(),
    };
    (func, field.to_string())
}

/// A plan that passes validation against the table's schema.
pub fn plan(t: &RawTable, rng: &mut impl Rng) -> QueryPlan {
    let mut p = QueryPlan::new(Projection::All);
    for _ in 0..rng.gen_range(0..=3) {
        p = filter(t, rng, p);
    }
    match rng.gen_range(0..6) {
        0 => {
            let mut fields: Vec<String> = ALL.iter().map(|s| s.to_string()).collect();
            fields.shuffle(rng);
            fields.truncate(rng.gen_range(1..=ALL.len()));
            if rng.gen_bool(0.7) {
                p.projection = Projection::Fields(fields);
            }
            if rng.gen_bool(0.7) {
                p.order_by = Some(OrderBy {
                    key: OrderKey::Field(ALL.choose(rng).unwrap().to_string()),
                    direction: direction(rng),
                });
            }
            p.limit = limit(rng);
        }
        1 => {
            p.projection = if rng.gen_bool(0.5) {
                Projection::RowCount
            } else {
                Projection::ColumnCount
            };
        }
        2 => p.projection = Projection::DistinctCount(REAL.choose(rng).unwrap().to_string()),
        3 => {
            let (func, field) = metric(rng);
            p.aggregate = Some(Aggregate {
                func,
                field: (func != AggFn::Count || rng.gen_bool(0.5)).then_some(field),
            });
        }
        _ => {
            let field = ["qty", "color", "first", "last", "day"].choose(rng).unwrap().to_string();
            let post = match rng.gen_range(0..3) {
                0 => GroupPost::ArgmaxCount,
                1 => GroupPost::CompareCounts((0..rng.gen_range(1..=3)).map(|_| value(t, rng, &field)).collect()),
                _ => {
                    let (func, f) = metric(rng);
                    if rng.gen_bool(0.7) {
                        p.order_by = Some(OrderBy {
                            key: OrderKey::Aggregate,
                            direction: direction(rng),
                        });
                    }
                    GroupPost::PerGroupAggregate { func, field: f }
                }
            };
            p.group_by = Some(GroupBy { field, post });
            p.limit = limit(rng);
        }
    }
    p
}
