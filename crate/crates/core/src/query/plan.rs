use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::Value;

/// Comparison applied by a filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Between,
    Contains,
    StartsWith,
    EndsWith,
    Before,
    After,
    /// The literal names a contiguous run of a composite's parts, so
    /// `Colau` and `Ada Colau` both match `first_name + last_name`.
    NameMatch,
}

impl FilterOp {
    pub fn arity(self) -> usize {
        if self == FilterOp::Between {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub field: String,
    pub op: FilterOp,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    All,
    Fields(Vec<String>),
    RowCount,
    ColumnCount,
    DistinctCount(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn label(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "total",
            AggFn::Avg => "average",
            AggFn::Min => "minimum",
            AggFn::Max => "maximum",
        }
    }
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFn,
    #[serde(default)]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPost {
    /// Every group with its row count, most frequent first.
    ArgmaxCount,
    /// Row counts of exactly the listed values, in the listed order.
    CompareCounts(Vec<Value>),
    PerGroupAggregate { func: AggFn, field: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBy {
    pub field: String,
    pub post: GroupPost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKey {
    Field(String),
    /// The per-group aggregate value.
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderBy {
    pub key: OrderKey,
    pub direction: Direction,
}

/// Deterministic select/filter/aggregate/sort/limit program over one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub projection: Projection,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub aggregate: Option<Aggregate>,
    #[serde(default)]
    pub group_by: Option<GroupBy>,
    #[serde(default)]
    pub order_by: Option<OrderBy>,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl QueryPlan {
    pub fn new(projection: Projection) -> Self {
        Self {
            projection,
            filters: Vec::new(),
            aggregate: None,
            group_by: None,
            order_by: None,
            limit: None,
        }
    }

    pub fn filter(mut self, field: &str, op: FilterOp, values: Vec<Value>) -> Self {
        self.filters.push(Filter {
            field: String::from(field),
            op,
            values,
        });
        self
    }

    /// Same plan with filters in a canonical order, for comparing plans that
    /// differ only in the order their filters were collected.
    pub fn normalized(&self) -> QueryPlan {
        let mut p = self.clone();
        p.filters.sort_by(|a, b| {
            crate::text::name_key(&a.field)
                .cmp(&crate::text::name_key(&b.field))
                .then(a.op.cmp(&b.op))
                .then_with(|| {
                    let ka: Vec<_> = a.values.iter().map(|v| v.key()).collect();
                    let kb: Vec<_> = b.values.iter().map(|v| v.key()).collect();
                    ka.cmp(&kb)
                })
        });
        p.filters.dedup();
        p
    }
}
