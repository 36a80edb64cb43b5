use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::ingest::{parse_bool, parse_date, parse_datetime, parse_float, parse_int, DateOrder, FieldType, Value};
use crate::patterns::op_type_domain;
use crate::schema::DataSchema;

use super::plan::{AggFn, FilterOp, GroupPost, OrderKey, Projection, QueryPlan};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("operator {op:?} does not apply to {field_type} field `{field}`")]
    OperatorTypeMismatch {
        op: FilterOp,
        field: String,
        field_type: FieldType,
    },
    #[error("`{value}` is not a valid {field_type} value for `{field}`")]
    ValueTypeMismatch {
        field: String,
        field_type: FieldType,
        value: String,
    },
    #[error("operator {op:?} takes {expected} value(s), got {found}")]
    BadArity {
        op: FilterOp,
        expected: usize,
        found: usize,
    },
    #[error("{func} is not defined for {field_type} field `{field}`")]
    AggregateTypeMismatch {
        func: AggFn,
        field: String,
        field_type: FieldType,
    },
    #[error("limit must be positive")]
    InvalidLimit,
    #[error("invalid ordering: {0}")]
    InvalidOrder(String),
    #[error("slot `{0}` is not bound")]
    UnboundSlot(String),
}

/// Converts a literal to the representation used by fields of type `ty`.
/// Returns `None` when the literal cannot be read as that type.
pub fn coerce_literal(ty: FieldType, v: &Value, date_order: Option<DateOrder>) -> Option<Value> {
    match (ty, v) {
        (_, Value::Missing) | (FieldType::Empty, _) => None,
        (FieldType::Integer | FieldType::Float, Value::Int(_) | Value::Float(_)) => Some(v.clone()),
        (FieldType::Integer | FieldType::Float, Value::Text(s)) => parse_int(s, false)
            .map(Value::Int)
            .or_else(|| parse_float(s, false).map(Value::Float)),
        (FieldType::Integer | FieldType::Float, _) => None,
        (FieldType::Text, Value::Text(s)) => Some(Value::Text(s.clone())),
        (FieldType::Text, other) => Some(Value::Text(other.to_string())),
        (FieldType::Boolean, Value::Bool(_)) => Some(v.clone()),
        (FieldType::Boolean, Value::Int(0)) => Some(Value::Bool(false)),
        (FieldType::Boolean, Value::Int(1)) => Some(Value::Bool(true)),
        (FieldType::Boolean, Value::Text(s)) => parse_bool(s).map(Value::Bool),
        (FieldType::Boolean, _) => None,
        (FieldType::Date, Value::Date(_)) => Some(v.clone()),
        (FieldType::Date, Value::Datetime(d)) => Some(Value::Date(d.date())),
        (FieldType::Datetime, Value::Date(_) | Value::Datetime(_)) => Some(v.clone()),
        (FieldType::Date | FieldType::Datetime, Value::Text(s)) => parse_date(s, date_order.or(Some(DateOrder::DayFirst)))
            .map(Value::Date)
            .or_else(|| {
                let dt = parse_datetime(s)?;
                Some(if ty == FieldType::Date {
                    Value::Date(dt.date())
                } else {
                    Value::Datetime(dt)
                })
            }),
        (FieldType::Date | FieldType::Datetime, _) => None,
    }
}

struct Resolved {
    name: String,
    ty: FieldType,
    composite: bool,
    date_order: Option<DateOrder>,
}

fn resolve(schema: &DataSchema, name: &str) -> Result<Resolved, PlanError> {
    if let Some(f) = schema.field(name) {
        return Ok(Resolved {
            name: f.canonical_name.clone(),
            ty: f.field_type,
            composite: false,
            date_order: f.date_order,
        });
    }
    if let Some(c) = schema.composite(name) {
        return Ok(Resolved {
            name: c.name.clone(),
            ty: FieldType::Text,
            composite: true,
            date_order: None,
        });
    }
    Err(PlanError::UnknownField(name.to_string()))
}

fn resolve_real(schema: &DataSchema, name: &str) -> Result<Resolved, PlanError> {
    let r = resolve(schema, name)?;
    if r.composite {
        return Err(PlanError::UnknownField(name.to_string()));
    }
    Ok(r)
}

fn op_applies(op: FilterOp, r: &Resolved) -> bool {
    if r.composite {
        return matches!(
            op,
            FilterOp::Eq | FilterOp::Ne | FilterOp::NameMatch | FilterOp::Contains | FilterOp::StartsWith | FilterOp::EndsWith
        );
    }
    if op == FilterOp::NameMatch {
        return true;
    }
    op_type_domain(op).contains(&r.ty)
}

fn check_agg(func: AggFn, r: &Resolved) -> Result<(), PlanError> {
    let ok = match func {
        AggFn::Count => true,
        AggFn::Sum | AggFn::Avg => r.ty.is_numeric(),
        AggFn::Min | AggFn::Max => r.ty.is_numeric() || r.ty.is_temporal(),
    };
    if ok {
        Ok(())
    } else {
        Err(PlanError::AggregateTypeMismatch {
            func,
            field: r.name.clone(),
            field_type: r.ty,
        })
    }
}

/// Checks a plan against the schema and returns it in canonical form: field
/// names canonical, literals coerced to field types, `between` bounds
/// ascending.
pub fn validate_plan(plan: &QueryPlan, schema: &DataSchema) -> Result<QueryPlan, PlanError> {
    let mut out = plan.clone();
    match &mut out.projection {
        Projection::DistinctCount(f) => *f = resolve_real(schema, f)?.name,
        Projection::Fields(fs) => {
            for f in fs.iter_mut() {
                *f = resolve(schema, f)?.name;
            }
        }
        _ => {}
    }
    for filter in &mut out.filters {
        let r = resolve(schema, &filter.field)?;
        filter.field = r.name.clone();
        if !op_applies(filter.op, &r) {
            return Err(PlanError::OperatorTypeMismatch {
                op: filter.op,
                field: r.name,
                field_type: r.ty,
            });
        }
        if filter.values.len() != filter.op.arity() {
            return Err(PlanError::BadArity {
                op: filter.op,
                expected: filter.op.arity(),
                found: filter.values.len(),
            });
        }
        let target = if filter.op == FilterOp::NameMatch { FieldType::Text } else { r.ty };
        let mut coerced = Vec::with_capacity(filter.values.len());
        for v in &filter.values {
            match coerce_literal(target, v, r.date_order) {
                Some(c) => coerced.push(c),
                None => {
                    return Err(PlanError::ValueTypeMismatch {
                        field: r.name,
                        field_type: r.ty,
                        value: v.to_string(),
                    })
                }
            }
        }
        if filter.op == FilterOp::Between && coerced[0].sort_cmp(&coerced[1]).is_gt() {
            coerced.swap(0, 1);
        }
        filter.values = coerced;
    }
    if let Some(a) = &mut out.aggregate {
        if let Some(f) = &a.field {
            let r = resolve_real(schema, f)?;
            check_agg(a.func, &r)?;
            a.field = Some(r.name);
        } else if a.func != AggFn::Count {
            return Err(PlanError::InvalidOrder("aggregate needs a field".into()));
        }
    }
    let mut has_group_metric = false;
    if let Some(g) = &mut out.group_by {
        let r = resolve_real(schema, &g.field)?;
        g.field = r.name.clone();
        match &mut g.post {
            GroupPost::ArgmaxCount => {}
            GroupPost::CompareCounts(vals) => {
                for v in vals.iter_mut() {
                    *v = coerce_literal(r.ty, v, r.date_order).ok_or_else(|| PlanError::ValueTypeMismatch {
                        field: r.name.clone(),
                        field_type: r.ty,
                        value: v.to_string(),
                    })?;
                }
            }
            GroupPost::PerGroupAggregate { func, field } => {
                let fr = resolve_real(schema, field)?;
                check_agg(*func, &fr)?;
                *field = fr.name;
                has_group_metric = true;
            }
        }
    }
    if let Some(o) = &mut out.order_by {
        match &mut o.key {
            OrderKey::Field(f) => *f = resolve(schema, f)?.name,
            OrderKey::Aggregate if !has_group_metric => {
                return Err(PlanError::InvalidOrder("aggregate ordering needs a per-group aggregate".into()))
            }
            OrderKey::Aggregate => {}
        }
    }
    if out.limit == Some(0) {
        return Err(PlanError::InvalidLimit);
    }
    Ok(out)
}
