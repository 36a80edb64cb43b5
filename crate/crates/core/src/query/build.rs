use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::generator::{Binding, BotBundle, Intent};
use crate::ingest::{FieldType, Value};
use crate::intent::{MatchResult, MentionValue};
use crate::patterns::{
    Action, FieldExpr, GroupPostTemplate, LimitTemplate, OpExpr, OrderKeyTemplate, PlanTemplate, ProjectionTemplate,
};

use super::plan::{Aggregate, Filter, FilterOp, GroupBy, GroupPost, OrderBy, OrderKey, Projection, QueryPlan};
use super::validate::{validate_plan, PlanError};

struct Builder<'a> {
    intent: &'a Intent,
    m: &'a MatchResult,
    bundle: &'a BotBundle,
    /// Skip unbound parts instead of failing.
    lenient: bool,
}

impl Builder<'_> {
    fn unbound<T>(&self, slot: &str) -> Result<Option<T>, PlanError> {
        if self.lenient {
            Ok(None)
        } else {
            Err(PlanError::UnboundSlot(slot.to_string()))
        }
    }

    fn mention(&self, slot: &str) -> Option<&MentionValue> {
        self.m.bindings.get(slot).map(|b| &b.value)
    }

    fn group_member(&self, id: &str) -> Option<String> {
        let g = self.bundle.schema.group(id)?;
        g.default_member.clone().or_else(|| g.member_fields.first().cloned())
    }

    fn field_slot(&self, slot: &str) -> Result<Option<String>, PlanError> {
        if let Some(Binding::Field(f)) = self.intent.bound.get(slot) {
            return Ok(Some(f.clone()));
        }
        match self.mention(slot) {
            Some(MentionValue::Field { name }) => Ok(Some(name.clone())),
            Some(MentionValue::Group { id }) => match self.group_member(id) {
                Some(f) => Ok(Some(f)),
                None => self.unbound(slot),
            },
            _ => self.unbound(slot),
        }
    }

    fn field(&self, e: &FieldExpr) -> Result<Option<String>, PlanError> {
        match e {
            FieldExpr::Slot(s) => self.field_slot(s),
            FieldExpr::OwnerOf(s) => match self.mention(s) {
                Some(MentionValue::Category { field, .. }) => Ok(Some(field.clone())),
                _ => self.unbound(s),
            },
            FieldExpr::Label => self
                .bundle
                .label_field
                .clone()
                .map(Some)
                .ok_or_else(|| PlanError::UnboundSlot("label".into())),
        }
    }

    fn op(&self, e: &OpExpr, field: &str) -> Result<Option<FilterOp>, PlanError> {
        let id = match e {
            OpExpr::Fixed(op) => return Ok(Some(*op)),
            OpExpr::Slot(s) => match (self.intent.bound.get(s), self.mention(s)) {
                (Some(Binding::Operator(id)), _) | (None, Some(MentionValue::Operator { id })) => id,
                _ => return self.unbound(s),
            },
        };
        let op = self
            .bundle
            .operator(id)
            .ok_or_else(|| PlanError::UnboundSlot(id.clone()))?;
        let schema = &self.bundle.schema;
        let (ty, composite) = match (schema.field_type(field), schema.composite(field)) {
            (_, Some(_)) => (FieldType::Text, true),
            (Some(t), None) => (t, false),
            (None, None) => return Err(PlanError::UnknownField(field.to_string())),
        };
        if !op.applies_to(ty, composite) {
            return Err(PlanError::OperatorTypeMismatch {
                op: op.op,
                field: field.to_string(),
                field_type: ty,
            });
        }
        Ok(Some(op.op))
    }

    fn value(&self, slot: &str) -> Option<Value> {
        self.mention(slot)
            .and_then(MentionValue::as_value)
            .or_else(|| self.intent.slot(slot).and_then(|s| s.default.clone()))
    }

    fn required(&self, slot: &str) -> bool {
        self.intent.slot(slot).is_some_and(|s| s.required)
    }

    /// Filters for one template, empty when an optional part is unbound.
    fn filters(&self, t: &crate::patterns::FilterTemplate) -> Result<Vec<Filter>, PlanError> {
        let missing: Vec<&String> = t.values.iter().filter(|s| self.value(s).is_none()).collect();
        if let Some(s) = missing.first() {
            if !self.lenient && missing.iter().any(|s| self.required(s)) {
                return Err(PlanError::UnboundSlot(s.to_string()));
            }
            return Ok(Vec::new());
        }
        let Some(field) = self.field(&t.field)? else {
            return Ok(Vec::new());
        };
        let Some(op) = self.op(&t.op, &field)? else {
            return Ok(Vec::new());
        };
        let values: Vec<Value> = t.values.iter().filter_map(|s| self.value(s)).collect();
        if op == FilterOp::NameMatch {
            if let (Some(c), [Value::Text(s)]) = (self.bundle.schema.composite(&field), values.as_slice()) {
                let words: Vec<&str> = if c.join_separator.trim().is_empty() {
                    s.split_whitespace().collect()
                } else {
                    s.split(c.join_separator.as_str()).map(str::trim).filter(|w| !w.is_empty()).collect()
                };
                let text_parts = c
                    .parts
                    .iter()
                    .all(|p| self.bundle.schema.field_type(p) == Some(FieldType::Text));
                if words.len() == c.parts.len() && text_parts {
                    return Ok(c
                        .parts
                        .iter()
                        .zip(words)
                        .map(|(p, w)| Filter {
                            field: p.clone(),
                            op: FilterOp::Eq,
                            values: alloc::vec![Value::Text(w.to_string())],
                        })
                        .collect());
                }
            }
        }
        Ok(alloc::vec![Filter { field, op, values }])
    }

    fn build(&self, t: &PlanTemplate) -> Result<QueryPlan, PlanError> {
        let projection = match &t.projection {
            ProjectionTemplate::All => Projection::All,
            ProjectionTemplate::RowCount => Projection::RowCount,
            ProjectionTemplate::ColumnCount => Projection::ColumnCount,
            ProjectionTemplate::DistinctCount(e) => match self.field(e)? {
                Some(f) => Projection::DistinctCount(f),
                None => Projection::All,
            },
            ProjectionTemplate::LabelAnd(e) => {
                let label = self.field(&FieldExpr::Label)?;
                match (label, self.field(e)?) {
                    (Some(l), Some(f)) if l == f => Projection::Fields(alloc::vec![l]),
                    (Some(l), Some(f)) => Projection::Fields(alloc::vec![l, f]),
                    _ => Projection::All,
                }
            }
        };
        let mut plan = QueryPlan::new(projection);
        for ft in &t.filters {
            plan.filters.extend(self.filters(ft)?);
        }
        if let Some(a) = &t.aggregate {
            let field = match &a.field {
                Some(e) => self.field(e)?,
                None => None,
            };
            if a.field.is_none() || field.is_some() {
                plan.aggregate = Some(Aggregate { func: a.func, field });
            }
        }
        if let Some(g) = &t.group_by {
            let field = self.field(&g.field)?;
            let post = match &g.post {
                GroupPostTemplate::ArgmaxCount => Some(GroupPost::ArgmaxCount),
                GroupPostTemplate::CompareCounts(slots) => {
                    let vals: Vec<Value> = slots.iter().filter_map(|s| self.value(s)).collect();
                    if vals.len() == slots.len() {
                        Some(GroupPost::CompareCounts(vals))
                    } else {
                        let s = slots.iter().find(|s| self.value(s).is_none()).expect("a slot is unbound");
                        self.unbound(s)?
                    }
                }
                GroupPostTemplate::PerGroupAggregate { func, field } => self
                    .field(field)?
                    .map(|f| GroupPost::PerGroupAggregate { func: *func, field: f }),
            };
            if let (Some(field), Some(post)) = (field, post) {
                plan.group_by = Some(GroupBy { field, post });
            }
        }
        if let Some(o) = &t.order_by {
            let key = match &o.key {
                OrderKeyTemplate::Field(e) => self.field(e)?.map(OrderKey::Field),
                OrderKeyTemplate::Aggregate if plan.group_by.is_some() => Some(OrderKey::Aggregate),
                OrderKeyTemplate::Aggregate => None,
            };
            if let Some(key) = key {
                plan.order_by = Some(OrderBy {
                    key,
                    direction: o.direction,
                });
            }
        }
        plan.limit = match &t.limit {
            None => None,
            Some(LimitTemplate::Fixed(n)) => Some(*n),
            Some(LimitTemplate::Slot(s)) => match self.value(s) {
                Some(Value::Int(n)) => Some(usize::try_from(n).map_err(|_| PlanError::InvalidLimit)?),
                Some(_) => return Err(PlanError::InvalidLimit),
                None => self.unbound(s)?,
            },
        };
        for (field, value) in &self.m.extra_filters {
            let v = Value::Text(value.clone());
            let dup = plan
                .filters
                .iter()
                .any(|f| &f.field == field && f.op == FilterOp::Eq && f.values.first() == Some(&v));
            if !dup {
                plan.filters.push(Filter {
                    field: field.clone(),
                    op: FilterOp::Eq,
                    values: alloc::vec![v],
                });
            }
        }
        validate_plan(&plan, &self.bundle.schema)
    }
}

fn template(intent: &Intent) -> Option<&PlanTemplate> {
    match &intent.action {
        Action::Query(t) => Some(t),
        Action::Meta(_) => None,
    }
}

/// Fills the intent's plan template from the match and validates it.
/// Bare categorical mentions become equality filters; a composite literal
/// with one word per part becomes one equality filter per part.
///
/// Returns `Ok(None)` for meta intents.
pub fn build_plan(intent: &Intent, m: &MatchResult, bundle: &BotBundle) -> Result<Option<QueryPlan>, PlanError> {
    let Some(t) = template(intent) else {
        return Ok(None);
    };
    Builder {
        intent,
        m,
        bundle,
        lenient: false,
    }
    .build(t)
    .map(Some)
}

/// Like [`build_plan`] but drops the parts whose slots are unbound, so the
/// bound parts can be type checked before the user supplies the rest.
pub fn build_partial_plan(intent: &Intent, m: &MatchResult, bundle: &BotBundle) -> Result<Option<QueryPlan>, PlanError> {
    let Some(t) = template(intent) else {
        return Ok(None);
    };
    Builder {
        intent,
        m,
        bundle,
        lenient: true,
    }
    .build(t)
    .map(Some)
}
