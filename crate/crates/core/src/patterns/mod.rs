//! Conversation patterns: question archetypes with slots, training-sentence
//! templates and a plan skeleton, plus the operator vocabulary they use.
//!
//! The built-in catalog is a JSON document compiled into the crate. Extension
//! documents share its format and are merged by pattern and operator id.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::{FieldType, Value};
use crate::query::{AggFn, Direction, FilterOp};
use crate::schema::DataSchema;
use crate::text::fold;

pub const CATALOG_FORMAT_VERSION: u32 = 1;
pub const PRIMARY_LOCALE: &str = "en";
/// Template placeholder replaced by the schema's row aliases.
pub const ROWS_PLACEHOLDER: &str = "ROWS";

const BUILTIN: &str = include_str!("catalog.json");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("malformed catalog document: {0}")]
    Malformed(String),
    #[error("unsupported catalog format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("invalid catalog at {path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: String, reason: &str) -> CatalogError {
    CatalogError::Invalid {
        path,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operator {
    pub id: String,
    pub op: FilterOp,
    pub applicable_types: Vec<FieldType>,
    /// Whether the operator applies to composite fields.
    #[serde(default)]
    pub composite: bool,
    pub surface_forms: BTreeMap<String, Vec<String>>,
}

impl Operator {
    pub fn arity(&self) -> usize {
        self.op.arity()
    }

    pub fn applies_to(&self, ty: FieldType, is_composite: bool) -> bool {
        if is_composite {
            self.composite
        } else {
            self.applicable_types.contains(&ty)
        }
    }

    pub fn surfaces(&self, locale: &str) -> &[String] {
        self.surface_forms.get(locale).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Types an operator may ever be declared for.
pub fn op_type_domain(op: FilterOp) -> &'static [FieldType] {
    use FieldType::*;
    match op {
        FilterOp::Gt | FilterOp::Ge | FilterOp::Lt | FilterOp::Le => &[Integer, Float],
        FilterOp::Between => &[Integer, Float, Date, Datetime],
        FilterOp::Contains | FilterOp::StartsWith | FilterOp::EndsWith | FilterOp::NameMatch => &[Text],
        FilterOp::Before | FilterOp::After => &[Date, Datetime],
        FilterOp::Eq | FilterOp::Ne => &[Integer, Float, Date, Datetime, Boolean, Text],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternCategory {
    DatasetLevel,
    FieldLevel,
    CellValueLevel,
    Aggregation,
    Meta,
}

impl PatternCategory {
    pub fn label(self) -> &'static str {
        match self {
            PatternCategory::DatasetLevel => "questions about the whole dataset",
            PatternCategory::FieldLevel => "questions about the values of a field",
            PatternCategory::CellValueLevel => "questions about specific category values",
            PatternCategory::Aggregation => "aggregations such as averages and totals",
            PatternCategory::Meta => "questions about the data itself",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeRule {
    #[default]
    Exclude,
    Include,
    Only,
}

/// Shape of a field as seen by predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldView {
    pub field_type: FieldType,
    pub categorical: bool,
    pub diversity: usize,
    pub composite: bool,
}

impl FieldView {
    pub fn of(schema: &DataSchema, name: &str) -> Option<FieldView> {
        if let Some(f) = schema.field(name) {
            return Some(FieldView {
                field_type: f.field_type,
                categorical: f.is_categorical(),
                diversity: f.stats.diversity,
                composite: false,
            });
        }
        schema.composite(name).map(|_| FieldView {
            field_type: FieldType::Text,
            categorical: false,
            diversity: 0,
            composite: true,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldPredicate {
    /// Accepted types; empty accepts every non-empty type.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub types: Vec<FieldType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categorical: Option<bool>,
    #[serde(default)]
    pub composites: CompositeRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_diversity: Option<usize>,
}

impl FieldPredicate {
    pub fn accepts(&self, f: &FieldView) -> bool {
        match (self.composites, f.composite) {
            (CompositeRule::Exclude, true) | (CompositeRule::Only, false) => return false,
            _ => {}
        }
        if f.field_type == FieldType::Empty {
            return false;
        }
        if !self.types.is_empty() && !self.types.contains(&f.field_type) {
            return false;
        }
        if let Some(c) = self.categorical {
            if c != f.categorical {
                return false;
            }
        }
        if let Some(m) = self.max_diversity {
            if f.diversity > m {
                return false;
            }
        }
        true
    }

    fn possible_types(&self) -> Vec<FieldType> {
        use FieldType::*;
        let all = [Integer, Float, Date, Datetime, Boolean, Text];
        let mut v: Vec<FieldType> = if self.types.is_empty() {
            all.to_vec()
        } else {
            self.types.clone()
        };
        if self.composites == CompositeRule::Only {
            v = alloc::vec![Text];
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    /// A field, composite or group mention.
    Field(FieldPredicate),
    Operator { arity: usize },
    /// A non-negative whole number such as the k of a top-k question.
    Number,
    /// A literal typed by the field it is compared against.
    Value,
    /// A name-like literal.
    Text,
    /// A categorical value; the predicate applies to its owning field.
    Category(FieldPredicate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    /// Upper-case placeholder used in templates.
    pub fragment: String,
    pub kind: SlotKind,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Expansion {
    /// One intent regardless of strategy.
    #[default]
    None,
    /// One intent per field accepted by the predicate of `field_slot`, or by
    /// `over` when the pattern has no field slot.
    PerField {
        #[serde(default)]
        field_slot: Option<String>,
        #[serde(default)]
        over: Option<FieldPredicate>,
    },
    /// One intent per accepted field and applicable operator.
    PerFieldOperator { field_slot: String, operator_slot: String },
}


#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldExpr {
    Slot(String),
    /// Field owning the categorical value bound to the slot.
    OwnerOf(String),
    /// The bundle's label field: the first composite, else the first
    /// non-categorical text field.
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpExpr {
    Slot(String),
    Fixed(FilterOp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTemplate {
    pub field: FieldExpr,
    pub op: OpExpr,
    /// Slot names supplying the operands.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionTemplate {
    All,
    RowCount,
    ColumnCount,
    DistinctCount(FieldExpr),
    /// The label field followed by the given field.
    LabelAnd(FieldExpr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateTemplate {
    pub func: AggFn,
    #[serde(default)]
    pub field: Option<FieldExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPostTemplate {
    ArgmaxCount,
    CompareCounts(Vec<String>),
    PerGroupAggregate { func: AggFn, field: FieldExpr },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTemplate {
    pub field: FieldExpr,
    pub post: GroupPostTemplate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKeyTemplate {
    Field(FieldExpr),
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderTemplate {
    pub key: OrderKeyTemplate,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitTemplate {
    Fixed(usize),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub projection: ProjectionTemplate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<FilterTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<GroupTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_by: Option<OrderTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitTemplate>,
}

impl PlanTemplate {
    /// Slot names the template reads.
    pub fn slot_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let field = |e: &FieldExpr, out: &mut BTreeSet<String>| match e {
            FieldExpr::Slot(s) | FieldExpr::OwnerOf(s) => {
                out.insert(s.clone());
            }
            FieldExpr::Label => {}
        };
        match &self.projection {
            ProjectionTemplate::DistinctCount(e) | ProjectionTemplate::LabelAnd(e) => field(e, &mut out),
            _ => {}
        }
        for f in &self.filters {
            field(&f.field, &mut out);
            if let OpExpr::Slot(s) = &f.op {
                out.insert(s.clone());
            }
            out.extend(f.values.iter().cloned());
        }
        if let Some(a) = &self.aggregate {
            if let Some(e) = &a.field {
                field(e, &mut out);
            }
        }
        if let Some(g) = &self.group_by {
            field(&g.field, &mut out);
            match &g.post {
                GroupPostTemplate::CompareCounts(v) => out.extend(v.iter().cloned()),
                GroupPostTemplate::PerGroupAggregate { field: e, .. } => field(e, &mut out),
                GroupPostTemplate::ArgmaxCount => {}
            }
        }
        if let Some(OrderTemplate {
            key: OrderKeyTemplate::Field(e),
            ..
        }) = &self.order_by
        {
            field(e, &mut out);
        }
        if let Some(LimitTemplate::Slot(s)) = &self.limit {
            out.insert(s.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaKind {
    Source,
    Age,
    Help,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Query(PlanTemplate),
    Meta(MetaKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationPattern {
    pub id: String,
    pub category: PatternCategory,
    #[serde(default)]
    pub expansion: Expansion,
    /// Intent name under the expanded strategy, with `{field}` and
    /// `{operator}` holes. Defaults to `{field}_<id>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expanded_name: Option<String>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
    pub templates: BTreeMap<String, Vec<String>>,
    pub action: Action,
    /// Interpretation shown with the answer, with slot-name holes such as
    /// `{field}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConversationPattern {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Predicate deciding which fields the pattern expands over.
    pub fn expansion_predicate(&self) -> Option<&FieldPredicate> {
        let slot_pred = |name: &str| match self.slot(name).map(|s| &s.kind) {
            Some(SlotKind::Field(p)) => Some(p),
            _ => None,
        };
        match &self.expansion {
            Expansion::None => None,
            Expansion::PerField { over: Some(p), .. } => Some(p),
            Expansion::PerField { field_slot: Some(s), .. } => slot_pred(s),
            Expansion::PerField { .. } => None,
            Expansion::PerFieldOperator { field_slot, .. } => slot_pred(field_slot),
        }
    }

    pub fn operator_arity(&self) -> Option<usize> {
        match &self.expansion {
            Expansion::PerFieldOperator { operator_slot, .. } => match self.slot(operator_slot) {
                Some(SlotSpec {
                    kind: SlotKind::Operator { arity },
                    ..
                }) => Some(*arity),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub format_version: u32,
    pub version: String,
    #[serde(default)]
    pub operators: Vec<Operator>,
    #[serde(default)]
    pub patterns: Vec<ConversationPattern>,
}

/// The built-in catalog. Validated by the crate's tests, so parsing it never
/// fails in a released build.
pub fn catalog() -> Catalog {
    Catalog::from_json(BUILTIN).expect("built-in catalog is valid")
}

impl Catalog {
    pub fn from_json(doc: &str) -> Result<Catalog, CatalogError> {
        let c: Catalog = parse(doc)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn operator(&self, id: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn pattern(&self, id: &str) -> Option<&ConversationPattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    /// Merges an extension document. Entries with an existing id replace the
    /// built-in one in place; new ones are appended. The result is validated.
    pub fn extend_from_json(&self, doc: &str) -> Result<Catalog, CatalogError> {
        let ext: Catalog = parse(doc)?;
        let mut out = self.clone();
        for op in ext.operators {
            match out.operators.iter_mut().find(|o| o.id == op.id) {
                Some(slot) => *slot = op,
                None => out.operators.push(op),
            }
        }
        for p in ext.patterns {
            match out.patterns.iter_mut().find(|q| q.id == p.id) {
                Some(slot) => *slot = p,
                None => out.patterns.push(p),
            }
        }
        if !ext.version.is_empty() {
            out.version = format!("{}+{}", self.version, ext.version);
        }
        out.validate()?;
        Ok(out)
    }

    /// Structural checks run whenever a catalog is loaded.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let mut ids = BTreeSet::new();
        let mut surfaces: BTreeMap<(String, String), String> = BTreeMap::new();
        for (i, o) in self.operators.iter().enumerate() {
            let path = |s: &str| format!("operators[{i}]{s}");
            if !ids.insert(o.id.clone()) {
                return Err(invalid(path(".id"), "duplicate operator id"));
            }
            if o.surfaces(PRIMARY_LOCALE).is_empty() {
                return Err(invalid(path(".surface_forms"), "no surface forms for the primary locale"));
            }
            let domain = op_type_domain(o.op);
            if o.applicable_types.is_empty() {
                return Err(invalid(path(".applicable_types"), "empty"));
            }
            for t in &o.applicable_types {
                if !domain.contains(t) {
                    return Err(invalid(
                        path(".applicable_types"),
                        &format!("{:?} cannot apply to {t} fields", o.op),
                    ));
                }
            }
            if o.composite && !domain.contains(&FieldType::Text) {
                return Err(invalid(path(".composite"), "composites are text"));
            }
            for (locale, forms) in &o.surface_forms {
                for f in forms {
                    let key = (locale.clone(), fold(f));
                    if let Some(other) = surfaces.insert(key, o.id.clone()) {
                        if other != o.id {
                            return Err(invalid(
                                path(".surface_forms"),
                                &format!("`{f}` is also a surface form of `{other}`"),
                            ));
                        }
                    }
                }
            }
        }
        let mut pids = BTreeSet::new();
        for (i, p) in self.patterns.iter().enumerate() {
            validate_pattern(self, i, p)?;
            if !pids.insert(p.id.clone()) {
                return Err(invalid(format!("patterns[{i}].id"), "duplicate pattern id"));
            }
        }
        Ok(())
    }

    /// Operators applicable to a field.
    pub fn operators_for(&self, f: &FieldView, arity: usize) -> Vec<&Operator> {
        self.operators
            .iter()
            .filter(|o| o.arity() == arity && o.applies_to(f.field_type, f.composite))
            .collect()
    }
}

fn parse(doc: &str) -> Result<Catalog, CatalogError> {
    let raw: serde_json::Value =
        serde_json::from_str(doc).map_err(|e| CatalogError::Malformed(e.to_string()))?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| invalid("format_version".into(), "missing or not a number"))?;
    if found != CATALOG_FORMAT_VERSION as u64 {
        return Err(CatalogError::VersionMismatch {
            found: found as u32,
            expected: CATALOG_FORMAT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| CatalogError::Malformed(e.to_string()))
}

/// Upper-case placeholder tokens of a template, in order.
pub fn template_placeholders(template: &str) -> Vec<String> {
    template
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| is_placeholder_shape(w))
        .map(|w| w.to_string())
        .collect()
}

/// `FIELD`, `VALUE2`, `K`. The pronoun `I` is not a placeholder.
pub fn is_placeholder_shape(w: &str) -> bool {
    !w.is_empty()
        && w != "I"
        && w.starts_with(|c: char| c.is_ascii_uppercase())
        && w.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

fn validate_pattern(cat: &Catalog, i: usize, p: &ConversationPattern) -> Result<(), CatalogError> {
    let path = |s: &str| format!("patterns[{i}]{s}");
    let mut names = BTreeSet::new();
    let mut fragments = BTreeSet::new();
    for (si, s) in p.slots.iter().enumerate() {
        if !names.insert(s.name.clone()) {
            return Err(invalid(path(&format!(".slots[{si}].name")), "duplicate slot name"));
        }
        if !is_placeholder_shape(&s.fragment) || s.fragment == ROWS_PLACEHOLDER {
            return Err(invalid(path(&format!(".slots[{si}].fragment")), "not a valid placeholder"));
        }
        if !fragments.insert(s.fragment.clone()) {
            return Err(invalid(path(&format!(".slots[{si}].fragment")), "duplicate fragment"));
        }
        if s.required && s.default.is_some() {
            return Err(invalid(path(&format!(".slots[{si}].default")), "required slots take no default"));
        }
    }
    if p.templates.get(PRIMARY_LOCALE).is_none_or(Vec::is_empty) {
        return Err(invalid(path(".templates"), "no templates for the primary locale"));
    }
    for (locale, ts) in &p.templates {
        for (ti, t) in ts.iter().enumerate() {
            for ph in template_placeholders(t) {
                if ph != ROWS_PLACEHOLDER && !fragments.contains(&ph) {
                    return Err(invalid(
                        path(&format!(".templates.{locale}[{ti}]")),
                        &format!("placeholder `{ph}` has no slot"),
                    ));
                }
            }
        }
    }
    let kind_of = |name: &str| p.slot(name).map(|s| &s.kind);
    match &p.expansion {
        Expansion::None => {}
        Expansion::PerField { field_slot, over } => {
            if let Some(fs) = field_slot {
                if !matches!(kind_of(fs), Some(SlotKind::Field(_))) {
                    return Err(invalid(path(".expansion.field_slot"), "not a field slot"));
                }
            } else if over.is_none() {
                return Err(invalid(path(".expansion"), "needs a field slot or a predicate"));
            }
        }
        Expansion::PerFieldOperator {
            field_slot,
            operator_slot,
        } => {
            if !matches!(kind_of(field_slot), Some(SlotKind::Field(_))) {
                return Err(invalid(path(".expansion.field_slot"), "not a field slot"));
            }
            if !matches!(kind_of(operator_slot), Some(SlotKind::Operator { .. })) {
                return Err(invalid(path(".expansion.operator_slot"), "not an operator slot"));
            }
        }
    }
    if let Action::Query(plan) = &p.action {
        let refs = plan.slot_refs();
        for r in &refs {
            if !names.contains(r) {
                return Err(invalid(path(".action"), &format!("plan references unknown slot `{r}`")));
            }
        }
        for s in &p.slots {
            if s.required && !refs.contains(&s.name) {
                return Err(invalid(path(".action"), &format!("required slot `{}` unused by the plan", s.name)));
            }
        }
        for (fi, f) in plan.filters.iter().enumerate() {
            let fpath = path(&format!(".action.filters[{fi}]"));
            let expected_arity = match &f.op {
                OpExpr::Fixed(op) => op.arity(),
                OpExpr::Slot(s) => match kind_of(s) {
                    Some(SlotKind::Operator { arity }) => *arity,
                    _ => return Err(invalid(fpath, "operator slot has the wrong kind")),
                },
            };
            if f.values.len() != expected_arity {
                return Err(invalid(fpath, "operand count does not match operator arity"));
            }
            // Static type consistency: a fixed operator must be able to apply
            // to every type the field slot admits.
            if let (OpExpr::Fixed(op), FieldExpr::Slot(s)) = (&f.op, &f.field) {
                if let Some(SlotKind::Field(pred)) = kind_of(s) {
                    let domain = op_type_domain(*op);
                    if let Some(t) = pred.possible_types().into_iter().find(|t| !domain.contains(t)) {
                        return Err(invalid(fpath, &format!("{op:?} cannot apply to {t} fields")));
                    }
                }
            }
        }
        if let Some(LimitTemplate::Slot(s)) = &plan.limit {
            if kind_of(s) != Some(&SlotKind::Number) {
                return Err(invalid(path(".action.limit"), "limit slot must be a number"));
            }
        }
        if let Some(LimitTemplate::Fixed(0)) = &plan.limit {
            return Err(invalid(path(".action.limit"), "limit must be positive"));
        }
    }
    let _ = cat;
    Ok(())
}

/// A pattern applicable to a field, with the operators it expands over.
#[derive(Debug, Clone)]
pub struct Applicable<'a> {
    pub pattern: &'a ConversationPattern,
    pub operators: Vec<&'a Operator>,
}

/// Field-expanded patterns whose predicate accepts `field`. Patterns that
/// iterate over operators are listed only with the operators that apply.
pub fn applicable_patterns<'a>(catalog: &'a Catalog, field: &FieldView) -> Vec<Applicable<'a>> {
    let mut out = Vec::new();
    if field.field_type == FieldType::Empty {
        return out;
    }
    for p in &catalog.patterns {
        let Some(pred) = p.expansion_predicate() else { continue };
        if !pred.accepts(field) {
            continue;
        }
        match p.operator_arity() {
            Some(arity) => {
                let ops = catalog.operators_for(field, arity);
                if !ops.is_empty() {
                    out.push(Applicable { pattern: p, operators: ops });
                }
            }
            None => out.push(Applicable {
                pattern: p,
                operators: Vec::new(),
            }),
        }
    }
    out
}
