//! Instantiates the pattern catalog over a schema, producing a [`BotBundle`].
//!
//! Expanded bundles carry one intent per field, pattern and operator with
//! the field and operator wording written into the training sentences.
//! Generic bundles carry one intent per pattern and leave field and operator
//! as slots, so their size does not depend on the schema.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::{FieldType, Value};
use crate::patterns::{
    applicable_patterns, is_placeholder_shape, Action, Catalog, ConversationPattern, Expansion, FieldView, Operator,
    PatternCategory, SlotKind, ROWS_PLACEHOLDER,
};
use crate::schema::{DataSchema, SchemaError};
use crate::text::{humanize, ident, name_key};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_EXPANDED_INTENTS: usize = 500;

pub const ENTITY_FIELD: &str = "field";
pub const ENTITY_OPERATOR: &str = "operator";
pub const ENTITY_NUMBER: &str = "number";
pub const ENTITY_DATE: &str = "date";
pub const ENTITY_LITERAL: &str = "literal";
pub const ENTITY_ROWS: &str = "rows";
/// Canonical value of the row-alias entity.
pub const ROWS_CANONICAL: &str = "@rows";
/// Slot reference matching any categorical value entity.
pub const ENTITY_ANY_VALUE: &str = "value:*";

pub fn value_entity(field: &str) -> String {
    format!("value:{field}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Expanded,
    Generic,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Expanded => "expanded",
            Strategy::Generic => "generic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    SystemNumber,
    SystemDate,
    SystemText,
    FieldEntity,
    OperatorEntity,
    CategoricalValueEntity,
    RowAliasEntity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDef {
    pub name: String,
    pub kind: EntityKind,
    /// Owning field of a categorical value entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Canonical value to wordings. Empty for open entities.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lexicon: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSlot {
    pub name: String,
    pub fragment: String,
    pub entity: String,
    pub kind: SlotKind,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    /// Restricts a category slot to values of one field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
}

/// Slot fixed at generation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Field(String),
    Operator(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub name: String,
    pub pattern: String,
    pub category: PatternCategory,
    pub training_sentences: BTreeMap<String, Vec<String>>,
    pub slots: Vec<IntentSlot>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bound: BTreeMap<String, Binding>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Intent {
    pub fn slot(&self, name: &str) -> Option<&IntentSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub w_lex: f64,
    pub w_slot: f64,
    pub accept_threshold: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            w_lex: 0.6,
            w_slot: 0.4,
            accept_threshold: 0.55,
        }
    }
}

/// Everything the runtime needs besides the table itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotBundle {
    pub format_version: u32,
    pub generator_version: String,
    pub strategy: Strategy,
    pub locales: Vec<String>,
    pub schema: DataSchema,
    pub operators: Vec<Operator>,
    pub entities: Vec<EntityDef>,
    pub intents: Vec<Intent>,
    pub matcher: MatcherConfig,
    /// Field naming a row in answers and name lookups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("malformed bundle document: {0}")]
    Malformed(String),
    #[error("unsupported bundle format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("bundle integrity violation at {path}: {reason}")]
    Integrity { path: String, reason: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl BotBundle {
    pub fn intent(&self, name: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDef> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn operator(&self, id: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(doc: &str) -> Result<BotBundle, BundleError> {
        let raw: serde_json::Value = serde_json::from_str(doc).map_err(|e| BundleError::Malformed(e.to_string()))?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == BUNDLE_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(BundleError::VersionMismatch {
                    found: v,
                    expected: BUNDLE_FORMAT_VERSION,
                })
            }
            None => {
                return Err(BundleError::Integrity {
                    path: "format_version".into(),
                    reason: "missing or not a number".into(),
                })
            }
        }
        let b: BotBundle = serde_json::from_value(raw).map_err(|e| BundleError::Malformed(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    /// Intent names are unique and every slot's entity exists.
    pub fn validate(&self) -> Result<(), BundleError> {
        self.schema.validate()?;
        let integrity = |path: String, reason: &str| BundleError::Integrity {
            path,
            reason: reason.to_string(),
        };
        let entities: BTreeSet<&str> = self.entities.iter().map(|e| e.name.as_str()).collect();
        let mut names = BTreeSet::new();
        for (i, intent) in self.intents.iter().enumerate() {
            if !names.insert(intent.name.as_str()) {
                return Err(integrity(format!("intents[{i}].name"), "duplicate intent name"));
            }
            for (si, s) in intent.slots.iter().enumerate() {
                let ok = s.entity == ENTITY_ANY_VALUE || entities.contains(s.entity.as_str());
                if !ok {
                    return Err(integrity(
                        format!("intents[{i}].slots[{si}].entity"),
                        &format!("unknown entity `{}`", s.entity),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Field wordings used in expanded sentences, display name first.
fn field_variants(schema: &DataSchema, name: &str) -> Vec<String> {
    let lang = &schema.language;
    let mut out = Vec::new();
    if let Some(f) = schema.field(name) {
        out.push(f.display_names.get(lang).cloned().unwrap_or_else(|| humanize(&f.canonical_name)));
        if let Some(s) = f.synonyms.get(lang) {
            out.extend(s.iter().cloned());
        }
    } else {
        out.push(humanize(name));
    }
    let mut seen = BTreeSet::new();
    out.retain(|s| seen.insert(name_key(s)));
    out
}

/// Replaces whole placeholder words; other text is copied unchanged.
pub fn fill_template(template: &str, mut sub: impl FnMut(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String, sub: &mut dyn FnMut(&str) -> Option<String>| {
        if !word.is_empty() {
            match is_placeholder_shape(word).then(|| sub(word)).flatten() {
                Some(r) => out.push_str(&r),
                None => out.push_str(word),
            }
            word.clear();
        }
    };
    for c in template.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            flush(&mut word, &mut out, &mut sub);
            out.push(c);
        }
    }
    flush(&mut word, &mut out, &mut sub);
    out
}

/// Every field and composite with its predicate view, in schema order.
fn field_views(schema: &DataSchema) -> Vec<(String, FieldView)> {
    let mut out: Vec<(String, FieldView)> = schema
        .fields
        .iter()
        .filter_map(|f| Some((f.canonical_name.clone(), FieldView::of(schema, &f.canonical_name)?)))
        .collect();
    out.extend(
        schema
            .composites
            .iter()
            .filter_map(|c| Some((c.name.clone(), FieldView::of(schema, &c.name)?))),
    );
    out
}

/// Number of intents the expanded strategy would produce.
pub fn predicted_expanded_count(schema: &DataSchema, catalog: &Catalog) -> usize {
    let mut n = catalog
        .patterns
        .iter()
        .filter(|p| p.expansion == Expansion::None)
        .count();
    for (_, view) in field_views(schema) {
        for a in applicable_patterns(catalog, &view) {
            n += a.operators.len().max(1);
        }
    }
    n
}

/// Expanded while the expanded bundle stays within `max_expanded`, else
/// generic. `force` overrides the choice.
pub fn select_strategy(
    schema: &DataSchema,
    catalog: &Catalog,
    max_expanded: usize,
    force: Option<Strategy>,
) -> Strategy {
    if let Some(s) = force {
        return s;
    }
    if predicted_expanded_count(schema, catalog) <= max_expanded {
        Strategy::Expanded
    } else {
        Strategy::Generic
    }
}

/// First composite, else the first non-categorical text field.
pub fn label_field(schema: &DataSchema) -> Option<String> {
    if let Some(c) = schema.composites.first() {
        return Some(c.name.clone());
    }
    schema
        .fields
        .iter()
        .find(|f| f.field_type == FieldType::Text && !f.is_categorical())
        .map(|f| f.canonical_name.clone())
}

fn entities(schema: &DataSchema, catalog: &Catalog) -> Vec<EntityDef> {
    let lang = schema.language.clone();
    let open = |name: &str, kind| EntityDef {
        name: name.to_string(),
        kind,
        field: None,
        lexicon: BTreeMap::new(),
    };
    let mut out = alloc::vec![
        open(ENTITY_NUMBER, EntityKind::SystemNumber),
        open(ENTITY_DATE, EntityKind::SystemDate),
        open(ENTITY_LITERAL, EntityKind::SystemText),
    ];
    let mut fields = BTreeMap::new();
    for f in &schema.fields {
        fields.insert(f.canonical_name.clone(), f.surfaces());
    }
    for c in &schema.composites {
        let mut s = alloc::vec![c.name.clone()];
        if humanize(&c.name) != c.name {
            s.push(humanize(&c.name));
        }
        fields.insert(c.name.clone(), s);
    }
    for g in &schema.groups {
        let mut s = alloc::vec![g.group_id.clone()];
        if humanize(&g.group_id) != g.group_id {
            s.push(humanize(&g.group_id));
        }
        fields.insert(g.group_id.clone(), s);
    }
    out.push(EntityDef {
        name: ENTITY_FIELD.into(),
        kind: EntityKind::FieldEntity,
        field: None,
        lexicon: fields,
    });
    out.push(EntityDef {
        name: ENTITY_OPERATOR.into(),
        kind: EntityKind::OperatorEntity,
        field: None,
        lexicon: catalog
            .operators
            .iter()
            .map(|o| (o.id.clone(), o.surfaces(&lang).to_vec()))
            .collect(),
    });
    for f in schema.fields.iter().filter(|f| f.is_categorical()) {
        let lexicon = f
            .stats
            .value_lexicon
            .iter()
            .map(|v| (v.clone(), f.value_synonyms.get(v).cloned().unwrap_or_default()))
            .collect();
        out.push(EntityDef {
            name: value_entity(&f.canonical_name),
            kind: EntityKind::CategoricalValueEntity,
            field: Some(f.canonical_name.clone()),
            lexicon,
        });
    }
    let mut rows = BTreeMap::new();
    rows.insert(ROWS_CANONICAL.to_string(), schema.primary_row_aliases());
    out.push(EntityDef {
        name: ENTITY_ROWS.into(),
        kind: EntityKind::RowAliasEntity,
        field: None,
        lexicon: rows,
    });
    out
}

fn slot_entity(kind: &SlotKind, value_type: Option<FieldType>, owner: Option<&str>) -> String {
    match kind {
        SlotKind::Field(_) => ENTITY_FIELD.into(),
        SlotKind::Operator { .. } => ENTITY_OPERATOR.into(),
        SlotKind::Number => ENTITY_NUMBER.into(),
        SlotKind::Text => ENTITY_LITERAL.into(),
        SlotKind::Value => match value_type {
            Some(t) if t.is_numeric() => ENTITY_NUMBER.into(),
            Some(t) if t.is_temporal() => ENTITY_DATE.into(),
            _ => ENTITY_LITERAL.into(),
        },
        SlotKind::Category(_) => owner.map(value_entity).unwrap_or_else(|| ENTITY_ANY_VALUE.into()),
    }
}

struct Instance<'a> {
    pattern: &'a ConversationPattern,
    field: Option<(String, FieldView)>,
    operator: Option<&'a Operator>,
}

fn instantiate(schema: &DataSchema, inst: &Instance<'_>) -> Intent {
    let p = inst.pattern;
    let lang = &schema.language;
    let mut bound = BTreeMap::new();
    let (field_slot, op_slot) = match &p.expansion {
        Expansion::PerField { field_slot, .. } => (field_slot.clone(), None),
        Expansion::PerFieldOperator {
            field_slot,
            operator_slot,
        } => (Some(field_slot.clone()), Some(operator_slot.clone())),
        Expansion::None => (None, None),
    };
    let mut field_slot_bound = None;
    if let Some((name, _)) = &inst.field {
        if let Some(fs) = &field_slot {
            bound.insert(fs.clone(), Binding::Field(name.clone()));
            field_slot_bound = Some(fs.clone());
        }
    }
    let mut op_slot_bound = None;
    if let (Some(op), Some(os)) = (inst.operator, &op_slot) {
        bound.insert(os.clone(), Binding::Operator(op.id.clone()));
        op_slot_bound = Some(os.clone());
    }
    let category_owner = match (&inst.field, &field_slot) {
        (Some((name, _)), None) => Some(name.as_str()),
        _ => None,
    };
    let value_type = inst.field.as_ref().map(|(_, v)| v.field_type);
    let slots: Vec<IntentSlot> = p
        .slots
        .iter()
        .filter(|s| !bound.contains_key(&s.name))
        .map(|s| {
            let owner = match s.kind {
                SlotKind::Category(_) => category_owner.map(str::to_string),
                _ => None,
            };
            IntentSlot {
                name: s.name.clone(),
                fragment: s.fragment.clone(),
                entity: slot_entity(&s.kind, value_type, owner.as_deref()),
                kind: s.kind.clone(),
                required: s.required,
                default: s.default.clone(),
                owner,
            }
        })
        .collect();

    let field_fragment = field_slot_bound.as_ref().and_then(|s| p.slot(s)).map(|s| s.fragment.clone());
    let op_fragment = op_slot_bound.as_ref().and_then(|s| p.slot(s)).map(|s| s.fragment.clone());
    let fvariants = inst
        .field
        .as_ref()
        .map(|(name, _)| field_variants(schema, name))
        .unwrap_or_default();
    let mut ovariants: Vec<String> = inst.operator.map(|o| o.surfaces(lang).to_vec()).unwrap_or_default();
    // Worded forms first, symbols last.
    ovariants.sort_by_key(|s| !s.chars().any(char::is_alphabetic));
    let rows = schema.primary_row_aliases();

    let mut sentences = BTreeMap::new();
    for (locale, templates) in &p.templates {
        if locale != lang {
            continue;
        }
        let list: Vec<String> = templates
            .iter()
            .enumerate()
            .map(|(i, t)| {
                fill_template(t, |w| {
                    if w == ROWS_PLACEHOLDER {
                        return Some(rows[i % rows.len()].clone());
                    }
                    if Some(w) == field_fragment.as_deref() && !fvariants.is_empty() {
                        return Some(fvariants[i % fvariants.len()].clone());
                    }
                    if Some(w) == op_fragment.as_deref() && !ovariants.is_empty() {
                        return Some(ovariants[i % ovariants.len()].clone());
                    }
                    None
                })
            })
            .collect();
        sentences.insert(locale.clone(), list);
    }

    let name = match (&inst.field, inst.operator) {
        (None, _) => p.id.clone(),
        (Some((field, _)), op) => {
            let template = p.expanded_name.clone().unwrap_or_else(|| format!("{{field}}_{}", p.id));
            template
                .replace("{field}", &ident(field))
                .replace("{operator}", op.map(|o| o.id.as_str()).unwrap_or(""))
        }
    };
    Intent {
        name,
        pattern: p.id.clone(),
        category: p.category,
        training_sentences: sentences,
        slots,
        bound,
        action: p.action.clone(),
        bound_field: inst.field.as_ref().map(|(n, _)| n.clone()),
        bound_operator: inst.operator.map(|o| o.id.clone()),
        note: p.note.clone(),
    }
}

/// Builds the bundle for `strategy`. The schema must be valid.
pub fn generate(schema: &DataSchema, catalog: &Catalog, strategy: Strategy, matcher: MatcherConfig) -> BotBundle {
    let views = field_views(schema);
    let mut instances = Vec::new();
    for p in &catalog.patterns {
        if strategy == Strategy::Generic || p.expansion == Expansion::None {
            instances.push(Instance {
                pattern: p,
                field: None,
                operator: None,
            });
            continue;
        }
        for (name, view) in &views {
            let Some(app) = applicable_patterns(catalog, view).into_iter().find(|a| a.pattern.id == p.id) else {
                continue;
            };
            if app.operators.is_empty() {
                instances.push(Instance {
                    pattern: p,
                    field: Some((name.clone(), *view)),
                    operator: None,
                });
            } else {
                for op in app.operators {
                    instances.push(Instance {
                        pattern: p,
                        field: Some((name.clone(), *view)),
                        operator: Some(op),
                    });
                }
            }
        }
    }
    let mut intents: Vec<Intent> = instances.iter().map(|i| instantiate(schema, i)).collect();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for intent in &mut intents {
        let n = seen.entry(intent.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            intent.name = format!("{}_{}", intent.name, n);
        }
    }
    BotBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        generator_version: format!("{}+catalog.{}", env!("CARGO_PKG_VERSION"), catalog.version),
        strategy,
        locales: alloc::vec![schema.language.clone()],
        schema: schema.clone(),
        operators: catalog.operators.clone(),
        entities: entities(schema, catalog),
        intents,
        matcher,
        label_field: label_field(schema),
    }
}
