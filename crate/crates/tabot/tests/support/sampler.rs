//! Instantiates an intent's own training sentences with concrete, type
//! consistent slot fillers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use tabot_core::generator::{fill_template, value_entity, BotBundle, Intent};
use tabot_core::ingest::{FieldType, Table, Value};
use tabot_core::patterns::{FieldView, Operator, SlotKind};

pub struct Sampler<'a> {
    pub bundle: &'a BotBundle,
    pub table: &'a Table,
}

/// Field slot a value or operator slot refers to.
fn field_of(slot: &str) -> &'static str {
    match slot {
        "value2" | "operator2" => "field2",
        _ => "field",
    }
}

impl Sampler<'_> {
    fn fields(&self) -> Vec<String> {
        let s = &self.bundle.schema;
        s.fields
            .iter()
            .map(|f| f.canonical_name.clone())
            .chain(s.composites.iter().map(|c| c.name.clone()))
            .collect()
    }

    fn surface(&self, rng: &mut impl Rng, field: &str) -> String {
        let lex = &self.bundle.entity("field").expect("field entity").lexicon;
        lex[field].choose(rng).cloned().unwrap_or_else(|| field.to_string())
    }

    /// A non-missing cell of `field` shown as text; composites join a row's
    /// parts.
    fn cell(&self, rng: &mut impl Rng, field: &str) -> String {
        let s = &self.bundle.schema;
        let row = rng.gen_range(0..self.table.row_count());
        if let Some(c) = s.composite(field) {
            let parts: Vec<String> = c
                .parts
                .iter()
                .map(|p| self.table.column(p).unwrap().values[row].to_string())
                .collect();
            return parts.join(&c.join_separator);
        }
        let present: Vec<&Value> = self
            .table
            .column(field)
            .unwrap()
            .values
            .iter()
            .filter(|v| !v.is_missing())
            .collect();
        present.choose(rng).unwrap().to_string()
    }

    fn operators(&self, field: &str, arity: usize) -> Vec<&Operator> {
        let view = FieldView::of(&self.bundle.schema, field).unwrap();
        self.bundle
            .operators
            .iter()
            .filter(|o| o.arity() == arity && o.applies_to(view.field_type, view.composite))
            .collect()
    }

    fn value_text(&self, rng: &mut impl Rng, field: &str) -> String {
        let ty = FieldView::of(&self.bundle.schema, field).unwrap().field_type;
        match ty {
            FieldType::Integer if rng.gen_bool(0.5) => {
                let v: Vec<i64> = self
                    .table
                    .column(field)
                    .unwrap()
                    .values
                    .iter()
                    .filter_map(|v| if let Value::Int(i) = v { Some(*i) } else { None })
                    .collect();
                let (lo, hi) = (*v.iter().min().unwrap(), *v.iter().max().unwrap());
                rng.gen_range(lo..=hi).to_string()
            }
            _ => self.cell(rng, field),
        }
    }

    fn name(&self, rng: &mut impl Rng) -> String {
        let label = self.bundle.label_field.clone().expect("label field");
        let full = self.cell(rng, &label);
        let name = if rng.gen_bool(0.5) {
            full
        } else {
            full.split(' ').next_back().unwrap().to_string()
        };
        if rng.gen_bool(0.5) {
            format!("'{name}'")
        } else {
            name
        }
    }

    pub fn utterance(&self, intent: &Intent, rng: &mut impl Rng) -> String {
        let lang = &self.bundle.schema.language;
        let template = intent.training_sentences[lang].choose(rng).unwrap().clone();
        let schema = &self.bundle.schema;
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        let mut owner: Option<String> = None;
        let mut fill: BTreeMap<String, String> = BTreeMap::new();
        if let Some(f) = &intent.bound_field {
            fields.insert("field", f.clone());
        }
        for slot in &intent.slots {
            let text = match &slot.kind {
                SlotKind::Field(pred) => {
                    let ok: Vec<String> = self
                        .fields()
                        .into_iter()
                        .filter(|f| FieldView::of(schema, f).is_some_and(|v| pred.accepts(&v)))
                        .filter(|f| !fields.values().any(|g| g == f))
                        .collect();
                    let f = ok.choose(rng).expect("an accepted field").clone();
                    let s = self.surface(rng, &f);
                    fields.insert(slot.name.as_str(), f);
                    s
                }
                SlotKind::Operator { arity } => {
                    let f = fields[field_of(&slot.name)].clone();
                    let o = *self.operators(&f, *arity).choose(rng).expect("an applicable operator");
                    o.surfaces(lang).choose(rng).unwrap().clone()
                }
                SlotKind::Value => {
                    let f = fields[field_of(&slot.name)].clone();
                    self.value_text(rng, &f)
                }
                SlotKind::Number => rng.gen_range(1..=5).to_string(),
                SlotKind::Text => self.name(rng),
                SlotKind::Category(pred) => {
                    let o = match (&slot.owner, &owner) {
                        (Some(o), _) | (None, Some(o)) => o.clone(),
                        (None, None) => {
                            let ok: Vec<String> = schema
                                .fields
                                .iter()
                                .filter(|f| f.is_categorical())
                                .filter(|f| FieldView::of(schema, &f.canonical_name).is_some_and(|v| pred.accepts(&v)))
                                .map(|f| f.canonical_name.clone())
                                .collect();
                            ok.choose(rng).expect("a categorical field").clone()
                        }
                    };
                    let lex = &self.bundle.entity(&value_entity(&o)).expect("value entity").lexicon;
                    let taken: Vec<&String> = fill.values().collect();
                    let choices: Vec<(&String, &Vec<String>)> = lex
                        .iter()
                        .filter(|(v, syn)| !taken.contains(v) && !syn.iter().any(|s| taken.contains(&s)))
                        .collect();
                    let (value, synonyms) = choices.choose(rng).expect("an unused value");
                    owner = Some(o);
                    let mut forms = vec![(*value).clone()];
                    forms.extend(synonyms.iter().cloned());
                    forms.choose(rng).unwrap().clone()
                }
            };
            fill.insert(slot.fragment.clone(), text);
        }
        fill_template(&template, |w| fill.get(w).cloned())
    }
}
