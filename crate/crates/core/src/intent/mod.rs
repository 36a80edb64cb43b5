//! Utterance matching: tokenization, entity recognition, intent scoring,
//! slot extraction and type checks.
//!
//! Scores are `w_lex * cosine + w_slot * coverage`. The cosine compares
//! token sets in which field, operator and row-alias mentions are replaced
//! by symbols (`field:salary`, `op:greater_than`, `@rows`) and slot fillers
//! are dropped. Coverage is the share of required slots filled, each weighted
//! by how sure the recognizer was of its filler; an intent without slots
//! takes the cosine of content words, stop words removed, as coverage. A
//! match that fails a type check, leaves a field or operator mention
//! unexplained, or names nothing from the dataset when its intent needs
//! something named, has its confidence halved, which puts it below any sane
//! threshold.

mod ner;
mod tokenize;

#[cfg(test)]
mod tests;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use ner::{is_stop_word, parse_number, EntityMention, Lexicon, MentionValue, STOP_WORDS};
pub use tokenize::{tokenize, Token, TokenKind, Utterance};

use crate::generator::{Binding, BotBundle, Intent, IntentSlot};
use crate::ingest::{parse_int, DateOrder, Value};
use crate::patterns::{Action, FieldView, OpExpr, SlotKind};
use crate::query::build_partial_plan;

use ner::{recognize, NerContext};
use tokenize::scan_surface;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntentError {
    #[error("empty utterance")]
    EmptyUtterance,
}

/// Field group the user named without saying which member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupChoice {
    pub group: String,
    /// Slot holding the group; `None` when the intent has the field built in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    /// Candidate members, default member first.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternate {
    pub intent: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub intent: String,
    pub confidence: f64,
    pub lexical: f64,
    pub coverage: f64,
    pub bindings: BTreeMap<String, EntityMention>,
    pub missing_required: Vec<String>,
    /// Unclaimed categorical mentions, as `(field, value)` equality filters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_filters: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_choice: Option<GroupChoice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<Alternate>,
}

impl MatchResult {
    pub fn accepted(&self, threshold: f64) -> bool {
        self.confidence >= threshold && self.violations.is_empty()
    }
}

const BAG_STOP: [&str; 3] = ["a", "an", "the"];
const MAX_ALTERNATES: usize = 4;
const DEMOTION: f64 = 0.5;
const UNEXPECTED: &str = "the question also mentions";

fn cosine(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.intersection(b).count() as f64;
    common / libm::sqrt(a.len() as f64 * b.len() as f64)
}

fn is_symbol(key: &str) -> bool {
    key.starts_with("field:") || key.starts_with("op:") || key == "@rows"
}

fn symbol(value: &MentionValue) -> Option<String> {
    match value {
        MentionValue::Field { name } => Some(format!("field:{name}")),
        MentionValue::Group { id } => Some(format!("field:{id}")),
        MentionValue::Operator { id } => Some(format!("op:{id}")),
        MentionValue::Rows => Some("@rows".into()),
        _ => None,
    }
}

/// Matcher over one bundle. Immutable once built.
#[derive(Debug, Clone)]
pub struct Engine {
    bundle: BotBundle,
    lexicon: Lexicon,
    vocab: BTreeSet<String>,
    bags: Vec<Vec<BTreeSet<String>>>,
    /// The same bags without stop words.
    content_bags: Vec<Vec<BTreeSet<String>>>,
    /// Intents that only make sense when the question names a field,
    /// operator, category or row alias.
    anchored: Vec<bool>,
    date_order: DateOrder,
    locale: String,
}

impl Engine {
    pub fn new(bundle: BotBundle) -> Engine {
        let lexicon = Lexicon::from_bundle(&bundle);
        let locale = bundle
            .locales
            .first()
            .cloned()
            .unwrap_or_else(|| bundle.schema.language.clone());
        let date_order = bundle
            .schema
            .fields
            .iter()
            .find_map(|f| f.date_order)
            .unwrap_or(DateOrder::DayFirst);
        let mut vocab: BTreeSet<String> = lexicon.words().clone();
        let mut tokenized = Vec::new();
        for intent in &bundle.intents {
            let fragments: BTreeSet<&str> = intent.slots.iter().map(|s| s.fragment.as_str()).collect();
            let mut per = Vec::new();
            for s in intent.training_sentences.get(&locale).into_iter().flatten() {
                let tokens = scan_surface(s);
                let skip: Vec<bool> = tokens
                    .iter()
                    .map(|t| t.kind == TokenKind::Word && fragments.contains(t.surface.as_str()))
                    .collect();
                for (t, sk) in tokens.iter().zip(&skip) {
                    if !sk && t.kind == TokenKind::Word {
                        vocab.extend(t.keys());
                    }
                }
                per.push((s.clone(), tokens, skip));
            }
            tokenized.push(per);
        }
        let mut engine = Engine {
            bundle,
            lexicon,
            vocab,
            bags: Vec::new(),
            content_bags: Vec::new(),
            anchored: Vec::new(),
            date_order,
            locale,
        };
        for per in tokenized {
            let (mut bags, mut content) = (Vec::new(), Vec::new());
            for (raw, tokens, skip) in per {
                let mentions = recognize(&engine.ner(), &raw, &tokens, &skip);
                bags.push(training_bag(&tokens, &skip, &mentions, &BAG_STOP));
                content.push(training_bag(&tokens, &skip, &mentions, STOP_WORDS));
            }
            engine.bags.push(bags);
            engine.content_bags.push(content);
        }
        engine.anchored = engine
            .bundle
            .intents
            .iter()
            .zip(&engine.bags)
            .map(|(intent, bags)| {
                let closed_slot = intent.slots.iter().any(|s| {
                    s.required && matches!(s.kind, SlotKind::Field(_) | SlotKind::Operator { .. } | SlotKind::Category(_))
                });
                let symbolic = !bags.is_empty() && bags.iter().all(|b| b.iter().any(|k| is_symbol(k)));
                closed_slot || !intent.bound.is_empty() || symbolic
            })
            .collect();
        engine
    }

    fn ner(&self) -> NerContext<'_> {
        NerContext {
            lexicon: &self.lexicon,
            vocab: &self.vocab,
            date_order: self.date_order,
        }
    }

    pub fn bundle(&self) -> &BotBundle {
        &self.bundle
    }

    pub fn threshold(&self) -> f64 {
        self.bundle.matcher.accept_threshold
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn tokenize(&self, text: &str) -> Result<Utterance, IntentError> {
        tokenize(text, &self.locale)
    }

    pub fn recognize(&self, utt: &Utterance) -> Vec<EntityMention> {
        let skip = alloc::vec![false; utt.tokens.len()];
        recognize(&self.ner(), &utt.raw_text, &utt.tokens, &skip)
    }

    /// Tokenizes, recognizes and matches in one step.
    pub fn match_text(&self, text: &str) -> Result<(Utterance, Vec<EntityMention>, MatchResult), IntentError> {
        let utt = self.tokenize(text)?;
        let mentions = self.recognize(&utt);
        let m = self.match_intent(&utt, &mentions);
        Ok((utt, mentions, m))
    }

    /// Best intent with up to four runners-up. Ties go to the smaller name.
    pub fn match_intent(&self, utt: &Utterance, mentions: &[EntityMention]) -> MatchResult {
        let mut raw: Vec<(f64, usize, Scored)> = (0..self.bundle.intents.len())
            .map(|i| {
                let s = self.score_raw(i, utt, mentions);
                (s.raw, i, s)
            })
            .collect();
        let by_score = |a: f64, ai: usize, b: f64, bi: usize| {
            b.partial_cmp(&a)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then_with(|| self.bundle.intents[ai].name.cmp(&self.bundle.intents[bi].name))
        };
        raw.sort_by(|a, b| by_score(a.0, a.1, b.0, b.1));
        // Validation only lowers scores, so stop once the raw score cannot
        // enter the top list any more.
        let mut done: Vec<MatchResult> = Vec::new();
        let mut idx: Vec<usize> = Vec::new();
        for (r, i, s) in raw {
            if done.len() > MAX_ALTERNATES {
                let mut finals: Vec<f64> = done.iter().map(|m| m.confidence).collect();
                finals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
                if r < finals[MAX_ALTERNATES] {
                    break;
                }
            }
            done.push(self.finish(i, s));
            idx.push(i);
        }
        let mut order: Vec<usize> = (0..done.len()).collect();
        order.sort_by(|&a, &b| by_score(done[a].confidence, idx[a], done[b].confidence, idx[b]));
        let mut best = done[order[0]].clone();
        best.alternates = order[1..]
            .iter()
            .take(MAX_ALTERNATES)
            .map(|&k| Alternate {
                intent: done[k].intent.clone(),
                confidence: done[k].confidence,
            })
            .collect();
        best
    }

    /// Scores a single intent, validation included.
    pub fn score_intent(&self, name: &str, utt: &Utterance, mentions: &[EntityMention]) -> Option<MatchResult> {
        let i = self.bundle.intents.iter().position(|x| x.name == name)?;
        let s = self.score_raw(i, utt, mentions);
        Some(self.finish(i, s))
    }

    fn score_raw(&self, i: usize, utt: &Utterance, mentions: &[EntityMention]) -> Scored {
        let intent = &self.bundle.intents[i];
        let (bindings, used) = self.bind_slots(intent, mentions);
        let required: Vec<&IntentSlot> = intent.slots.iter().filter(|s| s.required).collect();
        let missing: Vec<String> = required
            .iter()
            .filter(|s| !bindings.contains_key(&s.name))
            .map(|s| s.name.clone())
            .collect();
        // Slots fixed at generation count as filled when the question names
        // their field or operator.
        let bound_hit = intent
            .bound
            .values()
            .filter(|b| {
                mentions.iter().any(|m| match (b, &m.value) {
                    (Binding::Field(f), MentionValue::Field { name }) => f == name,
                    (Binding::Field(f), MentionValue::Group { id }) => self.group_members(id).contains(f),
                    (Binding::Operator(o), MentionValue::Operator { id }) => o == id,
                    _ => false,
                })
            })
            .count();
        let total = required.len() + intent.bound.len();
        let bag = self.utterance_bag(intent, utt, mentions, &used, &BAG_STOP);
        let lexical = self.bags[i].iter().map(|b| cosine(&bag, b)).fold(0.0, f64::max);
        let coverage = if total == 0 {
            let words = self.utterance_bag(intent, utt, mentions, &used, STOP_WORDS);
            self.content_bags[i].iter().map(|b| cosine(&words, b)).fold(0.0, f64::max)
        } else {
            let filled: f64 = required.iter().filter_map(|s| bindings.get(&s.name)).map(|b| b.score).sum();
            (filled + bound_hit as f64) / total as f64
        };
        let w = self.bundle.matcher;
        Scored {
            raw: (w.w_lex * lexical + w.w_slot * coverage).clamp(0.0, 1.0),
            lexical,
            coverage,
            bindings,
            used,
            missing,
            mentions: mentions.to_vec(),
        }
    }

    fn finish(&self, i: usize, s: Scored) -> MatchResult {
        let intent = &self.bundle.intents[i];
        let mut violations = Vec::new();
        let mut extra_filters = Vec::new();
        let mut group_choice = None;
        for (k, mention) in s.mentions.iter().enumerate() {
            if s.used.contains(&k) {
                continue;
            }
            match &mention.value {
                MentionValue::Category { field, value } => {
                    if parse_int(value, false).is_none() && matches!(intent.action, Action::Query(_)) {
                        extra_filters.push((field.clone(), value.clone()));
                    }
                }
                MentionValue::Field { name } => {
                    if intent.bound_field.as_deref() != Some(name.as_str()) {
                        violations.push(format!("{UNEXPECTED} field `{name}`"));
                    }
                }
                MentionValue::Group { id } => match &intent.bound_field {
                    Some(f) if self.group_members(id).contains(f) => {
                        let named = s.mentions.iter().any(|m| m.value == MentionValue::Field { name: f.clone() });
                        if !named && group_choice.is_none() {
                            group_choice = self.group_choice(id, None, None);
                        }
                    }
                    _ => violations.push(format!("{UNEXPECTED} field `{id}`")),
                },
                MentionValue::Operator { id }
                    if !self.operator_expected(intent, id) => {
                        violations.push(format!("{UNEXPECTED} operator `{id}`"));
                    }
                _ => {}
            }
        }
        for (slot, b) in &s.bindings {
            if let MentionValue::Group { id } = &b.value {
                let pred = match intent.slot(slot).map(|x| &x.kind) {
                    Some(SlotKind::Field(p)) => Some(p),
                    _ => None,
                };
                if group_choice.is_none() {
                    group_choice = self.group_choice(id, Some(slot.clone()), pred);
                }
            }
        }
        if self.anchored[i] && !s.mentions.iter().any(|m| m.value.is_closed()) {
            violations.push("the question names nothing from the dataset".into());
        }
        let mut m = MatchResult {
            intent: intent.name.clone(),
            confidence: s.raw,
            lexical: s.lexical,
            coverage: s.coverage,
            bindings: s.bindings,
            missing_required: s.missing,
            extra_filters,
            group_choice,
            violations,
            alternates: Vec::new(),
        };
        self.check_types(intent, &mut m);
        m
    }

    /// Recomputes confidence and type checks, for matches edited after
    /// scoring.
    pub fn revalidate(&self, mut m: MatchResult) -> MatchResult {
        let Some(intent) = self.bundle.intent(&m.intent) else {
            return m;
        };
        let w = self.bundle.matcher;
        m.violations.retain(|v| v.starts_with(UNEXPECTED));
        m.confidence = (w.w_lex * m.lexical + w.w_slot * m.coverage).clamp(0.0, 1.0);
        self.check_types(intent, &mut m);
        m
    }

    fn check_types(&self, intent: &Intent, m: &mut MatchResult) {
        let owners: Vec<&str> = m
            .bindings
            .iter()
            .filter(|(slot, _)| matches!(intent.slot(slot).map(|s| &s.kind), Some(SlotKind::Category(_))))
            .filter_map(|(_, b)| match &b.value {
                MentionValue::Category { field, .. } => Some(field.as_str()),
                _ => None,
            })
            .collect();
        if let Action::Query(t) = &intent.action {
            if t.group_by.is_some() && owners.windows(2).any(|w| w[0] != w[1]) {
                m.violations.push("the values belong to different fields".into());
            }
        }
        if let Err(e) = build_partial_plan(intent, m, &self.bundle) {
            m.violations.push(e.to_string());
        }
        if !m.violations.is_empty() {
            m.confidence *= DEMOTION;
        }
    }

    fn operator_expected(&self, intent: &Intent, id: &str) -> bool {
        if intent.bound_operator.as_deref() == Some(id) {
            return true;
        }
        let Some(op) = self.bundle.operator(id) else {
            return false;
        };
        match &intent.action {
            Action::Query(t) => t.filters.iter().any(|f| f.op == OpExpr::Fixed(op.op)),
            Action::Meta(_) => false,
        }
    }

    fn group_members(&self, id: &str) -> Vec<String> {
        self.bundle
            .schema
            .group(id)
            .map(|g| g.member_fields.clone())
            .unwrap_or_default()
    }

    fn group_choice(
        &self,
        id: &str,
        slot: Option<String>,
        pred: Option<&crate::patterns::FieldPredicate>,
    ) -> Option<GroupChoice> {
        let g = self.bundle.schema.group(id)?;
        let mut members: Vec<String> = g
            .member_fields
            .iter()
            .filter(|f| {
                pred.is_none_or(|p| {
                    FieldView::of(&self.bundle.schema, f).is_some_and(|v| p.accepts(&v))
                })
            })
            .cloned()
            .collect();
        if let Some(d) = &g.default_member {
            if let Some(pos) = members.iter().position(|m| m == d) {
                let d = members.remove(pos);
                members.insert(0, d);
            }
        }
        (members.len() > 1).then(|| GroupChoice {
            group: id.to_string(),
            slot,
            members,
        })
    }

    /// Applies the user's pick of a group member. Returns `None` when the
    /// member is not offered.
    pub fn resolve_group(&self, pending: &MatchResult, member: &str) -> Option<MatchResult> {
        let choice = pending.group_choice.as_ref()?;
        if !choice.members.iter().any(|m| m == member) {
            return None;
        }
        let mut m = pending.clone();
        m.group_choice = None;
        match &choice.slot {
            Some(slot) => {
                let b = m.bindings.get_mut(slot)?;
                b.value = MentionValue::Field { name: member.to_string() };
                b.entity = crate::generator::ENTITY_FIELD.into();
            }
            None => {
                let cur = self.bundle.intent(&pending.intent)?;
                let sibling = self.bundle.intents.iter().find(|i| {
                    i.pattern == cur.pattern
                        && i.bound_operator == cur.bound_operator
                        && i.bound_field.as_deref() == Some(member)
                })?;
                m.intent = sibling.name.clone();
            }
        }
        Some(self.revalidate(m))
    }

    /// Fills `slot` of a pending match from a clarification reply. Returns
    /// `None` when the reply holds nothing compatible.
    pub fn bind_reply(&self, pending: &MatchResult, slot: &str, reply: &[EntityMention]) -> Option<MatchResult> {
        let intent = self.bundle.intent(&pending.intent)?;
        let spec = intent.slot(slot)?;
        let mention = reply.iter().find_map(|m| self.compatible(spec, m))?;
        let mut m = pending.clone();
        m.bindings.insert(slot.to_string(), mention);
        m.missing_required.retain(|s| s != slot);
        let total = intent.slots.iter().filter(|s| s.required).count() + intent.bound.len();
        if spec.required {
            m.coverage = (m.coverage + 1.0 / total as f64).min(1.0);
        }
        Some(self.revalidate(m))
    }

    fn bind_slots(&self, intent: &Intent, mentions: &[EntityMention]) -> (BTreeMap<String, EntityMention>, BTreeSet<usize>) {
        let mut bindings = BTreeMap::new();
        let mut used = BTreeSet::new();
        for slot in &intent.slots {
            for (k, m) in mentions.iter().enumerate() {
                if used.contains(&k) {
                    continue;
                }
                if let Some(b) = self.compatible(slot, m) {
                    bindings.insert(slot.name.clone(), b);
                    used.insert(k);
                    break;
                }
            }
        }
        (bindings, used)
    }

    /// The mention with the reading the slot accepts, if any.
    pub fn compatible(&self, slot: &IntentSlot, m: &EntityMention) -> Option<EntityMention> {
        let schema = &self.bundle.schema;
        let view_ok = |p: &crate::patterns::FieldPredicate, f: &str| FieldView::of(schema, f).is_some_and(|v| p.accepts(&v));
        let reading = m.readings().find(|(_, v)| match (&slot.kind, v) {
            (SlotKind::Field(p), MentionValue::Field { name }) => view_ok(p, name),
            (SlotKind::Field(p), MentionValue::Group { id }) => self.group_members(id).iter().any(|f| view_ok(p, f)),
            (SlotKind::Operator { arity }, MentionValue::Operator { id }) => {
                self.bundle.operator(id).is_some_and(|o| o.arity() == *arity)
            }
            (SlotKind::Number, MentionValue::Number { value: Value::Int(n) }) => *n >= 0,
            (SlotKind::Number, MentionValue::Category { value, .. }) => parse_int(value, false).is_some_and(|n| n >= 0),
            (SlotKind::Value, v) => matches!(
                v,
                MentionValue::Number { .. }
                    | MentionValue::Date { .. }
                    | MentionValue::Literal { .. }
                    | MentionValue::Category { .. }
            ),
            (SlotKind::Text, MentionValue::Literal { .. }) => true,
            (SlotKind::Text, MentionValue::Category { value, .. }) => parse_int(value, false).is_none(),
            (SlotKind::Category(p), MentionValue::Category { field, .. }) => {
                view_ok(p, field) && slot.owner.as_deref().is_none_or(|o| o == field)
            }
            _ => false,
        })?;
        let (entity, value) = (reading.0.to_string(), reading.1.clone());
        let mut out = m.clone();
        out.entity = entity;
        out.value = value;
        out.alternates.clear();
        Some(out)
    }

    fn utterance_bag(
        &self,
        intent: &Intent,
        utt: &Utterance,
        mentions: &[EntityMention],
        used: &BTreeSet<usize>,
        stop: &[&str],
    ) -> BTreeSet<String> {
        let mut covered = alloc::vec![false; utt.tokens.len()];
        let mut bag = BTreeSet::new();
        for (k, m) in mentions.iter().enumerate() {
            covered[m.tokens.0..m.tokens.1].iter_mut().for_each(|c| *c = true);
            if used.contains(&k) {
                continue;
            }
            let sym = match &m.value {
                MentionValue::Group { id } => match &intent.bound_field {
                    Some(f) if self.group_members(id).contains(f) => Some(format!("field:{f}")),
                    _ => symbol(&m.value),
                },
                // An open value no slot took is left unexplained.
                MentionValue::Literal { .. } | MentionValue::Number { .. } | MentionValue::Date { .. } => {
                    Some("@value".into())
                }
                v => symbol(v),
            };
            bag.extend(sym);
        }
        add_plain_tokens(&mut bag, &utt.tokens, &covered, stop);
        bag
    }
}

struct Scored {
    raw: f64,
    lexical: f64,
    coverage: f64,
    bindings: BTreeMap<String, EntityMention>,
    used: BTreeSet<usize>,
    missing: Vec<String>,
    mentions: Vec<EntityMention>,
}

fn add_plain_tokens(bag: &mut BTreeSet<String>, tokens: &[Token], covered: &[bool], stop: &[&str]) {
    for (t, c) in tokens.iter().zip(covered) {
        if *c {
            continue;
        }
        if t.kind == TokenKind::Word && stop.contains(&t.normalized.as_str()) {
            continue;
        }
        bag.extend(t.keys());
    }
}

fn training_bag(tokens: &[Token], skip: &[bool], mentions: &[EntityMention], stop: &[&str]) -> BTreeSet<String> {
    let mut covered: Vec<bool> = skip.to_vec();
    let mut bag = BTreeSet::new();
    for m in mentions {
        covered[m.tokens.0..m.tokens.1].iter_mut().for_each(|c| *c = true);
        bag.extend(symbol(&m.value));
    }
    add_plain_tokens(&mut bag, tokens, &covered, stop);
    bag
}
