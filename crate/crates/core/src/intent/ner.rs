use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::generator::{BotBundle, EntityKind};
use crate::ingest::{parse_date, parse_float, parse_int, DateOrder, Value};

use super::tokenize::{scan_surface, Token, TokenKind};

/// Words that match a categorical value only when quoted.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "did", "do", "does", "for", "from", "has", "have", "he",
    "her", "his", "how", "i", "in", "is", "it", "its", "many", "me", "much", "my", "no", "not", "of", "on", "or",
    "she", "that", "the", "their", "there", "they", "this", "to", "was", "we", "were", "what", "which", "who",
    "with", "you", "your",
];

pub fn is_stop_word(key: &str) -> bool {
    STOP_WORDS.contains(&key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MentionValue {
    Field { name: String },
    Group { id: String },
    Operator { id: String },
    Category { field: String, value: String },
    Rows,
    Number { value: Value },
    Date { value: Value },
    Literal { text: String },
}

impl MentionValue {
    pub fn is_closed(&self) -> bool {
        matches!(
            self,
            MentionValue::Field { .. }
                | MentionValue::Group { .. }
                | MentionValue::Operator { .. }
                | MentionValue::Category { .. }
                | MentionValue::Rows
        )
    }

    /// The literal a value slot receives.
    pub fn as_value(&self) -> Option<Value> {
        match self {
            MentionValue::Number { value } | MentionValue::Date { value } => Some(value.clone()),
            MentionValue::Literal { text } => Some(Value::Text(text.clone())),
            MentionValue::Category { value, .. } => Some(Value::Text(value.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub entity: String,
    pub value: MentionValue,
    pub surface: String,
    /// Byte range in the raw text.
    pub span: (usize, usize),
    /// Token range, end exclusive.
    pub tokens: (usize, usize),
    pub score: f64,
    /// Other readings of the same span, such as a value shared by two
    /// categorical fields.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<(String, MentionValue)>,
}

impl EntityMention {
    pub fn readings(&self) -> impl Iterator<Item = (&str, &MentionValue)> {
        core::iter::once((self.entity.as_str(), &self.value)).chain(self.alternates.iter().map(|(e, v)| (e.as_str(), v)))
    }
}

#[derive(Debug, Clone)]
struct LexEntry {
    entity: String,
    value: MentionValue,
    priority: u8,
    quoted_only: bool,
}

/// Closed lexicons indexed by token-key phrase.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    phrases: BTreeMap<Vec<String>, Vec<LexEntry>>,
    max_len: usize,
    words: BTreeSet<String>,
}

fn priority(kind: EntityKind) -> u8 {
    match kind {
        EntityKind::FieldEntity => 0,
        EntityKind::CategoricalValueEntity => 1,
        EntityKind::OperatorEntity => 2,
        _ => 3,
    }
}

impl Lexicon {
    pub fn from_bundle(bundle: &BotBundle) -> Lexicon {
        let mut lex = Lexicon::default();
        for e in &bundle.entities {
            for (canonical, synonyms) in &e.lexicon {
                let value = match e.kind {
                    EntityKind::FieldEntity if bundle.schema.field(canonical).is_none()
                        && bundle.schema.composite(canonical).is_none() =>
                    {
                        MentionValue::Group { id: canonical.clone() }
                    }
                    EntityKind::FieldEntity => MentionValue::Field { name: canonical.clone() },
                    EntityKind::OperatorEntity => MentionValue::Operator { id: canonical.clone() },
                    EntityKind::CategoricalValueEntity => MentionValue::Category {
                        field: e.field.clone().unwrap_or_default(),
                        value: canonical.clone(),
                    },
                    EntityKind::RowAliasEntity => MentionValue::Rows,
                    _ => continue,
                };
                let surfaces = core::iter::once(canonical).chain(synonyms.iter());
                for s in surfaces {
                    if e.kind == EntityKind::RowAliasEntity && s == canonical {
                        continue;
                    }
                    let key: Vec<String> = scan_surface(s).iter().flat_map(Token::keys).collect();
                    if key.is_empty() {
                        continue;
                    }
                    let quoted_only =
                        e.kind == EntityKind::CategoricalValueEntity && key.iter().all(|k| is_stop_word(k));
                    lex.add(key, LexEntry {
                        entity: e.name.clone(),
                        value: value.clone(),
                        priority: priority(e.kind),
                        quoted_only,
                    });
                }
            }
        }
        lex
    }

    fn add(&mut self, key: Vec<String>, entry: LexEntry) {
        self.max_len = self.max_len.max(key.len());
        self.words.extend(key.iter().cloned());
        let slot = self.phrases.entry(key).or_default();
        if !slot.iter().any(|e| e.entity == entry.entity && e.value == entry.value) {
            slot.push(entry);
        }
    }

    /// Every word key used by some closed surface.
    pub fn words(&self) -> &BTreeSet<String> {
        &self.words
    }
}

/// Reads `120000`, `120,000`, `1.5`, `120k`.
pub fn parse_number(s: &str) -> Option<Value> {
    let (body, mult) = match s.strip_suffix(['k', 'K']) {
        Some(b) => (b, 1000),
        None => (s, 1),
    };
    if let Some(i) = parse_int(body, false) {
        return i.checked_mul(mult).map(Value::Int);
    }
    let f = parse_float(body, false)? * mult as f64;
    if mult > 1 && libm::trunc(f) == f && f.abs() < 9.0e15 {
        return Some(Value::Int(f as i64));
    }
    Some(Value::Float(f))
}

struct Candidate {
    start: usize,
    end: usize,
    width: usize,
    closed: bool,
    priority: u8,
    readings: Vec<(String, MentionValue)>,
    score: f64,
}

pub struct NerContext<'a> {
    pub lexicon: &'a Lexicon,
    /// Word keys of training sentences and lexicons.
    pub vocab: &'a BTreeSet<String>,
    pub date_order: DateOrder,
}

/// Recognizes mentions over `tokens`, ignoring tokens flagged in `skip`.
pub fn recognize(ctx: &NerContext<'_>, raw: &str, tokens: &[Token], skip: &[bool]) -> Vec<EntityMention> {
    let n = tokens.len();
    let mut cands = Vec::new();
    let keys: Vec<Vec<String>> = tokens.iter().map(Token::keys).collect();
    for i in 0..n {
        if skip[i] {
            continue;
        }
        let t = &tokens[i];
        match t.kind {
            TokenKind::Quoted => {
                let closed = ctx.lexicon.phrases.get(&keys[i]).map(|es| best_entries(es, true));
                match closed {
                    Some(es) if !es.is_empty() => cands.push(closed_candidate(i, i + 1, keys[i].len(), es)),
                    _ => cands.push(Candidate {
                        start: i,
                        end: i + 1,
                        width: keys[i].len(),
                        closed: false,
                        priority: 9,
                        readings: alloc::vec![(
                            crate::generator::ENTITY_LITERAL.to_string(),
                            MentionValue::Literal { text: t.surface.clone() }
                        )],
                        score: 1.0,
                    }),
                }
                continue;
            }
            TokenKind::Number => {
                if let Some(v) = parse_number(&t.surface) {
                    cands.push(open_candidate(i, crate::generator::ENTITY_NUMBER, MentionValue::Number { value: v }));
                } else if let Some(d) = parse_date(&t.surface, Some(ctx.date_order)) {
                    cands.push(open_candidate(
                        i,
                        crate::generator::ENTITY_DATE,
                        MentionValue::Date { value: Value::Date(d) },
                    ));
                }
            }
            _ => {}
        }
        let mut key = Vec::new();
        for end in i + 1..=n.min(i + ctx.lexicon.max_len) {
            let j = end - 1;
            if skip[j] || tokens[j].kind == TokenKind::Quoted {
                break;
            }
            key.extend(keys[j].iter().cloned());
            if let Some(es) = ctx.lexicon.phrases.get(&key) {
                let es = best_entries(es, false);
                if !es.is_empty() {
                    cands.push(closed_candidate(i, end, key.len(), es));
                }
            }
        }
    }
    cands.sort_by(|a, b| {
        b.width
            .cmp(&a.width)
            .then(b.closed.cmp(&a.closed))
            .then(a.priority.cmp(&b.priority))
            .then(a.start.cmp(&b.start))
    });
    let mut covered = alloc::vec![false; n];
    let mut chosen = Vec::new();
    for c in cands {
        if covered[c.start..c.end].iter().any(|x| *x) {
            continue;
        }
        covered[c.start..c.end].iter_mut().for_each(|x| *x = true);
        chosen.push(c);
    }
    // Capitalized runs outside every lexicon read as names.
    let mut i = 0;
    while i < n {
        let free = |k: usize| {
            let t = &tokens[k];
            !skip[k]
                && !covered[k]
                && t.kind == TokenKind::Word
                && t.starts_upper()
                && !is_stop_word(&keys[k][0])
                && !ctx.vocab.contains(&keys[k][0])
        };
        if !free(i) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && free(j) {
            j += 1;
        }
        // A lone capitalized first word is just the start of the sentence.
        if i == 0 && j == 1 {
            i = j;
            continue;
        }
        let text = raw[tokens[i].span.0..tokens[j - 1].span.1].to_string();
        chosen.push(Candidate {
            start: i,
            end: j,
            width: j - i,
            closed: false,
            priority: 9,
            readings: alloc::vec![(crate::generator::ENTITY_LITERAL.to_string(), MentionValue::Literal { text })],
            score: 0.6,
        });
        i = j;
    }
    chosen.sort_by_key(|c| c.start);
    chosen
        .into_iter()
        .map(|c| {
            let mut readings = c.readings.into_iter();
            let (entity, value) = readings.next().expect("candidate has a reading");
            let span = (tokens[c.start].span.0, tokens[c.end - 1].span.1);
            EntityMention {
                entity,
                value,
                surface: raw[span.0..span.1].to_string(),
                span,
                tokens: (c.start, c.end),
                score: c.score,
                alternates: readings.collect(),
            }
        })
        .collect()
}

fn best_entries(es: &[LexEntry], quoted: bool) -> Vec<&LexEntry> {
    let usable: Vec<&LexEntry> = es.iter().filter(|e| quoted || !e.quoted_only).collect();
    let Some(best) = usable.iter().map(|e| e.priority).min() else {
        return Vec::new();
    };
    usable.into_iter().filter(|e| e.priority == best).collect()
}

fn closed_candidate(start: usize, end: usize, width: usize, es: Vec<&LexEntry>) -> Candidate {
    Candidate {
        start,
        end,
        width,
        closed: true,
        priority: es[0].priority,
        readings: es.iter().map(|e| (e.entity.clone(), e.value.clone())).collect(),
        score: 1.0,
    }
}

fn open_candidate(i: usize, entity: &str, value: MentionValue) -> Candidate {
    Candidate {
        start: i,
        end: i + 1,
        width: 1,
        closed: false,
        priority: 9,
        readings: alloc::vec![(entity.to_string(), value)],
        score: 1.0,
    }
}
