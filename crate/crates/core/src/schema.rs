//! Data description of a table plus the enrichment commands that refine it.
//!
//! A [`DataSchema`] is a plain value: every edit produces a new schema and
//! revalidates all invariants. The serialized form is a versioned JSON
//! document whose field names are part of the public contract.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::{compute_field_stats, DateOrder, FieldStats, FieldType, SourceMeta, Table};
use crate::text::{fold_and_stem, humanize, name_key};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LANGUAGE: &str = "en";
pub const DEFAULT_ROW_ALIAS: &str = "rows";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("`{surface}` is already used by {owner}")]
    SynonymCollision { surface: String, owner: String },
    #[error("field `{field}` already belongs to group `{group}`")]
    GroupMembershipConflict { field: String, group: String },
    #[error("composite `{0}` shadows an existing field")]
    CompositeShadowsField(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("unsupported schema format version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("integrity violation at {path}: {reason}")]
    IntegrityViolation { path: String, reason: String },
    #[error("malformed schema document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub canonical_name: String,
    /// Locale tag to display name.
    #[serde(default)]
    pub display_names: BTreeMap<String, String>,
    /// Locale tag to synonyms.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
    #[serde(rename = "type")]
    pub field_type: FieldType,
    pub stats: FieldStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    /// Categorical value to alternative wordings (`F` → `women`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub value_synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_order: Option<DateOrder>,
}

impl FieldDescriptor {
    pub fn is_categorical(&self) -> bool {
        self.stats.is_categorical
    }

    /// Every wording that refers to this field, in a stable order.
    pub fn surfaces(&self) -> Vec<String> {
        let mut out = alloc::vec![self.canonical_name.clone(), humanize(&self.canonical_name)];
        out.extend(self.display_names.values().cloned());
        for syns in self.synonyms.values() {
            out.extend(syns.iter().cloned());
        }
        dedup_folded(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeField {
    pub name: String,
    pub parts: Vec<String>,
    #[serde(default = "default_separator")]
    pub join_separator: String,
}

fn default_separator() -> String {
    " ".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldGroup {
    pub group_id: String,
    pub member_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_member: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub format_version: u32,
    pub language: String,
    pub categorical_threshold: usize,
    pub source: SourceMeta,
    pub fields: Vec<FieldDescriptor>,
    pub row_aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub composites: Vec<CompositeField>,
    #[serde(default)]
    pub groups: Vec<FieldGroup>,
}

/// What a normalized wording refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SurfaceOwner {
    Field(String),
    Composite(String),
    Group(String),
}

impl core::fmt::Display for SurfaceOwner {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SurfaceOwner::Field(n) => write!(f, "field `{n}`"),
            SurfaceOwner::Composite(n) => write!(f, "composite `{n}`"),
            SurfaceOwner::Group(n) => write!(f, "group `{n}`"),
        }
    }
}

/// One schema edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Enrichment {
    AddSynonym {
        field: String,
        #[serde(default)]
        locale: Option<String>,
        synonym: String,
    },
    RemoveSynonym {
        field: String,
        #[serde(default)]
        locale: Option<String>,
        synonym: String,
    },
    SetDisplayName {
        field: String,
        #[serde(default)]
        locale: Option<String>,
        name: String,
    },
    AddValueSynonym {
        field: String,
        value: String,
        synonym: String,
    },
    RemoveValueSynonym {
        field: String,
        value: String,
        synonym: String,
    },
    AddRowAlias {
        #[serde(default)]
        locale: Option<String>,
        alias: String,
    },
    RemoveRowAlias {
        #[serde(default)]
        locale: Option<String>,
        alias: String,
    },
    AddComposite {
        name: String,
        parts: Vec<String>,
        #[serde(default)]
        separator: Option<String>,
    },
    RemoveComposite {
        name: String,
    },
    AddGroup {
        group_id: String,
        members: Vec<String>,
        #[serde(default)]
        default_member: Option<String>,
    },
    RemoveGroup {
        group_id: String,
    },
}

/// Builds the fully automatic schema: one descriptor per column, no
/// composites or groups, and the single row alias `rows`.
pub fn build_default_schema(table: &Table, categorical_threshold: usize, language: &str) -> DataSchema {
    let fields = table
        .columns()
        .iter()
        .map(|c| {
            let stats = compute_field_stats(table, &c.name, categorical_threshold)
                .expect("column exists");
            let mut display_names = BTreeMap::new();
            display_names.insert(language.to_string(), humanize(&c.name));
            FieldDescriptor {
                canonical_name: c.name.clone(),
                display_names,
                synonyms: BTreeMap::new(),
                field_type: c.field_type,
                stats,
                group_id: None,
                value_synonyms: BTreeMap::new(),
                date_order: c.date_order,
            }
        })
        .collect();
    let mut row_aliases = BTreeMap::new();
    row_aliases.insert(language.to_string(), alloc::vec![DEFAULT_ROW_ALIAS.to_string()]);
    DataSchema {
        format_version: SCHEMA_FORMAT_VERSION,
        language: language.to_string(),
        categorical_threshold,
        source: table.source().clone(),
        fields,
        row_aliases,
        composites: Vec::new(),
        groups: Vec::new(),
    }
}

impl DataSchema {
    pub fn field(&self, name: &str) -> Option<&FieldDescriptor> {
        let key = name_key(name);
        self.fields
            .iter()
            .find(|f| name_key(&f.canonical_name) == key)
    }

    fn field_index(&self, name: &str) -> Result<usize, SchemaError> {
        let key = name_key(name);
        self.fields
            .iter()
            .position(|f| name_key(&f.canonical_name) == key)
            .ok_or_else(|| SchemaError::UnknownField(name.to_string()))
    }

    pub fn composite(&self, name: &str) -> Option<&CompositeField> {
        let key = name_key(name);
        self.composites.iter().find(|c| name_key(&c.name) == key)
    }

    pub fn group(&self, id: &str) -> Option<&FieldGroup> {
        let key = name_key(id);
        self.groups.iter().find(|g| name_key(&g.group_id) == key)
    }

    pub fn group_of(&self, field: &str) -> Option<&FieldGroup> {
        let key = name_key(field);
        self.groups
            .iter()
            .find(|g| g.member_fields.iter().any(|m| name_key(m) == key))
    }

    /// Type of a real or composite field. Composites behave as text.
    pub fn field_type(&self, name: &str) -> Option<FieldType> {
        if let Some(f) = self.field(name) {
            return Some(f.field_type);
        }
        self.composite(name).map(|_| FieldType::Text)
    }

    /// Row aliases for the primary language, never empty.
    pub fn primary_row_aliases(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .row_aliases
            .get(&self.language)
            .cloned()
            .unwrap_or_default();
        if out.is_empty() {
            out.push(DEFAULT_ROW_ALIAS.to_string());
        }
        out
    }

    /// Map from normalized wording to what it names. Fails on the first
    /// wording claimed by two different owners.
    pub fn surface_index(&self) -> Result<BTreeMap<String, SurfaceOwner>, SchemaError> {
        let mut index: BTreeMap<String, SurfaceOwner> = BTreeMap::new();
        fn claim(
            index: &mut BTreeMap<String, SurfaceOwner>,
            surface: &str,
            owner: SurfaceOwner,
        ) -> Result<(), SchemaError> {
            let key = name_key(surface);
            if key.is_empty() {
                return Ok(());
            }
            match index.get(&key) {
                Some(existing) if *existing != owner => Err(SchemaError::SynonymCollision {
                    surface: surface.to_string(),
                    owner: existing.to_string(),
                }),
                Some(_) => Ok(()),
                None => {
                    index.insert(key, owner);
                    Ok(())
                }
            }
        }
        // Canonical names first so that collisions report the real owner.
        for f in &self.fields {
            claim(&mut index, &f.canonical_name, SurfaceOwner::Field(f.canonical_name.clone()))?;
        }
        for f in &self.fields {
            for s in f.surfaces() {
                claim(&mut index, &s, SurfaceOwner::Field(f.canonical_name.clone()))?;
            }
        }
        for c in &self.composites {
            if index.contains_key(&name_key(&c.name)) {
                return Err(SchemaError::CompositeShadowsField(c.name.clone()));
            }
            claim(&mut index, &c.name, SurfaceOwner::Composite(c.name.clone()))?;
            claim(&mut index, &humanize(&c.name), SurfaceOwner::Composite(c.name.clone()))?;
        }
        for g in &self.groups {
            claim(&mut index, &g.group_id, SurfaceOwner::Group(g.group_id.clone()))?;
            claim(&mut index, &humanize(&g.group_id), SurfaceOwner::Group(g.group_id.clone()))?;
        }
        Ok(index)
    }

    /// Checks every invariant. Referential problems are reported with the
    /// path of the offending element.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.format_version != SCHEMA_FORMAT_VERSION {
            return Err(SchemaError::SchemaVersionMismatch {
                found: self.format_version as u64,
                expected: SCHEMA_FORMAT_VERSION,
            });
        }
        let violation = |path: String, reason: &str| SchemaError::IntegrityViolation {
            path,
            reason: reason.to_string(),
        };
        let mut names = BTreeMap::new();
        for (i, f) in self.fields.iter().enumerate() {
            if names.insert(name_key(&f.canonical_name), i).is_some() {
                return Err(violation(format!("fields[{i}].canonical_name"), "duplicate field name"));
            }
            if f.field_type != f.stats.inferred_type {
                return Err(violation(format!("fields[{i}].type"), "type disagrees with stats"));
            }
            if f.stats.is_categorical == f.stats.value_lexicon.is_empty() {
                return Err(violation(
                    format!("fields[{i}].stats.value_lexicon"),
                    "lexicon must be present exactly for categorical fields",
                ));
            }
            for value in f.value_synonyms.keys() {
                if !f.stats.value_lexicon.iter().any(|v| fold_and_stem(v) == fold_and_stem(value)) {
                    return Err(violation(
                        format!("fields[{i}].value_synonyms.{value}"),
                        "not a categorical value of this field",
                    ));
                }
            }
            for locale in f.display_names.keys().chain(f.synonyms.keys()) {
                if !is_locale_tag(locale) {
                    return Err(violation(format!("fields[{i}].{locale}"), "invalid locale tag"));
                }
            }
        }
        for (ci, c) in self.composites.iter().enumerate() {
            if c.parts.len() < 2 {
                return Err(violation(format!("composites[{ci}].parts"), "needs at least two parts"));
            }
            for (pi, p) in c.parts.iter().enumerate() {
                if self.field(p).is_none() {
                    return Err(violation(format!("composites[{ci}].parts[{pi}]"), "unknown field"));
                }
                if c.parts[..pi].iter().any(|q| name_key(q) == name_key(p)) {
                    return Err(violation(format!("composites[{ci}].parts[{pi}]"), "duplicate part"));
                }
            }
        }
        let mut membership: BTreeMap<String, String> = BTreeMap::new();
        for (gi, g) in self.groups.iter().enumerate() {
            if g.member_fields.len() < 2 {
                return Err(violation(format!("groups[{gi}].member_fields"), "needs at least two members"));
            }
            for (mi, m) in g.member_fields.iter().enumerate() {
                let Some(f) = self.field(m) else {
                    return Err(violation(format!("groups[{gi}].member_fields[{mi}]"), "unknown field"));
                };
                if let Some(other) = membership.insert(name_key(m), g.group_id.clone()) {
                    return Err(SchemaError::GroupMembershipConflict {
                        field: m.clone(),
                        group: other,
                    });
                }
                if f.group_id.as_deref().map(name_key) != Some(name_key(&g.group_id)) {
                    return Err(violation(
                        format!("fields[{}].group_id", self.field_index(m)?),
                        "does not point back to its group",
                    ));
                }
            }
            if let Some(d) = &g.default_member {
                if !g.member_fields.iter().any(|m| name_key(m) == name_key(d)) {
                    return Err(violation(format!("groups[{gi}].default_member"), "not a member"));
                }
            }
        }
        for (i, f) in self.fields.iter().enumerate() {
            if let Some(gid) = &f.group_id {
                if !membership.contains_key(&name_key(&f.canonical_name)) {
                    return Err(violation(format!("fields[{i}].group_id"), &format!("group `{gid}` does not list it")));
                }
            }
        }
        for (locale, aliases) in &self.row_aliases {
            if !is_locale_tag(locale) {
                return Err(violation(format!("row_aliases.{locale}"), "invalid locale tag"));
            }
            if aliases.is_empty() {
                return Err(violation(format!("row_aliases.{locale}"), "needs at least one alias"));
            }
        }
        if !self.row_aliases.contains_key(&self.language) {
            return Err(violation("row_aliases".to_string(), "missing primary language"));
        }
        self.surface_index()?;
        Ok(())
    }

    /// Returns a new schema with `edit` applied; `self` is untouched.
    pub fn apply(&self, edit: &Enrichment) -> Result<DataSchema, SchemaError> {
        let mut s = self.clone();
        let lang = |l: &Option<String>| l.clone().unwrap_or_else(|| self.language.clone());
        let check_locale = |l: &str| {
            if is_locale_tag(l) {
                Ok(())
            } else {
                Err(SchemaError::InvalidEdit(format!("invalid locale tag `{l}`")))
            }
        };
        match edit {
            Enrichment::AddSynonym { field, locale, synonym } => {
                let i = s.field_index(field)?;
                let l = lang(locale);
                check_locale(&l)?;
                let list = s.fields[i].synonyms.entry(l).or_default();
                if !list.iter().any(|x| fold_and_stem(x) == fold_and_stem(synonym)) {
                    list.push(synonym.trim().to_string());
                }
            }
            Enrichment::RemoveSynonym { field, locale, synonym } => {
                let i = s.field_index(field)?;
                let l = lang(locale);
                if let Some(list) = s.fields[i].synonyms.get_mut(&l) {
                    list.retain(|x| fold_and_stem(x) != fold_and_stem(synonym));
                    if list.is_empty() {
                        s.fields[i].synonyms.remove(&l);
                    }
                }
            }
            Enrichment::SetDisplayName { field, locale, name } => {
                let i = s.field_index(field)?;
                let l = lang(locale);
                check_locale(&l)?;
                s.fields[i].display_names.insert(l, name.trim().to_string());
            }
            Enrichment::AddValueSynonym { field, value, synonym } => {
                let i = s.field_index(field)?;
                let f = &mut s.fields[i];
                let Some(canon) = f
                    .stats
                    .value_lexicon
                    .iter()
                    .find(|v| fold_and_stem(v) == fold_and_stem(value))
                    .cloned()
                else {
                    return Err(SchemaError::InvalidEdit(format!(
                        "`{value}` is not a categorical value of `{}`",
                        f.canonical_name
                    )));
                };
                let list = f.value_synonyms.entry(canon).or_default();
                if !list.iter().any(|x| fold_and_stem(x) == fold_and_stem(synonym)) {
                    list.push(synonym.trim().to_string());
                }
            }
            Enrichment::RemoveValueSynonym { field, value, synonym } => {
                let i = s.field_index(field)?;
                let f = &mut s.fields[i];
                let key = f
                    .value_synonyms
                    .keys()
                    .find(|v| fold_and_stem(v) == fold_and_stem(value))
                    .cloned();
                if let Some(k) = key {
                    let list = f.value_synonyms.get_mut(&k).expect("key exists");
                    list.retain(|x| fold_and_stem(x) != fold_and_stem(synonym));
                    if list.is_empty() {
                        f.value_synonyms.remove(&k);
                    }
                }
            }
            Enrichment::AddRowAlias { locale, alias } => {
                let l = lang(locale);
                check_locale(&l)?;
                let list = s.row_aliases.entry(l).or_default();
                if !list.iter().any(|x| fold_and_stem(x) == fold_and_stem(alias)) {
                    list.push(alias.trim().to_string());
                }
            }
            Enrichment::RemoveRowAlias { locale, alias } => {
                let l = lang(locale);
                if let Some(list) = s.row_aliases.get_mut(&l) {
                    list.retain(|x| fold_and_stem(x) != fold_and_stem(alias));
                    if list.is_empty() {
                        if l == s.language {
                            list.push(DEFAULT_ROW_ALIAS.to_string());
                        } else {
                            s.row_aliases.remove(&l);
                        }
                    }
                }
            }
            Enrichment::AddComposite { name, parts, separator } => {
                for p in parts {
                    s.field_index(p)?;
                }
                if s.field(name).is_some() {
                    return Err(SchemaError::CompositeShadowsField(name.clone()));
                }
                if s.composite(name).is_some() {
                    return Err(SchemaError::InvalidEdit(format!("composite `{name}` already exists")));
                }
                if parts.len() < 2 {
                    return Err(SchemaError::InvalidEdit("a composite needs at least two parts".into()));
                }
                let canon: Vec<String> = parts
                    .iter()
                    .map(|p| s.fields[s.field_index(p).expect("checked")].canonical_name.clone())
                    .collect();
                s.composites.push(CompositeField {
                    name: name.trim().to_string(),
                    parts: canon,
                    join_separator: separator.clone().unwrap_or_else(default_separator),
                });
            }
            Enrichment::RemoveComposite { name } => {
                let before = s.composites.len();
                s.composites.retain(|c| name_key(&c.name) != name_key(name));
                if s.composites.len() == before {
                    return Err(SchemaError::InvalidEdit(format!("no composite named `{name}`")));
                }
            }
            Enrichment::AddGroup { group_id, members, default_member } => {
                let mut canon = Vec::new();
                for m in members {
                    let i = s.field_index(m)?;
                    if let Some(g) = &s.fields[i].group_id {
                        return Err(SchemaError::GroupMembershipConflict {
                            field: s.fields[i].canonical_name.clone(),
                            group: g.clone(),
                        });
                    }
                    canon.push(s.fields[i].canonical_name.clone());
                }
                if s.group(group_id).is_some() {
                    return Err(SchemaError::InvalidEdit(format!("group `{group_id}` already exists")));
                }
                let default_member = match default_member {
                    Some(d) => {
                        let i = s.field_index(d)?;
                        Some(s.fields[i].canonical_name.clone())
                    }
                    None => None,
                };
                for m in &canon {
                    let i = s.field_index(m)?;
                    s.fields[i].group_id = Some(group_id.trim().to_string());
                }
                s.groups.push(FieldGroup {
                    group_id: group_id.trim().to_string(),
                    member_fields: canon,
                    default_member,
                });
            }
            Enrichment::RemoveGroup { group_id } => {
                let Some(pos) = s
                    .groups
                    .iter()
                    .position(|g| name_key(&g.group_id) == name_key(group_id))
                else {
                    return Err(SchemaError::InvalidEdit(format!("no group named `{group_id}`")));
                };
                let g = s.groups.remove(pos);
                for m in &g.member_fields {
                    if let Ok(i) = s.field_index(m) {
                        s.fields[i].group_id = None;
                    }
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Applies a batch of edits all-or-nothing.
    pub fn apply_all(&self, edits: &[Enrichment]) -> Result<DataSchema, (usize, SchemaError)> {
        let mut s = self.clone();
        for (i, e) in edits.iter().enumerate() {
            s = s.apply(e).map_err(|err| (i, err))?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Parses and validates a schema document.
    pub fn from_json(doc: &str) -> Result<DataSchema, SchemaError> {
        let raw: serde_json::Value =
            serde_json::from_str(doc).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            None => {
                return Err(SchemaError::IntegrityViolation {
                    path: "format_version".into(),
                    reason: "missing or not a number".into(),
                })
            }
            Some(v) if v != SCHEMA_FORMAT_VERSION as u64 => {
                return Err(SchemaError::SchemaVersionMismatch {
                    found: v,
                    expected: SCHEMA_FORMAT_VERSION,
                })
            }
            Some(_) => {}
        }
        let schema: DataSchema =
            serde_json::from_value(raw).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

fn dedup_folded(items: Vec<String>) -> Vec<String> {
    let mut seen = alloc::collections::BTreeSet::new();
    items
        .into_iter()
        .filter(|s| !s.trim().is_empty() && seen.insert(fold_and_stem(s)))
        .collect()
}

/// Loose BCP 47 shape check: `en`, `ca`, `es-ES`, `zh-Hant-TW`.
pub fn is_locale_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(primary) = parts.next() else { return false };
    (2..=8).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_alphabetic())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}
