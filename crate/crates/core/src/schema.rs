//! Source schemas and their DB-style unified representation.
//!
//! Every schema form (database tables, knowledge-graph classes and relations,
//! dialogue-state intents) is mapped onto abstract tables (`phi`) with abstract
//! columns (`psi`) and rendered as
//! `phi1 : psi, psi | phi2 : psi | phi3`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::QueryAst;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("schema invalid: {0}")]
    Invalid(String),
    #[error("unparseable schema text at group {group}: {message}")]
    Format { group: usize, message: String },
    #[error("query references {0} which is absent from the unified schema")]
    Dangling(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Db,
    Kg,
    Ds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    #[serde(default)]
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub domain: String,
    #[serde(default)]
    pub range: String,
}

impl Relation {
    /// Column-style name inside the domain group (`book_edition_series_edited`).
    pub fn short_name(&self) -> &str {
        self.name
            .strip_prefix(self.domain.as_str())
            .and_then(|rest| rest.strip_prefix('.'))
            .filter(|rest| !rest.is_empty())
            .unwrap_or(&self.name)
    }

    /// Fully qualified id used in logical forms (`book.series_editor.book_edition_series_edited`).
    pub fn full_id(&self) -> String {
        format!("{}.{}", self.domain, self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDef {
    pub id: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDef {
    pub name: String,
    #[serde(default)]
    pub slots: Vec<String>,
}

/// A schema in its native form, as ingested from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SourceSchema {
    Db {
        #[serde(default)]
        tables: Vec<Table>,
    },
    Kg {
        #[serde(default)]
        classes: Vec<String>,
        #[serde(default)]
        relations: Vec<Relation>,
        #[serde(default)]
        entities: Vec<EntityDef>,
    },
    Ds {
        #[serde(default)]
        intents: Vec<IntentDef>,
    },
}

/// Strips a case-insensitive `in:` prefix from a dialogue intent name.
pub fn intent_base(name: &str) -> &str {
    if name.len() >= 3 && name[..3].eq_ignore_ascii_case("in:") {
        &name[3..]
    } else {
        name
    }
}

fn check_unique<'a>(what: &str, names: impl IntoIterator<Item = &'a str>, fold: bool) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for n in names {
        let key = if fold { n.to_ascii_lowercase() } else { n.to_string() };
        if !seen.insert(key) {
            return Err(SchemaError::Invalid(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(())
}

impl SourceSchema {
    pub fn kind(&self) -> SchemaKind {
        match self {
            SourceSchema::Db { .. } => SchemaKind::Db,
            SourceSchema::Kg { .. } => SchemaKind::Kg,
            SourceSchema::Ds { .. } => SchemaKind::Ds,
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        match self {
            SourceSchema::Db { tables } => {
                check_unique("table", tables.iter().map(|t| t.name.as_str()), false)?;
                for t in tables {
                    check_unique(
                        &format!("column in table `{}`", t.name),
                        t.columns.iter().map(String::as_str),
                        false,
                    )?;
                }
            }
            SourceSchema::Kg {
                classes,
                relations,
                entities,
            } => {
                check_unique("class", classes.iter().map(String::as_str), false)?;
                let ids: Vec<String> = relations.iter().map(Relation::full_id).collect();
                check_unique("relation", ids.iter().map(String::as_str), false)?;
                check_unique("entity", entities.iter().map(|e| e.id.as_str()), false)?;
                for e in entities {
                    if classes.contains(&e.id) || ids.contains(&e.id) {
                        return Err(SchemaError::Invalid(format!(
                            "entity id `{}` collides with a class or relation",
                            e.id
                        )));
                    }
                }
            }
            SourceSchema::Ds { intents } => {
                check_unique("intent", intents.iter().map(|i| intent_base(&i.name)), true)?;
                for i in intents {
                    check_unique(
                        &format!("slot in intent `{}`", i.name),
                        i.slots.iter().map(String::as_str),
                        true,
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn entities(&self) -> &[EntityDef] {
        match self {
            SourceSchema::Kg { entities, .. } => entities,
            _ => &[],
        }
    }

    pub fn tables(&self) -> &[Table] {
        match self {
            SourceSchema::Db { tables } => tables,
            _ => &[],
        }
    }

    pub fn relations(&self) -> &[Relation] {
        match self {
            SourceSchema::Kg { relations, .. } => relations,
            _ => &[],
        }
    }

    pub fn intents(&self) -> &[IntentDef] {
        match self {
            SourceSchema::Ds { intents } => intents,
            _ => &[],
        }
    }

    /// Declared classes followed by relation domains that were never declared,
    /// in first-appearance order.
    pub fn kg_classes(&self) -> Vec<String> {
        match self {
            SourceSchema::Kg { classes, relations, .. } => {
                let mut out = classes.clone();
                for r in relations {
                    if !out.contains(&r.domain) {
                        out.push(r.domain.clone());
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// A reference from a query leaf into a source schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "ref", rename_all = "lowercase")]
pub enum Element {
    /// Database table or knowledge-graph class.
    Table(String),
    /// Database column, or knowledge-graph relation keyed by its domain class.
    Column {
        table: String,
        column: String,
    },
    Entity(String),
    /// Dialogue intent label, optionally decomposed into intent group + suffix
    /// (`GET_MESSAGE` against group `in:get` with suffix `message`).
    Intent {
        intent: String,
        suffix: Option<String>,
    },
    Slot {
        intent: String,
        slot: String,
    },
}

/// Where an abstract table or column came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SourceElement {
    Table { name: String },
    Column { table: String, column: String },
    Class { name: String, declared: bool },
    Relation { domain: String, name: String },
    Intent { name: String },
    Slot { intent: String, slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Psi {
    pub name: String,
    pub source: SourceElement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub phi: String,
    pub source: SourceElement,
    pub psis: Vec<Psi>,
}

/// DB-style abstraction of a source schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedSchema {
    pub kind: SchemaKind,
    pub groups: Vec<Group>,
}

impl UnifiedSchema {
    /// Exact match first, then ASCII case-insensitive.
    pub fn find_group(&self, phi: &str) -> Option<(usize, &Group)> {
        self.groups.iter().enumerate().find(|(_, g)| g.phi == phi).or_else(|| {
            self.groups
                .iter()
                .enumerate()
                .find(|(_, g)| g.phi.eq_ignore_ascii_case(phi))
        })
    }

    pub fn provenance(&self, phi: &str, psi: Option<&str>) -> Option<&SourceElement> {
        let g = self.groups.iter().find(|g| g.phi == phi)?;
        match psi {
            None => Some(&g.source),
            Some(p) => g.psis.iter().find(|x| x.name == p).map(|x| &x.source),
        }
    }

    pub fn element_count(&self) -> usize {
        self.groups.iter().map(|g| 1 + g.psis.len()).sum()
    }

    /// Subset selecting every element.
    pub fn full_subset(&self) -> SchemaSubset {
        SchemaSubset {
            kind: self.kind,
            groups: self
                .groups
                .iter()
                .map(|g| SubsetGroup {
                    phi: g.phi.clone(),
                    psis: g.psis.iter().map(|p| p.name.clone()).collect(),
                })
                .collect(),
            unknown: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    #[default]
    Preserve,
    Upper,
    Lower,
}

impl Case {
    pub fn apply(self, s: &str) -> String {
        match self {
            Case::Preserve => s.to_string(),
            Case::Upper => s.to_uppercase(),
            Case::Lower => s.to_lowercase(),
        }
    }
}

/// Whitespace and casing of a unified-schema rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderStyle {
    pub column_sep: &'static str,
    pub case: Case,
}

impl RenderStyle {
    /// `" , "` for database schemas, `", "` for knowledge graphs and dialogue states.
    pub fn for_kind(kind: SchemaKind) -> Self {
        RenderStyle {
            column_sep: match kind {
                SchemaKind::Db => " , ",
                SchemaKind::Kg | SchemaKind::Ds => ", ",
            },
            case: Case::Preserve,
        }
    }

    pub fn with_case(mut self, case: Case) -> Self {
        self.case = case;
        self
    }
}

pub fn unify(schema: &SourceSchema) -> Result<UnifiedSchema, SchemaError> {
    schema.validate()?;
    let groups = match schema {
        SourceSchema::Db { tables } => tables
            .iter()
            .map(|t| Group {
                phi: t.name.clone(),
                source: SourceElement::Table { name: t.name.clone() },
                psis: t
                    .columns
                    .iter()
                    .map(|c| Psi {
                        name: c.clone(),
                        source: SourceElement::Column {
                            table: t.name.clone(),
                            column: c.clone(),
                        },
                    })
                    .collect(),
            })
            .collect(),
        SourceSchema::Kg { classes, relations, .. } => schema
            .kg_classes()
            .into_iter()
            .map(|class| Group {
                source: SourceElement::Class {
                    name: class.clone(),
                    declared: classes.contains(&class),
                },
                psis: relations
                    .iter()
                    .filter(|r| r.domain == class)
                    .map(|r| Psi {
                        name: r.short_name().to_string(),
                        source: SourceElement::Relation {
                            domain: r.domain.clone(),
                            name: r.name.clone(),
                        },
                    })
                    .collect(),
                phi: class,
            })
            .collect(),
        SourceSchema::Ds { intents } => intents
            .iter()
            .map(|i| Group {
                phi: i.name.clone(),
                source: SourceElement::Intent { name: i.name.clone() },
                psis: i
                    .slots
                    .iter()
                    .map(|s| Psi {
                        name: s.clone(),
                        source: SourceElement::Slot {
                            intent: i.name.clone(),
                            slot: s.clone(),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(UnifiedSchema {
        kind: schema.kind(),
        groups,
    })
}

fn render_groups<'a>(groups: impl Iterator<Item = (&'a str, Vec<&'a str>)>, style: &RenderStyle) -> String {
    groups
        .map(|(phi, psis)| {
            let phi = style.case.apply(phi);
            if psis.is_empty() {
                phi
            } else {
                let cols: Vec<String> = psis.iter().map(|p| style.case.apply(p)).collect();
                format!("{phi} : {}", cols.join(style.column_sep))
            }
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Textual form of a unified schema in the default style for its kind.
pub fn render_unified(u: &UnifiedSchema) -> String {
    render_unified_with(u, &RenderStyle::for_kind(u.kind))
}

pub fn render_unified_with(u: &UnifiedSchema, style: &RenderStyle) -> String {
    render_groups(
        u.groups
            .iter()
            .map(|g| (g.phi.as_str(), g.psis.iter().map(|p| p.name.as_str()).collect())),
        style,
    )
}

/// `label: id | label: id` prefix injected into query-building prompts for
/// knowledge-graph schemas. Empty when the schema has no entities.
pub fn render_entities(schema: &SourceSchema) -> String {
    schema
        .entities()
        .iter()
        .map(|e| format!("{}: {}", e.label, e.id))
        .collect::<Vec<_>>()
        .join(" | ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetGroup {
    pub phi: String,
    pub psis: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownElement {
    pub phi: String,
    pub psi: Option<String>,
}

/// A selection of elements from a parent [`UnifiedSchema`], kept in the
/// parent's order. A group with no `psis` selects the abstract table alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSubset {
    pub kind: SchemaKind,
    pub groups: Vec<SubsetGroup>,
    /// Elements named in parsed text that the parent does not contain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown: Vec<UnknownElement>,
}

impl SchemaSubset {
    pub fn empty(kind: SchemaKind) -> Self {
        SchemaSubset {
            kind,
            groups: Vec::new(),
            unknown: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn contains(&self, phi: &str, psi: Option<&str>) -> bool {
        self.groups
            .iter()
            .any(|g| g.phi == phi && psi.is_none_or(|p| g.psis.iter().any(|x| x == p)))
    }

    /// Builds an ordered subset of `parent` from a set of selected `(phi, psi)`
    /// indices. `psi = None` entries select the group alone.
    fn from_indices(parent: &UnifiedSchema, picked: &BTreeSet<(usize, Option<usize>)>) -> Self {
        let mut groups = Vec::new();
        for (gi, g) in parent.groups.iter().enumerate() {
            let psis: Vec<String> = g
                .psis
                .iter()
                .enumerate()
                .filter(|(pi, _)| picked.contains(&(gi, Some(*pi))))
                .map(|(_, p)| p.name.clone())
                .collect();
            if !psis.is_empty() || picked.contains(&(gi, None)) {
                groups.push(SubsetGroup {
                    phi: g.phi.clone(),
                    psis,
                });
            }
        }
        SchemaSubset {
            kind: parent.kind,
            groups,
            unknown: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        self.render_with(&RenderStyle::for_kind(self.kind))
    }

    pub fn render_with(&self, style: &RenderStyle) -> String {
        render_groups(
            self.groups
                .iter()
                .map(|g| (g.phi.as_str(), g.psis.iter().map(String::as_str).collect())),
            style,
        )
    }

    /// Rendering with groups and columns sorted lexicographically; used as the
    /// clustering key so that selection order never influences similarity.
    pub fn sorted_key(&self) -> String {
        let mut groups: Vec<(String, Vec<String>)> = self
            .groups
            .iter()
            .map(|g| {
                let mut p = g.psis.clone();
                p.sort();
                (g.phi.clone(), p)
            })
            .collect();
        groups.sort();
        render_groups(
            groups
                .iter()
                .map(|(phi, psis)| (phi.as_str(), psis.iter().map(String::as_str).collect())),
            &RenderStyle::for_kind(self.kind),
        )
    }
}

/// Reads generator output in the unified textual format against `parent`.
///
/// Names are matched exactly, then case-insensitively. Elements missing from
/// the parent go to [`SchemaSubset::unknown`]; a group is selected only when
/// it appears bare or with at least one known column.
pub fn parse_unified(text: &str, parent: &UnifiedSchema) -> Result<SchemaSubset, SchemaError> {
    let text = text.trim();
    let mut picked = BTreeSet::new();
    let mut unknown = Vec::new();
    if text.is_empty() {
        return Ok(SchemaSubset::empty(parent.kind));
    }
    for (gi, raw) in text.split('|').enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(SchemaError::Format {
                group: gi,
                message: "empty group".into(),
            });
        }
        let (phi, psis): (&str, Vec<&str>) = match raw.find(" : ") {
            Some(at) => (raw[..at].trim(), raw[at + 3..].split(',').map(str::trim).collect()),
            None => (raw, Vec::new()),
        };
        if phi.is_empty() {
            return Err(SchemaError::Format {
                group: gi,
                message: "missing table name".into(),
            });
        }
        if psis.iter().any(|p| p.is_empty()) {
            return Err(SchemaError::Format {
                group: gi,
                message: "empty column name".into(),
            });
        }
        let Some((idx, group)) = parent.find_group(phi) else {
            if psis.is_empty() {
                unknown.push(UnknownElement {
                    phi: phi.to_string(),
                    psi: None,
                });
            }
            for p in psis {
                unknown.push(UnknownElement {
                    phi: phi.to_string(),
                    psi: Some(p.to_string()),
                });
            }
            continue;
        };
        if psis.is_empty() {
            picked.insert((idx, None));
        }
        for p in psis {
            let hit = group
                .psis
                .iter()
                .position(|x| x.name == p)
                .or_else(|| group.psis.iter().position(|x| x.name.eq_ignore_ascii_case(p)));
            match hit {
                Some(pi) => {
                    picked.insert((idx, Some(pi)));
                }
                None => unknown.push(UnknownElement {
                    phi: group.phi.clone(),
                    psi: Some(p.to_string()),
                }),
            }
        }
    }
    let mut subset = SchemaSubset::from_indices(parent, &picked);
    subset.unknown = unknown;
    Ok(subset)
}

/// Maps a referenced element onto its `(phi, psi)` position in `u`.
/// Entities and dialogue slot arguments have no position.
fn locate(el: &Element, u: &UnifiedSchema) -> Result<Option<(usize, Option<usize>)>, SchemaError> {
    let dangling = || SchemaError::Dangling(format!("{el:?}"));
    let group = |phi: &str| u.groups.iter().position(|g| g.phi == phi).ok_or_else(dangling);
    let psi = |gi: usize, name: &str| {
        u.groups[gi]
            .psis
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(dangling)
    };
    Ok(match el {
        Element::Entity(_) | Element::Slot { .. } => None,
        Element::Table(t) => Some((group(t)?, None)),
        Element::Intent { intent, suffix } => {
            let gi = group(intent)?;
            match suffix {
                Some(s) => Some((gi, Some(psi(gi, s)?))),
                None => Some((gi, None)),
            }
        }
        Element::Column { table, column } => {
            let gi = group(table)?;
            Some((gi, Some(psi(gi, column)?)))
        }
    })
}

/// The schema elements a parsed query refers to, in `u`'s order.
///
/// Entities are not part of the unified schema and are skipped, as are
/// dialogue slot labels (they name intent arguments, not schema selections).
pub fn extract_used_schema(query: &QueryAst, u: &UnifiedSchema) -> Result<SchemaSubset, SchemaError> {
    let mut picked = BTreeSet::new();
    for el in query.elements() {
        if let Some((gi, pi)) = locate(&el, u)? {
            // a column selection implies its table, so the bare entry is dropped
            picked.insert((gi, pi));
        }
    }
    let with_cols: HashSet<usize> = picked.iter().filter(|(_, p)| p.is_some()).map(|(g, _)| *g).collect();
    picked.retain(|(g, p)| p.is_some() || !with_cols.contains(g));
    Ok(SchemaSubset::from_indices(u, &picked))
}
