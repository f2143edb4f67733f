//! Prompt templates and the schema views they are filled with.
//!
//! Filter prompts show the unified schema (dialogue schemas in lower case);
//! build prompts show the raw schema, with knowledge-graph entities as a
//! `label: id` prefix, optionally followed by the filtered subset.

use super::Role;
use crate::query::Language;
use crate::schema::{
    render_entities, render_unified_with, Case, RenderStyle, SchemaKind, SchemaSubset, SourceSchema, UnifiedSchema,
};
use crate::util::render_slots;

const FILTER_SQL: &str = include_str!("../../assets/prompts/filter_sql.txt");
const FILTER_SEXPR: &str = include_str!("../../assets/prompts/filter_sexpr.txt");
const FILTER_SPARQL: &str = include_str!("../../assets/prompts/filter_sparql.txt");
const FILTER_TOP: &str = include_str!("../../assets/prompts/filter_top.txt");
const BUILD_SQL: &str = include_str!("../../assets/prompts/build_sql.txt");
const BUILD_SEXPR: &str = include_str!("../../assets/prompts/build_sexpr.txt");
const BUILD_SPARQL: &str = include_str!("../../assets/prompts/build_sparql.txt");
const BUILD_TOP: &str = include_str!("../../assets/prompts/build_top.txt");
const SYNTHESIZE: &str = include_str!("../../assets/prompts/synthesize_structure.txt");
const QUESTION: &str = include_str!("../../assets/prompts/generate_question.txt");

/// The template bound to `role` (filter and build templates vary by language).
pub fn template(role: Role, lang: Language) -> &'static str {
    match (role, lang) {
        (Role::SchemaFilter, Language::Sql) => FILTER_SQL,
        (Role::SchemaFilter, Language::Sexpr) => FILTER_SEXPR,
        (Role::SchemaFilter, Language::Sparql) => FILTER_SPARQL,
        (Role::SchemaFilter, Language::Top) => FILTER_TOP,
        (Role::QueryBuilder, Language::Sql) => BUILD_SQL,
        (Role::QueryBuilder, Language::Sexpr) => BUILD_SEXPR,
        (Role::QueryBuilder, Language::Sparql) => BUILD_SPARQL,
        (Role::QueryBuilder, Language::Top) => BUILD_TOP,
        (Role::StructureSynthesizer, _) => SYNTHESIZE,
        (Role::QuestionGenerator, _) => QUESTION,
    }
}

fn filter_style(kind: SchemaKind) -> RenderStyle {
    let style = RenderStyle::for_kind(kind);
    match kind {
        SchemaKind::Ds => style.with_case(Case::Lower),
        _ => style,
    }
}

fn build_style(kind: SchemaKind) -> RenderStyle {
    let style = RenderStyle::for_kind(kind);
    match kind {
        SchemaKind::Ds => style.with_case(Case::Upper),
        _ => style,
    }
}

/// Unified schema as shown to the filter stage.
pub fn filter_schema_text(u: &UnifiedSchema) -> String {
    render_unified_with(u, &filter_style(u.kind))
}

/// Raw schema as shown to the build stage.
pub fn build_schema_text(schema: &SourceSchema, u: &UnifiedSchema) -> String {
    let body = render_unified_with(u, &build_style(u.kind));
    let ents = render_entities(schema);
    if ents.is_empty() {
        body
    } else {
        format!("{ents} | {body}")
    }
}

/// Subset text in the form the filter stage is trained to emit.
pub fn subset_text(s: &SchemaSubset) -> String {
    s.render_with(&build_style(s.kind))
}

/// Text appended after the build-stage schema when a filtered subset is known.
pub fn filtered_suffix(subset: Option<&str>) -> String {
    match subset {
        Some(s) if !s.is_empty() => format!("\n\nrelevant schema:\n{s}"),
        _ => String::new(),
    }
}

pub fn filter_prompt(lang: Language, schema: &str, question: &str) -> String {
    render_slots(
        template(Role::SchemaFilter, lang),
        &[("schema", schema), ("question", question)],
    )
}

/// `filtered` is the already formatted suffix (see [`filtered_suffix`]).
pub fn build_prompt(lang: Language, schema: &str, filtered: &str, question: &str) -> String {
    render_slots(
        template(Role::QueryBuilder, lang),
        &[("schema", schema), ("filtered", filtered), ("question", question)],
    )
}

pub fn synthesize_prompt(example1: &str, example2: &str) -> String {
    render_slots(SYNTHESIZE, &[("example1", example1), ("example2", example2)])
}

pub fn question_prompt(query: &str, schema: &str) -> String {
    render_slots(QUESTION, &[("query", query), ("schema", schema)])
}

/// Pulls the `{example1}`/`{example2}` values back out of a synthesis prompt.
pub fn parse_synthesize_prompt(prompt: &str) -> Option<(String, String)> {
    let a = prompt.split("Simple skeleton 1:").nth(1)?;
    let (one, rest) = a.split_once("\n\nSimple skeleton 2:")?;
    let (two, _) = rest.split_once("\n\nComposed skeleton:")?;
    Some((one.to_string(), two.to_string()))
}

/// Pulls the `{query}` and `{schema}` values back out of a question prompt.
pub fn parse_question_prompt(prompt: &str) -> Option<(String, String)> {
    let a = prompt.split_once("question:\n")?.1;
    let (query, rest) = a.split_once("\n\nschema:\n")?;
    let (schema, _) = rest.split_once("\n\nFollow these steps")?;
    Some((query.to_string(), schema.to_string()))
}
