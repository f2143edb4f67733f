//! Two-stage inference and accuracy.

use serde::{Deserialize, Serialize};

use super::{Example, HarnessError, Task, TaskSchema};
use crate::backend::{prompt, BackendError, GenRequest, Generator, Role};
use crate::exec::{execute, is_ordered, result_equal, ExecStatus};
use crate::query::{parse_query, Language};
use crate::schema::parse_unified;

/// Oracle lookup key of a sample: sample ids are only unique within a task.
pub fn oracle_key(task: usize, id: &str) -> String {
    format!("{task}:{id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub query: String,
    /// The filter reply was unusable and the full schema was used instead.
    pub fallback: bool,
}

/// Runs the filter stage, then the build stage.
///
/// A filter reply that does not parse against the unified schema, or selects
/// nothing from it, is replaced by the full schema; only backend failures
/// are errors.
pub fn infer(
    ex: &Example,
    schema: &TaskSchema,
    task: usize,
    stage: Option<&str>,
    backend: &dyn Generator,
) -> Result<Prediction, BackendError> {
    let s = &ex.sample;
    let key = oracle_key(task, &s.id);
    let fp = prompt::filter_prompt(s.lang, &prompt::filter_schema_text(&schema.unified), &s.question);
    let reply = backend.generate(
        &GenRequest::new(Role::SchemaFilter, fp)
            .for_sample(&key, task)
            .at_stage(stage),
    )?;
    let (subset, fallback) = match parse_unified(&reply.text, &schema.unified) {
        Ok(sub) if !sub.is_empty() => (sub, false),
        _ => (schema.unified.full_subset(), true),
    };
    let filtered = prompt::filtered_suffix(Some(&prompt::subset_text(&subset)));
    let bp = prompt::build_prompt(
        s.lang,
        &prompt::build_schema_text(&schema.source, &schema.unified),
        &filtered,
        &s.question,
    );
    let reply = backend.generate(
        &GenRequest::new(Role::QueryBuilder, bp)
            .for_sample(&key, task)
            .at_stage(stage),
    )?;
    Ok(Prediction {
        id: s.id.clone(),
        query: reply.text.trim().to_string(),
        fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// Normalized string equality.
    Exact,
    /// Equal execution results.
    Execution,
}

impl AccuracyMode {
    /// Execution for data-backed tasks, exact for dialogue parses.
    pub fn default_for(task: &Task) -> Self {
        if task.lang != Language::Top && task.has_stores() {
            AccuracyMode::Execution
        } else {
            AccuracyMode::Exact
        }
    }
}

/// Lower case, whitespace runs collapsed to one space, `;` removed.
pub fn normalize(q: &str) -> String {
    q.to_lowercase()
        .replace(';', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whether `pred` answers `gold`. Errors on either side are mismatches.
pub fn is_correct(pred: &str, gold: &Example, schema: &TaskSchema, mode: AccuracyMode) -> Result<bool, HarnessError> {
    match mode {
        AccuracyMode::Exact => {
            let p = normalize(pred);
            Ok(!p.is_empty() && p == normalize(&gold.sample.query))
        }
        AccuracyMode::Execution => {
            if schema.store.is_none() && gold.sample.lang != Language::Top {
                return Err(HarnessError::Config(format!(
                    "execution accuracy for `{}` needs a data store",
                    gold.sample.schema_ref
                )));
            }
            let Ok(ast) = parse_query(pred, gold.sample.lang, &schema.source) else {
                return Ok(false);
            };
            let g = execute(&gold.ast, schema.store.as_ref(), &schema.source);
            if matches!(g.status, ExecStatus::Error(_)) {
                return Ok(false);
            }
            let p = execute(&ast, schema.store.as_ref(), &schema.source);
            Ok(result_equal(&g, &p, is_ordered(&gold.ast)))
        }
    }
}

/// Fraction of correct predictions over aligned lists.
pub fn accuracy(preds: &[String], golds: &[Example], task: &Task, mode: AccuracyMode) -> Result<f64, HarnessError> {
    if preds.len() != golds.len() {
        return Err(HarnessError::Invalid(format!(
            "{} predictions for {} gold samples",
            preds.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(HarnessError::Invalid(format!(
            "task `{}` has no test samples",
            task.name
        )));
    }
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        if is_correct(p, g, task.schema(&g.sample.schema_ref)?, mode)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / golds.len() as f64)
}
