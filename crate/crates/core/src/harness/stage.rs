//! Per-step training data for the two generator stages.

use serde::{Deserialize, Serialize};

use super::{HarnessError, Task};
use crate::backend::prompt;
use crate::memory::MemoryBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Build,
}

/// One supervised example: the rendered prompt and the target text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    /// Task the row comes from (1-based).
    pub task: usize,
    pub replay: bool,
    pub id: String,
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDataset {
    pub stage: Stage,
    pub task: usize,
    pub rows: Vec<StageRow>,
}

impl StageDataset {
    pub fn replay_len(&self) -> usize {
        self.rows.iter().filter(|r| r.replay).count()
    }
}

/// Rows built from the training split of task `k` alone.
pub fn current_stage_rows(task: &Task, k: usize, stage: Stage) -> Result<Vec<StageRow>, HarnessError> {
    let mut rows = Vec::new();
    for e in &task.train {
        let s = &e.sample;
        let ts = task.schema(&s.schema_ref)?;
        let (p, target) = match stage {
            Stage::Filter => (
                prompt::filter_prompt(s.lang, &prompt::filter_schema_text(&ts.unified), &s.question),
                prompt::subset_text(&e.subset),
            ),
            Stage::Build => (
                prompt::build_prompt(
                    s.lang,
                    &prompt::build_schema_text(&ts.source, &ts.unified),
                    &prompt::filtered_suffix(Some(&prompt::subset_text(&e.subset))),
                    &s.question,
                ),
                s.query.clone(),
            ),
        };
        rows.push(StageRow {
            task: k,
            replay: false,
            id: s.id.clone(),
            prompt: p,
            target,
        });
    }
    Ok(rows)
}

/// Current-task rows of task `k` followed by the memories of tasks
/// `1..k` in ascending order. `banks` must hold a bank for every earlier task.
pub fn assemble_stage_dataset(
    task: &Task,
    k: usize,
    stage: Stage,
    banks: &[MemoryBank],
) -> Result<StageDataset, HarnessError> {
    let mut rows = current_stage_rows(task, k, stage)?;
    for prior in 1..k {
        let bank = banks
            .iter()
            .find(|b| b.task == prior)
            .ok_or(HarnessError::MissingMemory(prior))?;
        match stage {
            Stage::Filter => rows.extend(bank.a.iter().map(|m| StageRow {
                task: prior,
                replay: true,
                id: m.id.clone(),
                prompt: prompt::filter_prompt(m.lang, &m.schema, &m.question),
                target: m.target.clone(),
            })),
            Stage::Build => rows.extend(bank.b.iter().map(|m| StageRow {
                task: prior,
                replay: true,
                id: m.id.clone(),
                prompt: prompt::build_prompt(
                    m.lang,
                    &m.schema,
                    &prompt::filtered_suffix(Some(&m.filtered)),
                    &m.question,
                ),
                target: m.query.clone(),
            })),
        }
    }
    Ok(StageDataset { stage, task: k, rows })
}
