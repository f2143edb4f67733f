use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{cluster_select, ClusterConfig, Embedder, MemoryError};
use crate::backend::prompt;
use crate::harness::{Example, Task};
use crate::query::{skeletonize, Language};
use crate::synthesis::PseudoSample;

/// Schema-view replay entry: a question with its unified schema and the gold
/// subset the query uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntryA {
    pub task: usize,
    pub id: String,
    pub lang: Language,
    pub question: String,
    pub schema_ref: String,
    /// Unified schema text as shown to the filter stage.
    pub schema: String,
    /// Gold subset text, the filter-stage target.
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Pseudo,
}

/// Structure-view replay entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntryB {
    pub task: usize,
    pub id: String,
    pub lang: Language,
    pub question: String,
    pub schema_ref: String,
    /// Raw schema text as shown to the build stage.
    pub schema: String,
    /// Gold subset text used to fill the build prompt.
    pub filtered: String,
    pub query: String,
    pub skeleton: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<crate::synthesis::Provenance>,
}

impl MemoryEntryB {
    pub fn from_pseudo(task: usize, n: usize, p: &PseudoSample) -> Self {
        MemoryEntryB {
            task,
            id: format!("pseudo-{task}-{n}"),
            lang: p.lang,
            question: p.question.clone(),
            schema_ref: p.schema_ref.clone(),
            schema: p.schema_text.clone(),
            filtered: p.filtered.clone(),
            query: p.query.clone(),
            skeleton: p.skeleton.clone(),
            origin: Origin::Pseudo,
            provenance: Some(p.provenance.clone()),
        }
    }
}

fn cluster_examples<'a>(
    train: &'a [Example],
    key: impl Fn(&Example) -> String,
    embedder: &dyn Embedder,
    size: usize,
) -> Result<Vec<&'a Example>, MemoryError> {
    let samples: Vec<(String, usize)> = train.iter().enumerate().map(|(i, e)| (key(e), i)).collect();
    let picked = cluster_select(&samples, embedder, &ClusterConfig::new(size))?;
    Ok(picked.into_iter().map(|i| &train[i]).collect())
}

/// Schema-guided memory: cluster training samples by the text of the schema
/// subset their gold query uses and keep one medoid per cluster.
pub fn build_schema_memory(
    task: &Task,
    task_index: usize,
    embedder: &dyn Embedder,
    size: usize,
) -> Result<Vec<MemoryEntryA>, MemoryError> {
    let picked = cluster_examples(&task.train, |e| e.subset.sorted_key(), embedder, size)?;
    picked
        .into_iter()
        .map(|e| {
            let ts = task.schema(&e.sample.schema_ref).map_err(|err| MemoryError::Sample {
                id: e.sample.id.clone(),
                message: err.to_string(),
            })?;
            Ok(MemoryEntryA {
                task: task_index,
                id: e.sample.id.clone(),
                lang: e.sample.lang,
                question: e.sample.question.clone(),
                schema_ref: e.sample.schema_ref.clone(),
                schema: prompt::filter_schema_text(&ts.unified),
                target: prompt::subset_text(&e.subset),
            })
        })
        .collect()
}

/// Structure-guided memory over real samples: cluster by canonical skeleton text.
pub fn build_real_structure_memory(
    task: &Task,
    task_index: usize,
    embedder: &dyn Embedder,
    size: usize,
) -> Result<Vec<MemoryEntryB>, MemoryError> {
    let picked = cluster_examples(&task.train, |e| skeletonize(&e.ast).text(), embedder, size)?;
    picked
        .into_iter()
        .map(|e| {
            let ts = task.schema(&e.sample.schema_ref).map_err(|err| MemoryError::Sample {
                id: e.sample.id.clone(),
                message: err.to_string(),
            })?;
            Ok(MemoryEntryB {
                task: task_index,
                id: e.sample.id.clone(),
                lang: e.sample.lang,
                question: e.sample.question.clone(),
                schema_ref: e.sample.schema_ref.clone(),
                schema: prompt::build_schema_text(&ts.source, &ts.unified),
                filtered: prompt::subset_text(&e.subset),
                query: e.sample.query.clone(),
                skeleton: skeletonize(&e.ast).text(),
                origin: Origin::Real,
                provenance: None,
            })
        })
        .collect()
}

/// Both memories of one task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryBank {
    pub task: usize,
    pub a: Vec<MemoryEntryA>,
    pub b: Vec<MemoryEntryB>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), MemoryError> {
    let io = |source| MemoryError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("memory entries serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, MemoryError> {
    let text = fs::read_to_string(path).map_err(|source| MemoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MemoryError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl MemoryBank {
    pub fn len(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `<root>/task<k>`.
    pub fn dir(root: &Path, task: usize) -> PathBuf {
        root.join(format!("task{task}"))
    }

    /// Writes `<root>/task<k>/a.jsonl` and `b.jsonl`.
    pub fn save(&self, root: &Path) -> Result<(), MemoryError> {
        let dir = Self::dir(root, self.task);
        fs::create_dir_all(&dir).map_err(|source| MemoryError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_jsonl(&dir.join("a.jsonl"), &self.a)?;
        write_jsonl(&dir.join("b.jsonl"), &self.b)
    }

    pub fn load(root: &Path, task: usize) -> Result<Self, MemoryError> {
        let dir = Self::dir(root, task);
        Ok(MemoryBank {
            task,
            a: read_jsonl(&dir.join("a.jsonl"))?,
            b: read_jsonl(&dir.join("b.jsonl"))?,
        })
    }

    pub fn real_count(&self) -> usize {
        self.b.iter().filter(|e| e.origin == Origin::Real).count()
    }

    pub fn pseudo_count(&self) -> usize {
        self.b.len() - self.real_count()
    }
}
