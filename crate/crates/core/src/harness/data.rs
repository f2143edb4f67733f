//! Task bundles on disk and their validated in-memory form.
//!
//! A task directory holds `task.json` (`{"name":…, "lang":…}`),
//! `train.jsonl` and `test.jsonl` (one sample per line), `schemas/<ref>.json`
//! and optionally `stores/<ref>.json` (relational) or `stores/<ref>.jsonl`
//! (triples).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::exec::Store;
use crate::query::{parse_query, Language, QueryAst};
use crate::schema::{extract_used_schema, unify, SchemaSubset, SourceSchema, UnifiedSchema};

/// One `(question, schema, query)` line of a task file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// Defaults to `<split>-<line>` when absent.
    #[serde(default)]
    pub id: String,
    pub question: String,
    pub schema_ref: String,
    pub query: String,
    pub lang: Language,
}

/// A sample with its parsed gold query and the schema subset it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sample: Sample,
    pub ast: QueryAst,
    pub subset: SchemaSubset,
}

#[derive(Debug, Clone)]
pub struct TaskSchema {
    pub source: SourceSchema,
    pub unified: UnifiedSchema,
    pub store: Option<Store>,
}

impl TaskSchema {
    pub fn new(source: SourceSchema, store: Option<Store>) -> Result<Self, HarnessError> {
        source.validate()?;
        let unified = unify(&source)?;
        if let (Some(Store::Triples(t)), SourceSchema::Kg { .. }) = (&store, &source) {
            t.validate_against(&source)?;
        }
        Ok(TaskSchema { source, unified, store })
    }
}

impl Example {
    /// Parses the gold query against `schema` and extracts its subset.
    pub fn build(sample: Sample, schema: &TaskSchema) -> Result<Self, String> {
        let ast = parse_query(&sample.query, sample.lang, &schema.source).map_err(|e| e.to_string())?;
        let subset = extract_used_schema(&ast, &schema.unified).map_err(|e| e.to_string())?;
        Ok(Example { sample, ast, subset })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_train")]
    pub train: usize,
    #[serde(default = "default_test")]
    pub test: usize,
}

fn default_train() -> usize {
    1000
}
fn default_test() -> usize {
    300
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            train: default_train(),
            test: default_test(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub name: String,
    pub lang: Language,
}

/// A sample that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub split: String,
    pub id: String,
    pub error: String,
    pub sample: Option<Sample>,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub lang: Language,
    pub dir: Option<PathBuf>,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub schemas: BTreeMap<String, TaskSchema>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read(path)?).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Reads a JSON-lines sample file. Lines that fail to deserialize are
/// returned as rejections rather than errors.
pub fn read_samples(path: &Path, split: &str) -> Result<(Vec<Sample>, Vec<Rejected>), HarnessError> {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Sample>(line) {
            Ok(mut s) => {
                if s.id.is_empty() {
                    s.id = format!("{split}-{}", i + 1);
                }
                ok.push(s);
            }
            Err(e) => bad.push(Rejected {
                split: split.to_string(),
                id: format!("{split}-{}", i + 1),
                error: e.to_string(),
                sample: None,
            }),
        }
    }
    Ok((ok, bad))
}

/// Loads `schemas/*.json` and any matching stores.
fn load_schemas(dir: &Path) -> Result<BTreeMap<String, TaskSchema>, HarnessError> {
    let sdir = dir.join("schemas");
    let entries = fs::read_dir(&sdir).map_err(|source| HarnessError::Io {
        path: sdir.display().to_string(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let name = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let source: SourceSchema = json(&p)?;
        let rel = dir.join("stores").join(format!("{name}.json"));
        let tri = dir.join("stores").join(format!("{name}.jsonl"));
        let store = if rel.exists() {
            Some(Store::load(&rel)?)
        } else if tri.exists() {
            Some(Store::load(&tri)?)
        } else {
            None
        };
        let ts = TaskSchema::new(source, store).map_err(|e| HarnessError::Invalid(format!("schema `{name}`: {e}")))?;
        out.insert(name, ts);
    }
    Ok(out)
}

/// Keeps the first `n` samples in sorted-id order.
fn subsample(mut v: Vec<Sample>, n: usize) -> Vec<Sample> {
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v.truncate(n);
    v
}

impl Task {
    /// Assembles a task from already validated parts.
    pub fn from_parts(
        name: &str,
        lang: Language,
        schemas: BTreeMap<String, TaskSchema>,
        train: Vec<Sample>,
        test: Vec<Sample>,
    ) -> Result<Self, HarnessError> {
        let mut task = Task {
            name: name.to_string(),
            lang,
            dir: None,
            train: Vec::new(),
            test: Vec::new(),
            schemas,
        };
        let (tr, bad) = task.examples("train", train);
        if let Some(b) = bad.first() {
            return Err(HarnessError::Invalid(format!("{} {}: {}", b.split, b.id, b.error)));
        }
        let (te, bad) = task.examples("test", test);
        if let Some(b) = bad.first() {
            return Err(HarnessError::Invalid(format!("{} {}: {}", b.split, b.id, b.error)));
        }
        task.train = tr;
        task.test = te;
        Ok(task)
    }

    fn examples(&self, split: &str, samples: Vec<Sample>) -> (Vec<Example>, Vec<Rejected>) {
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for s in samples {
            let res = if s.lang != self.lang {
                Err(format!("language {} in a {} task", s.lang, self.lang))
            } else {
                match self.schemas.get(&s.schema_ref) {
                    Some(ts) => Example::build(s.clone(), ts),
                    None => Err(format!("unknown schema `{}`", s.schema_ref)),
                }
            };
            match res {
                Ok(e) => ok.push(e),
                Err(error) => bad.push(Rejected {
                    split: split.to_string(),
                    id: s.id.clone(),
                    error,
                    sample: Some(s),
                }),
            }
        }
        (ok, bad)
    }

    /// Loads a task directory. In lenient mode invalid samples are dropped and
    /// reported; otherwise the first one is an error.
    pub fn load_with(dir: &Path, limits: Limits, lenient: bool) -> Result<(Self, Vec<Rejected>), HarnessError> {
        let meta: TaskMeta = json(&dir.join("task.json"))?;
        let schemas = load_schemas(dir)?;
        let mut task = Task {
            name: meta.name,
            lang: meta.lang,
            dir: Some(dir.to_path_buf()),
            train: Vec::new(),
            test: Vec::new(),
            schemas,
        };
        let mut rejected = Vec::new();
        for split in ["train", "test"] {
            let (samples, bad) = read_samples(&dir.join(format!("{split}.jsonl")), split)?;
            rejected.extend(bad);
            let limit = if split == "train" { limits.train } else { limits.test };
            let (ex, bad) = task.examples(split, subsample(samples, limit));
            rejected.extend(bad);
            if split == "train" {
                task.train = ex;
            } else {
                task.test = ex;
            }
        }
        if !lenient {
            if let Some(b) = rejected.first() {
                return Err(HarnessError::Invalid(format!(
                    "{}: {} {}: {}",
                    dir.display(),
                    b.split,
                    b.id,
                    b.error
                )));
            }
        }
        Ok((task, rejected))
    }

    pub fn load(dir: &Path, limits: Limits) -> Result<Self, HarnessError> {
        Ok(Self::load_with(dir, limits, false)?.0)
    }

    pub fn schema(&self, schema_ref: &str) -> Result<&TaskSchema, HarnessError> {
        self.schemas
            .get(schema_ref)
            .ok_or_else(|| HarnessError::UnknownSchema(schema_ref.to_string()))
    }

    /// Whether every schema carries a data store.
    pub fn has_stores(&self) -> bool {
        !self.schemas.is_empty() && self.schemas.values().all(|s| s.store.is_some())
    }
}
