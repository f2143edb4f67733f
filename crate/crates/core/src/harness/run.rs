//! The continual stream: baselines, then learn-remember-evaluate per task.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{LearnerHook, MemoryConfig, OracleSettings, OracleWindow, RunConfig, SynthesisSettings};
use super::eval::{accuracy, infer, oracle_key, AccuracyMode};
use super::metrics::{compute_metrics, render_text, AccuracyMatrix, Metrics};
use super::stage::{assemble_stage_dataset, current_stage_rows, Stage, StageDataset};
use super::{HarnessError, Task};
use crate::backend::{prompt, Generator, OracleEntry, OracleGenerator, Router};
use crate::memory::{
    build_real_structure_memory, build_schema_memory, Embedder, HashEmbedder, MemoryBank, MemoryEntryB,
};
use crate::query::Language;
use crate::synthesis::{synthesize_memory, StructurePool, SynthesisConfig};
use crate::util::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub lang: Language,
    pub accuracy: AccuracyMode,
    pub train: usize,
    pub test: usize,
}

/// Outcome of building one task's memories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub task: usize,
    pub a: usize,
    pub real: usize,
    pub pseudo: usize,
    pub pseudo_target: usize,
    pub synthesis_attempts: usize,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub backends: BTreeMap<String, String>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSettings>,
    pub embedder: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub aa: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub matrix: AccuracyMatrix,
    /// Per task: accuracy after learning each task from its own onwards.
    pub curves: Vec<Vec<f64>>,
    pub tasks: Vec<TaskInfo>,
    pub memory: Vec<MemorySummary>,
    /// Test predictions that fell back to the full schema, per task row and step.
    pub fallbacks: usize,
    pub meta: RunMeta,
}

impl MetricsReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            aa: self.aa,
            bwt: self.bwt,
            fwt: self.fwt,
        }
    }

    pub fn text(&self) -> String {
        let names: Vec<String> = self.tasks.iter().map(|t| t.name.clone()).collect();
        render_text(&self.run_id, &names, &self.matrix, &self.metrics())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    matrix: AccuracyMatrix,
    steps_done: usize,
    memory: Vec<MemorySummary>,
    fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub started: u64,
    pub finished: u64,
    pub tool_version: String,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(io(d))?;
    }
    fs::write(path, bytes).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("serializable"));
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), HarnessError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else if let Ok(rel) = p.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Gold answers of every train and test sample in the stream.
pub fn oracle_entries(tasks: &[Task]) -> BTreeMap<String, OracleEntry> {
    let mut m = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        let k = i + 1;
        for e in t.train.iter().chain(&t.test) {
            m.insert(
                oracle_key(k, &e.sample.id),
                OracleEntry {
                    task: k,
                    filter: prompt::subset_text(&e.subset),
                    build: e.sample.query.clone(),
                },
            );
        }
    }
    m
}

/// Rejects streams whose adjacent tasks share a knowledge type.
pub fn check_heterogeneity(tasks: &[Task]) -> Result<(), HarnessError> {
    for w in tasks.windows(2) {
        if w[0].lang.schema_kind() == w[1].lang.schema_kind() {
            return Err(HarnessError::Config(format!(
                "adjacent tasks `{}` and `{}` share knowledge type {:?}",
                w[0].name,
                w[1].name,
                w[0].lang.schema_kind()
            )));
        }
    }
    Ok(())
}

/// Builds both memories of task `k`. Sizes larger than the training set are
/// clamped with a warning.
pub fn build_memory(
    task: &Task,
    k: usize,
    memory: &MemoryConfig,
    synthesis: &SynthesisSettings,
    seed: u64,
    backend: &dyn Generator,
    embedder: &dyn Embedder,
) -> Result<(MemoryBank, MemorySummary), HarnessError> {
    let n = task.train.len();
    let clamp = |want: usize, what: &str| {
        if want > n {
            tracing::warn!(task = %task.name, want, have = n, "{what} memory larger than training set, clamping");
        }
        want.min(n)
    };
    let a_size = clamp(memory.a, "schema");
    let (real_want, pseudo) = memory.split_b();
    let real = clamp(real_want, "structure");
    let a = if a_size > 0 {
        build_schema_memory(task, k, embedder, a_size)?
    } else {
        Vec::new()
    };
    let mut b = if real > 0 {
        build_real_structure_memory(task, k, embedder, real)?
    } else {
        Vec::new()
    };
    let mut summary = MemorySummary {
        task: k,
        a: a.len(),
        real: b.len(),
        pseudo: 0,
        pseudo_target: pseudo,
        synthesis_attempts: 0,
        exhausted: false,
    };
    if pseudo > 0 && n > 0 {
        let scfg = SynthesisConfig {
            t: synthesis.t,
            target: pseudo,
            max_attempts: Some(pseudo * synthesis.attempts_per_sample),
            mode: synthesis.mode,
            novelty: synthesis.novelty,
            seed: derive_seed(seed, "synthesis", k as u64),
        };
        let report = synthesize_memory(&StructurePool::from_task(task), backend, &scfg)?;
        summary.synthesis_attempts = report.attempts;
        summary.exhausted = report.exhausted;
        summary.pseudo = report.samples.len();
        b.extend(
            report
                .samples
                .iter()
                .enumerate()
                .map(|(i, p)| MemoryEntryB::from_pseudo(k, i + 1, p)),
        );
    }
    Ok((MemoryBank { task: k, a, b }, summary))
}

/// Runs a whole stream and persists its artifacts under `runs/<run_id>`.
pub struct Runner {
    cfg: RunConfig,
    tasks: Vec<Task>,
    router: Router,
    oracle: Option<Arc<OracleGenerator>>,
    embedder: HashEmbedder,
    run_dir: PathBuf,
}

impl Runner {
    /// Loads the configured task directories.
    pub fn new(cfg: RunConfig, out_root: &Path) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let tasks = cfg
            .tasks
            .iter()
            .map(|d| Task::load(d, cfg.limits))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tasks(cfg, tasks, out_root)
    }

    pub fn from_tasks(cfg: RunConfig, tasks: Vec<Task>, out_root: &Path) -> Result<Self, HarnessError> {
        cfg.validate()?;
        if tasks.is_empty() {
            return Err(HarnessError::Config("no tasks in stream".into()));
        }
        if cfg.strict_heterogeneity {
            check_heterogeneity(&tasks)?;
        }
        for t in &tasks {
            if cfg.accuracy == Some(AccuracyMode::Execution) && t.lang != Language::Top && !t.has_stores() {
                return Err(HarnessError::Config(format!(
                    "execution accuracy requested but task `{}` lacks stores",
                    t.name
                )));
            }
        }
        let oracle = cfg.backend.uses_oracle().then(|| {
            Arc::new(OracleGenerator::new(
                oracle_entries(&tasks),
                cfg.oracle.p,
                cfg.oracle.seed,
            ))
        });
        let router = cfg.backend.router(oracle.clone())?;
        let run_dir = out_root.join("runs").join(&cfg.run_id);
        Ok(Runner {
            cfg,
            tasks,
            router,
            oracle,
            embedder: HashEmbedder,
            run_dir,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    fn mode(&self, t: &Task) -> AccuracyMode {
        self.cfg.accuracy.unwrap_or_else(|| AccuracyMode::default_for(t))
    }

    /// Accuracy on task `i`'s test set and the number of filter fallbacks.
    fn evaluate(&self, i: usize, stage: &str) -> Result<(f64, usize), HarnessError> {
        let t = &self.tasks[i - 1];
        let preds = t
            .test
            .par_iter()
            .map(|e| {
                let ts = t.schema(&e.sample.schema_ref)?;
                Ok(infer(e, ts, i, Some(stage), &self.router)?)
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let fallbacks = preds.iter().filter(|p| p.fallback).count();
        let texts: Vec<String> = preds.into_iter().map(|p| p.query).collect();
        Ok((accuracy(&texts, &t.test, t, self.mode(t))?, fallbacks))
    }

    fn learn(&self, k: usize, isolated: bool, datasets: &[StageDataset]) -> Result<(), HarnessError> {
        match self.cfg.learner() {
            LearnerHook::None => Ok(()),
            LearnerHook::Oracle => {
                let o = self
                    .oracle
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("oracle learner without oracle backend".into()))?;
                let all = 1..=self.tasks.len();
                match (isolated, self.cfg.oracle.window) {
                    (true, _) | (false, OracleWindow::Current) => o.set_window([k]),
                    (false, OracleWindow::All) => o.set_window(all),
                    (false, OracleWindow::Seen) => o.set_window(1..=k),
                }
                Ok(())
            }
            LearnerHook::Http { url } => {
                let mut body = json!({"run_id": self.cfg.run_id, "task": k, "isolated": isolated});
                for d in datasets {
                    let key = match d.stage {
                        Stage::Filter => "filter",
                        Stage::Build => "build",
                    };
                    body[key] = serde_json::to_value(&d.rows).expect("rows serialize");
                }
                let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
                let resp = agent
                    .post(&url)
                    .send_json(&body)
                    .map_err(|e| HarnessError::Learner(e.to_string()))?;
                let status = resp.status().as_u16();
                if !(200..300).contains(&status) {
                    return Err(HarnessError::Learner(format!("learner returned status {status}")));
                }
                Ok(())
            }
        }
    }

    /// Stage datasets for task `k`; without `banks` only current-task rows.
    fn datasets(&self, k: usize, banks: Option<&[MemoryBank]>) -> Result<Vec<StageDataset>, HarnessError> {
        let t = &self.tasks[k - 1];
        [Stage::Filter, Stage::Build]
            .into_iter()
            .map(|stage| match banks {
                Some(b) => assemble_stage_dataset(t, k, stage, b),
                None => Ok(StageDataset {
                    stage,
                    task: k,
                    rows: current_stage_rows(t, k, stage)?,
                }),
            })
            .collect()
    }

    fn baseline_cache_path(&self, k: usize) -> Option<PathBuf> {
        let dir = self.cfg.baseline_cache.as_ref()?;
        let t = &self.tasks[k - 1];
        let ids: Vec<&str> = t.test.iter().map(|e| e.sample.id.as_str()).collect();
        let key = json!({
            "backend": self.cfg.backend,
            "oracle": self.cfg.oracle,
            "task": t.name,
            "index": k,
            "test": ids,
            "mode": self.mode(t),
            "limits": self.cfg.limits,
        });
        Some(dir.join(format!(
            "baseline-{}.json",
            &sha256_hex(key.to_string().as_bytes())[..16]
        )))
    }

    fn save_checkpoint(&self, cp: &Checkpoint) -> Result<(), HarnessError> {
        write_json(&self.run_dir.join("checkpoint.json"), cp)
    }

    fn load_checkpoint(&self, hash: &str) -> Result<Option<Checkpoint>, HarnessError> {
        let path = self.run_dir.join("checkpoint.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if cp.config_hash != hash {
            return Err(HarnessError::Config(format!(
                "{} holds a checkpoint of a different configuration",
                self.run_dir.display()
            )));
        }
        Ok(Some(cp))
    }

    /// Runs (or resumes) the stream.
    pub fn run(&self) -> Result<MetricsReport, HarnessError> {
        let started = now();
        let hash = self.cfg.hash();
        let k_total = self.tasks.len();
        write_json(&self.run_dir.join("config.json"), &self.cfg)?;
        let mut cp = match self.load_checkpoint(&hash)? {
            Some(cp) => {
                tracing::info!(steps_done = cp.steps_done, "resuming from checkpoint");
                cp
            }
            None => Checkpoint {
                config_hash: hash.clone(),
                matrix: AccuracyMatrix::new(k_total),
                steps_done: 0,
                memory: Vec::new(),
                fallbacks: 0,
            },
        };

        // single-task baselines
        for k in 1..=k_total {
            if cp.matrix.get(k, 0).is_some() {
                continue;
            }
            let cache = self.baseline_cache_path(k);
            let cached = cache
                .as_ref()
                .and_then(|p| fs::read_to_string(p).ok())
                .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
                .and_then(|v| v["acc"].as_f64());
            let acc = match cached {
                Some(a) => a,
                None => {
                    self.learn(k, true, &self.datasets(k, None)?)?;
                    let (a, fb) = self.evaluate(k, &format!("isolated{k}"))?;
                    cp.fallbacks += fb;
                    if let Some(p) = &cache {
                        write_json(p, &json!({"acc": a}))?;
                    }
                    a
                }
            };
            tracing::info!(task = k, acc, "baseline");
            cp.matrix.set(k, 0, acc);
            self.save_checkpoint(&cp)?;
        }

        let mem_root = self.run_dir.join("memory");
        let mut banks = Vec::new();
        for k in 1..=cp.steps_done {
            banks.push(MemoryBank::load(&mem_root, k)?);
        }
        for k in cp.steps_done + 1..=k_total {
            let task = &self.tasks[k - 1];
            let datasets = self.datasets(k, Some(&banks))?;
            for d in &datasets {
                let name = match d.stage {
                    Stage::Filter => "filter.jsonl",
                    Stage::Build => "build.jsonl",
                };
                write_jsonl(&self.run_dir.join("stage").join(format!("task{k}")).join(name), &d.rows)?;
            }
            self.learn(k, false, &datasets)?;
            let (bank, summary) = build_memory(
                task,
                k,
                &self.cfg.memory,
                &self.cfg.synthesis,
                self.cfg.seed,
                &self.router,
                &self.embedder,
            )?;
            if summary.exhausted {
                tracing::warn!(
                    task = k,
                    kept = summary.pseudo,
                    target = summary.pseudo_target,
                    "pseudo memory short"
                );
            }
            bank.save(&mem_root)?;
            banks.push(bank);
            cp.memory.retain(|m| m.task != k);
            cp.memory.push(summary);
            for i in 1..=k {
                let (a, fb) = self.evaluate(i, &format!("step{k}"))?;
                cp.fallbacks += fb;
                tracing::info!(task = i, after = k, acc = a, "evaluated");
                cp.matrix.set(i, k, a);
            }
            cp.steps_done = k;
            self.save_checkpoint(&cp)?;
        }

        let metrics = compute_metrics(&cp.matrix)?;
        let report = MetricsReport {
            run_id: self.cfg.run_id.clone(),
            aa: metrics.aa,
            bwt: metrics.bwt,
            fwt: metrics.fwt,
            curves: (1..=k_total)
                .map(|k| (k..=k_total).filter_map(|j| cp.matrix.get(k, j)).collect())
                .collect(),
            matrix: cp.matrix.clone(),
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskInfo {
                    name: t.name.clone(),
                    lang: t.lang,
                    accuracy: self.mode(t),
                    train: t.train.len(),
                    test: t.test.len(),
                })
                .collect(),
            memory: cp.memory.clone(),
            fallbacks: cp.fallbacks,
            meta: RunMeta {
                seed: self.cfg.seed,
                config_hash: hash.clone(),
                backends: self.router.identities(),
                temperature: self.cfg.backend.temperature,
                oracle: self.oracle.as_ref().map(|_| self.cfg.oracle.clone()),
                embedder: self.embedder.id().to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        };
        write_json(&self.run_dir.join("matrix.json"), &cp.matrix)?;
        write_json(&self.run_dir.join("report.json"), &report)?;
        write_file(&self.run_dir.join("report.txt"), report.text().as_bytes())?;
        let mut artifacts = Vec::new();
        list_files(&self.run_dir, &self.run_dir, &mut artifacts)?;
        artifacts.retain(|a| a != "manifest.json");
        write_json(
            &self.run_dir.join("manifest.json"),
            &RunManifest {
                run_id: self.cfg.run_id.clone(),
                config_hash: hash,
                artifacts,
                started,
                finished: now(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        )?;
        Ok(report)
    }
}

/// Loads the configured tasks and runs the stream under `out_root/runs/<id>`.
pub fn run_stream(cfg: &RunConfig, out_root: &Path) -> Result<MetricsReport, HarnessError> {
    Runner::new(cfg.clone(), out_root)?.run()
}
