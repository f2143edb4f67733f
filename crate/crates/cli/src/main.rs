use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use skr_core::backend::{Generator, Role, Router, RuleSynthesizer, TemplateQuestion};
use skr_core::harness::{
    build_memory, compute_metrics, render_csv, render_text, AccuracyMatrix, AccuracyMode, Limits, MemoryConfig,
    MetricsReport, Rejected, RunConfig, Runner, SynthesisSettings, Task,
};
use skr_core::memory::HashEmbedder;
use skr_core::synthesis::{synthesize_memory, ComposeMode, StructurePool, SynthesisConfig};

#[derive(Parser)]
#[command(name = "skr", version, about = "Continual structured-knowledge reasoning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Accuracy {
    Exact,
    Execution,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rule,
    Generator,
}

#[derive(Subcommand)]
enum Command {
    /// Validate task directories and write a clean bundle.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Quarantine invalid samples instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Run a task stream and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        accuracy: Option<Accuracy>,
    },
    /// Synthesize pseudo samples for one task.
    Synthesize {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value = "rule")]
        mode: Mode,
        #[arg(long, default_value = "pseudo.jsonl")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit 0 even when fewer than `count` samples were found.
        #[arg(long)]
        allow_partial: bool,
        /// Run config supplying backends and synthesis settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay memory operations.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
    /// Re-render a persisted run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Build both memories of one task.
    Build {
        #[arg(long)]
        task: PathBuf,
        /// Position of the task in its stream (1-based).
        #[arg(long, default_value_t = 1)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    rows.into_iter()
        .map(|r| serde_json::to_string(&r).expect("serializable") + "\n")
        .collect()
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    if !from.is_dir() {
        return Ok(());
    }
    fs::create_dir_all(to)?;
    for e in fs::read_dir(from)? {
        let p = e?.path();
        if p.is_file() {
            fs::copy(&p, to.join(p.file_name().unwrap_or_default()))?;
        }
    }
    Ok(())
}

fn ingest(paths: &[PathBuf], out: &Path, lenient: bool) -> Result<ExitCode> {
    let all = Limits {
        train: usize::MAX,
        test: usize::MAX,
    };
    let mut loaded = Vec::new();
    let mut bad: Vec<(String, Rejected)> = Vec::new();
    for p in paths {
        let (task, rejected) = Task::load_with(p, all, true).with_context(|| format!("loading {}", p.display()))?;
        bad.extend(rejected.iter().map(|r| (task.name.clone(), r.clone())));
        loaded.push((p.clone(), task, rejected));
    }
    let report = json!({
        "tasks": loaded.iter().map(|(p, t, r)| json!({
            "name": t.name,
            "path": p.display().to_string(),
            "lang": t.lang,
            "train": t.train.len(),
            "test": t.test.len(),
            "rejected": r,
        })).collect::<Vec<_>>(),
    });
    write(&out.join("validation.json"), &serde_json::to_string_pretty(&report)?)?;
    for (name, r) in &bad {
        eprintln!("invalid sample {name}/{}/{}: {}", r.split, r.id, r.error);
    }
    if !bad.is_empty() && !lenient {
        eprintln!("{} invalid samples; rerun with --lenient to quarantine them", bad.len());
        return Ok(ExitCode::FAILURE);
    }
    for (p, t, rejected) in &loaded {
        let dir = out.join(&t.name);
        write(
            &dir.join("task.json"),
            &serde_json::to_string_pretty(&json!({"name": t.name, "lang": t.lang}))?,
        )?;
        write(&dir.join("train.jsonl"), &jsonl(t.train.iter().map(|e| &e.sample)))?;
        write(&dir.join("test.jsonl"), &jsonl(t.test.iter().map(|e| &e.sample)))?;
        copy_dir(&p.join("schemas"), &dir.join("schemas"))?;
        copy_dir(&p.join("stores"), &dir.join("stores"))?;
        if !rejected.is_empty() {
            write(&dir.join("quarantine.jsonl"), &jsonl(rejected))?;
        }
        println!(
            "{}: {} train, {} test, {} quarantined",
            t.name,
            t.train.len(),
            t.test.len(),
            rejected.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run(config: &Path, out: &Path, seed: Option<u64>, acc: Option<Accuracy>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = acc {
        cfg.accuracy = Some(match a {
            Accuracy::Exact => AccuracyMode::Exact,
            Accuracy::Execution => AccuracyMode::Execution,
        });
    }
    let runner = Runner::new(cfg, out)?;
    let report = runner.run().with_context(|| {
        format!(
            "run aborted; rerun the same command to resume from {}",
            runner.run_dir().join("checkpoint.json").display()
        )
    })?;
    print!("{}", report.text());
    println!("artifacts in {}", runner.run_dir().display());
    Ok(ExitCode::SUCCESS)
}

/// Question and structure roles from `config`, or the deterministic mocks.
fn synthesis_backend(config: Option<&RunConfig>) -> Result<Router> {
    Ok(match config {
        Some(c) => Router::new()
            .bind(
                Role::QuestionGenerator,
                c.backend.generator(Role::QuestionGenerator, None)?,
            )
            .bind(
                Role::StructureSynthesizer,
                c.backend.generator(Role::StructureSynthesizer, None)?,
            ),
        None => Router::new()
            .bind(Role::QuestionGenerator, std::sync::Arc::new(TemplateQuestion))
            .bind(Role::StructureSynthesizer, std::sync::Arc::new(RuleSynthesizer)),
    })
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<RunConfig>> {
    path.map(|p| RunConfig::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
}

#[allow(clippy::too_many_arguments)]
fn synthesize(
    task: &Path,
    count: usize,
    mode: Mode,
    out: &Path,
    seed: u64,
    allow_partial: bool,
    config: Option<&PathBuf>,
) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let limits = cfg.as_ref().map(|c| c.limits).unwrap_or_default();
    let settings = cfg.as_ref().map(|c| c.synthesis.clone()).unwrap_or_default();
    let task = Task::load(task, limits).with_context(|| format!("loading {}", task.display()))?;
    let backend = synthesis_backend(cfg.as_ref())?;
    let scfg = SynthesisConfig {
        t: settings.t,
        target: count,
        max_attempts: Some(count * settings.attempts_per_sample),
        mode: match mode {
            Mode::Rule => ComposeMode::Rule,
            Mode::Generator => ComposeMode::Generator,
        },
        novelty: settings.novelty,
        seed,
    };
    let report = synthesize_memory(&StructurePool::from_task(&task), &backend as &dyn Generator, &scfg)?;
    write(out, &jsonl(&report.samples))?;
    println!(
        "{} of {} samples after {} attempts, written to {}",
        report.samples.len(),
        count,
        report.attempts,
        out.display()
    );
    if report.exhausted {
        eprintln!(
            "warning: attempt budget exhausted (rejected: {})",
            serde_json::to_string(&report.rejected)?
        );
        if !allow_partial {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn memory_build(task: &Path, index: usize, out: &Path, seed: u64, config: Option<&PathBuf>) -> Result<ExitCode> {
    if index == 0 {
        bail!("task index is 1-based");
    }
    let cfg = load_config(config)?;
    let limits = cfg.as_ref().map(|c| c.limits).unwrap_or_default();
    let memory = cfg
        .as_ref()
        .map(|c| c.memory.clone())
        .unwrap_or_else(MemoryConfig::default);
    let settings = cfg
        .as_ref()
        .map(|c| c.synthesis.clone())
        .unwrap_or_else(SynthesisSettings::default);
    let task = Task::load(task, limits).with_context(|| format!("loading {}", task.display()))?;
    let backend = synthesis_backend(cfg.as_ref())?;
    let (bank, summary) = build_memory(&task, index, &memory, &settings, seed, &backend, &HashEmbedder)?;
    bank.save(out)?;
    println!(
        "task {}: {} schema entries, {} real + {} pseudo structure entries",
        index, summary.a, summary.real, summary.pseudo
    );
    if summary.exhausted {
        eprintln!(
            "warning: only {} of {} pseudo samples synthesized",
            summary.pseudo, summary.pseudo_target
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn report(run: &Path, csv: bool) -> Result<ExitCode> {
    let mpath = run.join("matrix.json");
    let matrix: AccuracyMatrix =
        serde_json::from_str(&fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?)
            .with_context(|| format!("parsing {}", mpath.display()))?;
    let stored: Option<MetricsReport> = fs::read_to_string(run.join("report.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let names: Vec<String> = match &stored {
        Some(r) => r.tasks.iter().map(|t| t.name.clone()).collect(),
        None => (1..=matrix.tasks).map(|k| format!("task{k}")).collect(),
    };
    if csv {
        print!("{}", render_csv(&names, &matrix));
        return Ok(ExitCode::SUCCESS);
    }
    let metrics = compute_metrics(&matrix)?;
    let run_id = stored
        .as_ref()
        .map(|r| r.run_id.clone())
        .unwrap_or_else(|| run.file_name().unwrap_or_default().to_string_lossy().to_string());
    print!("{}", render_text(&run_id, &names, &matrix, &metrics));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Ingest { paths, out, lenient } => ingest(paths, out, *lenient),
        Command::Run {
            config,
            out,
            seed,
            accuracy,
        } => run(config, out, *seed, *accuracy),
        Command::Synthesize {
            task,
            count,
            mode,
            out,
            seed,
            allow_partial,
            config,
        } => synthesize(task, *count, *mode, out, *seed, *allow_partial, config.as_ref()),
        Command::Memory {
            command:
                MemoryCommand::Build {
                    task,
                    index,
                    out,
                    seed,
                    config,
                },
        } => memory_build(task, *index, out, *seed, config.as_ref()),
        Command::Report { run, csv } => report(run, *csv),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
