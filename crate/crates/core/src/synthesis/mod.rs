//! Structure-guided pseudo-sample synthesis.
//!
//! Each attempt samples one schema and `t` skeletons from a task's pool,
//! composes two of them into a new skeleton, fills it against the schema and
//! keeps the result only when it executes with a non-empty answer (and, by
//! default, when its structure is absent from the pool). A question for each
//! kept query comes from the question-generator role.

mod compose;

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{prompt, BackendError, GenRequest, Generator, Role};
use crate::exec::{execute, Store};
use crate::harness::Task;
use crate::query::{
    fill_schema, parse_skeleton, render_query, skeletonize, Language, QueryAst, QueryError, QuerySkeleton,
};
use crate::schema::{extract_used_schema, SourceSchema, UnifiedSchema};
use crate::util::{derive_seed, rng_for};

pub use compose::compose_rule;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("structure pool has no skeletons")]
    EmptySkeletons,
    #[error("structure pool has no schemas")]
    EmptySchemas,
    #[error("cannot compose {0} with {1}")]
    LanguageMismatch(Language, Language),
    #[error("need at least two skeletons to compose, got {0}")]
    TooFew(usize),
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error("unparseable synthesizer reply `{reply}`: {source}")]
    Unparseable { reply: String, source: QueryError },
    #[error("empty question reply")]
    EmptyQuestion,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeMode {
    /// Ask the structure-synthesizer role.
    Generator,
    /// Deterministic [`compose_rule`].
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Skeletons sampled per attempt.
    #[serde(default = "default_t")]
    pub t: usize,
    pub target: usize,
    /// Defaults to 50 times the target.
    #[serde(default)]
    pub max_attempts: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: ComposeMode,
    #[serde(default = "default_true")]
    pub novelty: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_t() -> usize {
    5
}
fn default_mode() -> ComposeMode {
    ComposeMode::Rule
}
fn default_true() -> bool {
    true
}

impl SynthesisConfig {
    pub fn new(target: usize, mode: ComposeMode, seed: u64) -> Self {
        SynthesisConfig {
            t: default_t(),
            target,
            max_attempts: None,
            mode,
            novelty: true,
            seed,
        }
    }

    pub fn attempts(&self) -> usize {
        self.max_attempts.unwrap_or(self.target * 50)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.t < 2 {
            return Err(SynthesisError::Config(format!("t must be at least 2, got {}", self.t)));
        }
        if self.attempts() < self.target {
            return Err(SynthesisError::Config(format!(
                "max attempts {} below target {}",
                self.attempts(),
                self.target
            )));
        }
        Ok(())
    }
}

/// A schema usable for filling, with its data store.
#[derive(Debug, Clone)]
pub struct PoolSchema {
    pub schema_ref: String,
    pub source: SourceSchema,
    pub unified: UnifiedSchema,
    pub store: Option<Store>,
}

/// Skeletons and schemas of one task.
#[derive(Debug, Clone)]
pub struct StructurePool {
    skeletons: Vec<QuerySkeleton>,
    texts: HashSet<String>,
    pub schemas: Vec<PoolSchema>,
}

impl StructurePool {
    /// Skeletons are deduplicated by canonical text, keeping first appearance.
    pub fn new(skeletons: impl IntoIterator<Item = QuerySkeleton>, schemas: Vec<PoolSchema>) -> Self {
        let mut texts = HashSet::new();
        let skeletons = skeletons.into_iter().filter(|s| texts.insert(s.text())).collect();
        StructurePool {
            skeletons,
            texts,
            schemas,
        }
    }

    /// Pool over a task's training skeletons and all of its schemas.
    pub fn from_task(task: &Task) -> Self {
        let skeletons = task.train.iter().map(|e| skeletonize(&e.ast));
        let schemas = task
            .schemas
            .iter()
            .map(|(r, s)| PoolSchema {
                schema_ref: r.clone(),
                source: s.source.clone(),
                unified: s.unified.clone(),
                store: s.store.clone(),
            })
            .collect();
        StructurePool::new(skeletons, schemas)
    }

    pub fn skeletons(&self) -> &[QuerySkeleton] {
        &self.skeletons
    }

    pub fn contains(&self, skeleton_text: &str) -> bool {
        self.texts.contains(skeleton_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub attempt: usize,
    /// Pool indices of the sampled skeletons; the first two were composed.
    pub structures: Vec<usize>,
    pub schema_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    pub question: String,
    pub schema_ref: String,
    pub lang: Language,
    /// Rendered query text.
    pub query: String,
    pub skeleton: String,
    /// Raw schema text as shown to the build stage.
    pub schema_text: String,
    /// Subset of the unified schema the query uses.
    pub filtered: String,
    pub provenance: Provenance,
}

/// Per-reason counts of discarded attempts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub compose: usize,
    pub fill: usize,
    pub execute: usize,
    pub novelty: usize,
    pub duplicate: usize,
    pub question: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub samples: Vec<PseudoSample>,
    pub attempts: usize,
    pub rejected: Rejections,
    /// Budget ran out before the target was reached.
    pub exhausted: bool,
}

/// Schema index and skeleton indices for one attempt.
///
/// Recipe: with `rng = rng_for(seed, "sample", attempt)`, the schema index is
/// `rng.random_range(0..schemas)`; skeletons come from a partial
/// Fisher-Yates shuffle of `0..n` where step `i` swaps position `i` with
/// `rng.random_range(i..n)`, for `i < t`. When `n < t` all `t` indices are
/// drawn independently with `rng.random_range(0..n)`.
pub fn sample_inputs(
    pool: &StructurePool,
    cfg: &SynthesisConfig,
    attempt: usize,
) -> Result<(usize, Vec<usize>), SynthesisError> {
    let n = pool.skeletons.len();
    if n == 0 {
        return Err(SynthesisError::EmptySkeletons);
    }
    if pool.schemas.is_empty() {
        return Err(SynthesisError::EmptySchemas);
    }
    let mut rng = rng_for(cfg.seed, "sample", attempt as u64);
    let schema = rng.random_range(0..pool.schemas.len());
    let picks = if n < cfg.t {
        (0..cfg.t).map(|_| rng.random_range(0..n)).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..cfg.t {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(cfg.t);
        idx
    };
    Ok((schema, picks))
}

/// Composes the first two of `skeletons`.
///
/// In generator mode the structure-synthesizer role receives the two
/// skeleton texts and its reply (first line, trailing `;` removed) must parse
/// as a skeleton of the same language.
pub fn compose_structures(
    skeletons: &[&QuerySkeleton],
    mode: ComposeMode,
    backend: Option<&dyn Generator>,
) -> Result<QuerySkeleton, SynthesisError> {
    let [a, b, ..] = skeletons else {
        return Err(SynthesisError::TooFew(skeletons.len()));
    };
    if a.language() != b.language() {
        return Err(SynthesisError::LanguageMismatch(a.language(), b.language()));
    }
    match mode {
        ComposeMode::Rule => compose_rule(a, b),
        ComposeMode::Generator => {
            let backend = backend.ok_or(BackendError::NotConfigured(Role::StructureSynthesizer))?;
            let req = GenRequest::new(
                Role::StructureSynthesizer,
                prompt::synthesize_prompt(&a.text(), &b.text()),
            );
            let reply = backend.generate(&req)?.text;
            let line = reply
                .trim()
                .lines()
                .next()
                .unwrap_or("")
                .trim()
                .trim_end_matches(';')
                .trim();
            parse_skeleton(line, a.language()).map_err(|source| SynthesisError::Unparseable {
                reply: reply.clone(),
                source,
            })
        }
    }
}

/// Asks the question-generator role for a question about `query`.
/// Returns the first non-empty line of the reply.
pub fn generate_pseudo_question(
    query: &QueryAst,
    unified: &UnifiedSchema,
    backend: &dyn Generator,
) -> Result<String, SynthesisError> {
    let p = prompt::question_prompt(&render_query(query), &prompt::filter_schema_text(unified));
    let reply = backend.generate(&GenRequest::new(Role::QuestionGenerator, p))?;
    reply
        .text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or(SynthesisError::EmptyQuestion)
}

enum Outcome {
    Kept {
        ast: QueryAst,
        skeleton: String,
        provenance: Provenance,
    },
    Compose,
    Fill,
    Execute,
    Novelty,
}

fn attempt(
    pool: &StructurePool,
    backend: &dyn Generator,
    cfg: &SynthesisConfig,
    n: usize,
) -> Result<Outcome, SynthesisError> {
    let (si, picks) = sample_inputs(pool, cfg, n)?;
    let skels: Vec<&QuerySkeleton> = picks.iter().map(|&i| &pool.skeletons[i]).collect();
    let composed = match compose_structures(&skels, cfg.mode, Some(backend)) {
        Ok(c) => c,
        Err(SynthesisError::Unparseable { .. } | SynthesisError::LanguageMismatch(..)) => return Ok(Outcome::Compose),
        Err(e) => return Err(e),
    };
    if cfg.novelty && pool.contains(&composed.text()) {
        return Ok(Outcome::Novelty);
    }
    let ps = &pool.schemas[si];
    let Ok(ast) = fill_schema(
        &composed,
        &ps.source,
        ps.store.as_ref(),
        derive_seed(cfg.seed, "fill", n as u64),
    ) else {
        return Ok(Outcome::Fill);
    };
    if !execute(&ast, ps.store.as_ref(), &ps.source).is_success() {
        return Ok(Outcome::Execute);
    }
    let skeleton = skeletonize(&ast).text();
    if cfg.novelty && pool.contains(&skeleton) {
        return Ok(Outcome::Novelty);
    }
    Ok(Outcome::Kept {
        ast,
        skeleton,
        provenance: Provenance {
            attempt: n,
            structures: picks,
            schema_index: si,
        },
    })
}

/// Attempts evaluated per parallel batch.
const CHUNK: usize = 32;

/// Runs the synthesis loop until `cfg.target` samples are kept or the attempt
/// budget is spent. Attempts are evaluated in parallel batches but committed
/// in attempt order, so the kept set does not depend on scheduling.
pub fn synthesize_memory(
    pool: &StructurePool,
    backend: &dyn Generator,
    cfg: &SynthesisConfig,
) -> Result<SynthesisReport, SynthesisError> {
    cfg.validate()?;
    let mut report = SynthesisReport {
        samples: Vec::new(),
        attempts: 0,
        rejected: Rejections::default(),
        exhausted: false,
    };
    if cfg.target == 0 {
        return Ok(report);
    }
    if pool.skeletons.is_empty() {
        return Err(SynthesisError::EmptySkeletons);
    }
    if pool.schemas.is_empty() {
        return Err(SynthesisError::EmptySchemas);
    }
    let budget = cfg.attempts();
    let mut seen: HashSet<String> = HashSet::new();
    let mut start = 0;
    'outer: while start < budget {
        let end = (start + CHUNK).min(budget);
        let outcomes: Vec<Result<Outcome, SynthesisError>> = (start..end)
            .into_par_iter()
            .map(|n| attempt(pool, backend, cfg, n))
            .collect();
        for o in outcomes {
            report.attempts += 1;
            match o? {
                Outcome::Compose => report.rejected.compose += 1,
                Outcome::Fill => report.rejected.fill += 1,
                Outcome::Execute => report.rejected.execute += 1,
                Outcome::Novelty => report.rejected.novelty += 1,
                Outcome::Kept {
                    ast,
                    skeleton,
                    provenance,
                } => {
                    let query = render_query(&ast);
                    if !seen.insert(query.clone()) {
                        report.rejected.duplicate += 1;
                        continue;
                    }
                    let ps = &pool.schemas[provenance.schema_index];
                    let question = match generate_pseudo_question(&ast, &ps.unified, backend) {
                        Ok(q) => q,
                        Err(SynthesisError::EmptyQuestion) => {
                            report.rejected.question += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let filtered = extract_used_schema(&ast, &ps.unified)
                        .map(|s| prompt::subset_text(&s))
                        .unwrap_or_default();
                    report.samples.push(PseudoSample {
                        question,
                        schema_ref: ps.schema_ref.clone(),
                        lang: ast.language(),
                        query,
                        skeleton,
                        schema_text: prompt::build_schema_text(&ps.source, &ps.unified),
                        filtered,
                        provenance,
                    });
                    if report.samples.len() == cfg.target {
                        break 'outer;
                    }
                }
            }
        }
        start = end;
    }
    if report.samples.len() < cfg.target {
        report.exhausted = true;
        tracing::warn!(
            kept = report.samples.len(),
            target = cfg.target,
            attempts = report.attempts,
            "synthesis budget exhausted before target"
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{EchoGenerator, Router, TemplateQuestion};
    use std::sync::Arc;

    fn pool(n: usize) -> StructurePool {
        let sks = (1..=n).map(|i| {
            let cols: Vec<String> = (1..=i).map(|c| format!("[C{c}]")).collect();
            parse_skeleton(&format!("SELECT {} FROM [T1]", cols.join(", ")), Language::Sql).unwrap()
        });
        let s = crate::schema::tests::spider_departments();
        let u = crate::schema::unify(&s).unwrap();
        StructurePool::new(
            sks,
            vec![PoolSchema {
                schema_ref: "d".into(),
                source: s,
                unified: u,
                store: None,
            }],
        )
    }

    #[test]
    fn sampling_is_counter_based() {
        let p = pool(10);
        let cfg = SynthesisConfig::new(1, ComposeMode::Rule, 0);
        let (_, a) = sample_inputs(&p, &cfg, 0).unwrap();
        let (_, b) = sample_inputs(&p, &cfg, 1).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 5);
        assert_eq!(sample_inputs(&p, &cfg, 0).unwrap().1, a);
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort();
        sb.sort();
        assert_ne!(sa, sb);
        // small pools draw with replacement
        let (_, c) = sample_inputs(&pool(2), &cfg, 3).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|i| *i < 2));
    }

    #[test]
    fn generator_reply_must_parse() {
        let a = parse_skeleton("(ARGMAX [T1] [C1])", Language::Sexpr).unwrap();
        let b = parse_skeleton("(AND [T1] (JOIN [C1] [E1]))", Language::Sexpr).unwrap();
        let good = EchoGenerator::new("(ARGMAX (AND [T1] (JOIN [C1] [E1])) [C2]);\nextra");
        let c = compose_structures(&[&a, &b], ComposeMode::Generator, Some(&good)).unwrap();
        assert_eq!(c.text(), "(ARGMAX (AND [T1] (JOIN [C1] [E1])) [C2])");
        let bad = EchoGenerator::new("I cannot do that");
        assert!(matches!(
            compose_structures(&[&a, &b], ComposeMode::Generator, Some(&bad)),
            Err(SynthesisError::Unparseable { .. })
        ));
        assert!(matches!(
            compose_structures(&[&a], ComposeMode::Rule, None),
            Err(SynthesisError::TooFew(1))
        ));
    }

    #[test]
    fn question_is_first_nonempty_line() {
        let s = crate::schema::tests::spider_departments();
        let u = crate::schema::unify(&s).unwrap();
        let q = crate::query::parse_query("select count(*) from head where age > 56", Language::Sql, &s).unwrap();
        let r = Router::new().bind(
            Role::QuestionGenerator,
            Arc::new(EchoGenerator::new("\n  How old?  \nsecond")),
        );
        assert_eq!(generate_pseudo_question(&q, &u, &r).unwrap(), "How old?");
        let r = Router::new().bind(Role::QuestionGenerator, Arc::new(EchoGenerator::new(" \n")));
        assert!(matches!(
            generate_pseudo_question(&q, &u, &r),
            Err(SynthesisError::EmptyQuestion)
        ));
        let r = Router::new().bind(Role::QuestionGenerator, Arc::new(TemplateQuestion));
        assert_eq!(
            generate_pseudo_question(&q, &u, &r).unwrap(),
            "How many rows of head have age greater than 56?"
        );
    }

    #[test]
    fn config_checks() {
        let mut c = SynthesisConfig::new(3, ComposeMode::Rule, 0);
        assert_eq!(c.attempts(), 150);
        c.t = 1;
        assert!(c.validate().is_err());
        c.t = 5;
        c.max_attempts = Some(2);
        assert!(c.validate().is_err());
    }
}
