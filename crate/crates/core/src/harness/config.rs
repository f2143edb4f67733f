//! Run configuration: one JSON file holds everything except the API key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AccuracyMode, HarnessError, Limits};
use crate::backend::{
    EchoGenerator, GarbageGenerator, Generator, HttpConfig, HttpGenerator, OracleGenerator, Role, Router,
    RuleSynthesizer, TemplateQuestion,
};
use crate::synthesis::ComposeMode;
use crate::util::sha256_hex;

/// Backend bound to one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RoleSpec {
    /// Gold-answer test double (filter and build roles only).
    Oracle,
    Http(HttpConfig),
    Echo {
        text: String,
    },
    Garbage,
    /// Template question generator.
    Template,
    /// Rule-based structure synthesizer.
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub schema_filter: RoleSpec,
    pub query_builder: RoleSpec,
    #[serde(default = "default_question")]
    pub question_generator: RoleSpec,
    #[serde(default = "default_synth")]
    pub structure_synthesizer: RoleSpec,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_question() -> RoleSpec {
    RoleSpec::Template
}
fn default_synth() -> RoleSpec {
    RoleSpec::Rule
}
fn default_temperature() -> f64 {
    0.0
}

impl BackendConfig {
    pub fn spec(&self, role: Role) -> &RoleSpec {
        match role {
            Role::SchemaFilter => &self.schema_filter,
            Role::QueryBuilder => &self.query_builder,
            Role::QuestionGenerator => &self.question_generator,
            Role::StructureSynthesizer => &self.structure_synthesizer,
        }
    }

    pub fn uses_oracle(&self) -> bool {
        Role::ALL.iter().any(|r| *self.spec(*r) == RoleSpec::Oracle)
    }

    /// Checks every role binding without contacting anything.
    pub fn validate(&self) -> Result<(), HarnessError> {
        for role in Role::ALL {
            match self.spec(role) {
                RoleSpec::Oracle if !matches!(role, Role::SchemaFilter | Role::QueryBuilder) => {
                    return Err(HarnessError::Config(format!("oracle backend cannot serve role {role}")));
                }
                RoleSpec::Http(h) => {
                    if h.url.trim().is_empty() {
                        return Err(HarnessError::Config(format!("role {role}: http backend without url")));
                    }
                    if h.model.trim().is_empty() {
                        return Err(HarnessError::Config(format!("role {role}: http backend without model")));
                    }
                    if let Some(var) = &h.api_key_env {
                        if std::env::var(var).is_err() {
                            return Err(HarnessError::Config(format!(
                                "role {role}: environment variable {var} not set"
                            )));
                        }
                    }
                }
                _ => {}
            }
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(HarnessError::Config(format!(
                "temperature {} out of range",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Backend for one role. `oracle` must be given when the role uses it.
    pub fn generator(
        &self,
        role: Role,
        oracle: Option<Arc<OracleGenerator>>,
    ) -> Result<Arc<dyn Generator>, HarnessError> {
        Ok(match self.spec(role) {
            RoleSpec::Oracle => {
                oracle.ok_or_else(|| HarnessError::Config("oracle backend requested but no gold data given".into()))?
            }
            RoleSpec::Http(h) => Arc::new(HttpGenerator::new(h.clone())?),
            RoleSpec::Echo { text } => Arc::new(EchoGenerator::new(text.clone())),
            RoleSpec::Garbage => Arc::new(GarbageGenerator),
            RoleSpec::Template => Arc::new(TemplateQuestion),
            RoleSpec::Rule => Arc::new(RuleSynthesizer),
        })
    }

    /// Binds every role.
    pub fn router(&self, oracle: Option<Arc<OracleGenerator>>) -> Result<Router, HarnessError> {
        let mut r = Router::new();
        for role in Role::ALL {
            r = r.bind(role, self.generator(role, oracle.clone())?);
        }
        Ok(r)
    }
}

/// Which tasks the oracle answers correctly after learning task `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleWindow {
    /// Every task, always.
    All,
    /// Only the task learned last.
    Current,
    /// Every task learned so far.
    Seen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    #[serde(default)]
    pub p: f64,
    #[serde(default = "default_window")]
    pub window: OracleWindow,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> OracleWindow {
    OracleWindow::All
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            p: 0.0,
            window: default_window(),
            seed: 0,
        }
    }
}

/// What happens with the stage datasets of each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LearnerHook {
    /// Datasets are only written to disk.
    None,
    /// Move the oracle's window.
    Oracle,
    /// POST `{"run_id", "task", "filter": [...], "build": [...]}` to an
    /// external fine-tuning service and wait for a 2xx answer.
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    /// Schema-view memory size per task.
    #[serde(default = "five")]
    pub a: usize,
    /// Structure-view memory size per task.
    #[serde(default = "five")]
    pub b: usize,
    /// Real to pseudo ratio inside the structure view.
    #[serde(default = "default_ratio")]
    pub ratio: [usize; 2],
}

fn five() -> usize {
    5
}
fn default_ratio() -> [usize; 2] {
    [4, 1]
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            a: 5,
            b: 5,
            ratio: default_ratio(),
        }
    }
}

impl MemoryConfig {
    /// `(real, pseudo)` split of the structure view, real rounded to nearest.
    pub fn split_b(&self) -> (usize, usize) {
        let total = self.ratio[0] + self.ratio[1];
        let real = (self.b * self.ratio[0] + total / 2) / total;
        (real, self.b - real)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSettings {
    #[serde(default = "five")]
    pub t: usize,
    #[serde(default = "default_mode")]
    pub mode: ComposeMode,
    #[serde(default = "yes")]
    pub novelty: bool,
    /// Attempt budget as a multiple of the pseudo target.
    #[serde(default = "fifty")]
    pub attempts_per_sample: usize,
}

fn default_mode() -> ComposeMode {
    ComposeMode::Rule
}
fn yes() -> bool {
    true
}
fn fifty() -> usize {
    50
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings {
            t: 5,
            mode: default_mode(),
            novelty: true,
            attempts_per_sample: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    /// Task directories in stream order, relative to the config file.
    pub tasks: Vec<PathBuf>,
    pub backend: BackendConfig,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub learner: Option<LearnerHook>,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the per-task default accuracy mode.
    #[serde(default)]
    pub accuracy: Option<AccuracyMode>,
    #[serde(default)]
    pub limits: Limits,
    /// Reject streams whose adjacent tasks share a knowledge type.
    #[serde(default = "yes")]
    pub strict_heterogeneity: bool,
    /// Directory for cached single-task baselines.
    #[serde(default)]
    pub baseline_cache: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for t in &mut cfg.tasks {
            if t.is_relative() {
                *t = base.join(&*t);
            }
        }
        if let Some(c) = &mut cfg.baseline_cache {
            if c.is_relative() {
                *c = base.join(&*c);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return bad(format!("run id `{}` is not a plain directory name", self.run_id));
        }
        if self.tasks.is_empty() {
            return bad("no tasks in stream".into());
        }
        if self.memory.ratio[0] + self.memory.ratio[1] == 0 {
            return bad("memory ratio sums to zero".into());
        }
        if self.synthesis.t < 2 {
            return bad(format!("synthesis t must be at least 2, got {}", self.synthesis.t));
        }
        if self.synthesis.attempts_per_sample == 0 {
            return bad("attempts_per_sample must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.oracle.p) {
            return bad(format!("oracle p {} outside [0, 1]", self.oracle.p));
        }
        if let Some(LearnerHook::Oracle) = &self.learner {
            if !self.backend.uses_oracle() {
                return bad("oracle learner hook without an oracle backend".into());
            }
        }
        if let Some(LearnerHook::Http { url }) = &self.learner {
            if url.trim().is_empty() {
                return bad("http learner hook without url".into());
            }
        }
        self.backend.validate()
    }

    /// Explicit hook, or the oracle hook when an oracle backend is bound.
    pub fn learner(&self) -> LearnerHook {
        match &self.learner {
            Some(h) => h.clone(),
            None if self.backend.uses_oracle() => LearnerHook::Oracle,
            None => LearnerHook::None,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"run_id":"r","tasks":["a"],
            "backend":{"schema_filter":{"kind":"oracle"},"query_builder":{"kind":"oracle"}}}"#
    }

    #[test]
    fn defaults_follow_published_settings() {
        let c: RunConfig = serde_json::from_str(minimal()).unwrap();
        assert_eq!((c.memory.a, c.memory.b), (5, 5));
        assert_eq!(c.memory.split_b(), (4, 1));
        assert_eq!(c.synthesis.t, 5);
        assert_eq!(c.limits, Limits { train: 1000, test: 300 });
        assert_eq!(c.learner(), LearnerHook::Oracle);
        assert_eq!(c.backend.question_generator, RoleSpec::Template);
        c.validate().unwrap();
    }

    #[test]
    fn missing_endpoint_is_a_config_error() {
        let c: RunConfig = serde_json::from_str(
            r#"{"run_id":"r","tasks":["a"],
                "backend":{"schema_filter":{"kind":"http","url":"","model":"m"},"query_builder":{"kind":"oracle"}}}"#,
        )
        .unwrap();
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let e = serde_json::from_str::<RunConfig>(
            r#"{"run_id":"r","tasks":["a"],
                "backend":{"schema_filter":{"kind":"http","model":"m"},"query_builder":{"kind":"oracle"}}}"#,
        );
        assert!(e.is_err());
    }

    #[test]
    fn oracle_only_for_filter_and_build() {
        let mut c: RunConfig = serde_json::from_str(minimal()).unwrap();
        c.backend.question_generator = RoleSpec::Oracle;
        assert!(c.validate().is_err());
    }

    #[test]
    fn split_rounds_to_nearest() {
        let m = MemoryConfig {
            a: 5,
            b: 7,
            ratio: [4, 1],
        };
        assert_eq!(m.split_b(), (6, 1));
        let m = MemoryConfig {
            a: 5,
            b: 1,
            ratio: [4, 1],
        };
        assert_eq!(m.split_b(), (1, 0));
    }
}
