//! Text generation behind four model roles: schema filter, query builder,
//! question generator and structure synthesizer.
//!
//! Backends implement [`Generator`]. A [`Router`] binds each role to one
//! backend and rejects over-length prompts before any call is made.

mod http;
mod mock;
mod oracle;
pub mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpGenerator};
pub use mock::{template_question, EchoGenerator, GarbageGenerator, RuleSynthesizer, TemplateQuestion};
pub use oracle::{OracleEntry, OracleGenerator};

/// Maximum prompt length, in whitespace-separated tokens.
pub const MAX_INPUT_TOKENS: usize = 1024;
pub const MAX_OUTPUT_TOKENS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    SchemaFilter,
    QueryBuilder,
    QuestionGenerator,
    StructureSynthesizer,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::SchemaFilter,
        Role::QueryBuilder,
        Role::QuestionGenerator,
        Role::StructureSynthesizer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::SchemaFilter => "schema-filter",
            Role::QueryBuilder => "query-builder",
            Role::QuestionGenerator => "question-generator",
            Role::StructureSynthesizer => "structure-synthesizer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which dataset sample a request was built from (used by the oracle).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub id: String,
    pub task: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub role: Role,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleRef>,
    /// Training stage the request belongs to (selects per-stage models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

impl GenRequest {
    pub fn new(role: Role, prompt: impl Into<String>) -> Self {
        GenRequest {
            role,
            prompt: prompt.into(),
            max_tokens: MAX_OUTPUT_TOKENS,
            temperature: 0.0,
            sample: None,
            stage: None,
        }
    }

    pub fn for_sample(mut self, id: &str, task: usize) -> Self {
        self.sample = Some(SampleRef {
            id: id.to_string(),
            task,
        });
        self
    }

    pub fn at_stage(mut self, stage: Option<&str>) -> Self {
        self.stage = stage.map(str::to_string);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReply {
    pub text: String,
    pub finish_reason: String,
    pub latency_ms: u64,
}

impl GenReply {
    pub fn text(text: impl Into<String>) -> Self {
        GenReply {
            text: text.into(),
            finish_reason: "stop".into(),
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("prompt has {tokens} tokens, limit is {limit}")]
    TooLong { tokens: usize, limit: usize },
    #[error("no backend bound to role {0}")]
    NotConfigured(Role),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("sample `{0}` unknown to the oracle")]
    UnknownSample(String),
    #[error("request carries no sample reference")]
    MissingSample,
    #[error("empty reply")]
    EmptyReply,
    #[error("{0}")]
    Other(String),
}

impl BackendError {
    /// Transport failures, rate limits and server errors are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A text generation backend. Implementations must be thread-safe.
pub trait Generator: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError>;
}

pub fn token_count(prompt: &str) -> usize {
    prompt.split_whitespace().count()
}

pub fn check_length(prompt: &str) -> Result<(), BackendError> {
    let tokens = token_count(prompt);
    if tokens > MAX_INPUT_TOKENS {
        return Err(BackendError::TooLong {
            tokens,
            limit: MAX_INPUT_TOKENS,
        });
    }
    Ok(())
}

/// Role-to-backend binding.
#[derive(Clone, Default)]
pub struct Router {
    roles: BTreeMap<Role, Arc<dyn Generator>>,
}

impl Router {
    pub fn new() -> Self {
        Router::default()
    }

    pub fn bind(mut self, role: Role, g: Arc<dyn Generator>) -> Self {
        self.roles.insert(role, g);
        self
    }

    pub fn get(&self, role: Role) -> Option<&Arc<dyn Generator>> {
        self.roles.get(&role)
    }

    pub fn has(&self, role: Role) -> bool {
        self.roles.contains_key(&role)
    }

    /// Backend identity per bound role.
    pub fn identities(&self) -> BTreeMap<String, String> {
        self.roles.iter().map(|(r, g)| (r.to_string(), g.id())).collect()
    }
}

impl Generator for Router {
    fn id(&self) -> String {
        let ids: Vec<String> = self.roles.iter().map(|(r, g)| format!("{r}={}", g.id())).collect();
        format!("router[{}]", ids.join(","))
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        check_length(&req.prompt)?;
        let g = self.roles.get(&req.role).ok_or(BackendError::NotConfigured(req.role))?;
        g.generate(req)
    }
}

impl fmt::Debug for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}
