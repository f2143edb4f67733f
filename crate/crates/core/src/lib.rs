//! Toolkit for continual structured-knowledge reasoning over heterogeneous
//! task streams (text-to-SQL, s-expressions, SPARQL, TOP).
//!
//! The pipeline splits reasoning into two generator calls: a schema filter
//! that picks the relevant part of a unified, DB-style schema rendering, and
//! a query builder that writes the final query. Replay memories are built per
//! task from two views (which schema elements a sample uses, and which query
//! structure it has), and the structure view is topped up with executable
//! pseudo samples composed from existing query skeletons.
//!
//! Module map:
//! - [`schema`]: source schemas, unification and the textual rendering.
//! - [`query`]: parsers/renderers for the four query languages, skeletons, filling.
//! - [`exec`]: in-memory relational and triple stores plus evaluators.
//! - [`memory`]: embeddings, deterministic k-means selection, replay banks.
//! - [`synthesis`]: structure composition and the execute-gated synthesis loop.
//! - [`backend`]: generator roles, prompts, HTTP client and deterministic mocks.
//! - [`harness`]: task streams, stage datasets, two-stage inference, metrics.

pub mod backend;
pub mod exec;
pub mod harness;
pub mod memory;
pub mod query;
pub mod schema;
pub mod synthesis;
pub mod util;
pub mod value;

pub use query::Language;
pub use schema::{SchemaSubset, SourceSchema, UnifiedSchema};
pub use value::Value;
