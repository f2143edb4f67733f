//! Deterministic stand-in for trained models: answers from gold data while a
//! sample's task is inside the "learned" window, and answers wrong otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;

use super::{BackendError, GenReply, GenRequest, Generator, Role};
use crate::util::{derive_seed, fnv1a64};

/// Gold outputs of one dataset sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEntry {
    pub task: usize,
    /// Filter-stage target (schema subset text).
    pub filter: String,
    /// Build-stage target (query text).
    pub build: String,
}

/// Replies with gold outputs for tasks in the window.
///
/// Corruption recipe, per sample id `s` and role: the coin is
/// `u = (derive_seed(seed, "oracle-coin", fnv1a64(s)) >> 11) / 2^53`; the
/// reply is corrupted when `u < p` or the task is outside the window. A
/// corrupted reply is the gold output of the sample at position
/// `derive_seed(seed, "oracle-pick", fnv1a64(s)) mod n` among the `n` other
/// samples (sorted by id) whose gold output for that role differs; with no
/// such sample the reply is empty.
pub struct OracleGenerator {
    entries: BTreeMap<String, OracleEntry>,
    window: RwLock<BTreeSet<usize>>,
    p: f64,
    seed: u64,
}

impl OracleGenerator {
    pub fn new(entries: BTreeMap<String, OracleEntry>, p: f64, seed: u64) -> Self {
        let all = entries.values().map(|e| e.task).collect();
        OracleGenerator {
            entries,
            window: RwLock::new(all),
            p,
            seed,
        }
    }

    pub fn set_window(&self, tasks: impl IntoIterator<Item = usize>) {
        *self.window.write().unwrap() = tasks.into_iter().collect();
    }

    pub fn window(&self) -> BTreeSet<usize> {
        self.window.read().unwrap().clone()
    }

    /// Adds gold entries (e.g. for tasks loaded after construction).
    pub fn extend(&mut self, more: impl IntoIterator<Item = (String, OracleEntry)>) {
        self.entries.extend(more);
    }

    fn gold(e: &OracleEntry, role: Role) -> Option<&str> {
        match role {
            Role::SchemaFilter => Some(&e.filter),
            Role::QueryBuilder => Some(&e.build),
            _ => None,
        }
    }

    /// Whether the coin for `id` lands on corruption, ignoring the window.
    pub fn coin(&self, id: &str) -> bool {
        let u = (derive_seed(self.seed, "oracle-coin", fnv1a64(id.as_bytes())) >> 11) as f64 / (1u64 << 53) as f64;
        u < self.p
    }

    fn corrupted(&self, id: &str, role: Role, gold: &str) -> String {
        let others: Vec<&str> = self
            .entries
            .iter()
            .filter(|(k, _)| k.as_str() != id)
            .filter_map(|(_, e)| Self::gold(e, role))
            .filter(|g| *g != gold)
            .collect();
        if others.is_empty() {
            return String::new();
        }
        let i = derive_seed(self.seed, "oracle-pick", fnv1a64(id.as_bytes())) % others.len() as u64;
        others[i as usize].to_string()
    }
}

impl Generator for OracleGenerator {
    fn id(&self) -> String {
        format!("oracle(p={},seed={})", self.p, self.seed)
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        let s = req.sample.as_ref().ok_or(BackendError::MissingSample)?;
        let e = self
            .entries
            .get(&s.id)
            .ok_or_else(|| BackendError::UnknownSample(s.id.clone()))?;
        let gold = Self::gold(e, req.role).ok_or(BackendError::NotConfigured(req.role))?;
        let learned = self.window.read().unwrap().contains(&e.task);
        let text = if learned && !self.coin(&s.id) {
            gold.to_string()
        } else {
            self.corrupted(&s.id, req.role, gold)
        };
        Ok(GenReply::text(text))
    }
}
