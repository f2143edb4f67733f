//! Small shared helpers: stable hashing, seed derivation and slot templates.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a over raw bytes. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Derives a child seed from `(seed, label, counter)`.
///
/// The recipe is FNV-1a over `seed.to_le_bytes() ++ label ++ counter.to_le_bytes()`.
/// Every randomized step in the crate goes through this function, which is
/// what makes reruns and cross-language replays bit-identical.
pub fn derive_seed(seed: u64, label: &str, counter: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + label.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    buf.extend_from_slice(&counter.to_le_bytes());
    fnv1a64(&buf)
}

/// ChaCha8 generator seeded from [`derive_seed`].
pub fn rng_for(seed: u64, label: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, counter))
}

/// Single-pass `{name}` substitution. Unknown slots are left verbatim and
/// substituted text is never rescanned.
pub fn render_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let replaced = tail.find('}').and_then(|close| {
            let name = &tail[1..close];
            slots.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Hex SHA-256 of a byte string (config hashes, cache keys).
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
