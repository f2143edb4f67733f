//! Replay memories: a hashed bag-of-tokens embedder, deterministic k-means
//! exemplar selection and the two per-task banks.

mod bank;

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::util::fnv1a64;

pub use bank::{build_real_structure_memory, build_schema_memory, MemoryBank, MemoryEntryA, MemoryEntryB, Origin};

/// Dimension of [`default_embed`] vectors.
pub const EMBED_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("cannot cluster an empty sample set")]
    Empty,
    #[error("{clusters} clusters requested from {samples} samples")]
    TooManyClusters { clusters: usize, samples: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("embedding dimensions differ ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("memory bank io at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("memory bank {path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("sample {id}: {message}")]
    Sample { id: String, message: String },
}

/// Text encoder used for clustering keys.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Lower-cases, splits on non-alphanumerics, hashes each token with 64-bit
/// FNV-1a into 256 buckets, counts, and L2-normalizes. Empty text maps to the
/// first basis vector.
pub fn default_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    let lower = text.to_lowercase();
    for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        v[(fnv1a64(tok.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        "fnv1a-bow-256"
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        default_embed(text)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `1 - cos(a, b)`.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterConfig {
    pub clusters: usize,
    pub max_iter: usize,
}

impl ClusterConfig {
    pub fn new(clusters: usize) -> Self {
        ClusterConfig {
            clusters,
            max_iter: 100,
        }
    }
}

/// Final partition of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index of every sample.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Representative sample index per cluster, in cluster order.
    pub medoids: Vec<usize>,
    pub iterations: usize,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }
}

/// Orders sample indices by key text, then by position.
fn key_order(keys: &[String], a: usize, b: usize) -> Ordering {
    keys[a].cmp(&keys[b]).then(a.cmp(&b))
}

fn mean(points: &[Vec<f64>], idx: &[usize], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for &i in idx {
        for (x, y) in c.iter_mut().zip(&points[i]) {
            *x += y;
        }
    }
    let n = idx.len().max(1) as f64;
    c.iter_mut().for_each(|x| *x /= n);
    c
}

/// Deterministic k-means over precomputed vectors.
///
/// Seeds by farthest-point traversal from the lexicographically smallest key,
/// runs Lloyd iterations until assignments settle (ties go to the lower
/// cluster index), refills empty clusters with the point farthest from its
/// centroid, and picks per cluster the member closest to the centroid, ties
/// broken by smallest key.
pub fn cluster_vectors(keys: &[String], points: &[Vec<f64>], cfg: &ClusterConfig) -> Result<Clustering, MemoryError> {
    let n = points.len();
    let k = cfg.clusters;
    if n == 0 {
        return Err(MemoryError::Empty);
    }
    if k == 0 {
        return Err(MemoryError::ZeroClusters);
    }
    if k > n {
        return Err(MemoryError::TooManyClusters {
            clusters: k,
            samples: n,
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(MemoryError::Dimension(dim, p.len()));
    }

    // farthest-point initialization
    let first = (0..n).min_by(|&a, &b| key_order(keys, a, b)).unwrap();
    let mut seeds = vec![first];
    let mut nearest: Vec<f64> = points.par_iter().map(|p| distance(p, &points[first])).collect();
    while seeds.len() < k {
        let next = (0..n)
            .filter(|i| !seeds.contains(i))
            .min_by(|&a, &b| nearest[b].total_cmp(&nearest[a]).then_with(|| key_order(keys, a, b)))
            .unwrap();
        seeds.push(next);
        let fresh: Vec<f64> = points.par_iter().map(|p| distance(p, &points[next])).collect();
        for (d, f) in nearest.iter_mut().zip(fresh) {
            *d = d.min(f);
        }
    }
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&s| points[s].clone()).collect();

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        points
            .par_iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, cen) in centroids.iter().enumerate() {
                    let d = distance(p, cen);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };

    let mut assignment: Vec<usize> = Vec::new();
    let mut iterations = 0;
    for it in 0..cfg.max_iter.max(1) {
        iterations = it + 1;
        let mut next = assign(&centroids);
        refill_empty(&mut next, &centroids, points, keys, k);
        let settled = next == assignment;
        assignment = next;
        centroids = (0..k)
            .map(|c| {
                let idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
                mean(points, &idx, dim)
            })
            .collect();
        if settled {
            break;
        }
    }

    let medoids = (0..k)
        .map(|c| {
            (0..n)
                .filter(|&i| assignment[i] == c)
                .min_by(|&a, &b| {
                    distance(&points[a], &centroids[c])
                        .total_cmp(&distance(&points[b], &centroids[c]))
                        .then_with(|| key_order(keys, a, b))
                })
                .expect("clusters are never empty after refill")
        })
        .collect();
    Ok(Clustering {
        assignment,
        centroids,
        medoids,
        iterations,
    })
}

/// Moves points into empty clusters. The donor is the point farthest from its
/// current centroid among clusters with at least two members.
fn refill_empty(assignment: &mut [usize], centroids: &[Vec<f64>], points: &[Vec<f64>], keys: &[String], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = distance(&points[a], &centroids[assignment[a]]);
                let db = distance(&points[b], &centroids[assignment[b]]);
                // farthest first; among ties the smallest key wins
                da.total_cmp(&db).then_with(|| key_order(keys, b, a))
            })
            .expect("k <= n guarantees a donor");
        assignment[donor] = empty;
    }
}

/// Embeds `(key, payload)` samples, clusters them into `cfg.clusters` groups
/// and returns one representative payload per cluster in cluster order.
pub fn cluster_select<P: Clone>(
    samples: &[(String, P)],
    embedder: &dyn Embedder,
    cfg: &ClusterConfig,
) -> Result<Vec<P>, MemoryError> {
    let keys: Vec<String> = samples.iter().map(|(k, _)| k.clone()).collect();
    let points: Vec<Vec<f64>> = keys.par_iter().map(|k| embedder.embed(k)).collect();
    let c = cluster_vectors(&keys, &points, cfg)?;
    Ok(c.medoids.iter().map(|&i| samples[i].1.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(xs: &[&str]) -> Vec<(String, usize)> {
        xs.iter().enumerate().map(|(i, k)| (k.to_string(), i)).collect()
    }

    #[test]
    fn embedding_is_unit_norm() {
        for t in ["", "a", "select count(*) from head", "A a a"] {
            let v = default_embed(t);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(default_embed("")[0], 1.0);
        assert_eq!(default_embed("Head AGE"), default_embed("head, age"));
    }

    #[test]
    fn half_overlap_cosine() {
        let (a, b, c) = (fnv1a64(b"a") % 256, fnv1a64(b"b") % 256, fnv1a64(b"c") % 256);
        assert!(a != b && a != c && b != c);
        assert!((cosine(&default_embed("a b"), &default_embed("a c")) - 0.5).abs() < 1e-12);
        assert!(cosine(&default_embed("b"), &default_embed("c")).abs() < 1e-12);
    }

    #[test]
    fn all_samples_when_clusters_equal_count() {
        let s = keys(&["x y", "z", "w q", "x"]);
        let mut got = cluster_select(&s, &HashEmbedder, &ClusterConfig::new(4)).unwrap();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_keys_split_off_the_odd_one() {
        let s = keys(&["s", "s", "t", "s", "s"]);
        let got = cluster_select(&s, &HashEmbedder, &ClusterConfig::new(2)).unwrap();
        let ks: Vec<&str> = got.iter().map(|&i| s[i].0.as_str()).collect();
        assert!(ks.contains(&"s") && ks.contains(&"t"));
    }

    #[test]
    fn identical_keys_still_give_distinct_samples() {
        let s = keys(&["same", "same", "same"]);
        let got = cluster_select(&s, &HashEmbedder, &ClusterConfig::new(2)).unwrap();
        assert_eq!(got.len(), 2);
        assert_ne!(got[0], got[1]);
    }

    #[test]
    fn errors() {
        let s = keys(&["a"]);
        assert!(matches!(
            cluster_select(&s, &HashEmbedder, &ClusterConfig::new(2)),
            Err(MemoryError::TooManyClusters { .. })
        ));
        let none: Vec<(String, usize)> = Vec::new();
        assert!(matches!(
            cluster_select(&none, &HashEmbedder, &ClusterConfig::new(1)),
            Err(MemoryError::Empty)
        ));
    }
}
