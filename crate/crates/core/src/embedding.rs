//! Label embeddings and normalized semantic distance.
//!
//! The built-in embedder hashes character n-grams (with `<`/`>` boundary
//! markers) into a fixed number of buckets and L2-normalizes the counts. It
//! is deterministic across runs and platforms and needs no model files.
//! Vectors from an external model can be loaded from a TSV file instead.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 8;
/// Smallest DSN reported for a pair of distinct labels.
pub const DSN_FLOOR: f64 = 1e-6;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;
const HASH_SEED: u64 = 0x5eed_1dec_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Cosine similarity, clamped to [-1, 1]. Zero-norm inputs give 0.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

/// DSN from a cosine similarity, plus whether the floor was applied.
pub fn dsn_from_similarity(similarity: f64) -> (f64, bool) {
    let raw = (1.0 - similarity) / 2.0;
    if raw < DSN_FLOOR {
        (DSN_FLOOR, true)
    } else {
        (raw.min(1.0), false)
    }
}

/// Normalized semantic distance `(1 - cos) / 2`, floored at [`DSN_FLOOR`].
pub fn dsn(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
            context: "dsn operands".into(),
        });
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dsn_from_similarity(cosine(a, b)).0)
}

/// Character n-gram feature-hashing embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub dim: usize,
    pub n_lo: usize,
    pub n_hi: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dim: DEFAULT_DIM,
            n_lo: 2,
            n_hi: 4,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ HASH_SEED;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so low bits (bucket index) depend on every byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// All boundary-marked character n-grams of `label` for `n` in `n_lo..=n_hi`.
pub fn char_ngrams(label: &str, n_lo: usize, n_hi: usize) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(label.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in n_lo..=n_hi {
        if n > chars.len() {
            break;
        }
        grams.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    grams
}

impl HashEmbedder {
    pub fn new(dim: usize, n_lo: usize, n_hi: usize) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidParams(format!(
                "embedding dimension must be >= {MIN_DIM}, got {dim}"
            )));
        }
        if n_lo == 0 || n_lo > n_hi {
            return Err(Error::InvalidParams(format!(
                "invalid n-gram range {n_lo}..={n_hi}"
            )));
        }
        Ok(HashEmbedder { dim, n_lo, n_hi })
    }

    pub fn bucket(&self, gram: &str) -> usize {
        (fnv1a(gram.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed(&self, label: &str) -> Result<EmbeddingVector> {
        if label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        let mut values = vec![0.0; self.dim];
        for gram in char_ngrams(label, self.n_lo, self.n_hi) {
            values[self.bucket(&gram)] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector::new(values))
    }
}

/// What to do when the embedding file lacks a taxonomy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    Fail,
    HashFallback,
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub vectors: HashMap<String, EmbeddingVector>,
    /// Labels that were filled in by the hash embedder.
    pub missing: Vec<String>,
    pub dim: usize,
}

/// Parses `label<TAB>v1 v2 ... vD` rows.
pub fn parse_embeddings(text: &str) -> Result<(HashMap<String, EmbeddingVector>, Option<usize>)> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let row = lineno + 1;
        let (label, rest) = line.split_once('\t').ok_or_else(|| Error::Ingestion {
            row,
            message: "expected `label<TAB>values`".into(),
        })?;
        let values = rest
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Ingestion {
                    row,
                    message: format!("non-numeric vector component {tok:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: values.len(),
                    context: format!("row {row} ({label})"),
                })
            }
            _ => {}
        }
        if out.insert(label.to_string(), EmbeddingVector::new(values)).is_some() {
            return Err(Error::Ingestion {
                row,
                message: format!("duplicate label {label:?}"),
            });
        }
    }
    Ok((out, dim))
}

/// Loads precomputed vectors for `labels` from a TSV embedding file.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    labels: &[String],
    policy: MissingPolicy,
) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut file_vectors, dim) = parse_embeddings(&text)?;
    let dim = dim.unwrap_or(DEFAULT_DIM);
    let missing: Vec<String> = labels
        .iter()
        .filter(|l| !file_vectors.contains_key(*l))
        .cloned()
        .collect();
    if !missing.is_empty() && policy == MissingPolicy::Fail {
        return Err(Error::MissingLabels(missing));
    }
    let fallback = HashEmbedder {
        dim,
        ..HashEmbedder::default()
    };
    let mut vectors = HashMap::with_capacity(labels.len());
    for label in labels {
        let v = match file_vectors.remove(label) {
            Some(v) => {
                if v.norm() == 0.0 {
                    return Err(Error::ZeroNorm);
                }
                v
            }
            None => {
                log::warn!("no precomputed embedding for {label:?}; using hash embedder");
                fallback.embed(label)?
            }
        };
        vectors.insert(label.clone(), v);
    }
    Ok(LoadedEmbeddings {
        vectors,
        missing,
        dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn bag(label: &str) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for g in char_ngrams(label, 2, 4) {
            *m.entry(g).or_insert(0.0) += 1.0;
        }
        m
    }

    fn bag_cosine(a: &str, b: &str) -> f64 {
        let (x, y) = (bag(a), bag(b));
        let dot: f64 = x.iter().map(|(k, v)| v * y.get(k).unwrap_or(&0.0)).sum();
        let nx = x.values().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (nx * ny)
    }

    #[test]
    fn deterministic() {
        let e = HashEmbedder::default();
        assert_eq!(e.embed("abc").unwrap(), e.embed("abc").unwrap());
    }

    #[test]
    fn ngram_extraction() {
        assert_eq!(
            char_ngrams("ab", 2, 4),
            vec!["<a", "ab", "b>", "<ab", "ab>", "<ab>"]
        );
    }

    #[test]
    fn similar_labels_partial_cosine() {
        // Exact bags share "<a", "ab", "<ab": cosine 3/9.
        let exact = bag_cosine("abc", "abd");
        assert!((exact - 3.0 / 9.0).abs() < 1e-12);
        let e = HashEmbedder::default();
        let c = cosine(&e.embed("abc").unwrap(), &e.embed("abd").unwrap());
        assert!(c > 0.0 && c < 1.0, "cosine {c}");
    }

    #[test]
    fn empty_label_rejected() {
        assert!(matches!(
            HashEmbedder::default().embed(""),
            Err(Error::EmptyLabel)
        ));
        assert!(HashEmbedder::new(4, 2, 4).is_err());
        assert!(HashEmbedder::new(16, 3, 2).is_err());
    }

    #[test]
    fn dsn_reference_points() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]);
        let b = EmbeddingVector::new(vec![0.0, 2.0]);
        let c = EmbeddingVector::new(vec![-1.0, 0.0]);
        assert_eq!(dsn(&a, &a).unwrap(), DSN_FLOOR);
        assert!((dsn(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((dsn(&a, &c).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dsn_errors() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]);
        let z = EmbeddingVector::new(vec![0.0, 0.0]);
        let d3 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(dsn(&a, &z), Err(Error::ZeroNorm)));
        assert!(matches!(dsn(&a, &d3), Err(Error::DimensionMismatch { .. })));
    }

    fn write_tsv(dir: &tempfile::TempDir, rows: &[(&str, usize)]) -> std::path::PathBuf {
        let path = dir.path().join("emb.tsv");
        let mut text = String::new();
        for (i, (label, dim)) in rows.iter().enumerate() {
            let vals: Vec<String> = (0..*dim).map(|j| format!("{}", ((i + j) % 7) as f64 + 0.5)).collect();
            text.push_str(&format!("{label}\t{}\n", vals.join(" ")));
        }
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn load_full_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tsv(&dir, &[("caba", 384), ("cba", 384), ("ba", 384)]);
        let labels: Vec<String> = ["caba", "cba", "ba"].iter().map(|s| s.to_string()).collect();
        let loaded = load_embeddings(&path, &labels, MissingPolicy::Fail).unwrap();
        assert_eq!(loaded.vectors.len(), 3);
        assert_eq!(loaded.dim, 384);
        assert!(loaded.missing.is_empty());
    }

    #[test]
    fn load_missing_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tsv(&dir, &[("caba", 384), ("cba", 384)]);
        let labels: Vec<String> = ["caba", "cba", "pba"].iter().map(|s| s.to_string()).collect();
        match load_embeddings(&path, &labels, MissingPolicy::Fail) {
            Err(Error::MissingLabels(m)) => assert_eq!(m, vec!["pba".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        let loaded = load_embeddings(&path, &labels, MissingPolicy::HashFallback).unwrap();
        assert_eq!(loaded.missing, vec!["pba".to_string()]);
        let fallback = HashEmbedder::new(384, 2, 4).unwrap().embed("pba").unwrap();
        assert_eq!(loaded.vectors["pba"], fallback);
    }

    #[test]
    fn load_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tsv(&dir, &[("caba", 384), ("cba", 383)]);
        let labels = vec!["caba".to_string(), "cba".to_string()];
        assert!(matches!(
            load_embeddings(&path, &labels, MissingPolicy::Fail),
            Err(Error::DimensionMismatch { expected: 384, found: 383, .. })
        ));
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 6)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn dsn_symmetric_and_bounded(a in arb_vec(), b in arb_vec()) {
            let (a, b) = (EmbeddingVector::new(a), EmbeddingVector::new(b));
            let ab = dsn(&a, &b).unwrap();
            prop_assert!((ab - dsn(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((DSN_FLOOR..=1.0).contains(&ab));
        }

        #[test]
        fn dsn_scale_invariant(a in arb_vec(), b in arb_vec(), lambda in 0.01f64..100.0) {
            let scaled = EmbeddingVector::new(b.iter().map(|x| x * lambda).collect());
            let (a, b) = (EmbeddingVector::new(a), EmbeddingVector::new(b));
            prop_assert!((dsn(&a, &b).unwrap() - dsn(&a, &scaled).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn embed_unit_norm(label in "\\PC{1,30}") {
            let v = HashEmbedder::default().embed(&label).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
}
