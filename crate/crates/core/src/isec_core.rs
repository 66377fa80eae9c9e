//! Pair scoring and the two-stage ranking pipeline.
//!
//! A pair's sensitivity index is
//!
//! ```text
//! ISEC = (1 + FMN) / (DSN^alpha * CMP^(1 - alpha))
//! ```
//!
//! with `FMN = log10((F_i + F_j) / 2)`, DSN the normalized cosine distance of
//! the label embeddings and CMP the penalized mean edit cost. The index is an
//! unbounded positive number and is only meaningful as an ordering.
//!
//! [`rank_taxonomy`] retrieves the Top-K semantic neighbours of every label
//! and scores only those candidates, so the morphological work is `N * K`
//! alignments instead of `N * (N - 1) / 2`. [`rank_brute_force`] scores every
//! pair and serves as the reference.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann_index::{Index, IndexMode, IndexParams, IndexStats};
use crate::cost_model::CostConfig;
use crate::edit_engine::{align, cmp, PathSummary};
use crate::embedding::{cosine, dsn_from_similarity, EmbeddingVector, HashEmbedder};
use crate::error::{Error, Result};

/// Smallest CMP used when a path consists only of zero-cost overrides.
pub const CMP_FLOOR: f64 = 1e-6;

/// A normalized label set with frequencies and one embedding per label.
///
/// Labels are stored in sorted order and label ids index that order, so the
/// input order of the entries never affects ids or scores.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    labels: Vec<String>,
    frequencies: Vec<u64>,
    embeddings: Vec<EmbeddingVector>,
}

impl Taxonomy {
    pub fn new(mut entries: Vec<(String, u64, EmbeddingVector)>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "a taxonomy needs at least 2 labels, got {}",
                entries.len()
            )));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParams(format!("duplicate label {:?}", w[0].0)));
        }
        let dim = entries[0].2.dim();
        for (label, freq, v) in &entries {
            if label.is_empty() {
                return Err(Error::EmptyLabel);
            }
            if *freq == 0 {
                return Err(Error::Domain(format!("frequency of {label:?} must be >= 1")));
            }
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                    context: format!("embedding of {label:?}"),
                });
            }
            if v.norm() == 0.0 {
                return Err(Error::ZeroNorm);
            }
        }
        let mut labels = Vec::with_capacity(entries.len());
        let mut frequencies = Vec::with_capacity(entries.len());
        let mut embeddings = Vec::with_capacity(entries.len());
        for (l, f, v) in entries {
            labels.push(l);
            frequencies.push(f);
            embeddings.push(v);
        }
        Ok(Taxonomy {
            labels,
            frequencies,
            embeddings,
        })
    }

    /// Builds a taxonomy embedding every label with `embedder`.
    pub fn embed(entries: Vec<(String, u64)>, embedder: &HashEmbedder) -> Result<Self> {
        let entries = entries
            .into_iter()
            .map(|(l, f)| {
                let v = embedder.embed(&l)?;
                Ok((l, f, v))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Unit frequencies, hash embeddings.
    pub fn from_labels<S: AsRef<str>>(labels: &[S], embedder: &HashEmbedder) -> Result<Self> {
        Self::embed(
            labels.iter().map(|l| (l.as_ref().to_string(), 1)).collect(),
            embedder,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.frequencies[id]
    }

    pub fn embedding(&self, id: usize) -> &EmbeddingVector {
        &self.embeddings[id]
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    pub fn id_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn build_index(&self, params: IndexParams) -> Result<Index> {
        Index::build(self.embeddings.clone(), params.fitted_to(self.len()))
    }
}

/// `log10` of the pair's mean frequency.
pub fn fmn(f_i: u64, f_j: u64) -> Result<f64> {
    if f_i == 0 || f_j == 0 {
        return Err(Error::Domain(format!(
            "frequencies must be >= 1, got ({f_i}, {f_j})"
        )));
    }
    Ok(((f_i as f64 + f_j as f64) / 2.0).log10())
}

/// Sensitivity index of one pair from its three components.
pub fn isec_pair(fmn: f64, dsn: f64, cmp: f64, alpha: f64) -> Result<f64> {
    if !(dsn > 0.0) || !dsn.is_finite() {
        return Err(Error::Domain(format!("DSN must be > 0, got {dsn}")));
    }
    if !(cmp > 0.0) || !cmp.is_finite() {
        return Err(Error::Domain(format!("CMP must be > 0, got {cmp}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(fmn >= 0.0) || !fmn.is_finite() {
        return Err(Error::Domain(format!("FMN must be >= 0, got {fmn}")));
    }
    Ok((1.0 + fmn) / (dsn.powf(alpha) * cmp.powf(1.0 - alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFlag {
    /// Raw DSN fell below the floor (embedding collision).
    DsnClamped,
    /// The edit path cost nothing; CMP was floored.
    CmpClamped,
    /// Costs differ by direction; the larger of the two directed scores is kept.
    AsymmetricCost,
    /// Distinct raw labels normalize to the same label.
    DuplicateCollision,
}

impl ScoreFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreFlag::DsnClamped => "dsn-clamped",
            ScoreFlag::CmpClamped => "cmp-clamped",
            ScoreFlag::AsymmetricCost => "asymmetric-cost",
            ScoreFlag::DuplicateCollision => "duplicate-collision",
        }
    }
}

/// One scored category pair. `path` turns `label_i` into `label_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub label_i: String,
    pub label_j: String,
    pub fmn: f64,
    pub dsn: f64,
    pub similarity: f64,
    pub cm: f64,
    pub cp: f64,
    pub cmp: f64,
    pub isec: f64,
    pub path: PathSummary,
    pub flags: Vec<ScoreFlag>,
}

impl PairScore {
    pub fn flags_string(&self) -> String {
        self.flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// Scores the directed pair `i -> j` given their cosine similarity.
pub fn score_pair(
    tax: &Taxonomy,
    i: usize,
    j: usize,
    similarity: f64,
    cfg: &CostConfig,
) -> Result<PairScore> {
    if i == j {
        return Err(Error::Domain("a label cannot be paired with itself".into()));
    }
    let path = align(tax.label(i), tax.label(j), cfg);
    let mut flags = Vec::new();
    let mut cmp_value = cmp(&path, cfg.k())?;
    if cmp_value < CMP_FLOOR {
        cmp_value = CMP_FLOOR;
        flags.push(ScoreFlag::CmpClamped);
    }
    let (dsn, clamped) = dsn_from_similarity(similarity);
    if clamped {
        flags.push(ScoreFlag::DsnClamped);
    }
    let fmn = fmn(tax.frequency(i), tax.frequency(j))?;
    let isec = isec_pair(fmn, dsn, cmp_value, cfg.alpha())?;
    Ok(PairScore {
        i,
        j,
        label_i: tax.label(i).to_string(),
        label_j: tax.label(j).to_string(),
        fmn,
        dsn,
        similarity,
        cm: path.cm,
        cp: path.cp,
        cmp: cmp_value,
        isec,
        path,
        flags,
    })
}

/// Ranking order: ISEC descending, then DSN ascending, then label ids.
pub fn ranking_order(a: &PairScore, b: &PairScore) -> std::cmp::Ordering {
    b.isec
        .total_cmp(&a.isec)
        .then(a.dsn.total_cmp(&b.dsn))
        .then(a.key().cmp(&b.key()))
        .then(a.i.cmp(&b.i))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankStats {
    pub n: usize,
    /// Neighbours retrieved per label (after clamping to `n - 1`).
    pub k: usize,
    pub mode: Option<IndexMode>,
    /// Alignments run for retrieved candidates.
    pub morph_evaluations: u64,
    /// Extra alignments for the reverse direction under asymmetric costs.
    pub reverse_evaluations: u64,
    /// `n * (n - 1) / 2`, the alignments an all-pairs pass needs.
    pub brute_force_pairs: u64,
    pub unique_pairs: usize,
    pub index: IndexStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ranking {
    pub scores: Vec<PairScore>,
    pub stats: RankStats,
}

impl Ranking {
    pub fn find(&self, a: usize, b: usize) -> Option<&PairScore> {
        let key = (a.min(b), a.max(b));
        self.scores.iter().find(|s| s.key() == key)
    }
}

fn brute_force_pairs(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Builds the index for `tax` and runs [`rank_with_index`].
pub fn rank_taxonomy(tax: &Taxonomy, cfg: &CostConfig, params: &IndexParams) -> Result<Ranking> {
    let index = tax.build_index(*params)?;
    rank_with_index(tax, &index, cfg, params.k)
}

/// Hybrid ranking over a prebuilt index: Top-`k` semantic candidates per
/// label, each scored morphologically, deduplicated to unordered pairs.
pub fn rank_with_index(tax: &Taxonomy, index: &Index, cfg: &CostConfig, k: usize) -> Result<Ranking> {
    if index.len() != tax.len() {
        return Err(Error::InvalidParams(format!(
            "index holds {} vectors but the taxonomy has {} labels",
            index.len(),
            tax.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParams("K must be >= 1".into()));
    }
    let k = k.min(tax.len() - 1);
    let evaluations = AtomicU64::new(0);
    let directed: Vec<Vec<PairScore>> = (0..tax.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = index.search(i, k)?;
            evaluations.fetch_add(neighbors.len() as u64, AtomicOrdering::Relaxed);
            neighbors
                .iter()
                .map(|nb| score_pair(tax, i, nb.id, nb.similarity, cfg))
                .collect()
        })
        .collect::<Result<_>>()?;

    let symmetric = cfg.is_symmetric();
    let mut by_pair: HashMap<(usize, usize), PairScore> = HashMap::new();
    for score in directed.into_iter().flatten() {
        match by_pair.entry(score.key()) {
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(score);
            }
            std::collections::hash_map::Entry::Occupied(mut e) => {
                if prefer(&score, e.get(), symmetric) {
                    e.insert(score);
                }
            }
        }
    }

    let mut reverse_evaluations = 0;
    if !symmetric {
        // pairs seen from one side only still need the other direction
        let one_sided: Vec<(usize, usize, f64)> = by_pair
            .values()
            .map(|s| (s.j, s.i, s.similarity))
            .collect();
        let reverse: Vec<PairScore> = one_sided
            .par_iter()
            .map(|&(i, j, sim)| score_pair(tax, i, j, sim, cfg))
            .collect::<Result<_>>()?;
        reverse_evaluations = reverse.len() as u64;
        for s in reverse {
            let slot = by_pair.get_mut(&s.key()).expect("pair present");
            let mut best = if prefer(&s, slot, false) { s } else { slot.clone() };
            if !best.flags.contains(&ScoreFlag::AsymmetricCost) {
                best.flags.push(ScoreFlag::AsymmetricCost);
            }
            *slot = best;
        }
    }

    let mut scores: Vec<PairScore> = by_pair.into_values().collect();
    scores.sort_by(ranking_order);
    Ok(Ranking {
        stats: RankStats {
            n: tax.len(),
            k,
            mode: Some(index.params().mode),
            morph_evaluations: evaluations.into_inner(),
            reverse_evaluations,
            brute_force_pairs: brute_force_pairs(tax.len()),
            unique_pairs: scores.len(),
            index: index.stats(),
        },
        scores,
    })
}

/// Under symmetric costs keep the evaluation sourced at the lower id; under
/// asymmetric costs keep the larger score.
fn prefer(candidate: &PairScore, current: &PairScore, symmetric: bool) -> bool {
    if symmetric {
        return candidate.i < current.i;
    }
    match candidate.isec.total_cmp(&current.isec) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => candidate.i < current.i,
    }
}

/// Scores every unordered pair directly (reference ranking).
pub fn rank_brute_force(tax: &Taxonomy, cfg: &CostConfig) -> Result<Ranking> {
    let n = tax.len();
    let symmetric = cfg.is_symmetric();
    let evaluations = AtomicU64::new(0);
    let rows: Vec<Vec<PairScore>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let sim = cosine(tax.embedding(i), tax.embedding(j));
                    let forward = score_pair(tax, i, j, sim, cfg)?;
                    evaluations.fetch_add(1, AtomicOrdering::Relaxed);
                    if symmetric {
                        return Ok(forward);
                    }
                    let backward = score_pair(tax, j, i, sim, cfg)?;
                    let mut best = if prefer(&backward, &forward, false) {
                        backward
                    } else {
                        forward
                    };
                    best.flags.push(ScoreFlag::AsymmetricCost);
                    Ok(best)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut scores: Vec<PairScore> = rows.into_iter().flatten().collect();
    scores.sort_by(ranking_order);
    Ok(Ranking {
        stats: RankStats {
            n,
            k: n - 1,
            mode: None,
            morph_evaluations: evaluations.into_inner(),
            reverse_evaluations: 0,
            brute_force_pairs: brute_force_pairs(n),
            unique_pairs: scores.len(),
            index: IndexStats::default(),
        },
        scores,
    })
}
