//! Top-K cosine nearest-neighbour retrieval over label embeddings.
//!
//! Two modes share one interface: `Exact` scans every vector and is the
//! oracle, `Hnsw` is a hierarchical navigable small-world graph built once
//! from a fixed seed. Distance inside the graph is `1 - cos`; results report
//! cosine similarity. Ties on similarity go to the lower label id.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{cosine, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    #[default]
    Hnsw,
    Exact,
}

impl std::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hnsw" => Ok(IndexMode::Hnsw),
            "exact" => Ok(IndexMode::Exact),
            other => Err(Error::InvalidParams(format!("unknown index mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexParams {
    /// Maximum degree on upper layers; layer 0 allows twice this.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Neighbours retrieved per label.
    pub k: usize,
    pub mode: IndexMode,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            k: 10,
            mode: IndexMode::Hnsw,
            seed: 42,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("K must be >= 1".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidParams(format!("M must be >= 2, got {}", self.m)));
        }
        if self.ef_search < self.k {
            return Err(Error::InvalidParams(format!(
                "ef_search ({}) must be >= K ({})",
                self.ef_search, self.k
            )));
        }
        if self.ef_construction == 0 {
            return Err(Error::InvalidParams("ef_construction must be >= 1".into()));
        }
        Ok(())
    }

    /// Clamps K to `n - 1` and lifts ef_search to K where needed.
    pub fn fitted_to(mut self, n: usize) -> Self {
        self.k = self.k.min(n.saturating_sub(1)).max(1);
        self.ef_search = self.ef_search.max(self.k);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: usize,
    pub similarity: f64,
}

/// Neighbours of one query, by descending similarity, never containing the query.
pub type NeighborList = Vec<Neighbor>;

#[derive(Debug, Default)]
pub struct IndexCounters {
    distance_evals: AtomicU64,
    searches: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    /// Vector comparisons performed by searches (node visits).
    pub distance_evals: u64,
    pub searches: u64,
    /// Vector comparisons performed while building the graph.
    pub build_distance_evals: u64,
}

#[derive(Clone, Copy, PartialEq)]
struct Scored {
    dist: f64,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
pub struct Index {
    vectors: Vec<EmbeddingVector>,
    params: IndexParams,
    // links[node][layer] -> neighbour ids; empty for exact mode
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_level: usize,
    build_evals: u64,
    counters: IndexCounters,
}

fn sort_neighbors(list: &mut [Neighbor]) {
    list.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.id.cmp(&b.id))
    });
}

impl Index {
    pub fn build(vectors: Vec<EmbeddingVector>, params: IndexParams) -> Result<Self> {
        params.validate()?;
        if vectors.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "index needs at least 2 vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].dim();
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
                context: format!("vector {i}"),
            });
        }
        if vectors.iter().any(|v| v.norm() == 0.0) {
            return Err(Error::ZeroNorm);
        }
        let mut index = Index {
            vectors,
            params,
            links: Vec::new(),
            entry: 0,
            max_level: 0,
            build_evals: 0,
            counters: IndexCounters::default(),
        };
        if params.mode == IndexMode::Hnsw {
            index.build_graph();
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn vector(&self, id: usize) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            distance_evals: self.counters.distance_evals.load(AtomicOrdering::Relaxed),
            searches: self.counters.searches.load(AtomicOrdering::Relaxed),
            build_distance_evals: self.build_evals,
        }
    }

    /// Hash over the stored vectors and graph links.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}", self.params.mode).as_bytes());
        for v in &self.vectors {
            for x in v.values() {
                h.update(x.to_le_bytes());
            }
        }
        for node in &self.links {
            for layer in node {
                h.update((layer.len() as u32).to_le_bytes());
                for id in layer {
                    h.update(id.to_le_bytes());
                }
            }
            h.update([0xff]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn dist(&self, a: u32, q: &EmbeddingVector) -> f64 {
        1.0 - cosine(&self.vectors[a as usize], q)
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn build_graph(&mut self) {
        let n = self.vectors.len();
        let ml = 1.0 / (self.params.m as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (-u.ln() * ml).floor() as usize
            })
            .collect();
        self.links = levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect();
        self.entry = 0;
        self.max_level = levels[0];
        let mut evals = 0u64;

        for q in 1..n as u32 {
            let level = levels[q as usize];
            let query = self.vectors[q as usize].clone();
            let mut ep = vec![Scored {
                dist: self.dist(self.entry, &query),
                id: self.entry,
            }];
            evals += 1;
            for layer in (level + 1..=self.max_level).rev() {
                ep = self.search_layer(&query, &ep, 1, layer, &mut evals);
            }
            for layer in (0..=level.min(self.max_level)).rev() {
                let found = self.search_layer(&query, &ep, self.params.ef_construction, layer, &mut evals);
                let chosen = self.select_neighbors(&found, self.params.m, &mut evals);
                self.links[q as usize][layer] = chosen.iter().map(|s| s.id).collect();
                for s in &chosen {
                    self.connect(s.id, q, layer, &mut evals);
                }
                ep = found;
            }
            if level > self.max_level {
                self.max_level = level;
                self.entry = q;
            }
        }
        self.build_evals = evals;
    }

    fn connect(&mut self, node: u32, new: u32, layer: usize, evals: &mut u64) {
        let max = self.max_degree(layer);
        let links = &mut self.links[node as usize][layer];
        if links.contains(&new) {
            return;
        }
        links.push(new);
        if links.len() <= max {
            return;
        }
        let base = self.vectors[node as usize].clone();
        let mut cands: Vec<Scored> = self.links[node as usize][layer]
            .iter()
            .map(|&id| Scored {
                dist: self.dist(id, &base),
                id,
            })
            .collect();
        *evals += cands.len() as u64;
        cands.sort();
        let kept = self.select_neighbors(&cands, max, evals);
        self.links[node as usize][layer] = kept.iter().map(|s| s.id).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbour already kept; top up with the nearest pruned
    /// candidates if fewer than `m` survive.
    fn select_neighbors(&self, sorted: &[Scored], m: usize, evals: &mut u64) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = &self.vectors[c.id as usize];
            let diverse = kept.iter().all(|k| {
                *evals += 1;
                self.dist(k.id, cv) > c.dist
            });
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Best-first search on one layer; returns up to `ef` nodes sorted by distance.
    fn search_layer(
        &self,
        query: &EmbeddingVector,
        entry: &[Scored],
        ef: usize,
        layer: usize,
        evals: &mut u64,
    ) -> Vec<Scored> {
        let mut visited = vec![false; self.vectors.len()];
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut results: BinaryHeap<Scored> = BinaryHeap::new();
        for &e in entry {
            if !visited[e.id as usize] {
                visited[e.id as usize] = true;
                candidates.push(Reverse(e));
                results.push(e);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
            if c.dist > worst && results.len() >= ef {
                break;
            }
            let Some(neigh) = self.links[c.id as usize].get(layer) else {
                continue;
            };
            for &nb in neigh {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let d = self.dist(nb, query);
                *evals += 1;
                let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
                if results.len() < ef || d < worst {
                    let s = Scored { dist: d, id: nb };
                    candidates.push(Reverse(s));
                    results.push(s);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Top-`k` neighbours of indexed label `query`, excluding itself.
    pub fn search(&self, query: usize, k: usize) -> Result<NeighborList> {
        self.search_counted(query, k).map(|(list, _)| list)
    }

    /// Like [`Index::search`], also returning how many vectors were compared.
    pub fn search_counted(&self, query: usize, k: usize) -> Result<(NeighborList, u64)> {
        let qv = self.vectors.get(query).ok_or(Error::UnknownLabel(query))?;
        let (mut list, evals) = match self.params.mode {
            IndexMode::Exact => {
                let list: Vec<Neighbor> = self
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|&(id, _)| id != query)
                    .map(|(id, v)| Neighbor {
                        id,
                        similarity: cosine(qv, v),
                    })
                    .collect();
                let evals = list.len() as u64;
                (list, evals)
            }
            IndexMode::Hnsw => {
                let mut evals = 1;
                let mut ep = vec![Scored {
                    dist: self.dist(self.entry, qv),
                    id: self.entry,
                }];
                for layer in (1..=self.max_level).rev() {
                    ep = self.search_layer(qv, &ep, 1, layer, &mut evals);
                }
                let ef = self.params.ef_search.max(k + 1);
                let found = self.search_layer(qv, &ep, ef, 0, &mut evals);
                let list = found
                    .into_iter()
                    .filter(|s| s.id as usize != query)
                    .map(|s| Neighbor {
                        id: s.id as usize,
                        similarity: cosine(qv, &self.vectors[s.id as usize]),
                    })
                    .collect();
                (list, evals)
            }
        };
        sort_neighbors(&mut list);
        list.truncate(k);
        self.counters
            .distance_evals
            .fetch_add(evals, AtomicOrdering::Relaxed);
        self.counters.searches.fetch_add(1, AtomicOrdering::Relaxed);
        Ok((list, evals))
    }
}
