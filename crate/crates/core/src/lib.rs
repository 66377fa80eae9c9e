//! Categorical fragility analysis.
//!
//! Every pair of labels in a taxonomy is scored with a sensitivity index that
//! combines pair frequency exposure, semantic distance between label
//! embeddings, and a weighted Damerau-Levenshtein transformation cost. Large
//! taxonomies are ranked with a hybrid search: Top-K semantic neighbours from
//! an HNSW index, followed by exact morphological scoring of only those
//! candidates. A Monte-Carlo typo simulator checks the ranking against
//! empirical confusion rates.

pub mod ann_index;
pub mod cost_model;
pub mod edit_engine;
pub mod embedding;
mod error;
pub mod ingestion;
pub mod isec_core;
pub mod perturb_sim;
pub mod report;
pub mod service;

pub use ann_index::{Index, IndexMode, IndexParams, Neighbor, NeighborList};
pub use cost_model::CostConfig;
pub use edit_engine::{align, cmp, EditKind, EditOp, PathSummary};
pub use embedding::{dsn, EmbeddingVector, HashEmbedder};
pub use error::{Error, Result};
pub use ingestion::{read_dataset, Dataset, DuplicateReport, NormalizationPolicy};
pub use isec_core::{fmn, isec_pair, rank_brute_force, rank_taxonomy, PairScore, Ranking, Taxonomy};
pub use perturb_sim::{simulate, validate_ranking, ConfusionStats, Outcome, TypoModel, ValidationReport};
