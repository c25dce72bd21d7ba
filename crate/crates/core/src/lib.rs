//! Conflict detection for natural-language software requirements.
//!
//! The pipeline runs in two phases. Phase I embeds every requirement,
//! builds the pairwise cosine matrix and learns a similarity cutoff from
//! an ROC sweep over training folds; requirements whose nearest neighbour
//! clears the cutoff become candidate conflicts. Phase II re-checks each
//! candidate by comparing the entities it mentions against the entities of
//! its most similar requirements and keeps only those with enough overlap.
//!
//! Modules map onto the stages:
//!
//! - [`corpus`]: requirement datasets, pair-preserving folds, synthetic conflicts
//! - [`embedding`]: tokenization, TFIDF, external vectors, fused embeddings
//! - [`similarity`]: cosine similarity matrix and neighbour queries
//! - [`threshold`]: ROC sweep, cutoff selection, candidate conflict set
//! - [`ner`]: general noun/verb tagger and a linear-chain CRF entity tagger
//! - [`semantic`]: entity-overlap filtering of candidates
//! - [`eval`]: confusion matrices, macro metrics, fold aggregation, reports
//! - [`config`] and [`pipeline`]: run configuration and end-to-end orchestration

pub mod bundled;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod io;
pub mod ner;
pub mod pipeline;
pub mod semantic;
pub mod similarity;
pub mod threshold;

pub use corpus::{FoldAssignment, Requirement, RequirementSet};
pub use embedding::{EmbeddingTable, EmbeddingVector, TfidfModel, Token};
pub use similarity::SimilarityMatrix;
