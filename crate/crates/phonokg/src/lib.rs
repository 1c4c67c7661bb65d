//! phonokg: multi-dialect phonology knowledge graphs.
//!
//! Builds a bipartite character–component knowledge graph from Sinitic
//! pronunciation tables (one node per character, one node per unique
//! initial/final/tone value, one edge type per dialect × component
//! category), trains box/rotation/complex embedding models on it with
//! self-adversarial negative sampling, and evaluates the embeddings
//! three ways:
//!
//! - filtered tail-ranking link prediction (hits@k, MRR),
//! - unsupervised clustering scored by information yield against the
//!   input phonemic categories,
//! - ridge/MLP probes that infer proto-language feature labels.
//!
//! The `phonokg` binary wires the stages into a file-based pipeline;
//! every stage is reproducible from a single seed.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod models;
pub mod numerics;
pub mod probes;
pub mod training;

pub use error::{Error, Result};
