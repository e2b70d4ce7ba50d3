//! Worldwide image-text data curation.
//!
//! The crate turns a raw pool of alt-text records into a concept-balanced
//! training set: per-language metadata is built from lexicon, n-gram and title
//! sources, every alt-text is assigned a language and matched against that
//! language's metadata, global match counts are accumulated, and a
//! per-language head/tail threshold derived from a single English threshold
//! drives independent per-entry sampling.
//!
//! Module map:
//!
//! * [`corpus`]: record types and JSONL shard I/O.
//! * [`metadata`]: tokenization, n-gram counting, title ranking and entry set builds.
//! * [`lid`]: language identification and the LID-to-metadata language mapping.
//! * [`matcher`]: Aho-Corasick substring matching, brute-force oracle, automaton cache.
//! * [`counting`]: stage-1 global counting and the memory-mapped count format.
//! * [`balancing`]: stage-2 thresholds and stage-3 sampling.
//! * [`dedup`]: random-projection sign hashes and benchmark overlap removal.
//! * [`pipeline`]: stage orchestration, manifests, reports and the training planner.

pub mod balancing;
pub mod corpus;
pub mod counting;
pub mod dedup;
mod error;
pub mod lid;
pub mod matcher;
pub mod metadata;
pub mod pipeline;
pub mod rng;
pub mod text;

pub use error::{Error, Result};
pub use metadata::LanguageCode;
