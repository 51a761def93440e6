//! Dual-perspective reference grounding annotation for asymmetric,
//! MapTask-style collaborative dialogue.
//!
//! The crate is organised along the annotation pipeline:
//!
//! - [`corpus`]: dialogues, timed units, moves, transactions, reference
//!   expressions and landmark inventories, plus JSONL ingestion.
//! - [`landmark`]: the unified landmark identifier grammar, ordinal
//!   assignment across map sides, discrepancy classification and the
//!   lexical-variant registry.
//! - [`annotation`]: the five-attribute cascade, annotation records, their
//!   validation and the JSON Schema handed to structured-output providers.
//! - [`prompt`]: per-transaction prompt rendering.
//! - [`annotator`]: provider abstraction, batching with retries, response
//!   parsing, reconciliation and the deterministic mock provider.
//! - [`analysis`]: understanding states, distributions, reference chains and
//!   turns-to-ground.
//! - [`eval`]: scoring machine annotations against human gold.

pub mod analysis;
pub mod annotation;
pub mod annotator;
pub mod corpus;
pub mod diagnostics;
pub mod eval;
pub mod landmark;
pub mod prompt;
mod role;

pub use role::SpeakerRole;
