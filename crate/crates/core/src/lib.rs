//! Language-model expectations over unspoken scalar alternatives, used as
//! predictors of human scalar-inference (SI) rates.
//!
//! The crate is organised along the analysis pipeline:
//!
//! * [`ingest`] loads the human SI datasets and Cloze accessibility data.
//! * [`templates`] renders scalar constructions (`"X, but not Y"`).
//! * [`scoring`] turns a construction plus candidate strong scalemates into
//!   surprisals through a pluggable language-model backend, with a
//!   persistent score cache.
//! * [`alternatives`] builds the candidate alternative sets.
//! * [`concept`] computes similarity-weighted (concept-based) surprisal.
//! * [`stats`] holds correlation, least-squares and nested-model tests.
//! * [`pipeline`] wires everything together and writes reports.

pub mod alternatives;
pub mod concept;
pub mod ingest;
pub mod pipeline;
pub mod scale;
pub mod scoring;
pub mod stats;
pub mod templates;

pub use alternatives::{AlternativeSet, FrequencyTable, Lexicon};
pub use concept::{EmbeddingTable, WeightedSurprisalResult};
pub use ingest::{DatasetId, DatasetSpec, SiScale, StimulusItem};
pub use scale::{PartOfSpeech, Scale};
pub use scoring::{ScoredAlternative, Scorer, ScoringMode};
pub use templates::ScalarConstruction;
