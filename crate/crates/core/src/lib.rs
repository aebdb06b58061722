//! Single-user preference ranking for chess compositions.
//!
//! A solver's history is kept as two chronologically ordered databases of
//! positions, one liked and one disliked. Each database becomes a sequence
//! of change values (how much each FEN differs from the one before it), and
//! new positions are scored by how they shift repeated Welch t-tests between
//! chunks of the two sequences.

pub mod cli;
pub mod config;
pub mod engine;
pub mod eval;
pub mod fen;
pub mod metric;
pub mod pgn;
pub mod rng;
pub mod service;
pub mod special;
pub mod stats;
pub mod store;
pub mod synth;

pub use engine::{
    build_cv_sequence, partition_chunks, rank_collection, score_candidate, CandidateScore,
    CvSequence, CycleConfig, CycleScore, EngineError, RankEngine,
};
pub use fen::{parse_fen, FenError, FenRecord};
pub use metric::{canonical_buffer, change_value, ChangeMetric, ChangeValue};
pub use stats::{descriptive, two_tailed_p, welch_ttest, TTestResult};
pub use store::{Label, PreferenceDb, Store, Timestamp};
