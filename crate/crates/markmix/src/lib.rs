//! Clustering of event sequences (student sessions) into a mixture of
//! discrete Markov chains.
//!
//! A session is encoded as a path through a fixed 8-state model (start, end,
//! and six action states distinguishing lessons from right/wrong answers and
//! same-topic from topic-changing actions). A corpus of such paths is
//! clustered with a modified k-means: random row-stochastic chains act as
//! cluster centres, sequences are assigned to the chain most likely to
//! generate them, and each chain is re-estimated from the empirical
//! transition counts of its members.
//!
//! The crate also ships the surrounding tooling: log ingestion and
//! sessionization, a synthetic-data harness with a noisy-prior recovery
//! experiment, evaluation metrics (average purity, sum of log likelihoods,
//! interior-permutation baseline, per-chain stats, student profiles), and
//! Graphviz export of fitted chains.

pub mod cluster;
pub mod eval;
pub mod export;
pub mod ingest;
pub mod io;
pub mod model;
pub mod rng;
pub mod synth;

mod error;

pub use error::{Error, Result};
