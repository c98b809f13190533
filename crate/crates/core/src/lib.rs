//! Influence maximization from randomly collected contagion samples under
//! differential privacy.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: weighted undirected graphs, generators and edge-list ingestion.
//! - [`cascade`]: independent-cascade realizations, reachability, Monte-Carlo
//!   and exact influence, and influence-sample generation.
//! - [`samples`]: the binary influence-sample matrix and its text format.
//! - [`estimator`]: sample-based influence estimates and the randomized-response
//!   debiasing pipeline.
//! - [`privacy`]: randomized response, exponential selection and an exact
//!   small-instance privacy verifier.
//! - [`seeding`]: the seed-selection mechanisms.
//! - [`harness`]: config-driven experiment sweeps with CSV output.

pub mod cascade;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod harness;
mod linalg;
pub mod privacy;
pub mod rng;
pub mod samples;
pub mod seeding;

pub use error::{Error, Result};
pub use graph::WeightedGraph;
pub use samples::InfluenceSampleMatrix;
pub use seeding::{Mechanism, SeedSelection};
