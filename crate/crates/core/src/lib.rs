//! Mobility pattern embeddings for traffic trajectory data.
//!
//! Objects, time slots, current locations and next locations are embedded in
//! one Euclidean space. A context `(object, slot, current)` is summarised by
//! the sum of its three embedding rows, and candidate next locations are
//! ranked by their squared distance to that point. Training maximises a
//! pairwise log-sigmoid objective with sampled negative next locations.
//!
//! The crate is organised as a pipeline:
//!
//! - [`trajectory`]: parsing, time/space discretisation, quadruples, splits,
//!   vocabularies and candidate indexes.
//! - [`model`]: embedding store, scoring, SGD updates and the training loop,
//!   plus the binary model file and TSV export.
//! - [`predictor`]: top-k next-location ranking with explicit backoff.
//! - [`baselines`]: per-object Markov and independent-factor Bayes rankers.
//! - [`evaluation`]: accuracy/average-precision metrics and the multi-run
//!   experiment driver.
//! - [`synthgen`]: road-graph-constrained synthetic trajectories.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod predictor;
pub mod rng;
pub mod synthgen;
pub mod trajectory;

pub use error::{ErrorClass, MpeError, Result};
