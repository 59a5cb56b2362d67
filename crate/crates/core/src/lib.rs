//! Dynamic stochastic blockmodels for sequences of directed graph snapshots.
//!
//! Block edge probabilities evolve as a random walk in logit space and are
//! tracked with an extended Kalman filter ([`state_space`]). When class
//! memberships are unknown they are estimated jointly by hill-climbing label
//! switching on the log-posterior ([`aposteriori`]). [`link_predict`] combines
//! block-level and edge-level predictors and scores them with ROC/AUC, and
//! [`synth`] generates synthetic networks with known ground truth.

pub mod aposteriori;
pub mod error;
pub mod link_predict;
pub mod metrics;
pub mod net_data;
pub mod spectral;
pub mod state_space;
pub mod static_sbm;
pub mod synth;

pub use error::{Error, Result};
pub use net_data::{block_counts, BlockStats, ClassAssignment, Snapshot, SnapshotSequence};
pub use state_space::{GaussianState, Hyperparameters};
pub use static_sbm::EdgeProbabilityMatrix;
