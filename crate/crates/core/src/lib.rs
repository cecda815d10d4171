//! Supervised topographic mapping through time with relevance learning.
//!
//! `tempomap` trains one topographically constrained hidden Markov model per
//! class label over a shared 2-D latent grid, links the inverse variance of
//! the Gaussian emissions across the class models, and adapts a per-feature
//! relevance metric by margin-based gradient descent. Trained models classify
//! short, high-dimensional multivariate time series either by maximum
//! likelihood or through an SVM on a likelihood kernel, and expose a relevance
//! profile that ranks the input dimensions by their discriminative value.
//!
//! The crate is organized along the pipeline:
//!
//! * [`data`] — dataset ingestion, normalization, imputation and the
//!   synthetic two-class generator,
//! * [`gtm`] — the static latent-grid machinery (RBF basis, prototype
//!   mapping, Gaussian emissions, weight/variance updates),
//! * [`hmm`] — scaled forward-backward, Baum-Welch statistics and the EM
//!   step for a single sequence model,
//! * [`metric`] — adaptive relevance metrics, the functional time-domain
//!   distance and the margin cost with analytic gradients,
//! * [`sgtm`] — the supervised training loop tying class models together,
//! * [`classify`] — likelihood features, the likelihood kernel and an SMO
//!   solver for the SVM decision rule,
//! * [`eval`] — repeated stratified cross-validation and relevance-profile
//!   aggregation.
//!
//! The `tempomap` binary wires these together behind `simulate`, `train`,
//! `crossval`, `predict`, `export-map` and `relevance` subcommands.

pub mod classify;
pub mod data;
pub mod error;
pub mod eval;
pub mod gtm;
pub mod hmm;
pub mod metric;
pub mod sgtm;
pub mod util;

pub use error::{Error, Result};

/// Schema version written into every serialized artifact.
pub const FORMAT_VERSION: &str = "sgtmtt-1";
