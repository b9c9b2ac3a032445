//! Gate-model quantum neural network simulator with graph-based training.
//!
//! The crate provides:
//!
//! - [`qsim`]: statevector simulation of Pauli-rotation circuits, basis
//!   encoding of labeled bitstrings, readout expectations, and sampling.
//! - [`envgraph`]: the parameter-carrying DAG behind a circuit, with
//!   deterministic topological ordering and constraint residuals.
//! - [`qnn_train`]: the feed-forward training pass; side information,
//!   backward errors, multiplicative gate updates, and gradient tables.
//! - [`rqnn_train`]: the recurrent variant with a scalar feedback surrogate,
//!   per-round gradients, replayable traces, and recurrent-dynamics
//!   diagnostics with norm bounds.
//! - [`gradcheck`]: parameter-shift and finite-difference oracles plus the
//!   closed-form Hessian of a surrogate loss with its sparsity checks.
//!
//! All operations are pure: they take parameters and return fresh values,
//! so independent evaluations can run concurrently. Randomness always flows
//! through explicit seeds (see [`rng`]).

pub mod dataset;
pub mod dense;
pub mod envgraph;
pub mod error;
pub mod gradcheck;
pub mod qnn_train;
pub mod qsim;
pub mod rng;
pub mod rqnn_train;

pub use error::{CoreError, Result};
