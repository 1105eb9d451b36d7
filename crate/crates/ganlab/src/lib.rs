//! Desk-scale adversarial-training laboratory.
//!
//! The crate treats two-player minimax training as online no-regret play and
//! provides everything needed to study it end to end on a laptop:
//!
//! - [`diffgraph`]: a tiny reverse-mode autodiff graph over rank-≤2 `f64`
//!   tensors whose gradients are themselves graph nodes, so gradient
//!   penalties (which need gradients *of* gradients) differentiate cleanly.
//! - [`nets`]: plain MLPs with explicit parameter tensors, deterministic
//!   initialization, checkpoint I/O, and a random architecture sampler.
//! - [`objectives`]: minimax losses (cross-entropy, Wasserstein-style, and a
//!   family of variational divergence objectives).
//! - [`penalties`]: discriminator gradient penalties measured at perturbed
//!   real points or on real/fake interpolates.
//! - [`regretgame`]: no-regret updates (projected OGD, FTRL) on box-constrained
//!   games, regret accounting, duality gaps, and local-equilibrium probes.
//! - [`synthdata`]: 2D mixture/manifold samplers and an IDX image reader.
//! - [`metrics`]: mode-coverage scoring, discriminator level sets (PGM/CSV),
//!   latent-space walks, and benchmark aggregation.
//! - [`harness`]: configuration, optimizers, the alternating/simultaneous
//!   training loop, and the multi-architecture stability benchmark.
//! - [`gradcheck`]: randomized finite-difference verification of first- and
//!   second-order gradients, shared by the CLI and the test suite.

pub mod diffgraph;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod nets;
pub mod objectives;
pub mod penalties;
pub mod regretgame;
pub mod synthdata;

/// Crate-wide error type. Variants correspond to the distinct failure
/// classes callers are expected to branch on (exit codes, test assertions).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or node shapes are incompatible; the message names the node
    /// or operand involved.
    #[error("shape error: {0}")]
    Shape(String),
    /// A value left the mathematical domain of an operation (log of a
    /// non-positive number, probability outside (0,1), ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Graph evaluation needed a value for an input node that was not bound.
    #[error("unbound input: {0}")]
    UnboundInput(String),
    /// Differentiation was requested for an output that is not a scalar.
    #[error("gradient requires a scalar output, got {0}")]
    NonScalarOutput(String),
    /// A computed quantity was NaN or infinite where finiteness is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// A configuration file or CLI argument combination is invalid.
    #[error("invalid config: {0}")]
    Config(String),
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// A file had the wrong format (bad magic, truncated payload, bad float).
    #[error("parse error: {0}")]
    Parse(String),
    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
