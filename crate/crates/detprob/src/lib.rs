//! Determinantal probability measures on finite ground sets.
//!
//! A Hermitian positive contraction `Q` on `l2(E)` (all eigenvalues in
//! `[0, 1]`) defines a probability measure on subsets of `E` through
//! `P[A subset of S] = det(Q restricted to A)`. This crate computes with
//! such measures exactly and by simulation:
//!
//! * [`kernels`]: kernel and subspace types, validation, duality,
//!   conditioning, dilation of contractions to projections, and a zoo of
//!   named constructions (Bernoulli, renewal, Toeplitz, cyclic-character).
//! * [`extalg`]: a sparse exterior-algebra engine whose cylinder formula is
//!   an independent oracle for every probability the rest of the crate
//!   produces.
//! * [`measure`]: exact cylinder probabilities, full enumeration, entropy,
//!   total variation, and marginal-count statistics.
//! * [`sampler`]: exact sequential sampling with replayable seeded streams,
//!   plus chi-square goodness of fit against exact tables.
//! * [`graphs`]: weighted graphs, star spaces, transfer-current kernels,
//!   spanning-tree counts, and Kirchhoff-style identities.
//! * [`coupling`]: feasibility searches for stochastic domination,
//!   disjoint-union couplings, and complete couplings on cyclic groups.
//! * [`checks`]: negative-association and tail-bound test batteries, plus
//!   probes of open questions (disjoint occurrence, entropy concavity).
//!
//! Ground sets are capped at 62 elements so subsets fit in a `u64` bitmask;
//! operations that enumerate all subsets are capped at 20 elements.

pub mod checks;
pub mod coupling;
pub mod extalg;
pub mod graphs;
pub mod ground;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod measure;
pub mod sampler;

pub use ground::{Ground, Mask};
pub use kernels::{Kernel, Subspace};
pub use measure::DistributionTable;

/// Version stamped into every serialized report.
pub const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest ground set representable as a `u64` bitmask.
pub const GROUND_CAP: usize = 62;

/// Largest ground set for which full `2^n` enumeration is permitted.
pub const ENUMERATION_CAP: usize = 20;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ground set has {size} elements, exceeding the cap of {cap}")]
    GroundTooLarge { size: usize, cap: usize },
    #[error("duplicate label `{0}` in ground set")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("ground sets differ: {0}")]
    GroundMismatch(String),
    #[error("validation failed: {0}")]
    Invalid(String),
    #[error("event probability {prob:.3e} is below tolerance {tol:.3e}")]
    ImpossibleEvent { prob: f64, tol: f64 },
    #[error("enumeration over {size} elements exceeds the cap of {cap}")]
    EnumerationCap { size: usize, cap: usize },
    #[error("numerically singular system: {0}")]
    Singular(String),
    #[error("graph is not connected; components: {0:?}")]
    Disconnected(Vec<Vec<String>>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
