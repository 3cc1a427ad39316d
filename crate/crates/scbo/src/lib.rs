//! Trust-region constrained Bayesian optimization for problems with many
//! black-box constraints.
//!
//! The optimizer combines three ingredients:
//!
//! * independent Gaussian-process surrogates with an anisotropic
//!   squared-exponential kernel ([`gp`]),
//! * a linear or kernel-PCA compression of the constraint vector, so that a
//!   handful of latent surrogates stand in for hundreds or thousands of raw
//!   constraint outputs ([`latent`]),
//! * a hyperrectangular trust region maintained around the incumbent, with
//!   constrained Thompson sampling over a candidate set inside it
//!   ([`trust_region`], [`acquisition`]).
//!
//! [`optimizer`] ties those together into a batch optimization loop with
//! several constraint-modeling modes (per-constraint surrogates, latent
//! surrogates, max-aggregation, pure random search), [`problems`] ships the
//! benchmark problems, and [`harness`] runs repeated experiments and writes
//! CSV/JSON reports.
//!
//! All randomness flows from explicit `u64` seeds; repeated runs with the
//! same seed produce bit-identical outputs regardless of thread count.

pub mod acquisition;
pub mod dataset;
mod error;
pub mod gp;
pub mod harness;
pub mod latent;
pub mod linalg;
pub mod optimizer;
mod par;
pub mod problems;
pub mod rng;
pub mod trust_region;

pub use error::{Error, Result};

/// Pins the linked BLAS to a single thread.
///
/// The crate parallelizes across surrogates and repeated runs, not inside
/// individual factorizations; letting OpenBLAS spawn its own pool on top of
/// that oversubscribes cores and makes timings noisy. Call once at startup
/// (the harness and the test suites do).
pub fn init() {
    linalg::set_blas_threads(1);
}
