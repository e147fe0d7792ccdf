//! Laboratory for permutation-based gradient descent.
//!
//! The crate is organized along the life of an experiment:
//!
//! * [`problems`] defines finite-sum objectives with closed-form gradients,
//! * [`oracle`] wraps them into noisy gradient oracles and owns the random
//!   streams,
//! * [`orders`] produces the per-epoch update sequences,
//! * [`measures`] quantifies how good an order is,
//! * [`engine`] runs epoch-based gradient descent and traces it,
//! * [`harness`] tunes step sizes, runs sweeps and backs the CLI.

pub mod engine;
pub mod error;
pub mod harness;
pub mod measures;
pub mod oracle;
pub mod orders;
pub mod problems;
mod vector;

pub use error::{Error, ErrorCategory, Result};
pub use vector::ParameterVector;
