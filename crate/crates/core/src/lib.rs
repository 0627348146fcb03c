//! Truncated multivariate normal and elliptical distributions.
//!
//! The crate covers density evaluation and normalizing constants for
//! models truncated below a componentwise cutoff, multivariate normal
//! rectangle probabilities, exact and tabulated samplers with rejection
//! and Gibbs truncation, the polar-coordinate closed forms for the
//! covariance of a truncated-at-the-mean bivariate pair, maximum
//! likelihood and the likelihood-ratio test of independence for the
//! truncated bivariate normal, and an empirical harness checking that
//! block independence is equivalent to a vanishing off-diagonal scale
//! block.

pub mod density;
pub mod error;
pub mod inference;
pub mod model;
pub mod mvnprob;
pub mod polar;
pub mod quad;
pub mod rng;
pub mod sampling;
mod simplex;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
