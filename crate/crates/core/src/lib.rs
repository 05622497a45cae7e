//! Particle quantum filters for constant-parameter estimation in open
//! quantum systems.
//!
//! The crate covers the full pipeline: discrete-time partial-Kraus models
//! and their particle filters ([`discrete`]), the positivity-preserving
//! partial-Kraus integrator for diffusive stochastic master equations
//! ([`diffusive`]), batch estimation over many measurement records
//! ([`estimation`]) and the seeded property suites backing the `validate`
//! command ([`validation`]).

pub mod diffusive;
pub mod discrete;
mod error;
pub mod estimation;
pub mod operator;
pub mod validation;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Stateless mix of a master seed and a stream index (SplitMix64 rounds).
///
/// Batch simulation derives one generator per record from this, so results
/// do not depend on scheduling order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
