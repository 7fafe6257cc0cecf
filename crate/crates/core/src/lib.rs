//! Approximate and exact violation of input-output safety properties for
//! neural policies.
//!
//! A *property* pairs an input hyperrectangle (the pre-condition) with an
//! action the policy must never select inside it. The *violation* of a
//! property is the fraction of the pre-condition on which the policy picks
//! that action anyway. This crate provides:
//!
//! - [`mlp`]: a small ReLU network with exact backprop and the margin
//!   augmentation used to test the post-condition.
//! - [`properties`]: property sets, the navigation properties, online property
//!   generation, and the Monte Carlo violation estimator.
//! - [`verify`]: interval bound propagation with branch-and-bound that brackets
//!   the exact violation ratio.
//! - [`env`]: a deterministic 2D mapless navigation simulator.
//! - [`algos`]: PPO, dueling double DQN, Lagrangian PPO and penalty shaping.
//! - [`harness`]: run configuration, orchestration and reports behind the CLI.

pub mod algos;
pub mod env;
mod error;
pub mod harness;
pub mod mlp;
pub mod properties;
pub mod verify;

pub use error::{Error, Result};

/// Seeded generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
