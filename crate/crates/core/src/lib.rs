//! Distributional clustering of words.
//!
//! Nouns are clustered by their conditional distributions over the verbs
//! that take them as direct objects. Clusters come from deterministic
//! annealing with Kullback-Leibler distortion, which yields a hierarchy of
//! soft clusterings as the inverse temperature grows. Each clustering is a
//! class-based model `p̂_n = sum_c p(c|n) p_c` that can be evaluated on
//! held-out pairs.

pub mod classmodel;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod modelfile;
pub mod registry;
pub mod simplex;
pub mod synth;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded operation: ChaCha8, seeded through
/// `seed_from_u64`. Its output stream does not depend on platform or
/// word size.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
