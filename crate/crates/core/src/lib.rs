//! Trap models on finite and infinite trees: the coin-tossing model, its
//! Poisson-mark construction, the K-process limit and GREM-type random
//! environments.

pub mod analysis;
pub mod coin_sim;
pub mod error;
pub mod grem_env;
pub mod kproc_sim;
pub mod mark_sim;
pub mod rng;
pub mod trajectory;
pub mod tree_env;

pub use error::{Error, Result};
