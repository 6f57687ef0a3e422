//! Trees, vertex addresses and trap-depth environments.

mod coins;
mod config;
mod env;
mod formula;
mod tree;

pub use coins::{gamma_to_p, gx_pmf, CoinModel, GxDistribution};
pub use config::{EnvConfig, LevelConfig};
pub use env::{Environment, GammaLevel};
pub use formula::{tail_mass, Cutoff, FormulaEnvironment, LevelFormula};
pub use tree::{make_tree, Address, TreeSpec};
