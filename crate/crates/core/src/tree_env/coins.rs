//! Activation coins of the trap model and the law of the jump generation.

use super::env::Environment;
use super::tree::{Address, TreeSpec};
use crate::error::{Error, Result};

/// Heads probability of the coin at `x|_j` that makes the coin dynamics
/// agree with the mark construction: `1 / (1 + M_{j+1} γ_j(x|_j))`.
pub fn gamma_to_p(gamma: f64, next_volume: u64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain(format!("γ must be positive, got {gamma}")));
    }
    if next_volume == 0 {
        return Err(Error::Domain("volume must be at least 1".into()));
    }
    Ok(1.0 / (1.0 + next_volume as f64 * gamma))
}

/// Law of the generation `g_x ∈ {0, .., k-1}` of the ancestor below which
/// the next state is drawn uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct GxDistribution {
    pub pmf: Vec<f64>,
}

impl GxDistribution {
    /// `p_path[j-1] = p_j(x|_j)` for `j = 1..k-1`.
    ///
    /// `P(g = i) = (1 - p_i) Π_{j=i+1}^{k-1} p_j` with `p_0 = 0`.
    pub fn from_coins(p_path: &[f64]) -> Result<Self> {
        if let Some(p) = p_path.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("coin probability {p} outside [0, 1]")));
        }
        let k = p_path.len() + 1;
        let mut pmf = vec![0.0; k];
        let mut upper = 1.0; // Π_{j>i} p_j
        for i in (0..k).rev() {
            let p_i = if i == 0 { 0.0 } else { p_path[i - 1] };
            pmf[i] = (1.0 - p_i) * upper;
            upper *= p_i;
        }
        Ok(GxDistribution { pmf })
    }

    pub fn total(&self) -> f64 {
        self.pmf.iter().sum()
    }
}

/// Coin-tossing parameters: leaf depths `γ_k` and coins `p_1..p_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinModel {
    tree: TreeSpec,
    leaf_gamma: Vec<f64>,
    coins: Vec<Vec<f64>>,
}

impl CoinModel {
    /// Coins supplied directly, `coins[j-1]` over generation `j`.
    pub fn new(tree: TreeSpec, leaf_gamma: Vec<f64>, coins: Vec<Vec<f64>>) -> Result<Self> {
        let k = tree.levels();
        if coins.len() != k - 1 {
            return Err(Error::Dimension {
                expected: k - 1,
                got: coins.len(),
            });
        }
        if leaf_gamma.len() as u64 != tree.leaf_count() {
            return Err(Error::Dimension {
                expected: tree.leaf_count() as usize,
                got: leaf_gamma.len(),
            });
        }
        if leaf_gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Domain("leaf γ must be positive".into()));
        }
        for (j0, level) in coins.iter().enumerate() {
            if level.len() as u64 != tree.count(j0 + 1) {
                return Err(Error::Dimension {
                    expected: tree.count(j0 + 1) as usize,
                    got: level.len(),
                });
            }
            if level.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(Error::Domain(format!("coins of level {} must lie in (0, 1)", j0 + 1)));
            }
        }
        Ok(CoinModel {
            tree,
            leaf_gamma,
            coins,
        })
    }

    /// Coins derived from `γ_1..γ_{k-1}` through [`gamma_to_p`].
    pub fn from_environment(env: &Environment) -> Result<Self> {
        env.require_dense()?;
        let tree = env.tree().clone();
        let k = tree.levels();
        let coins = (1..k)
            .map(|j| {
                let m_next = tree.volume(j + 1);
                env.dense(j)
                    .unwrap()
                    .iter()
                    .map(|&g| gamma_to_p(g, m_next))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let leaf_gamma = env.dense(k).unwrap().to_vec();
        Ok(CoinModel {
            tree,
            leaf_gamma,
            coins,
        })
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn leaf_gamma(&self) -> &[f64] {
        &self.leaf_gamma
    }

    /// `p_j(x|_j)` by index in generation `j`.
    pub fn coin(&self, level: usize, index: u64) -> f64 {
        self.coins[level - 1][index as usize]
    }

    pub(crate) fn coin_path(&self, leaf: &[u64]) -> Vec<f64> {
        (1..self.tree.levels())
            .map(|j| self.coin(j, self.tree.index_unchecked(&leaf[..j])))
            .collect()
    }
}

/// Law of `g_x` at the leaf `leaf`.
pub fn gx_pmf(leaf: &Address, model: &CoinModel) -> Result<GxDistribution> {
    model.tree.check_leaf(leaf)?;
    GxDistribution::from_coins(&model.coin_path(leaf.coords()))
}
