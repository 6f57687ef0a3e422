//! Environment files.
//!
//! ```toml
//! volumes = [3, 2]          # omit for an infinite tree
//!
//! [[level]]
//! gamma = [0.5, 1.0, 2.0]   # one value per vertex, lexicographic order
//!
//! [[level]]
//! gamma_formula = { kind = "geometric", param = 0.5 }
//! cutoff = 12
//! ```
//!
//! A level below the leaves may give coins directly with `p = [..]`.

use serde::{Deserialize, Serialize};

use super::coins::{gamma_to_p, CoinModel};
use super::env::Environment;
use super::formula::{Cutoff, FormulaEnvironment, LevelFormula};
use super::tree::{make_tree, TreeSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_formula: Option<LevelFormula>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volumes: Option<Vec<u64>>,
    #[serde(default, rename = "level")]
    pub levels: Vec<LevelConfig>,
}

enum Source<'a> {
    Table(&'a [f64]),
    Formula(LevelFormula),
    Coins(&'a [f64]),
}

impl LevelConfig {
    fn source(&self, level: usize) -> Result<Source<'_>> {
        match (&self.gamma, &self.gamma_formula, &self.p) {
            (Some(g), None, None) => Ok(Source::Table(g)),
            (None, Some(f), None) => {
                f.validate()?;
                Ok(Source::Formula(*f))
            }
            (None, None, Some(p)) => Ok(Source::Coins(p)),
            (None, None, None) => Err(Error::Parse(format!("level {level} has no parameters"))),
            _ => Err(Error::Parse(format!(
                "level {level} mixes gamma, gamma_formula and p; give exactly one"
            ))),
        }
    }
}

impl EnvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("environment config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Parse("no [[level]] tables".into()));
        }
        if let Some(v) = &self.volumes {
            if v.len() != self.levels.len() {
                return Err(Error::Parse(format!(
                    "{} volumes for {} levels",
                    v.len(),
                    self.levels.len()
                )));
            }
            make_tree(v)?;
        }
        for (j0, l) in self.levels.iter().enumerate() {
            l.source(j0 + 1)?;
            if l.cutoff == Some(0) {
                return Err(Error::Parse(format!("level {} has cutoff 0", j0 + 1)));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    fn tree(&self) -> Result<TreeSpec> {
        match &self.volumes {
            Some(v) => make_tree(v),
            None => {
                let cutoffs = self
                    .levels
                    .iter()
                    .map(|l| l.cutoff)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Parse("infinite tree needs a cutoff on every level".into()))?;
                make_tree(&cutoffs)
            }
        }
    }

    fn level_values(&self, tree: &TreeSpec, level: usize) -> Result<Vec<f64>> {
        let m = tree.volume(level);
        match self.levels[level - 1].source(level)? {
            Source::Table(g) => {
                if g.len() as u64 != tree.count(level) {
                    return Err(Error::Parse(format!(
                        "level {level} lists {} values, the tree has {} vertices there",
                        g.len(),
                        tree.count(level)
                    )));
                }
                Ok(g.to_vec())
            }
            Source::Formula(f) => Ok((0..tree.count(level)).map(|i| f.value(i % m + 1)).collect()),
            Source::Coins(_) => Err(Error::Parse(format!("level {level} gives coins, not trap depths"))),
        }
    }

    /// Dense `γ_1..γ_k` on the finite tree (or the tree of cutoffs).
    pub fn to_environment(&self) -> Result<Environment> {
        let tree = self.tree()?;
        let levels = (1..=tree.levels())
            .map(|j| self.level_values(&tree, j))
            .collect::<Result<Vec<_>>>()?;
        Environment::new(tree, levels)
    }

    /// The closed-form environment and its cutoffs.
    pub fn to_formula(&self) -> Result<(FormulaEnvironment, Vec<Cutoff>)> {
        let formulas = self
            .levels
            .iter()
            .enumerate()
            .map(|(j0, l)| match l.source(j0 + 1)? {
                Source::Formula(f) => Ok(f),
                _ => Err(Error::Parse(format!("level {} is not given by gamma_formula", j0 + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        let cutoffs = self.levels.iter().map(|l| l.cutoff).collect();
        Ok((FormulaEnvironment::new(formulas)?, cutoffs))
    }

    /// Coin parameters; levels given by `gamma` or `gamma_formula` are
    /// converted with `p = 1 / (1 + M_{j+1} γ_j)`.
    pub fn to_coin_model(&self) -> Result<CoinModel> {
        let tree = self.tree()?;
        let k = tree.levels();
        let mut coins = Vec::with_capacity(k - 1);
        for j in 1..k {
            match self.levels[j - 1].source(j)? {
                Source::Coins(p) => {
                    if p.len() as u64 != tree.count(j) {
                        return Err(Error::Parse(format!("level {j} lists {} coins", p.len())));
                    }
                    coins.push(p.to_vec());
                }
                _ => {
                    let m_next = tree.volume(j + 1);
                    coins.push(
                        self.level_values(&tree, j)?
                            .into_iter()
                            .map(|g| gamma_to_p(g, m_next))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
            }
        }
        let leaf_gamma = self.level_values(&tree, k)?;
        CoinModel::new(tree, leaf_gamma, coins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_env::Address;

    #[test]
    fn parses_dense_and_formula_levels() {
        let cfg = EnvConfig::parse(
            r#"
            volumes = [2, 3]
            [[level]]
            gamma = [0.5, 2.0]
            [[level]]
            gamma_formula = { kind = "geometric", param = 0.5 }
            "#,
        )
        .unwrap();
        let env = cfg.to_environment().unwrap();
        assert_eq!(env.gamma(&Address::new([2, 3])).unwrap(), 0.125);
        let coins = cfg.to_coin_model().unwrap();
        assert_eq!(coins.coin(1, 0), 1.0 / 2.5);
    }

    #[test]
    fn infinite_tree_with_cutoffs() {
        let cfg = EnvConfig::parse(
            r#"
            [[level]]
            gamma_formula = { kind = "geometric", param = 0.5 }
            cutoff = 12
            [[level]]
            gamma_formula = { kind = "power", param = 2.0 }
            cutoff = 5
            "#,
        )
        .unwrap();
        let (f, c) = cfg.to_formula().unwrap();
        assert_eq!(f.levels(), 2);
        assert_eq!(c, vec![Some(12), Some(5)]);
        assert_eq!(cfg.to_environment().unwrap().tree().volumes(), &[12, 5]);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "",
            "volumes = [2]\n[[level]]\n",
            "volumes = [2]\n[[level]]\ngamma = [1.0, 1.0]\np = [0.5, 0.5]\n",
            "volumes = [2, 2]\n[[level]]\ngamma = [1.0, 1.0]\n",
            "[[level]]\ngamma = [1.0]\nbogus = 1\n",
            "volumes = [0]\n[[level]]\ngamma = []\n",
            "[[level]]\ngamma_formula = { kind = \"geometric\", param = -1.0 }\n",
        ] {
            assert!(EnvConfig::parse(bad).is_err(), "accepted: {bad:?}");
        }
        let cfg = EnvConfig::parse("volumes = [2]\n[[level]]\ngamma = [1.0]\n").unwrap();
        assert!(cfg.to_environment().is_err());
    }

    #[test]
    fn coins_given_directly() {
        let cfg =
            EnvConfig::parse("volumes = [2, 2]\n[[level]]\np = [0.25, 0.5]\n[[level]]\ngamma = [1.0, 2.0, 3.0, 4.0]\n")
                .unwrap();
        let m = cfg.to_coin_model().unwrap();
        assert_eq!(m.coin(1, 1), 0.5);
        assert!(cfg.to_environment().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = "volumes = [2]\n[[level]]\ngamma = [1.0, 0.25]\n";
        let cfg = EnvConfig::parse(text).unwrap();
        assert_eq!(EnvConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
