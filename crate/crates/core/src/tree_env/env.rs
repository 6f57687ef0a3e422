use super::tree::{Address, TreeSpec};
use crate::error::{Error, Result};

/// Storage of `γ_j` for one level.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaLevel {
    /// One value per vertex of the level, lexicographic order.
    Dense(Vec<f64>),
    /// Only the `keep` largest labels of each parent are stored; the mass
    /// of the remaining `M_j - keep` children is kept as one sum per parent.
    /// Allowed on the last level only.
    Top {
        keep: u64,
        values: Vec<f64>,
        tail_sums: Vec<f64>,
    },
}

/// Trap depths `γ_j : M|_j → (0, ∞)` on a finite tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    tree: TreeSpec,
    levels: Vec<GammaLevel>,
}

fn check_positive(level: usize, values: &[f64]) -> Result<()> {
    match values.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
        Some(i) => Err(Error::Domain(format!(
            "γ at level {level}, index {i} is {} (must be positive and finite)",
            values[i]
        ))),
        None => Ok(()),
    }
}

impl Environment {
    /// Dense environment; `levels[j-1]` lists `γ_j` over generation `j`.
    pub fn new(tree: TreeSpec, levels: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_levels(tree, levels.into_iter().map(GammaLevel::Dense).collect())
    }

    pub fn from_levels(tree: TreeSpec, levels: Vec<GammaLevel>) -> Result<Self> {
        if levels.len() != tree.levels() {
            return Err(Error::Dimension {
                expected: tree.levels(),
                got: levels.len(),
            });
        }
        for (j0, level) in levels.iter().enumerate() {
            let j = j0 + 1;
            match level {
                GammaLevel::Dense(v) => {
                    if v.len() as u64 != tree.count(j) {
                        return Err(Error::Dimension {
                            expected: tree.count(j) as usize,
                            got: v.len(),
                        });
                    }
                    check_positive(j, v)?;
                }
                GammaLevel::Top {
                    keep,
                    values,
                    tail_sums,
                } => {
                    if j != tree.levels() {
                        return Err(Error::InvalidSpec(
                            "only the last level may be stored as top order statistics".into(),
                        ));
                    }
                    let parents = tree.count(j - 1);
                    let keep_eff = (*keep).min(tree.volume(j));
                    if *keep == 0 || values.len() as u64 != parents * keep_eff || tail_sums.len() as u64 != parents {
                        return Err(Error::InvalidSpec("inconsistent top-level storage".into()));
                    }
                    check_positive(j, values)?;
                    if tail_sums.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                        return Err(Error::Domain("negative tail sum".into()));
                    }
                }
            }
        }
        Ok(Environment { tree, levels })
    }

    /// Every γ equal to `value`.
    pub fn constant(tree: TreeSpec, value: f64) -> Result<Self> {
        let levels = (1..=tree.levels())
            .map(|j| vec![value; tree.count(j) as usize])
            .collect();
        Self::new(tree, levels)
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn levels(&self) -> &[GammaLevel] {
        &self.levels
    }

    pub fn is_dense(&self) -> bool {
        self.levels.iter().all(|l| matches!(l, GammaLevel::Dense(_)))
    }

    pub fn require_dense(&self) -> Result<()> {
        if self.is_dense() {
            Ok(())
        } else {
            Err(Error::Domain(
                "operation needs every level materialised (dense environment)".into(),
            ))
        }
    }

    /// Dense values of `level`, if stored densely.
    pub fn dense(&self, level: usize) -> Option<&[f64]> {
        match &self.levels[level - 1] {
            GammaLevel::Dense(v) => Some(v),
            GammaLevel::Top { .. } => None,
        }
    }

    /// `γ_j(x|_j)` by parent index and label.
    pub fn gamma_child(&self, level: usize, parent_index: u64, label: u64) -> Option<f64> {
        let m = self.tree.volume(level);
        if !(1..=m).contains(&label) {
            return None;
        }
        match &self.levels[level - 1] {
            GammaLevel::Dense(v) => v.get((parent_index * m + label - 1) as usize).copied(),
            GammaLevel::Top { keep, values, .. } => {
                let keep = (*keep).min(m);
                (label <= keep)
                    .then(|| values.get((parent_index * keep + label - 1) as usize).copied())
                    .flatten()
            }
        }
    }

    pub fn gamma(&self, addr: &Address) -> Result<f64> {
        let level = addr.level();
        if level == 0 {
            return Err(Error::Domain("the root carries no γ".into()));
        }
        self.tree.check(addr)?;
        let parent = self.tree.index_unchecked(&addr.coords()[..level - 1]);
        self.gamma_child(level, parent, addr.coords()[level - 1])
            .ok_or_else(|| Error::Lookup(format!("γ at {addr} is not materialised")))
    }

    /// `γ̄_j(x|_j) = γ_1(x|_1) ⋯ γ_j(x|_j)`.
    pub fn gamma_bar(&self, addr: &Address) -> Result<f64> {
        if addr.level() == 0 || addr.level() > self.tree.levels() {
            return Err(Error::Domain(format!("γ̄ undefined at {addr}")));
        }
        (1..=addr.level()).try_fold(1.0, |acc, j| Ok(acc * self.gamma(&addr.prefix(j))?))
    }

    /// `Σ_{x_j} γ_j(x|_{j-1}, x_j)` for the parent with the given index.
    pub fn parent_sum(&self, level: usize, parent_index: u64) -> f64 {
        let m = self.tree.volume(level);
        match &self.levels[level - 1] {
            GammaLevel::Dense(v) => {
                let s = (parent_index * m) as usize;
                v[s..s + m as usize].iter().sum()
            }
            GammaLevel::Top {
                keep,
                values,
                tail_sums,
            } => {
                let keep = (*keep).min(m) as usize;
                let s = parent_index as usize * keep;
                values[s..s + keep].iter().sum::<f64>() + tail_sums[parent_index as usize]
            }
        }
    }

    /// `Σ_{x|_j ∈ M|_j} γ̄_j(x|_j)`.
    pub fn gamma_bar_total(&self, level: usize) -> f64 {
        let mut bars = vec![1.0];
        for j in 1..level {
            let m = self.tree.volume(j);
            let v = self.dense(j).expect("only the last level can be sparse");
            bars = (0..self.tree.count(j))
                .map(|i| bars[(i / m) as usize] * v[i as usize])
                .collect();
        }
        bars.iter()
            .enumerate()
            .map(|(p, b)| b * self.parent_sum(level, p as u64))
            .sum()
    }
}
