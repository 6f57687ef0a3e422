//! Closed-form environments on the infinite tree.
//!
//! Each level is a map `γ_j(x|_j) = f_j(x_j)` of the last coordinate only,
//! so leaf sums factor: `Σ γ̄_k = Π_j Σ_x f_j(x)`.

use serde::{Deserialize, Serialize};

use super::env::Environment;
use super::tree::{make_tree, Address};
use crate::error::{Error, Result};

/// Closed-form level map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "lowercase")]
pub enum LevelFormula {
    /// `f(x) = ratio^x`.
    Geometric(f64),
    /// `f(x) = x^{-exponent}`.
    Power(f64),
}

/// `Σ_{x > n} x^{-s}` for `s > 1`: direct terms up to 64, then
/// Euler–Maclaurin.
fn power_tail(s: f64, n: u64) -> f64 {
    const START: u64 = 64;
    let mut head = 0.0;
    let mut from = n;
    if n < START {
        head = (n + 1..=START).map(|x| (x as f64).powf(-s)).sum();
        from = START;
    }
    let x = from as f64;
    let f = x.powf(-s);
    let r = x.powf(1.0 - s) / (s - 1.0) - 0.5 * f + s * f / (12.0 * x)
        - s * (s + 1.0) * (s + 2.0) * f / (720.0 * x.powi(3))
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * f / (30240.0 * x.powi(5));
    head + r
}

impl LevelFormula {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LevelFormula::Geometric(q) if !(q > 0.0 && q.is_finite()) => {
                Err(Error::Domain(format!("geometric ratio must be positive, got {q}")))
            }
            LevelFormula::Power(s) if !s.is_finite() => {
                Err(Error::Domain(format!("power exponent must be finite, got {s}")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: u64) -> f64 {
        match *self {
            LevelFormula::Geometric(q) => q.powf(x as f64),
            LevelFormula::Power(s) => (x as f64).powf(-s),
        }
    }

    pub fn is_summable(&self) -> bool {
        match *self {
            LevelFormula::Geometric(q) => q < 1.0,
            LevelFormula::Power(s) => s > 1.0,
        }
    }

    fn ensure_summable(&self) -> Result<()> {
        self.validate()?;
        if self.is_summable() {
            Ok(())
        } else {
            Err(Error::Divergence(format!("Σ_x f(x) diverges for {self:?}")))
        }
    }

    /// `Σ_{x > n} f(x)`.
    pub fn tail_sum(&self, n: u64) -> Result<f64> {
        self.ensure_summable()?;
        Ok(match *self {
            LevelFormula::Geometric(q) => q.powf(n as f64 + 1.0) / (1.0 - q),
            LevelFormula::Power(s) => power_tail(s, n),
        })
    }

    pub fn full_sum(&self) -> Result<f64> {
        self.tail_sum(0)
    }

    /// `Σ_{x ≤ n} f(x)`; never diverges.
    pub fn partial_sum(&self, n: u64) -> f64 {
        match *self {
            LevelFormula::Geometric(q) if q != 1.0 => q * (1.0 - q.powf(n as f64)) / (1.0 - q),
            LevelFormula::Geometric(_) => n as f64,
            LevelFormula::Power(s) if s > 1.0 && n > 64 => power_tail(s, 0) - power_tail(s, n),
            LevelFormula::Power(_) => (1..=n).map(|x| self.value(x)).sum(),
        }
    }
}

/// Per-level truncation; `None` keeps every label.
pub type Cutoff = Option<u64>;

/// Closed-form environment on the infinite `k`-level tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaEnvironment {
    formulas: Vec<LevelFormula>,
}

impl FormulaEnvironment {
    pub fn new(formulas: Vec<LevelFormula>) -> Result<Self> {
        if formulas.is_empty() {
            return Err(Error::InvalidSpec("at least one level is required".into()));
        }
        formulas.iter().try_for_each(LevelFormula::validate)?;
        Ok(FormulaEnvironment { formulas })
    }

    pub fn levels(&self) -> usize {
        self.formulas.len()
    }

    pub fn formulas(&self) -> &[LevelFormula] {
        &self.formulas
    }

    pub fn gamma(&self, addr: &Address) -> Result<f64> {
        let j = addr.level();
        if j == 0 || j > self.levels() {
            return Err(Error::Domain(format!("no level for {addr}")));
        }
        let x = addr.coords()[j - 1];
        if x == 0 {
            return Err(Error::Domain("labels start at 1".into()));
        }
        Ok(self.formulas[j - 1].value(x))
    }

    pub fn gamma_bar(&self, addr: &Address) -> Result<f64> {
        (1..=addr.level()).try_fold(1.0, |acc, j| Ok(acc * self.gamma(&addr.prefix(j))?))
    }

    /// `Σ_{x ∈ N^j} γ̄_j(x)`.
    pub fn gamma_bar_total(&self, level: usize) -> Result<f64> {
        self.formulas[..level]
            .iter()
            .try_fold(1.0, |acc, f| Ok(acc * f.full_sum()?))
    }

    /// Dense environment on the tree with volumes `cutoffs`.
    pub fn truncate(&self, cutoffs: &[u64]) -> Result<Environment> {
        if cutoffs.len() != self.levels() {
            return Err(Error::Dimension {
                expected: self.levels(),
                got: cutoffs.len(),
            });
        }
        let tree = make_tree(cutoffs)?;
        let levels = self
            .formulas
            .iter()
            .enumerate()
            .map(|(j0, f)| {
                let m = cutoffs[j0];
                (0..tree.count(j0 + 1)).map(|i| f.value(i % m + 1)).collect()
            })
            .collect();
        Environment::new(tree, levels)
    }
}

/// Mass `Σ γ̄_k` over the leaves having at least one coordinate beyond its
/// cutoff. This is the expected clock time per unit of level-1 time that a
/// truncated construction drops.
///
/// Evaluated as `Σ_j (Π_{i<j} P_i) T_j (Π_{i>j} F_i)` with `P`, `T`, `F` the
/// kept, dropped and full sums of each level, which avoids cancellation.
pub fn tail_mass(env: &FormulaEnvironment, cutoffs: &[Cutoff]) -> Result<f64> {
    if cutoffs.len() != env.levels() {
        return Err(Error::Dimension {
            expected: env.levels(),
            got: cutoffs.len(),
        });
    }
    if cutoffs.contains(&Some(0)) {
        return Err(Error::Domain("cutoffs must be at least 1".into()));
    }
    let full = env
        .formulas
        .iter()
        .map(LevelFormula::full_sum)
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut kept_prefix = 1.0;
    for (j, (f, c)) in env.formulas.iter().zip(cutoffs).enumerate() {
        let (kept, dropped) = match *c {
            Some(n) => (f.partial_sum(n), f.tail_sum(n)?),
            None => (full[j], 0.0),
        };
        let full_suffix: f64 = full[j + 1..].iter().product();
        total += kept_prefix * dropped * full_suffix;
        kept_prefix *= kept;
    }
    Ok(total)
}
