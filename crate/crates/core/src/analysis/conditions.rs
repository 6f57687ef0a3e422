//! Numeric values of the convergence hypotheses for a finite environment.
//!
//! For `j = 2..k` and `a_p(x) = M_{p+1} γ_p(x|_p)`,
//!
//! ```text
//! em4_j = (Π_{p=2}^{j} M_p)^{-1} Σ_{l=1}^{j-1} Σ_{x|_{j-1}} Π_{p<l} a_p Π_{l<p<j} (1 + a_p)
//! em3_j = the same with an extra factor γ_j(x|_j), summed over x|_j
//! ```
//!
//! The inner sum over `l` obeys `S_d = S_{d-1} (1 + a_d) + Π_{p<d} a_p`,
//! `S_0 = 0`, so both are computed in one pass down the tree. `em2`
//! compares against a limit environment: the largest pointwise gap over
//! the first few labels of each level, and the gap between the total
//! `γ̄_j` masses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree_env::{Address, Environment, FormulaEnvironment, GammaLevel};

/// The limit `γ_j` on the infinite tree.
pub trait LimitEnvironment {
    fn levels(&self) -> usize;
    fn gamma(&self, addr: &Address) -> Result<f64>;
    /// `Σ_{x ∈ N^j} γ̄_j(x)`.
    fn gamma_bar_total(&self, level: usize) -> Result<f64>;
}

impl LimitEnvironment for FormulaEnvironment {
    fn levels(&self) -> usize {
        FormulaEnvironment::levels(self)
    }

    fn gamma(&self, addr: &Address) -> Result<f64> {
        FormulaEnvironment::gamma(self, addr)
    }

    fn gamma_bar_total(&self, level: usize) -> Result<f64> {
        FormulaEnvironment::gamma_bar_total(self, level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelConditions {
    pub j: usize,
    pub em4: Option<f64>,
    pub em3: Option<f64>,
    /// `max |γ_j^(n)(x) - γ_j(x)|` over `x` with every coordinate at most
    /// the window.
    pub em2_pointwise: Option<f64>,
    /// `|Σ γ̄_j^(n) - Σ γ̄_j|`.
    pub em2_sum_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub levels: Vec<LevelConditions>,
}

#[derive(Serialize)]
struct Row {
    n: u64,
    j: usize,
    em4: Option<f64>,
    em3: Option<f64>,
    em2_sum_gap: Option<f64>,
}

impl ConditionReport {
    pub fn level(&self, j: usize) -> &LevelConditions {
        &self.levels[j - 1]
    }

    /// One JSON object per level, `{n, j, em4, em3, em2_sum_gap}`.
    pub fn to_ndjson(&self, n: u64) -> String {
        self.levels
            .iter()
            .map(|l| {
                serde_json::to_string(&Row {
                    n,
                    j: l.j,
                    em4: l.em4,
                    em3: l.em3,
                    em2_sum_gap: l.em2_sum_gap,
                })
                .unwrap()
                    + "\n"
            })
            .collect()
    }
}

/// `(em4_j, em3_j)` for `j = 2..k`.
fn em4_em3(env: &Environment) -> Vec<(f64, f64)> {
    let tree = env.tree();
    let k = tree.levels();
    let mut s = vec![0.0];
    let mut prod = vec![1.0];
    let mut norm = 1.0;
    let mut out = Vec::new();
    for d in 1..k {
        let m = tree.volume(d);
        let next = tree.volume(d + 1) as f64;
        let g = env.dense(d).expect("only the last level may be sparse");
        let count = tree.count(d) as usize;
        let mut s_new = Vec::with_capacity(count);
        let mut p_new = Vec::with_capacity(count);
        for (x, &gamma) in g.iter().enumerate() {
            let parent = x / m as usize;
            let a = next * gamma;
            s_new.push(s[parent] * (1.0 + a) + prod[parent]);
            p_new.push(prod[parent] * a);
        }
        s = s_new;
        prod = p_new;
        norm *= next;
        let em4 = s.iter().sum::<f64>() / norm;
        let em3 = s
            .iter()
            .enumerate()
            .map(|(x, sx)| sx * env.parent_sum(d + 1, x as u64))
            .sum::<f64>()
            / norm;
        out.push((em4, em3));
    }
    out
}

fn pointwise_gap(env: &Environment, limit: &dyn LimitEnvironment, level: usize, window: u64) -> Result<f64> {
    let tree = env.tree();
    let mut bounds: Vec<u64> = (1..=level).map(|j| tree.volume(j).min(window)).collect();
    if let GammaLevel::Top { keep, .. } = &env.levels()[level - 1] {
        bounds[level - 1] = bounds[level - 1].min(*keep);
    }
    let mut coords = vec![1u64; level];
    let mut gap = 0.0f64;
    loop {
        let addr = Address(coords.clone());
        gap = gap.max((env.gamma(&addr)? - limit.gamma(&addr)?).abs());
        // Odometer over the window.
        let mut i = level;
        loop {
            if i == 0 {
                return Ok(gap);
            }
            i -= 1;
            if coords[i] < bounds[i] {
                coords[i] += 1;
                break;
            }
            coords[i] = 1;
        }
    }
}

/// Condition values of `env`; `em2` entries only when `limit` is given.
pub fn condition_values(
    env: &Environment,
    limit: Option<&dyn LimitEnvironment>,
    window: u64,
) -> Result<ConditionReport> {
    let k = env.tree().levels();
    if let Some(l) = limit {
        if l.levels() != k {
            return Err(Error::Dimension {
                expected: k,
                got: l.levels(),
            });
        }
    }
    let mut levels: Vec<LevelConditions> = (1..=k)
        .map(|j| LevelConditions {
            j,
            em4: None,
            em3: None,
            em2_pointwise: None,
            em2_sum_gap: None,
        })
        .collect();
    for (i, (em4, em3)) in em4_em3(env).into_iter().enumerate() {
        levels[i + 1].em4 = Some(em4);
        levels[i + 1].em3 = Some(em3);
    }
    if let Some(limit) = limit {
        for j in 1..=k {
            levels[j - 1].em2_pointwise = Some(pointwise_gap(env, limit, j, window.max(1))?);
            levels[j - 1].em2_sum_gap = Some((env.gamma_bar_total(j) - limit.gamma_bar_total(j)?).abs());
        }
    }
    Ok(ConditionReport { levels })
}


#[cfg(test)]
mod tests {
    use super::oracle::brute_em4_em3;
    use super::*;
    use crate::tree_env::{make_tree, LevelFormula};
    use proptest::prelude::*;

    #[test]
    fn two_level_closed_forms() {
        for (m1, m2, c) in [(3u64, 7u64, 0.25), (10, 4, 2.0), (1, 1, 1.0)] {
            let tree = make_tree(&[m1, m2]).unwrap();
            let env = Environment::new(
                tree.clone(),
                vec![(0..m1).map(|i| 0.1 + i as f64).collect(), vec![c; (m1 * m2) as usize]],
            )
            .unwrap();
            let r = condition_values(&env, None, 10).unwrap();
            assert_eq!(r.level(1).em4, None);
            assert_eq!(r.level(2).em4, Some(m1 as f64 / m2 as f64));
            let em3 = r.level(2).em3.unwrap();
            assert!((em3 - c * m1 as f64).abs() <= 1e-12 * c * m1 as f64);
        }
    }

    #[test]
    fn single_leaf() {
        let env = Environment::constant(make_tree(&[1, 1]).unwrap(), 1.0).unwrap();
        let r = condition_values(&env, None, 1).unwrap();
        assert_eq!(r.level(2).em4, Some(1.0));
        assert_eq!(r.level(2).em3, Some(1.0));
    }

    #[test]
    fn em2_against_formula() {
        let lim = FormulaEnvironment::new(vec![LevelFormula::Geometric(0.5), LevelFormula::Geometric(0.5)]).unwrap();
        let env = lim.truncate(&[20, 20]).unwrap();
        let r = condition_values(&env, Some(&lim), 10).unwrap();
        assert_eq!(r.level(1).em2_pointwise, Some(0.0));
        assert_eq!(r.level(2).em2_pointwise, Some(0.0));
        // Σ_{x≤20} 2^{-x} = 1 - 2^{-20}; level 2 squares it.
        let kept = 1.0 - 2f64.powi(-20);
        assert!((r.level(1).em2_sum_gap.unwrap() - (1.0 - kept)).abs() < 1e-15);
        assert!((r.level(2).em2_sum_gap.unwrap() - (1.0 - kept * kept)).abs() < 1e-15);
        let short = FormulaEnvironment::new(vec![LevelFormula::Geometric(0.5)]).unwrap();
        assert!(condition_values(&env, Some(&short), 10).is_err());
        let json = r.to_ndjson(20);
        assert_eq!(json.lines().count(), 2);
        assert!(json.starts_with("{\"n\":20,\"j\":1,\"em4\":null"));
    }

    #[test]
    fn sparse_last_level() {
        let tree = make_tree(&[2, 5]).unwrap();
        let dense = Environment::new(
            tree.clone(),
            vec![vec![0.5, 0.25], vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.4, 0.3, 0.2, 0.1]],
        )
        .unwrap();
        let top = Environment::from_levels(
            tree,
            vec![
                GammaLevel::Dense(vec![0.5, 0.25]),
                GammaLevel::Top {
                    keep: 2,
                    values: vec![5.0, 4.0, 0.5, 0.4],
                    tail_sums: vec![6.0, 0.6],
                },
            ],
        )
        .unwrap();
        let a = condition_values(&dense, None, 3).unwrap();
        let b = condition_values(&top, None, 3).unwrap();
        assert_eq!(a.level(2).em4, b.level(2).em4);
        assert!((a.level(2).em3.unwrap() - b.level(2).em3.unwrap()).abs() < 1e-12);
    }

    fn arb_env() -> impl Strategy<Value = Environment> {
        proptest::collection::vec(1u64..5, 1..5).prop_flat_map(|vols| {
            let tree = make_tree(&vols).unwrap();
            let sizes: Vec<usize> = (1..=vols.len()).map(|j| tree.count(j) as usize).collect();
            sizes
                .into_iter()
                .map(|n| proptest::collection::vec(1e-3f64..10.0, n))
                .collect::<Vec<_>>()
                .prop_map(move |levels| Environment::new(tree.clone(), levels).unwrap())
        })
    }

    proptest! {
        #[test]
        fn recursion_matches_brute_force(env in arb_env()) {
            let r = condition_values(&env, None, 1).unwrap();
            for j in 2..=env.tree().levels() {
                let (e4, e3) = brute_em4_em3(&env, j);
                let l = r.level(j);
                prop_assert!((l.em4.unwrap() - e4).abs() <= 1e-12 * e4.abs());
                prop_assert!((l.em3.unwrap() - e3).abs() <= 1e-12 * e3.abs());
            }
        }
    }
}
