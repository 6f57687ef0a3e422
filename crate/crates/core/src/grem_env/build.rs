//! Random GREM-type environments on the fine-tuned tree.
//!
//! Level `j` draws `M_j` depths `τ_j` per parent from its own ChaCha8
//! stream keyed by the parent path, sorts them decreasingly and sets
//! `γ_j = c_j τ_j` and, below the leaves, `p_j = 1 / (1 + τ_j)`.

use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::tail::{fine_tune_volumes, order_relabel, scaling_constant, TailFamily, TailSpec};
use crate::error::{Error, Result};
use crate::rng::{address_stream, stream_rng, SimRng, Source};
use crate::tree_env::{make_tree, CoinModel, Environment, GammaLevel, TreeSpec};

/// How the leaf level is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafStorage {
    /// Dense when it fits under the memory cap, otherwise `Top(64)`.
    Auto,
    Dense,
    /// Only the largest `keep` leaves of each parent, plus their remainder.
    Top(u64),
}

pub const DEFAULT_KEEP: u64 = 64;
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 25;
/// Remainders of at most this many leaves are summed exactly in top mode.
pub const EXACT_REMAINDER: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GremOptions {
    pub storage: LeafStorage,
    /// Largest number of stored `f64` values.
    pub memory_cap: u64,
}

impl Default for GremOptions {
    fn default() -> Self {
        GremOptions {
            storage: LeafStorage::Auto,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

/// A sampled environment with its coins and scaling constants.
#[derive(Debug, Clone)]
pub struct GremEnv {
    pub env: Environment,
    /// `p_j` over generation `j`, for `j < k`.
    pub coins: Vec<Vec<f64>>,
    /// `c_1..c_k`.
    pub scaling: Vec<f64>,
}

impl GremEnv {
    pub fn tree(&self) -> &TreeSpec {
        self.env.tree()
    }

    /// Time is sped up by `1 / c_k`.
    pub fn speed(&self) -> f64 {
        *self.scaling.last().unwrap()
    }

    /// Coin model with leaf depths `c_k τ_k`; needs a dense leaf level.
    pub fn coin_model(&self) -> Result<CoinModel> {
        self.env.require_dense()?;
        let k = self.tree().levels();
        CoinModel::new(
            self.tree().clone(),
            self.env.dense(k).unwrap().to_vec(),
            self.coins.clone(),
        )
    }
}

pub(crate) fn parent_coords(tree: &TreeSpec, level: usize, parent: u64) -> Vec<u64> {
    tree.address_of(level - 1, parent).0
}

/// Decides the leaf storage and checks the memory cap.
pub(crate) fn plan_storage(tree: &TreeSpec, opts: &GremOptions, extra_per_value: u64) -> Result<Option<u64>> {
    let k = tree.levels();
    // Values stored above the leaves: γ and p.
    let upper: u64 = (1..k).map(|j| tree.count(j)).sum::<u64>() * 2;
    let top_need = |keep: u64| -> Option<u64> {
        tree.count(k - 1)
            .checked_mul(keep.min(tree.volume(k)) + 1)
            .and_then(|v| v.checked_mul(extra_per_value))
            .and_then(|v| v.checked_add(upper))
    };
    let dense_need = tree
        .leaf_count()
        .checked_mul(extra_per_value)
        .and_then(|v| v.checked_add(upper));
    let cap = opts.memory_cap;
    let fail = |needed: Option<u64>| Error::MemoryCap {
        needed: needed.unwrap_or(u64::MAX),
        cap,
    };
    let keep = match opts.storage {
        LeafStorage::Dense => {
            return match dense_need {
                Some(n) if n <= cap => Ok(None),
                n => Err(fail(n)),
            }
        }
        LeafStorage::Auto if dense_need.is_some_and(|n| n <= cap) => return Ok(None),
        LeafStorage::Auto => DEFAULT_KEEP,
        LeafStorage::Top(keep) if keep == 0 => {
            return Err(Error::InvalidSpec("top storage must keep at least one leaf".into()))
        }
        LeafStorage::Top(keep) => keep,
    };
    match top_need(keep) {
        Some(n) if n <= cap => Ok((keep < tree.volume(k)).then_some(keep)),
        n => Err(fail(n)),
    }
}

/// Sum of `count` independent depths `G^{-1}(V)` with `V` uniform on
/// `(u_lo, 1]`, that is depths conditioned below `G^{-1}(u_lo)`.
///
/// Exact for small counts. Larger Pareto remainders use a normal law with
/// the conditional mean and variance.
pub(crate) fn remainder_sum(spec: &TailSpec, count: u64, u_lo: f64, rng: &mut SimRng) -> Result<f64> {
    if count == 0 {
        return Ok(0.0);
    }
    let width = 1.0 - u_lo;
    if count <= EXACT_REMAINDER {
        return Ok((0..count).map(|_| spec.inverse(u_lo + width * rng.unit())).sum());
    }
    if !matches!(spec.family, TailFamily::Pareto) {
        return Err(Error::InvalidSpec(format!(
            "top storage with more than {EXACT_REMAINDER} leaves per parent needs the Pareto family"
        )));
    }
    let a = spec.alpha;
    let ln_t = spec.inverse(u_lo).ln();
    // E[τ; τ < t] and E[τ²; τ < t] for density α x^{-α-1} on [1, t).
    let m1 = a / (1.0 - a) * ((1.0 - a) * ln_t).exp_m1() / width;
    let m2 = a / (2.0 - a) * ((2.0 - a) * ln_t).exp_m1() / width;
    let var = (m2 - m1 * m1).max(0.0);
    let n = count as f64;
    let z: f64 = StandardNormal.sample(rng);
    Ok((n * m1 + z * (n * var).sqrt()).clamp(n, n * ln_t.exp()))
}

/// Top `keep` order statistics of `m` depths, decreasing, and the sum of
/// the rest. Uniform order statistics come from exponential spacings.
fn top_order_stats(spec: &TailSpec, m: u64, keep: u64, rng: &mut SimRng) -> Result<(Vec<f64>, f64)> {
    let mut s = 0.0;
    let partial: Vec<f64> = (0..keep)
        .map(|_| {
            s += rng.exp1();
            s
        })
        .collect();
    let rest = Gamma::new((m + 1 - keep) as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let total = s + rest.sample(rng);
    let top: Vec<f64> = partial.iter().map(|&si| spec.inverse(si / total)).collect();
    let tail = remainder_sum(spec, m - keep, s / total, rng)?;
    Ok((top, tail))
}

/// Samples `γ^(n)` and `p^(n)` on the fine-tuned tree with `M_1 = n`.
pub fn build_grem_env(n: u64, specs: &[TailSpec], opts: &GremOptions, seed: u64) -> Result<GremEnv> {
    let volumes = fine_tune_volumes(n, specs)?;
    let tree = make_tree(&volumes)?;
    let k = tree.levels();
    let keep = plan_storage(&tree, opts, 1)?;
    let scaling = specs
        .iter()
        .zip(&volumes)
        .map(|(s, &m)| scaling_constant(s, m))
        .collect::<Result<Vec<_>>>()?;

    let mut levels = Vec::with_capacity(k);
    let mut coins = Vec::with_capacity(k - 1);
    for j in 1..=k {
        let spec = &specs[j - 1];
        let m = tree.volume(j);
        let c = scaling[j - 1];
        let parents = tree.count(j - 1);
        let rng_of = |q: u64| stream_rng(seed, address_stream(j, &parent_coords(&tree, j, q)));
        match keep.filter(|_| j == k) {
            None => {
                let taus: Vec<f64> = (0..parents)
                    .into_par_iter()
                    .map(|q| {
                        let mut rng = rng_of(q);
                        let raw: Vec<f64> = (0..m).map(|_| spec.inverse(rng.unit())).collect();
                        order_relabel(&raw)
                    })
                    .flatten_iter()
                    .collect();
                if j < k {
                    coins.push(taus.iter().map(|t| 1.0 / (1.0 + t)).collect());
                }
                levels.push(GammaLevel::Dense(taus.into_iter().map(|t| c * t).collect()));
            }
            Some(keep) => {
                let per_parent = (0..parents)
                    .into_par_iter()
                    .map(|q| top_order_stats(spec, m, keep, &mut rng_of(q)))
                    .collect::<Result<Vec<_>>>()?;
                let mut values = Vec::with_capacity((parents * keep) as usize);
                let mut tail_sums = Vec::with_capacity(parents as usize);
                for (top, tail) in per_parent {
                    values.extend(top.into_iter().map(|t| c * t));
                    tail_sums.push(c * tail);
                }
                levels.push(GammaLevel::Top {
                    keep,
                    values,
                    tail_sums,
                });
            }
        }
    }
    Ok(GremEnv {
        env: Environment::from_levels(tree, levels)?,
        coins,
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs(alphas: &[f64]) -> Vec<TailSpec> {
        alphas.iter().map(|&a| TailSpec::pareto(a).unwrap()).collect()
    }

    #[test]
    fn dense_shape_and_coins() {
        let g = build_grem_env(5, &specs(&[0.5, 0.8]), &GremOptions::default(), 7).unwrap();
        assert_eq!(g.tree().volumes(), &[5, 25]);
        assert!(g.env.is_dense());
        assert_eq!(g.scaling, vec![5f64.powf(-2.0), 25f64.powf(-1.25)]);
        let c1 = g.scaling[0];
        for (gamma, p) in g.env.dense(1).unwrap().iter().zip(&g.coins[0]) {
            let tau = gamma / c1;
            assert!(tau >= 1.0);
            assert!((p - 1.0 / (1.0 + tau)).abs() < 1e-15);
        }
        for parent in g.env.dense(2).unwrap().chunks(25) {
            assert!(parent.windows(2).all(|w| w[0] >= w[1]));
        }
        let model = g.coin_model().unwrap();
        assert_eq!(model.leaf_gamma().len(), 125);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let s = specs(&[0.4, 0.7]);
        let a = build_grem_env(4, &s, &GremOptions::default(), 1).unwrap();
        let b = build_grem_env(4, &s, &GremOptions::default(), 1).unwrap();
        let c = build_grem_env(4, &s, &GremOptions::default(), 2).unwrap();
        assert_eq!(a.env, b.env);
        assert_ne!(a.env, c.env);
    }

    #[test]
    fn top_storage_keeps_the_dense_leaders_law() {
        let s = specs(&[0.5, 0.9]);
        let opts = GremOptions {
            storage: LeafStorage::Top(8),
            ..Default::default()
        };
        let g = build_grem_env(30, &s, &opts, 3).unwrap();
        assert!(!g.env.is_dense());
        assert!(g.coin_model().is_err());
        let GammaLevel::Top { values, tail_sums, .. } = &g.env.levels()[1] else {
            panic!("expected top storage")
        };
        let c2 = g.scaling[1];
        for (q, top) in values.chunks(8).enumerate() {
            assert!(top.windows(2).all(|w| w[0] >= w[1]));
            // The remainder holds M - keep depths, each in [1, τ_(keep)].
            let rest = (900 - 8) as f64;
            let t = tail_sums[q] / c2;
            assert!(t >= rest && t <= rest * top[7] / c2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn memory_cap() {
        let s = specs(&[0.5, 0.9]);
        let tight = GremOptions {
            storage: LeafStorage::Dense,
            memory_cap: 100,
        };
        assert!(matches!(
            build_grem_env(30, &s, &tight, 0),
            Err(Error::MemoryCap { .. })
        ));
        let auto = GremOptions {
            storage: LeafStorage::Auto,
            memory_cap: 10_000,
        };
        let g = build_grem_env(30, &s, &auto, 0).unwrap();
        assert!(!g.env.is_dense());
        assert!(matches!(
            build_grem_env(
                30,
                &s,
                &GremOptions {
                    storage: LeafStorage::Top(0),
                    memory_cap: 1 << 20
                },
                0
            ),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn remainder_moments() {
        // Mean of the normal approximation against the exact conditional
        // mean, recomputed by quadrature.
        let spec = TailSpec::pareto(0.6).unwrap();
        let u_lo = 0.01;
        let t = spec.inverse(u_lo);
        let steps = 200_000;
        let h = (t - 1.0) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let x = 1.0 + (i as f64 + 0.5) * h;
                x * 0.6 * x.powf(-1.6)
            })
            .sum::<f64>()
            * h;
        let exact_mean = integral / (1.0 - u_lo);
        let count = 1_000_000u64;
        let reps = 200;
        let mut rng = stream_rng(5, 0);
        let avg: f64 = (0..reps)
            .map(|_| remainder_sum(&spec, count, u_lo, &mut rng).unwrap() / count as f64)
            .sum::<f64>()
            / reps as f64;
        assert!((avg - exact_mean).abs() < 1e-3 * exact_mean, "{avg} vs {exact_mean}");
    }
}
