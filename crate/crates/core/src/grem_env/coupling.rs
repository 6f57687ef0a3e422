//! One probability space carrying `γ̂^(n)` for every `n` and the limit `γ̂`.
//!
//! Each parent `x|_{j-1}` owns an i.i.d. Exp(1) sequence `E_j(x|_{j-1}, i)`
//! with partial sums `S_j(x|_j)`. Then
//!
//! ```text
//! γ̂^(n)_j(x) = c_j G_j^{-1}(S_j(x|_j) / S_j(x|_{j-1}, M_j + 1))
//! γ̂_j(x)     = S_j(x|_j)^{-1/α_j}
//! ```
//!
//! The sequences depend only on the seed and the parent path, so runs for
//! different `n` share them.

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use super::build::{parent_coords, plan_storage, remainder_sum, GremEnv, GremOptions};
use super::tail::{fine_tune_volumes, scaling_constant, TailSpec};
use crate::analysis::LimitEnvironment;
use crate::error::{Error, Result};
use crate::rng::{address_stream, derive_seed, stream_rng, SimRng, Source};
use crate::tree_env::{make_tree, Address, Environment, GammaLevel, TreeSpec};

const FIELD_KEY: u64 = 0x636f_7570_6c65_6431;
const REST_KEY: u64 = 0x7265_6d61_696e_6465;

/// `∫_a^b s^{-1/α} ds`, `b` possibly infinite.
fn power_integral(a: f64, b: f64, alpha: f64) -> f64 {
    let e = 1.0 - 1.0 / alpha;
    let hi = if b.is_finite() { b.powf(e) } else { 0.0 };
    ((a.powf(e) - hi) / (1.0 / alpha - 1.0)).max(0.0)
}

/// The exponential field behind the coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpField {
    /// Independent Exp(1) draws, one ChaCha8 stream per parent.
    Seeded(u64),
    /// Every exponential equal to the given value.
    Constant(f64),
}

/// The sequence `E_j(parent, 1), E_j(parent, 2), ..`.
pub enum FieldStream {
    Seeded(SimRng),
    Constant(f64),
}

impl FieldStream {
    pub fn next_exp(&mut self) -> f64 {
        match self {
            FieldStream::Seeded(rng) => rng.exp1(),
            FieldStream::Constant(v) => *v,
        }
    }
}

impl ExpField {
    pub fn new(seed: u64) -> Self {
        ExpField::Seeded(derive_seed(seed, FIELD_KEY))
    }

    pub fn stream(&self, level: usize, parent: &[u64]) -> FieldStream {
        match *self {
            ExpField::Seeded(seed) => FieldStream::Seeded(stream_rng(seed, address_stream(level, parent))),
            ExpField::Constant(v) => FieldStream::Constant(v),
        }
    }

    /// Randomness for the parts not read off the field: in top storage
    /// `S(M + 1) - S(keep)` and the finite remainder.
    fn rest_stream(&self, level: usize, parent: &[u64]) -> SimRng {
        let seed = match *self {
            ExpField::Seeded(seed) => seed,
            ExpField::Constant(v) => v.to_bits(),
        };
        stream_rng(derive_seed(seed, REST_KEY), address_stream(level, parent))
    }

    /// `Σ` of `count` further field values, drawn from `rest`.
    fn rest_sum(&self, count: u64, rest: &mut SimRng) -> Result<f64> {
        match *self {
            ExpField::Seeded(_) => Ok(Gamma::new(count as f64, 1.0)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(rest)),
            ExpField::Constant(v) => Ok(v * count as f64),
        }
    }

    /// `S_j(x|_j)`.
    pub fn partial_sum(&self, addr: &Address) -> Result<f64> {
        let j = addr.level();
        if j == 0 {
            return Err(Error::Domain("the root carries no partial sum".into()));
        }
        let x = addr.coords()[j - 1];
        if addr.coords().contains(&0) {
            return Err(Error::Domain(format!("labels start at 1, got {addr}")));
        }
        let mut stream = self.stream(j, &addr.coords()[..j - 1]);
        Ok((0..x).map(|_| stream.next_exp()).sum())
    }
}

/// The limit environment `γ̂` on the infinite tree.
#[derive(Debug, Clone)]
pub struct CoupledLimit {
    field: ExpField,
    alphas: Vec<f64>,
    /// `γ̂` on the finite tree, stored like the finite environment.
    on_tree: Environment,
    /// Per level and parent, `Σ_{x_j > M_j} γ̂_j` by the midpoint rule.
    beyond: Vec<Vec<f64>>,
}

impl CoupledLimit {
    pub fn on_tree(&self) -> &Environment {
        &self.on_tree
    }
}

impl LimitEnvironment for CoupledLimit {
    fn levels(&self) -> usize {
        self.alphas.len()
    }

    fn gamma(&self, addr: &Address) -> Result<f64> {
        if addr.level() > self.alphas.len() {
            return Err(Error::Domain(format!("{addr} is below the leaves")));
        }
        let s = self.field.partial_sum(addr)?;
        Ok(s.powf(-1.0 / self.alphas[addr.level() - 1]))
    }

    /// Mass over the finite tree's parents at level `j - 1`, with every
    /// label at level `j`: matched with the finite `Σ γ̄_j`.
    fn gamma_bar_total(&self, level: usize) -> Result<f64> {
        if level == 0 || level > self.alphas.len() {
            return Err(Error::Domain(format!("no level {level}")));
        }
        let tree = self.on_tree.tree();
        let mut bars = vec![1.0];
        for j in 1..level {
            let m = tree.volume(j);
            let v = self.on_tree.dense(j).expect("only the last level can be sparse");
            bars = (0..tree.count(j))
                .map(|i| bars[(i / m) as usize] * v[i as usize])
                .collect();
        }
        Ok(bars
            .iter()
            .enumerate()
            .map(|(q, b)| b * (self.on_tree.parent_sum(level, q as u64) + self.beyond[level - 1][q]))
            .sum())
    }
}

/// Finite and limit environments built from one [`ExpField`].
#[derive(Debug, Clone)]
pub struct CoupledEnvPair {
    pub finite: GremEnv,
    pub limit: CoupledLimit,
    /// Parents whose `S_j(x|_{j-1}, M_j + 1)` exceeds `2 M_j`.
    pub guard_violations: u64,
}

impl CoupledEnvPair {
    pub fn guard_holds(&self) -> bool {
        self.guard_violations == 0
    }
}

struct ParentDraw {
    finite: Vec<f64>,
    tau: Vec<f64>,
    limit: Vec<f64>,
    finite_rest: f64,
    limit_rest: f64,
    beyond: f64,
    violates: bool,
}

fn draw_parent(
    field: &ExpField,
    spec: &TailSpec,
    c: f64,
    level: usize,
    parent: &[u64],
    m: u64,
    keep: Option<u64>,
) -> Result<ParentDraw> {
    let a = spec.alpha;
    let stored = keep.unwrap_or(m);
    let mut rng = field.stream(level, parent);
    let mut s = 0.0;
    let partial: Vec<f64> = (0..stored)
        .map(|_| {
            s += rng.next_exp();
            s
        })
        .collect();
    let mut rest_rng = field.rest_stream(level, parent);
    let total = if stored == m {
        s + rng.next_exp()
    } else {
        s + field.rest_sum(m + 1 - stored, &mut rest_rng)?
    };
    let tau: Vec<f64> = partial.iter().map(|&si| spec.inverse(si / total)).collect();
    let finite_rest = c * remainder_sum(spec, m - stored, s / total, &mut rest_rng)?;
    let limit_rest = if stored == m {
        0.0
    } else {
        power_integral(s + 0.5, total - 0.5, a)
    };
    Ok(ParentDraw {
        finite: tau.iter().map(|t| c * t).collect(),
        limit: partial.iter().map(|si| si.powf(-1.0 / a)).collect(),
        tau,
        finite_rest,
        limit_rest,
        beyond: power_integral(total - 0.5, f64::INFINITY, a),
        violates: total > 2.0 * m as f64,
    })
}

/// Builds `γ̂^(n)` and `γ̂` for the fine-tuned tree with `M_1 = n`.
pub fn coupled_envs(n: u64, specs: &[TailSpec], opts: &GremOptions, seed: u64) -> Result<CoupledEnvPair> {
    coupled_envs_with_field(n, specs, opts, ExpField::new(seed))
}

pub fn coupled_envs_with_field(
    n: u64,
    specs: &[TailSpec],
    opts: &GremOptions,
    field: ExpField,
) -> Result<CoupledEnvPair> {
    if let ExpField::Constant(v) = field {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("field value must be positive, got {v}")));
        }
    }
    let volumes = fine_tune_volumes(n, specs)?;
    let tree: TreeSpec = make_tree(&volumes)?;
    let k = tree.levels();
    let keep = plan_storage(&tree, opts, 2)?;
    let scaling = specs
        .iter()
        .zip(&volumes)
        .map(|(s, &m)| scaling_constant(s, m))
        .collect::<Result<Vec<_>>>()?;

    let mut finite_levels = Vec::with_capacity(k);
    let mut limit_levels = Vec::with_capacity(k);
    let mut coins = Vec::with_capacity(k - 1);
    let mut beyond = Vec::with_capacity(k);
    let mut guard_violations = 0;
    for j in 1..=k {
        let level_keep = keep.filter(|_| j == k);
        let draws = (0..tree.count(j - 1))
            .into_par_iter()
            .map(|q| {
                let coords = parent_coords(&tree, j, q);
                draw_parent(
                    &field,
                    &specs[j - 1],
                    scaling[j - 1],
                    j,
                    &coords,
                    tree.volume(j),
                    level_keep,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        guard_violations += draws.iter().filter(|d| d.violates).count() as u64;
        beyond.push(draws.iter().map(|d| d.beyond).collect());
        if j < k {
            coins.push(
                draws
                    .iter()
                    .flat_map(|d| d.tau.iter().map(|t| 1.0 / (1.0 + t)))
                    .collect(),
            );
        }
        let flat = |f: fn(&ParentDraw) -> &Vec<f64>| draws.iter().flat_map(|d| f(d).iter().copied()).collect();
        match level_keep {
            None => {
                finite_levels.push(GammaLevel::Dense(flat(|d| &d.finite)));
                limit_levels.push(GammaLevel::Dense(flat(|d| &d.limit)));
            }
            Some(keep) => {
                finite_levels.push(GammaLevel::Top {
                    keep,
                    values: flat(|d| &d.finite),
                    tail_sums: draws.iter().map(|d| d.finite_rest).collect(),
                });
                limit_levels.push(GammaLevel::Top {
                    keep,
                    values: flat(|d| &d.limit),
                    tail_sums: draws.iter().map(|d| d.limit_rest).collect(),
                });
            }
        }
    }
    Ok(CoupledEnvPair {
        finite: GremEnv {
            env: Environment::from_levels(tree.clone(), finite_levels)?,
            coins,
            scaling,
        },
        limit: CoupledLimit {
            field,
            alphas: specs.iter().map(|s| s.alpha).collect(),
            on_tree: Environment::from_levels(tree, limit_levels)?,
            beyond,
        },
        guard_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::condition_values;

    fn pareto(alphas: &[f64]) -> Vec<TailSpec> {
        alphas.iter().map(|&a| TailSpec::pareto(a).unwrap()).collect()
    }

    #[test]
    fn closed_form_at_level_one() {
        let specs = pareto(&[0.5]);
        let pair = coupled_envs(50, &specs, &GremOptions::default(), 9).unwrap();
        let mut rng = ExpField::new(9).stream(1, &[]);
        let s: Vec<f64> = (0..51)
            .scan(0.0, |acc, _| {
                *acc += rng.next_exp();
                Some(*acc)
            })
            .collect();
        let g = pair.finite.env.dense(1).unwrap();
        for x in 0..50 {
            // c = 50^{-2}, G^{-1}(u) = u^{-2}.
            let expect = (s[x] / s[50]).powi(-2) / 2500.0;
            assert!((g[x] - expect).abs() <= 1e-12 * expect);
            let lim = pair.limit.gamma(&Address::new(vec![x as u64 + 1])).unwrap();
            assert!((lim - s[x].powi(-2)).abs() <= 1e-12 * lim);
        }
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn unit_field() {
        let specs = pareto(&[0.5]);
        for m in [4u64, 100, 10_000] {
            let pair = coupled_envs_with_field(m, &specs, &GremOptions::default(), ExpField::Constant(1.0)).unwrap();
            let g = pair.finite.env.dense(1).unwrap();
            for x in 1..=m.min(10) {
                let xf = x as f64;
                // c G^{-1}(x / (M + 1)) = (x M / (M + 1))^{-1/α}.
                let finite = (xf * m as f64 / (m as f64 + 1.0)).powi(-2);
                let limit = xf.powi(-2);
                assert!((g[x as usize - 1] - finite).abs() <= 1e-12 * finite);
                let lim = pair.limit.gamma(&Address::new(vec![x])).unwrap();
                assert!((lim - limit).abs() <= 1e-12 * limit);
            }
        }
        assert!(coupled_envs_with_field(4, &specs, &GremOptions::default(), ExpField::Constant(0.0)).is_err());
    }

    #[test]
    fn field_is_shared_across_n() {
        let specs = pareto(&[0.6]);
        let a = coupled_envs(20, &specs, &GremOptions::default(), 4).unwrap();
        let b = coupled_envs(200, &specs, &GremOptions::default(), 4).unwrap();
        for x in 1..=20u64 {
            let addr = Address::new(vec![x]);
            assert_eq!(
                a.limit.on_tree().gamma(&addr).unwrap(),
                b.limit.on_tree().gamma(&addr).unwrap()
            );
        }
    }

    #[test]
    fn finite_approaches_limit() {
        let specs = pareto(&[0.5]);
        let gaps: Vec<f64> = [100u64, 10_000, 1_000_000]
            .iter()
            .map(|&n| {
                let pair = coupled_envs(n, &specs, &GremOptions::default(), 11).unwrap();
                let r = condition_values(&pair.finite.env, Some(&pair.limit), 10).unwrap();
                r.level(1).em2_pointwise.unwrap()
            })
            .collect();
        assert!(gaps[2] < gaps[0], "{gaps:?}");
        assert!(gaps[2] < 0.1 * gaps[0], "{gaps:?}");
    }

    #[test]
    fn two_levels_with_top_storage() {
        let specs = pareto(&[0.5, 0.8]);
        let opts = GremOptions {
            storage: super::super::build::LeafStorage::Top(16),
            ..Default::default()
        };
        let pair = coupled_envs(20, &specs, &opts, 2).unwrap();
        assert!(pair.guard_holds());
        let r = condition_values(&pair.finite.env, Some(&pair.limit), 10).unwrap();
        assert!(r.level(2).em2_sum_gap.unwrap().is_finite());
        assert!(pair.limit.gamma_bar_total(2).unwrap() > 0.0);
        assert!(pair.limit.gamma(&Address::new(vec![1, 0])).is_err());
    }

    #[test]
    fn integral() {
        // α = 1/2: ∫_a^∞ s^{-2} ds = 1/a.
        assert!((power_integral(4.0, f64::INFINITY, 0.5) - 0.25).abs() < 1e-15);
        assert!((power_integral(1.0, 2.0, 0.5) - 0.5).abs() < 1e-15);
    }
}
