//! compare, distance, expected-theta and check-conditions.

use std::path::Path;

use ktrap::analysis::{
    best_bound, chi_square_transitions, condition_values, ks_one_sample, LimitEnvironment, Reference, TestResult,
};
use ktrap::coin_sim::coin_jump_chain;
use ktrap::grem_env::{build_grem_env, coupled_envs, GremOptions, LeafStorage, TailSpec, DEFAULT_MEMORY_CAP};
use ktrap::kproc_sim::{expected_theta, expected_theta_finite};
use ktrap::mark_sim::mark_jump_chain;
use ktrap::rng::{derive_seed, replica_rng, stream_rng, Source};
use ktrap::trajectory::{JumpChain, Trajectory};
use ktrap::tree_env::{gx_pmf, make_tree, tail_mass, Address, CoinModel, Environment, FormulaEnvironment};
use serde::Serialize;

use crate::config::{read_dump, read_env_config, read_text};
use crate::CliError;

/// Significance level of the statistical gates.
pub const GATE: f64 = 1e-3;
/// Largest tree `compare` builds a full transition matrix for.
pub const COMPARE_MAX_LEAVES: u64 = 1024;

const COMPARE_ENV_KEY: u64 = 0x636f_6d70_6172_6531;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output serialises") + "\n"
}

/// Trap depths log-uniform on `[1/4, 4]`, from the seed.
pub fn random_environment(volumes: &[u64], seed: u64) -> Result<Environment, CliError> {
    let tree = make_tree(volumes).map_err(CliError::config)?;
    let mut rng = stream_rng(derive_seed(seed, COMPARE_ENV_KEY), 0);
    let levels = (1..=tree.levels())
        .map(|j| (0..tree.count(j)).map(|_| 4f64.powf(2.0 * rng.unit() - 1.0)).collect())
        .collect();
    Environment::new(tree, levels).map_err(CliError::config)
}

/// One-step law of the leaf walk: from `x`, generation `g` is drawn from
/// its law and the labels below `g` are redrawn uniformly.
fn exact_kernel(model: &CoinModel) -> Result<Vec<Vec<f64>>, CliError> {
    let tree = model.tree();
    let k = tree.levels();
    let n = tree.leaf_count() as usize;
    let leaves: Vec<Address> = tree.addresses(k).collect();
    let mut out = vec![vec![0.0; n]; n];
    for (a, x) in leaves.iter().enumerate() {
        let pmf = gx_pmf(x, model).map_err(CliError::runtime)?.pmf;
        for (b, y) in leaves.iter().enumerate() {
            let common = x.coords().iter().zip(y.coords()).take_while(|(p, q)| p == q).count();
            out[a][b] = (0..=common.min(k - 1))
                .map(|g| pmf[g] / (g + 1..=k).map(|j| tree.volume(j) as f64).product::<f64>())
                .sum();
        }
    }
    Ok(out)
}

fn min_holding_p(chain: &JumpChain, leaf_gamma: &[f64]) -> Option<f64> {
    chain
        .holds_by_leaf(leaf_gamma.len())
        .iter()
        .zip(leaf_gamma)
        .filter_map(|(h, &g)| ks_one_sample(h, |t| 1.0 - (-t / g).exp()).ok())
        .map(|r| r.p_value)
        .reduce(f64::min)
}

#[derive(Serialize)]
struct CompareReport {
    k: usize,
    volumes: Vec<u64>,
    seed: u64,
    jumps: usize,
    coin_vs_mark: TestResult,
    coin_vs_kernel: TestResult,
    mark_vs_kernel: TestResult,
    coin_holding_ks_min_p: Option<f64>,
    mark_holding_ks_min_p: Option<f64>,
    passed: bool,
}

/// Jump chains of the two constructions on one environment, tested
/// against each other and against the exact kernel. Returns the report
/// and whether every p-value clears [`GATE`].
pub fn compare(
    k: usize,
    volumes: &[u64],
    seed: u64,
    jumps: usize,
    env_file: Option<&Path>,
) -> Result<(String, bool), CliError> {
    let env = match env_file {
        Some(p) => read_env_config(p)?.to_environment().map_err(CliError::config)?,
        None => {
            if volumes.len() != k {
                return Err(CliError::Config(format!("--k {k} with {} volumes", volumes.len())));
            }
            random_environment(volumes, seed)?
        }
    };
    let tree = env.tree().clone();
    if tree.leaf_count() > COMPARE_MAX_LEAVES {
        return Err(CliError::Config(format!(
            "compare supports at most {COMPARE_MAX_LEAVES} leaves"
        )));
    }
    if jumps == 0 {
        return Err(CliError::Config("--jumps must be positive".into()));
    }
    let model = CoinModel::from_environment(&env).map_err(CliError::config)?;
    let n = tree.leaf_count() as usize;
    let start = Address::new(vec![1; tree.levels()]);
    let coin = coin_jump_chain(&model, &start, jumps, &mut replica_rng(seed, 0)).map_err(CliError::runtime)?;
    let mark = mark_jump_chain(&env, jumps, &mut replica_rng(seed, 1)).map_err(CliError::runtime)?;
    let kernel = exact_kernel(&model)?;
    let (cc, mc) = (coin.transition_counts(n), mark.transition_counts(n));
    let test = |a: &[Vec<u64>], r: Reference<'_>| chi_square_transitions(a, r).map_err(CliError::runtime);
    let coin_vs_mark = test(&cc, Reference::Counts(&mc))?;
    let coin_vs_kernel = test(&cc, Reference::Pmf(&kernel))?;
    let mark_vs_kernel = test(&mc, Reference::Pmf(&kernel))?;
    let leaf = model.leaf_gamma();
    let coin_h = min_holding_p(&coin, leaf);
    let mark_h = min_holding_p(&mark, leaf);
    let passed = [coin_vs_mark.p_value, coin_vs_kernel.p_value, mark_vs_kernel.p_value]
        .into_iter()
        .chain(coin_h)
        .chain(mark_h)
        .all(|p| p > GATE);
    let report = CompareReport {
        k: tree.levels(),
        volumes: tree.volumes().to_vec(),
        seed,
        jumps,
        coin_vs_mark,
        coin_vs_kernel,
        mark_vs_kernel,
        coin_holding_ks_min_p: coin_h,
        mark_holding_ks_min_p: mark_h,
        passed,
    };
    Ok((json(&report), passed))
}

#[derive(Serialize)]
struct DistanceReport {
    bound: f64,
    badness: f64,
    integral: f64,
    horizon_tail: f64,
    rank_threshold: Option<u64>,
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    Trajectory::from_csv(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Skorohod upper bound between two trajectory files.
pub fn distance(left: &Path, right: &Path, grid: &[u64]) -> Result<String, CliError> {
    let (f, g) = (read_trajectory(left)?, read_trajectory(right)?);
    let (b, m) = best_bound(&f, &g, grid).map_err(CliError::runtime)?;
    Ok(json(&DistanceReport {
        bound: b.bound,
        badness: b.badness,
        integral: b.integral,
        horizon_tail: b.horizon_tail,
        rank_threshold: m,
    }))
}

#[derive(Serialize)]
struct ThetaReport {
    r: f64,
    expected_theta: f64,
    error_bound: Option<f64>,
}

/// `E[Θ_k(r)]` for a finite or closed-form environment file.
pub fn expected(env_file: &Path, r: f64) -> Result<String, CliError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(CliError::Config(format!("r must be nonnegative, got {r}")));
    }
    let cfg = read_env_config(env_file)?;
    let report = if cfg.volumes.is_some() {
        let env = cfg.to_environment().map_err(CliError::config)?;
        ThetaReport {
            r,
            expected_theta: expected_theta_finite(&env, r),
            error_bound: None,
        }
    } else {
        let (formula, cutoffs) = cfg.to_formula().map_err(CliError::config)?;
        let value = expected_theta(&formula, &cutoffs, r).map_err(CliError::runtime)?;
        let bound = cutoffs
            .iter()
            .any(Option::is_some)
            .then(|| tail_mass(&formula, &cutoffs))
            .transpose()
            .map_err(CliError::runtime)?;
        ThetaReport {
            r,
            expected_theta: value,
            error_bound: bound,
        }
    };
    Ok(json(&report))
}

/// Environment selection for check-conditions.
pub enum ConditionsInput<'a> {
    EnvFile(&'a Path),
    Dump(&'a Path),
    Grem {
        n: u64,
        alphas: &'a [f64],
        seed: u64,
        keep: Option<u64>,
        coupled: bool,
    },
}

/// Condition values as NDJSON, one row per level.
pub fn check_conditions(
    input: ConditionsInput<'_>,
    limit_file: Option<&Path>,
    window: u64,
) -> Result<String, CliError> {
    let formula_limit: Option<FormulaEnvironment> = match limit_file {
        Some(p) => Some(read_env_config(p)?.to_formula().map_err(CliError::config)?.0),
        None => None,
    };
    let run = |env: &Environment, coupled: Option<&dyn LimitEnvironment>| -> Result<String, CliError> {
        let limit = coupled.or(formula_limit.as_ref().map(|f| f as &dyn LimitEnvironment));
        let report = condition_values(env, limit, window).map_err(CliError::runtime)?;
        Ok(report.to_ndjson(env.tree().volume(1)))
    };
    match input {
        ConditionsInput::EnvFile(p) => run(&read_env_config(p)?.to_environment().map_err(CliError::config)?, None),
        ConditionsInput::Dump(p) => run(&read_dump(p)?.to_environment().map_err(CliError::config)?, None),
        ConditionsInput::Grem {
            n,
            alphas,
            seed,
            keep,
            coupled,
        } => {
            let specs = alphas
                .iter()
                .map(|&a| TailSpec::pareto(a))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::config)?;
            let opts = GremOptions {
                storage: keep.map_or(LeafStorage::Auto, LeafStorage::Top),
                memory_cap: DEFAULT_MEMORY_CAP,
            };
            if coupled {
                if formula_limit.is_some() {
                    return Err(CliError::Config("--coupled brings its own limit; drop --limit".into()));
                }
                let pair = coupled_envs(n, &specs, &opts, seed).map_err(CliError::runtime)?;
                run(&pair.finite.env, Some(&pair.limit))
            } else {
                let g = build_grem_env(n, &specs, &opts, seed).map_err(CliError::runtime)?;
                run(&g.env, None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_rows_sum_to_one() {
        let env = random_environment(&[2, 3, 2], 5).unwrap();
        let model = CoinModel::from_environment(&env).unwrap();
        for row in exact_kernel(&model).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_environment_is_seeded() {
        let a = random_environment(&[2, 2], 1).unwrap();
        assert_eq!(a, random_environment(&[2, 2], 1).unwrap());
        assert_ne!(a, random_environment(&[2, 2], 2).unwrap());
        assert!(a.dense(1).unwrap().iter().all(|g| (0.25..=4.0).contains(g)));
    }
}
