//! Replica fan-out for the simulate-* and grem-experiment subcommands.
//!
//! Replica `i` of an experiment seeded with `s` uses the seed
//! `derive_seed(s, i)`: stream 0 drives the dynamics, stream 1 the extra
//! `Θ` realisation, and GREM environments use the address streams of the
//! same seed. Nothing depends on which worker runs a replica.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ktrap::analysis::{condition_values, ks_one_sample};
use ktrap::coin_sim::simulate_coin;
use ktrap::grem_env::{build_grem_env, EnvDump, TailSpec};
use ktrap::kproc_sim::{select_cutoffs, simulate_k, theta_path, TruncatedKConfig};
use ktrap::mark_sim::simulate_mark;
use ktrap::rng::{derive_seed, stream_rng};
use ktrap::trajectory::Trajectory;
use ktrap::tree_env::{Address, CoinModel, Environment};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{DumpFormat, EnvSource, ExperimentConfig, GremConfig, Model};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary {
    pub replica: u64,
    pub seed: u64,
    pub jumps: usize,
    pub theta: Option<f64>,
    pub error_bound: Option<f64>,
    pub test_stats: BTreeMap<String, Value>,
}

enum Prepared {
    Coin(CoinModel),
    Mark(Environment),
    Kprocess(TruncatedKConfig, Environment),
    Grem(GremConfig, Vec<TailSpec>),
}

fn prepare(cfg: &ExperimentConfig, model: Model) -> Result<Prepared, CliError> {
    let source = cfg.env_source()?;
    let p = match (model, source) {
        (Model::Grem, EnvSource::Grem(g)) => {
            let specs = g.specs()?;
            Prepared::Grem(g, specs)
        }
        (Model::Grem, _) => return Err(CliError::Config("grem-experiment needs a [grem] table".into())),
        (_, EnvSource::Grem(_)) => return Err(CliError::Config("[grem] is only used by grem-experiment".into())),
        (Model::Coin, EnvSource::Config(e)) => Prepared::Coin(e.to_coin_model().map_err(CliError::config)?),
        (Model::Coin, EnvSource::Dump(d)) => Prepared::Coin(d.to_coin_model().map_err(CliError::config)?),
        (Model::Mark, EnvSource::Config(e)) => Prepared::Mark(e.to_environment().map_err(CliError::config)?),
        (Model::Mark, EnvSource::Dump(d)) => Prepared::Mark(d.to_environment().map_err(CliError::config)?),
        (Model::Kprocess, EnvSource::Config(e)) => {
            let (formula, cutoffs) = e.to_formula().map_err(CliError::config)?;
            let cutoffs = match cutoffs.iter().copied().collect::<Option<Vec<_>>>() {
                Some(c) => c,
                None => select_cutoffs(&formula, cfg.kprocess.eps, cfg.horizon, cfg.kprocess.max_leaves)
                    .map_err(CliError::runtime)?,
            };
            let k = TruncatedKConfig::new(formula, cutoffs, cfg.horizon).map_err(CliError::config)?;
            let env = k.truncated().map_err(CliError::runtime)?;
            Prepared::Kprocess(k, env)
        }
        (Model::Kprocess, EnvSource::Dump(_)) => {
            return Err(CliError::Config(
                "simulate-k needs a closed-form environment (gamma_formula)".into(),
            ))
        }
    };
    Ok(p)
}

fn start_leaf(cfg: &ExperimentConfig, k: usize) -> Address {
    Address::new(cfg.start.clone().unwrap_or_else(|| vec![1; k]))
}

/// Smallest KS p-value of the complete sojourns of each leaf against
/// Exp with mean `γ_k(leaf)`, over leaves with at least 8 sojourns.
fn holding_stats(traj: &Trajectory, env_leaf: impl Fn(&Address) -> Option<f64>) -> BTreeMap<String, Value> {
    let mut by_leaf: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
    for (state, len, complete) in traj.sojourns() {
        if let (true, Some(addr)) = (complete, state.to_address()) {
            by_leaf.entry(addr.0).or_default().push(len);
        }
    }
    let mut min_p: Option<f64> = None;
    let mut tested = 0u64;
    for (coords, holds) in by_leaf {
        let Some(mean) = env_leaf(&Address(coords)) else {
            continue;
        };
        let Ok(r) = ks_one_sample(&holds, |t| 1.0 - (-t / mean).exp()) else {
            continue;
        };
        tested += 1;
        min_p = Some(min_p.map_or(r.p_value, |p| p.min(r.p_value)));
    }
    let mut out = BTreeMap::new();
    out.insert("holding_ks_min_p".into(), min_p.map_or(Value::Null, Value::from));
    out.insert("holding_leaves_tested".into(), Value::from(tested));
    out
}

struct ReplicaRun {
    summary: ReplicaSummary,
    trajectory: Trajectory,
    dump: Option<(DumpFormat, EnvDump)>,
}

fn run_replica(cfg: &ExperimentConfig, prepared: &Prepared, replica: u64) -> Result<ReplicaRun, CliError> {
    let seed = derive_seed(cfg.seed, replica);
    let mut rng = stream_rng(seed, 0);
    let theta_of = |env: &Environment| -> Result<Option<f64>, CliError> {
        cfg.theta_r
            .map(|r| theta_path(env, &[r], &mut stream_rng(seed, 1)).map(|v| v[0]))
            .transpose()
            .map_err(CliError::runtime)
    };
    let leaf_of = |model: &CoinModel| {
        let tree = model.tree().clone();
        let gamma = model.leaf_gamma().to_vec();
        move |a: &Address| tree.index_of(a).ok().map(|i| gamma[i as usize])
    };
    let (trajectory, theta, error_bound, test_stats, dump) = match prepared {
        Prepared::Coin(model) => {
            let start = start_leaf(cfg, model.tree().levels());
            let t = simulate_coin(model, &start, cfg.horizon, &mut rng).map_err(CliError::runtime)?;
            let stats = holding_stats(&t, leaf_of(model));
            (t, None, None, stats, None)
        }
        Prepared::Mark(env) => {
            let t = simulate_mark(env, cfg.horizon, &mut rng).map_err(CliError::runtime)?;
            let k = env.tree().levels();
            let stats = holding_stats(&t, |a| env.gamma(a).ok().filter(|_| a.level() == k));
            (t, theta_of(env)?, None, stats, None)
        }
        Prepared::Kprocess(k, env) => {
            let (t, bound) = simulate_k(k, &mut rng).map_err(CliError::runtime)?;
            (t, theta_of(env)?, Some(bound), BTreeMap::new(), None)
        }
        Prepared::Grem(g, specs) => {
            let built = build_grem_env(g.n, specs, &g.options(), seed).map_err(CliError::runtime)?;
            let model = built
                .coin_model()
                .map_err(|e| CliError::Runtime(format!("{e}; raise memory_cap or drop keep to simulate dynamics")))?;
            let start = start_leaf(cfg, model.tree().levels());
            let t = simulate_coin(&model, &start, cfg.horizon, &mut rng).map_err(CliError::runtime)?;
            let mut stats = holding_stats(&t, leaf_of(&model));
            let report = condition_values(&built.env, None, 10).map_err(CliError::runtime)?;
            let last = report.levels.last().unwrap();
            stats.insert("em4".into(), last.em4.map_or(Value::Null, Value::from));
            stats.insert("em3".into(), last.em3.map_or(Value::Null, Value::from));
            stats.insert("speed".into(), Value::from(built.speed()));
            let dump = match g.dump {
                Some(f) => Some((f, EnvDump::from_grem(&built).map_err(CliError::runtime)?)),
                None => None,
            };
            (t, None, None, stats, dump)
        }
    };
    Ok(ReplicaRun {
        summary: ReplicaSummary {
            replica,
            seed,
            jumps: trajectory.jumps(),
            theta,
            error_bound,
            test_stats,
        },
        trajectory,
        dump,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_replica(dir: &Path, cfg: &ExperimentConfig, run: &ReplicaRun) -> Result<(), CliError> {
    let stem = format!("replica-{:04}", run.summary.replica);
    if cfg.output.trajectories {
        write(&dir.join(format!("{stem}.csv")), run.trajectory.to_csv().as_bytes())?;
    }
    match &run.dump {
        Some((DumpFormat::Bin, d)) => write(&dir.join(format!("{stem}.env.bin")), &d.to_bytes())?,
        Some((DumpFormat::Csv, d)) => write(&dir.join(format!("{stem}.env.csv")), d.to_csv().as_bytes())?,
        None => {}
    }
    Ok(())
}

/// Runs every replica and returns the NDJSON summary in replica order.
pub fn run_experiment(cfg: &ExperimentConfig, model: Model, workers: Option<usize>) -> Result<String, CliError> {
    cfg.check_model(model)?;
    let prepared = prepare(cfg, model)?;
    let dir: Option<PathBuf> = cfg.output.dir.clone();
    if let Some(d) = &dir {
        fs::create_dir_all(d).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", d.display())))?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers.or(cfg.workers) {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let summaries = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|i| {
                let run = run_replica(cfg, &prepared, i)?;
                if let Some(d) = &dir {
                    write_replica(d, cfg, &run)?;
                }
                Ok(run.summary)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut out = String::new();
    for s in &summaries {
        out.push_str(&serde_json::to_string(s).expect("summary serialises"));
        out.push('\n');
    }
    if let Some(d) = &dir {
        write(&d.join("summary.ndjson"), out.as_bytes())?;
    }
    Ok(out)
}
