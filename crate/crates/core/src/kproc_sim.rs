//! Truncated sampler for the K-process on the infinite tree.
//!
//! Labels of level `j` are restricted to `1..=L_j` and no extra marks are
//! placed. Marks above a cutoff are simply absent, so the clock time they
//! would have carried is compressed out of the path rather than spent at
//! `∞`-valued states; the expected amount lost per unit of level-1 time is
//! the tail mass of the environment, reported as an error bound.

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mark_sim::MarkConstruction;
use crate::rng::{replica_rng, Source};
use crate::trajectory::Trajectory;
use crate::tree_env::{tail_mass, Cutoff, Environment, FormulaEnvironment};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedKConfig {
    pub env: FormulaEnvironment,
    pub cutoffs: Vec<u64>,
    pub horizon: f64,
}

impl TruncatedKConfig {
    pub fn new(env: FormulaEnvironment, cutoffs: Vec<u64>, horizon: f64) -> Result<Self> {
        if cutoffs.len() != env.levels() {
            return Err(Error::Dimension {
                expected: env.levels(),
                got: cutoffs.len(),
            });
        }
        if cutoffs.contains(&0) {
            return Err(Error::InvalidSpec("cutoffs must be at least 1".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TruncatedKConfig { env, cutoffs, horizon })
    }

    fn cutoff_options(&self) -> Vec<Cutoff> {
        self.cutoffs.iter().map(|&c| Some(c)).collect()
    }

    /// Expected clock mass dropped per unit of level-1 time.
    pub fn error_bound(&self) -> Result<f64> {
        tail_mass(&self.env, &self.cutoff_options())
    }

    /// The dense environment on the tree with volumes `L_1..L_k`.
    pub fn truncated(&self) -> Result<Environment> {
        self.env.truncate(&self.cutoffs)
    }
}

/// Truncated path on `[0, horizon]` and its error bound.
pub fn simulate_k<S: Source + ?Sized>(config: &TruncatedKConfig, src: &mut S) -> Result<(Trajectory, f64)> {
    simulate_k_marks(config, false, src)
}

/// As [`simulate_k`], optionally with the finite-volume extra marks
/// switched back on.
pub fn simulate_k_marks<S: Source + ?Sized>(
    config: &TruncatedKConfig,
    extra_marks: bool,
    src: &mut S,
) -> Result<(Trajectory, f64)> {
    let bound = config.error_bound()?;
    let env = config.truncated()?;
    let mut c = MarkConstruction::new(&env, extra_marks)?;
    c.cover(config.horizon, src)?;
    Ok((c.trajectory(config.horizon)?, bound))
}

/// `E[Θ_k(r)] = r Σ γ̄_k` over the leaves kept by `cutoffs`.
pub fn expected_theta(env: &FormulaEnvironment, cutoffs: &[Cutoff], r: f64) -> Result<f64> {
    if cutoffs.len() != env.levels() {
        return Err(Error::Dimension {
            expected: env.levels(),
            got: cutoffs.len(),
        });
    }
    if r < 0.0 || r.is_nan() {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    let mass = env.formulas().iter().zip(cutoffs).try_fold(1.0, |acc, (f, c)| {
        Ok::<_, Error>(
            acc * match *c {
                Some(n) => f.partial_sum(n),
                None => f.full_sum()?,
            },
        )
    })?;
    Ok(r * mass)
}

/// `E[Θ_k(r)]` for a finite environment without extra marks.
pub fn expected_theta_finite(env: &Environment, r: f64) -> f64 {
    r * env.gamma_bar_total(env.tree().levels())
}

/// `Θ_k` at each point of the increasing grid `rs`, on one realisation.
pub fn theta_path<S: Source + ?Sized>(env: &Environment, rs: &[f64], src: &mut S) -> Result<Vec<f64>> {
    let mut c = MarkConstruction::new(env, false)?;
    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        if r < c.axis_end() || r.is_nan() {
            return Err(Error::Domain("r grid must be nondecreasing and nonnegative".into()));
        }
        if r > c.axis_end() {
            c.extend_to(r, src)?;
        }
        out.push(c.leaf_total());
    }
    Ok(out)
}

/// Sample mean and standard error of `Θ_k(r)` over independent replicas.
/// Replica `i` runs on its own stream, derived from one draw of `rng`, so
/// the result does not depend on the thread count.
pub fn mc_theta<R: RngCore + ?Sized>(
    config: &TruncatedKConfig,
    r: f64,
    replicas: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if replicas < 2 {
        return Err(Error::Domain("at least two replicas are needed".into()));
    }
    config.error_bound()?;
    let env = config.truncated()?;
    let base = rng.next_u64();
    let draws = (0..replicas as u64)
        .into_par_iter()
        .map(|i| theta_path(&env, &[r], &mut replica_rng(base, i)).map(|v| v[0]))
        .collect::<Result<Vec<_>>>()?;
    let n = replicas as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// For each level `i < k`, the least `m̃ ≥ 1` such that on `[0, horizon]`
/// the path never has `X_i > m̃` while some deeper `X_j ≤ m`. `None` when
/// no finite threshold works (an `∞` at level `i` over a shallow deeper
/// coordinate).
pub fn hypercube_scan(trajectory: &Trajectory, horizon: f64, m: u64) -> Vec<Option<u64>> {
    let k = trajectory.dim();
    let mut out = vec![Some(1u64); k.saturating_sub(1)];
    let visited = trajectory
        .states()
        .zip(trajectory.times())
        .take_while(|(_, t)| *t <= horizon)
        .map(|(s, _)| s);
    for s in visited {
        let labels = s.labels();
        for i in 0..k.saturating_sub(1) {
            let deeper_low = labels[i + 1..].iter().any(|l| l.get().is_some_and(|x| x <= m));
            if !deeper_low {
                continue;
            }
            out[i] = match (out[i], labels[i].get()) {
                (Some(cur), Some(x)) => Some(cur.max(x)),
                _ => None,
            };
        }
    }
    out
}

/// Cutoffs meeting `tail_mass · horizon / Σ γ̄_k ≤ eps`: the expected
/// clock time lost over a stretch of real time `horizon`. Cutoffs are
/// doubled greedily on the level giving the largest reduction, then each
/// is lowered by bisection while the target still holds.
pub fn select_cutoffs(env: &FormulaEnvironment, eps: f64, horizon: f64, max_leaves: u64) -> Result<Vec<u64>> {
    if !(eps > 0.0 && horizon > 0.0) {
        return Err(Error::Domain("eps and horizon must be positive".into()));
    }
    let full = env.gamma_bar_total(env.levels())?;
    let lost = |c: &[u64]| -> Result<f64> {
        let opts: Vec<Cutoff> = c.iter().map(|&x| Some(x)).collect();
        Ok(tail_mass(env, &opts)? * horizon / full)
    };
    let leaves = |c: &[u64]| c.iter().try_fold(1u64, |a, &x| a.checked_mul(x));
    let mut cut = vec![1u64; env.levels()];
    while lost(&cut)? > eps {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cut.len() {
            let mut trial = cut.clone();
            trial[j] *= 2;
            if leaves(&trial).is_none_or(|n| n > max_leaves) {
                continue;
            }
            let v = lost(&trial)?;
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((j, v));
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::MemoryCap {
                needed: leaves(&cut).unwrap_or(u64::MAX).saturating_mul(2),
                cap: max_leaves,
            });
        };
        cut[j] *= 2;
    }
    for j in 0..cut.len() {
        let (mut lo, mut hi) = (1u64, cut[j]);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let mut trial = cut.clone();
            trial[j] = mid;
            if lost(&trial)? <= eps {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        cut[j] = hi;
    }
    Ok(cut)
}
