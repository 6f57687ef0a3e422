//! Truncated K-process: expected clock values and the error bound.

use ktrap::kproc_sim::{expected_theta, mc_theta, simulate_k, TruncatedKConfig};
use ktrap::rng::replica_rng;
use ktrap::tree_env::{FormulaEnvironment, LevelFormula};

fn env() -> FormulaEnvironment {
    FormulaEnvironment::new(vec![LevelFormula::Geometric(0.5), LevelFormula::Geometric(1.0 / 3.0)]).unwrap()
}

#[test]
fn mean_clock_matches_closed_form() {
    let cfg = TruncatedKConfig::new(env(), vec![8, 8], 1.0).unwrap();
    let (mean, se) = mc_theta(&cfg, 1.5, 4_000, &mut replica_rng(5, 0)).unwrap();
    // Σ_{x≤8} 2^{-x} = 1 - 2^{-8}, Σ_{y≤8} 3^{-y} = (1 - 3^{-8}) / 2.
    let oracle = 1.5 * (1.0 - 0.5f64.powi(8)) * 0.5 * (1.0 - (1.0f64 / 3.0).powi(8));
    let closed = expected_theta(&cfg.env, &[Some(8), Some(8)], 1.5).unwrap();
    assert!((closed - oracle).abs() < 1e-14);
    assert!((mean - oracle).abs() < 4.0 * se, "{mean} ± {se} vs {oracle}");
}

#[test]
fn error_bound_shrinks_with_cutoffs() {
    let bounds: Vec<f64> = [2u64, 4, 8, 16]
        .iter()
        .map(|&c| {
            TruncatedKConfig::new(env(), vec![c, c], 1.0)
                .unwrap()
                .error_bound()
                .unwrap()
        })
        .collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");
    let (path, bound) = simulate_k(
        &TruncatedKConfig::new(env(), vec![6, 6], 5.0).unwrap(),
        &mut replica_rng(6, 0),
    )
    .unwrap();
    assert_eq!(path.horizon(), 5.0);
    assert!(bound > 0.0);
}

#[test]
fn divergent_environment_is_reported() {
    let heavy = FormulaEnvironment::new(vec![LevelFormula::Power(1.0)]).unwrap();
    assert!(expected_theta(&heavy, &[None], 1.0).is_err());
    assert!(expected_theta(&heavy, &[Some(10)], 1.0).is_ok());
}
