//! Heavy-tailed environments: tail frequencies, extremes, coupling.

use ktrap::analysis::{condition_values, ks_one_sample, median, LimitEnvironment};
use ktrap::grem_env::{build_grem_env, coupled_envs, sample_tau, GremOptions, LeafStorage, TailSpec};
use ktrap::rng::replica_rng;
use ktrap::tree_env::gamma_to_p;
use rayon::prelude::*;

fn pareto(alphas: &[f64]) -> Vec<TailSpec> {
    alphas.iter().map(|&a| TailSpec::pareto(a).unwrap()).collect()
}

#[test]
fn tail_frequency() {
    let spec = TailSpec::pareto(0.5).unwrap();
    let n = 1_000_000;
    let t: f64 = 1e3;
    let draws = sample_tau(&spec, n, &mut replica_rng(1, 0)).unwrap();
    let hits = draws.iter().filter(|&&x| x > t).count() as f64;
    let p = t.powf(-0.5);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let ratio = hits / n as f64 * t.powf(0.5);
    assert!((ratio - 1.0).abs() < 3.0 * se * t.powf(0.5), "ratio {ratio}");
}

#[test]
fn coins_agree_when_the_next_volume_is_exact() {
    // 1/c_1 = 100^2 is an integer, so M_2 γ_1 = τ_1.
    let g = build_grem_env(
        100,
        &pareto(&[0.5, 0.9]),
        &GremOptions {
            storage: LeafStorage::Top(4),
            ..Default::default()
        },
        3,
    )
    .unwrap();
    assert_eq!(g.tree().volumes(), &[100, 10_000]);
    for (gamma, p) in g.env.dense(1).unwrap().iter().zip(&g.coins[0]) {
        let derived = gamma_to_p(*gamma, 10_000).unwrap();
        assert!((derived - p).abs() <= 1e-12 * p);
    }
}

#[test]
fn scaled_maximum_is_frechet() {
    let alpha = 0.5;
    let spec = pareto(&[alpha]);
    let maxima: Vec<f64> = (0..600u64)
        .into_par_iter()
        .map(|i| {
            let g = build_grem_env(10_000, &spec, &GremOptions::default(), i).unwrap();
            g.env.dense(1).unwrap()[0]
        })
        .collect();
    let r = ks_one_sample(&maxima, |y| (-y.powf(-alpha)).exp()).unwrap();
    assert!(r.statistic < 0.07, "{r:?}");
}

#[test]
fn coupled_sum_gap_shrinks() {
    let spec = pareto(&[0.5]);
    let gaps: Vec<f64> = [100u64, 1_000, 10_000]
        .iter()
        .map(|&n| {
            let rel: Vec<f64> = (0..60u64)
                .into_par_iter()
                .map(|seed| {
                    let pair = coupled_envs(n, &spec, &GremOptions::default(), seed).unwrap();
                    let r = condition_values(&pair.finite.env, Some(&pair.limit), 10).unwrap();
                    r.level(1).em2_sum_gap.unwrap() / pair.limit.gamma_bar_total(1).unwrap()
                })
                .collect();
            median(&rel)
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn coupled_values_decrease_and_guard_holds() {
    let spec = pareto(&[0.4]);
    let mut held = 0;
    for seed in 0..100 {
        let pair = coupled_envs(10_000, &spec, &GremOptions::default(), seed).unwrap();
        let g = pair.finite.env.dense(1).unwrap();
        let l = pair.limit.on_tree().dense(1).unwrap();
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert!(l.windows(2).all(|w| w[0] > w[1]));
        held += pair.guard_holds() as u32;
    }
    assert!(held >= 99);
}
