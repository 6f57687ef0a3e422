//! Goodness-of-fit tests used by the statistical checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let d = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    d.sf(statistic).clamp(0.0, 1.0)
}

/// Groups cells so every group has expected count at least 5: cells are
/// taken in order of increasing expectation and merged until the running
/// group reaches 5, and a short final group joins the previous one.
fn pooling(expected: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..expected.len()).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)));
    let mut group = vec![0; expected.len()];
    let mut g = 0;
    let mut acc = 0.0;
    let mut members = 0;
    for &i in &order {
        if expected[i] >= 5.0 && members == 0 {
            group[i] = g;
            g += 1;
            continue;
        }
        group[i] = g;
        acc += expected[i];
        members += 1;
        if acc >= 5.0 {
            g += 1;
            acc = 0.0;
            members = 0;
        }
    }
    if members > 0 && g > 0 {
        // Leftover small group: fold it into the last complete one.
        for x in group.iter_mut() {
            if *x == g {
                *x = g - 1;
            }
        }
    }
    group
}

fn pooled(values: &[f64], group: &[usize]) -> Vec<f64> {
    let n = group.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![0.0; n];
    for (v, &g) in values.iter().zip(group) {
        out[g] += v;
    }
    out
}

/// Pearson test of observed counts against a probability vector.
pub fn chi_square_gof(counts: &[u64], pmf: &[f64]) -> Result<TestResult> {
    if counts.len() != pmf.len() {
        return Err(Error::Dimension {
            expected: pmf.len(),
            got: counts.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    let mass: f64 = pmf.iter().sum();
    if n == 0 || !(mass > 0.0) || pmf.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Degenerate("empty counts or invalid pmf".into()));
    }
    let expected: Vec<f64> = pmf.iter().map(|p| n as f64 * p / mass).collect();
    let support: Vec<usize> = (0..pmf.len()).filter(|&i| expected[i] > 0.0).collect();
    if support.iter().map(|&i| counts[i]).sum::<u64>() != n {
        // Observations in cells of probability zero.
        return Ok(TestResult {
            statistic: f64::INFINITY,
            dof: support.len().saturating_sub(1),
            p_value: 0.0,
        });
    }
    let exp_s: Vec<f64> = support.iter().map(|&i| expected[i]).collect();
    let obs_s: Vec<f64> = support.iter().map(|&i| counts[i] as f64).collect();
    let group = pooling(&exp_s);
    let e = pooled(&exp_s, &group);
    let o = pooled(&obs_s, &group);
    let statistic: f64 = o.iter().zip(&e).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = e.len().saturating_sub(1);
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    })
}

/// Pearson test that two count vectors come from the same distribution.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::Degenerate("a sample has no observations".into()));
    }
    let cols: Vec<usize> = (0..a.len()).filter(|&i| a[i] + b[i] > 0).collect();
    let n = (na + nb) as f64;
    let col_tot: Vec<f64> = cols.iter().map(|&i| (a[i] + b[i]) as f64).collect();
    // Pool on the smaller row's expectations so both rows clear 5.
    let small = na.min(nb) as f64;
    let group = pooling(&col_tot.iter().map(|c| c * small / n).collect::<Vec<_>>());
    let ct = pooled(&col_tot, &group);
    let oa = pooled(&cols.iter().map(|&i| a[i] as f64).collect::<Vec<_>>(), &group);
    let ob = pooled(&cols.iter().map(|&i| b[i] as f64).collect::<Vec<_>>(), &group);
    let mut statistic = 0.0;
    for c in 0..ct.len() {
        let ea = ct[c] * na as f64 / n;
        let eb = ct[c] * nb as f64 / n;
        statistic += (oa[c] - ea).powi(2) / ea + (ob[c] - eb).powi(2) / eb;
    }
    let dof = ct.len().saturating_sub(1);
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    })
}

/// Reference for a matrix of transition counts.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Counts from a second sample; rows are tested for homogeneity.
    Counts(&'a [Vec<u64>]),
    /// Row-wise probabilities.
    Pmf(&'a [Vec<f64>]),
}

/// Row-by-row test of transition counts, statistics and degrees of
/// freedom summed over rows. Rows with no observations are skipped.
pub fn chi_square_transitions(counts: &[Vec<u64>], reference: Reference<'_>) -> Result<TestResult> {
    let rows = match reference {
        Reference::Counts(m) => m.len(),
        Reference::Pmf(m) => m.len(),
    };
    if rows != counts.len() {
        return Err(Error::Dimension {
            expected: rows,
            got: counts.len(),
        });
    }
    let mut statistic = 0.0;
    let mut dof = 0;
    let mut used = 0;
    for (r, row) in counts.iter().enumerate() {
        let res = match reference {
            Reference::Counts(m) => {
                if row.iter().sum::<u64>() == 0 || m[r].iter().sum::<u64>() == 0 {
                    continue;
                }
                chi_square_homogeneity(row, &m[r])?
            }
            Reference::Pmf(m) => {
                if row.iter().sum::<u64>() == 0 {
                    continue;
                }
                chi_square_gof(row, &m[r])?
            }
        };
        statistic += res.statistic;
        dof += res.dof;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate("no row has observations".into()));
    }
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
    })
}

/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2 j² λ²}`, the limiting survival
/// function of the scaled Kolmogorov statistic.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series converges slowly here and Q is 1 to
        // double precision.
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with the small-sample correction of Stephens.
fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN in sample".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

const KS_MIN: usize = 8;

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::Degenerate("empty sample".into()));
    }
    if sample.len() < KS_MIN {
        return Err(Error::Domain(format!("need at least {KS_MIN} observations")));
    }
    let s = sorted(sample)?;
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("empty sample".into()));
    }
    if a.len() < KS_MIN || b.len() < KS_MIN {
        return Err(Error::Domain(format!("need at least {KS_MIN} observations per sample")));
    }
    let (sa, sb) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
    })
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median (average of the middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_examples() {
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chi_square_gof(&[70, 30], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 16.0).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        // P(χ²_1 > 16) = erfc(√8).
        assert!((r.p_value - 6.334_248_366_623_996e-5).abs() < 1e-12);
        assert!(chi_square_gof(&[0, 0], &[0.5, 0.5]).is_err());
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn transitions_against_own_pmf() {
        let counts = vec![vec![30, 10, 60], vec![5, 80, 15]];
        let pmf: Vec<Vec<f64>> = counts
            .iter()
            .map(|r| {
                let n: u64 = r.iter().sum();
                r.iter().map(|&c| c as f64 / n as f64).collect()
            })
            .collect();
        let r = chi_square_transitions(&counts, Reference::Pmf(&pmf)).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square_transitions(&counts, Reference::Counts(&counts)).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        let zero = vec![vec![0, 0], vec![0, 0]];
        assert!(matches!(
            chi_square_transitions(&zero, Reference::Counts(&zero)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn homogeneity_by_hand() {
        // 2×2 table (10, 20 | 20, 10): expectations 15, Pearson 4·25/15.
        let r = chi_square_homogeneity(&[10, 20], &[20, 10]).unwrap();
        assert!((r.statistic - 100.0 / 15.0).abs() < 1e-12);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn small_cells_are_pooled() {
        let r = chi_square_gof(&[100, 2, 1, 1], &[0.96, 0.02, 0.01, 0.01]).unwrap();
        assert_eq!(r.dof, 0);
        let g = pooling(&[1.0, 2.0, 50.0, 3.0, 60.0]);
        assert_eq!(g[0], g[1]);
        assert_eq!(g[1], g[3]);
        assert_ne!(g[2], g[4]);
    }

    #[test]
    fn zero_probability_cell_with_counts_rejects() {
        let r = chi_square_gof(&[10, 1], &[1.0, 0.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn kolmogorov_series() {
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // Tabulated critical values.
        assert!((kolmogorov_sf(1.358_098_8) - 0.05).abs() < 1e-6);
        assert!((kolmogorov_sf(1.627_624_4) - 0.01).abs() < 1e-6);
    }

    #[test]
    fn ks_examples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let n = 1000;
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_one_sample(&grid, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic <= 1.0 / n as f64);
        assert!(ks_one_sample(&[], |x| x).is_err());
        assert!(ks_one_sample(&[0.5; 3], |x| x).is_err());
    }

    #[test]
    fn summaries() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
