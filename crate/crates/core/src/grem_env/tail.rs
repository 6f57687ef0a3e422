//! Heavy-tailed depth laws, their scaling constants and the fine-tuned
//! volumes.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::Source;

/// A tail function `G(t) = P(τ > t)`.
pub type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TailFamily {
    /// `G(t) = t^{-α}` on `[1, ∞)`.
    Pareto,
    /// A nonincreasing tail on `[support_min, ∞)`. Without `inverse`,
    /// `G^{-1}` is found by bisection.
    Custom {
        tail: TailFn,
        inverse: Option<TailFn>,
        support_min: f64,
    },
}

impl fmt::Debug for TailFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailFamily::Pareto => f.write_str("Pareto"),
            TailFamily::Custom {
                inverse, support_min, ..
            } => f
                .debug_struct("Custom")
                .field("closed_inverse", &inverse.is_some())
                .field("support_min", support_min)
                .finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TailSpec {
    pub alpha: f64,
    pub family: TailFamily,
}

/// Relative tolerance of the numeric inverse.
pub const INVERSE_TOL: f64 = 1e-12;

impl TailSpec {
    pub fn pareto(alpha: f64) -> Result<Self> {
        let s = TailSpec {
            alpha,
            family: TailFamily::Pareto,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidSpec(format!("α must lie in (0, 1), got {}", self.alpha)));
        }
        if let TailFamily::Custom { support_min, .. } = &self.family {
            if !(support_min.is_finite() && *support_min > 0.0) {
                return Err(Error::InvalidSpec(
                    "custom tails need a positive support minimum".into(),
                ));
            }
        }
        Ok(())
    }

    /// `G(t)`.
    pub fn tail(&self, t: f64) -> f64 {
        match &self.family {
            TailFamily::Pareto => {
                if t < 1.0 {
                    1.0
                } else {
                    t.powf(-self.alpha)
                }
            }
            TailFamily::Custom { tail, .. } => tail(t),
        }
    }

    /// `G^{-1}(u) = inf{t ≥ t_min : G(t) ≤ u}` for `u ∈ (0, 1]`, where
    /// `t_min` is the left end of the support.
    pub fn inverse(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u <= 1.0);
        match &self.family {
            TailFamily::Pareto => u.powf(-1.0 / self.alpha),
            TailFamily::Custom { inverse: Some(inv), .. } => inv(u),
            TailFamily::Custom { tail, support_min, .. } => bisect_inverse(tail.as_ref(), *support_min, u),
        }
    }

    /// `G^{-1}(1/m)`, exact for Pareto with integer `m^{1/α}`.
    pub fn inverse_of_recip(&self, m: u64) -> f64 {
        match self.family {
            TailFamily::Pareto => (m as f64).powf(1.0 / self.alpha),
            _ => self.inverse(1.0 / m as f64),
        }
    }
}

fn bisect_inverse(tail: &dyn Fn(f64) -> f64, lo0: f64, u: f64) -> f64 {
    if tail(lo0) <= u {
        return lo0;
    }
    let mut lo = lo0;
    let mut hi = lo0.max(1.0) * 2.0;
    while tail(hi) > u {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    while hi - lo > INVERSE_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if tail(mid) <= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Checks `0 < α_1 < .. < α_k < 1`.
pub fn validate_specs(specs: &[TailSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidSpec("at least one level is required".into()));
    }
    specs.iter().try_for_each(TailSpec::validate)?;
    if specs.windows(2).any(|w| w[1].alpha <= w[0].alpha) {
        return Err(Error::InvalidSpec(
            "tail indices must increase strictly with the level".into(),
        ));
    }
    Ok(())
}

/// `count` independent depths `G^{-1}(U)`.
pub fn sample_tau<S: Source + ?Sized>(spec: &TailSpec, count: usize, src: &mut S) -> Result<Vec<f64>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::Domain("count must be at least 1".into()));
    }
    Ok((0..count).map(|_| spec.inverse(src.unit())).collect())
}

/// Decreasing order, ties kept in input order.
pub fn order_relabel(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `c = 1 / G^{-1}(1/M)`.
pub fn scaling_constant(spec: &TailSpec, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("volume must be at least 1".into()));
    }
    Ok(1.0 / spec.inverse_of_recip(m))
}

/// `M_1 = n`, `M_{j+1} = ⌊1 / c_j⌋ = ⌊G_j^{-1}(1/M_j)⌋`.
pub fn fine_tune_volumes(n: u64, specs: &[TailSpec]) -> Result<Vec<u64>> {
    validate_specs(specs)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let mut vols = vec![n];
    for spec in &specs[..specs.len() - 1] {
        let m = *vols.last().unwrap();
        let t = spec.inverse_of_recip(m);
        // Values within rounding of an integer count as that integer.
        let near = t.round();
        let next = if (t - near).abs() <= 4.0 * f64::EPSILON * t {
            near
        } else {
            t.floor()
        };
        // 2^64 is the first float past u64::MAX.
        if !(next < 18_446_744_073_709_551_616.0) {
            return Err(Error::Overflow);
        }
        vols.push((next as u64).max(1));
    }
    Ok(vols)
}
