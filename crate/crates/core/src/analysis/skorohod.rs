//! Upper bounds for the Skorohod distance between two observed paths.
//!
//! For a time distortion `λ` the quantity
//!
//! ```text
//! φ(λ) ∨ ∫_0^∞ e^{-u} sup_t d(f(t ∧ u), g(λ(t) ∧ u)) du
//! ```
//!
//! bounds the distance from above. Both paths are piecewise constant and
//! `λ` is piecewise linear, so the inner supremum is a step function of
//! `u` whose jumps lie in `E_f ∪ E_g ∪ λ(E_f) ∪ λ^{-1}(E_g)` (the jump
//! times of `f` and `g` and their images). The integral is evaluated
//! exactly over those pieces.
//!
//! Paths are only observed up to their horizon `H`; past it they are held
//! at their last state. Since `d ≤ 1`, the unobserved part can move the
//! integral by at most `e^{-H}`, which is reported alongside.

use super::metric::distance_unchecked;
use crate::error::{Error, Result};
use crate::trajectory::{State, Trajectory};

/// Increasing piecewise-linear bijection of `[0, ∞)`, slope 1 after the
/// last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDistortion {
    knots: Vec<(f64, f64)>,
}

impl TimeDistortion {
    pub fn identity() -> Self {
        TimeDistortion {
            knots: vec![(0.0, 0.0)],
        }
    }

    /// Knots `(t_i, λ(t_i))`; `(0, 0)` is prepended when absent.
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.first() != Some(&(0.0, 0.0)) {
            knots.insert(0, (0.0, 0.0));
        }
        for w in knots.windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if !(t1 > t0 && s1 > s0 && t1.is_finite() && s1.is_finite()) {
                return Err(Error::Domain(format!(
                    "distortion knots must increase strictly: ({t0}, {s0}) then ({t1}, {s1})"
                )));
            }
        }
        Ok(TimeDistortion { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn eval(knots: &[(f64, f64)], t: f64, swap: bool) -> f64 {
        let key = |k: &(f64, f64)| if swap { k.1 } else { k.0 };
        let val = |k: &(f64, f64)| if swap { k.0 } else { k.1 };
        let i = knots.partition_point(|k| key(k) <= t).max(1) - 1;
        let a = &knots[i];
        match knots.get(i + 1) {
            Some(b) => val(a) + (t - key(a)) * (val(b) - val(a)) / (key(b) - key(a)),
            None => val(a) + (t - key(a)),
        }
    }

    /// `λ(t)`.
    pub fn apply(&self, t: f64) -> f64 {
        Self::eval(&self.knots, t, false)
    }

    /// `λ^{-1}(s)`.
    pub fn inverse(&self, s: f64) -> f64 {
        Self::eval(&self.knots, s, true)
    }

    /// `sup_{s<t} |log((λ_t - λ_s)/(t - s))|`, attained on a single segment.
    pub fn badness(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).ln().abs())
            .fold(0.0, f64::max)
    }
}

pub fn distortion_badness(lambda: &TimeDistortion) -> f64 {
    lambda.badness()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkorohodBound {
    /// `max(badness, integral)`.
    pub bound: f64,
    pub badness: f64,
    pub integral: f64,
    /// `e^{-H}`: the most the paths after the horizon could add.
    pub horizon_tail: f64,
}

fn jump_times(p: &Trajectory) -> Vec<f64> {
    p.events().iter().map(|e| e.0).collect()
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Midpoints of consecutive breakpoints plus one point past the last.
fn probes(points: &[f64]) -> impl Iterator<Item = f64> + '_ {
    points
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .chain(std::iter::once(points.last().unwrap() + 1.0))
}

/// States a path takes on `[a, b)`.
fn states_on(p: &Trajectory, a: f64, b: f64) -> impl Iterator<Item = &State> {
    let ev = p.events();
    let lo = ev.partition_point(|e| e.0 <= a);
    let hi = ev.partition_point(|e| e.0 < b);
    std::iter::once(p.state_at(a)).chain(ev[lo..hi.max(lo)].iter().map(|e| &e.1))
}

/// Evaluates `u ↦ sup_t d(f(t ∧ u), g(λ(t) ∧ u))`.
struct Sup<'a> {
    f: &'a Trajectory,
    g: &'a Trajectory,
    lambda: &'a TimeDistortion,
    /// Breakpoints of `t ↦ d(f(t), g(λ(t)))` and the running maximum of
    /// that function over each piece and all before it.
    cuts: Vec<f64>,
    prefix_max: Vec<f64>,
}

impl<'a> Sup<'a> {
    fn new(f: &'a Trajectory, g: &'a Trajectory, lambda: &'a TimeDistortion) -> Self {
        let mut cuts = vec![0.0];
        cuts.extend(jump_times(f));
        cuts.extend(jump_times(g).into_iter().map(|s| lambda.inverse(s)));
        let cuts = sorted_unique(cuts);
        let mut m = 0.0f64;
        let prefix_max = probes(&cuts)
            .map(|t| {
                m = m.max(distance_unchecked(f.state_at(t), g.state_at(lambda.apply(t))));
                m
            })
            .collect();
        Sup {
            f,
            g,
            lambda,
            cuts,
            prefix_max,
        }
    }

    fn at(&self, u: f64) -> f64 {
        let (f, g) = (self.f, self.g);
        let back = self.lambda.inverse(u);
        let tau = u.min(back);
        let piece = self.cuts.partition_point(|&c| c < tau);
        let mut best = if piece == 0 { 0.0 } else { self.prefix_max[piece - 1] };
        let fu = f.state_at(u);
        let gu = g.state_at(u);
        best = best.max(distance_unchecked(fu, gu));
        if back < u {
            // λ(t) is clipped while t is not: t ∈ [λ^{-1}(u), u).
            for s in states_on(f, back, u) {
                best = best.max(distance_unchecked(s, gu));
            }
        } else if u < back {
            // t is clipped, λ(t) ranges over [λ(u), u).
            for s in states_on(g, self.lambda.apply(u), u) {
                best = best.max(distance_unchecked(fu, s));
            }
        }
        best
    }
}

#[cfg(test)]
fn sup_distance(f: &Trajectory, g: &Trajectory, lambda: &TimeDistortion, u: f64) -> f64 {
    Sup::new(f, g, lambda).at(u)
}

pub fn skorohod_upper_bound(f: &Trajectory, g: &Trajectory, lambda: &TimeDistortion) -> Result<SkorohodBound> {
    if f.dim() != g.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    if f.horizon() != g.horizon() {
        return Err(Error::Domain(format!(
            "paths observed on different horizons ({} and {})",
            f.horizon(),
            g.horizon()
        )));
    }
    let sup = Sup::new(f, g, lambda);
    let ef = jump_times(f);
    let eg = jump_times(g);
    let mut breaks = vec![0.0];
    breaks.extend(&ef);
    breaks.extend(&eg);
    breaks.extend(ef.iter().map(|&t| lambda.apply(t)));
    breaks.extend(eg.iter().map(|&s| lambda.inverse(s)));
    let breaks = sorted_unique(breaks);
    let mut integral = 0.0;
    for (i, u) in probes(&breaks).enumerate() {
        let a = breaks[i];
        // ∫_a^b e^{-u} du, or ∫_a^∞ on the last piece.
        let weight = match breaks.get(i + 1) {
            Some(&b) => -(-a).exp() * (-(b - a)).exp_m1(),
            None => (-a).exp(),
        };
        integral += weight * sup.at(u);
    }
    let badness = lambda.badness();
    Ok(SkorohodBound {
        bound: badness.max(integral),
        badness,
        integral,
        horizon_tail: (-f.horizon()).exp(),
    })
}

/// One structural item of a path: a rank-`m̃` interval of some level
/// opening or closing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Item {
    closing: bool,
    level: usize,
    prefix: Vec<u64>,
}

/// Times at which rank-`m̃` intervals open or close, with what happens.
/// A rank-`m̃` interval of level `i` is a maximal stretch on which the
/// prefix `x|_i` is constant and every coordinate of it is at most `m̃`.
fn rank_structure(p: &Trajectory, m: u64) -> Vec<(f64, Vec<Item>)> {
    let k = p.dim();
    let mut open: Vec<Option<Vec<u64>>> = vec![None; k];
    let mut out = Vec::new();
    for (t, s) in p.times().zip(p.states()) {
        let mut group = Vec::new();
        for i in 1..=k {
            let now = s.labels()[..i]
                .iter()
                .map(|l| l.get().filter(|&x| x <= m))
                .collect::<Option<Vec<u64>>>();
            if now != open[i - 1] {
                if let Some(prev) = open[i - 1].take() {
                    group.push(Item {
                        closing: true,
                        level: i,
                        prefix: prev,
                    });
                }
                if let Some(cur) = &now {
                    group.push(Item {
                        closing: false,
                        level: i,
                        prefix: cur.clone(),
                    });
                }
                open[i - 1] = now;
            }
        }
        if !group.is_empty() {
            group.sort();
            out.push((t, group));
        }
    }
    out
}

/// Distortion sending the rank-`m̃` interval endpoints of `f` to those of
/// `g`, linear in between.
pub fn match_distortion(f: &Trajectory, g: &Trajectory, rank_threshold: u64) -> Result<TimeDistortion> {
    if f.dim() != g.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    let a = rank_structure(f, rank_threshold);
    let b = rank_structure(g, rank_threshold);
    if a.len() != b.len() {
        return Err(Error::NoMatch(format!(
            "{} structural changes against {}",
            a.len(),
            b.len()
        )));
    }
    let mut knots = Vec::with_capacity(a.len());
    for ((ta, ia), (tb, ib)) in a.iter().zip(&b) {
        if ia != ib {
            return Err(Error::NoMatch(format!(
                "interval sequences differ at times {ta} and {tb}"
            )));
        }
        match (*ta == 0.0, *tb == 0.0) {
            (true, true) => {}
            (false, false) => knots.push((*ta, *tb)),
            _ => {
                return Err(Error::NoMatch(
                    "one path starts inside a rank interval, the other does not".into(),
                ))
            }
        }
    }
    TimeDistortion::new(knots)
}

/// Best bound over the identity and the matched distortions for each
/// threshold in `grid` (thresholds without a match are skipped).
pub fn best_bound(f: &Trajectory, g: &Trajectory, grid: &[u64]) -> Result<(SkorohodBound, Option<u64>)> {
    let mut best = (skorohod_upper_bound(f, g, &TimeDistortion::identity())?, None);
    for &m in grid {
        let Ok(lambda) = match_distortion(f, g, m) else {
            continue;
        };
        let b = skorohod_upper_bound(f, g, &lambda)?;
        if b.bound < best.0.bound {
            best = (b, Some(m));
        }
    }
    Ok(best)
}
