//! Level-by-level construction of the trap model from Poisson marks.
//!
//! Level 1 lives on an internal axis carrying rate-`M_1` Poisson marks with
//! uniform labels. Mark `s` gets the atom `γ_1(label) T_s` of the clock
//! `Γ_1`, and the jumps of `Γ_1` cut the next axis into constancy
//! intervals `[Γ_1(s-), Γ_1(s))`. Level `l` repeats this on the axis of
//! level `l-1`, with the prefix of each mark read off the interval that
//! contains it. In the finite model every interval also receives one extra
//! mark at its left end. The jumps of the last clock are the sojourns of
//! the leaf process in real time.
//!
//! The level-1 axis is generated in windows; each call to
//! [`MarkConstruction::extend_to`] appends one window and pushes it
//! through every level. Within a window randomness is drawn level by
//! level: mark positions and labels first (per interval, extra label
//! before the Poisson spacings), then one exponential per mark for the
//! atom weights.

use crate::error::{Error, Result};
use crate::rng::Source;
use crate::trajectory::{JumpChain, State, Trajectory, TrajectoryBuilder};
use crate::tree_env::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkKind {
    Poisson,
    Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub position: f64,
    pub label: u64,
    pub kind: MarkKind,
    /// Atom of the clock at this mark; 0 until [`build_clock`] runs.
    pub weight: f64,
    /// Index of the containing interval in the list the marks were
    /// generated from.
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkStream {
    pub level: usize,
    pub marks: Vec<Mark>,
}

/// `[left, right)` on which the level process sits at one vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstancyInterval {
    pub left: f64,
    pub right: f64,
    /// Lexicographic index of the vertex within its generation; the root
    /// interval of level 1 uses 0.
    pub vertex: u64,
}

impl ConstancyInterval {
    pub fn len(&self) -> f64 {
        self.right - self.left
    }

    pub fn is_empty(&self) -> bool {
        self.right <= self.left
    }
}

/// Marks of `level` inside `intervals`: Poisson marks of total rate
/// `volume` with uniform labels, plus (if `extra_marks` and `level ≥ 2`)
/// one uniformly labelled mark at every left endpoint.
pub fn generate_marks_level<S: Source + ?Sized>(
    level: usize,
    intervals: &[ConstancyInterval],
    volume: u64,
    extra_marks: bool,
    src: &mut S,
) -> Result<MarkStream> {
    if level == 0 || volume == 0 {
        return Err(Error::Domain("level and volume must be positive".into()));
    }
    for w in intervals.windows(2) {
        if w[1].left < w[0].right {
            return Err(Error::Domain(format!(
                "intervals overlap or are unsorted: [{}, {}) then [{}, {})",
                w[0].left, w[0].right, w[1].left, w[1].right
            )));
        }
    }
    let rate = volume as f64;
    let mut marks = Vec::new();
    for (i, iv) in intervals.iter().enumerate() {
        if !(iv.left < iv.right) {
            return Err(Error::Domain(format!("empty interval [{}, {})", iv.left, iv.right)));
        }
        let first = marks.len();
        if extra_marks && level >= 2 {
            marks.push(Mark {
                position: iv.left,
                label: src.label(volume),
                kind: MarkKind::Extra,
                weight: 0.0,
                parent: i,
            });
        }
        let mut pos = iv.left + src.exp1() / rate;
        while pos < iv.right {
            marks.push(Mark {
                position: pos,
                label: src.label(volume),
                kind: MarkKind::Poisson,
                weight: 0.0,
                parent: i,
            });
            pos += src.exp1() / rate;
        }
        // Equal positions only arise from a zero spacing; order them by label.
        marks[first..].sort_by(|a, b| a.position.total_cmp(&b.position).then(a.label.cmp(&b.label)));
    }
    Ok(MarkStream { level, marks })
}

/// Draws the weight `γ_l(prefix, label) T` of every mark.
fn assign_weights<S: Source + ?Sized>(
    stream: &mut MarkStream,
    parents: &[ConstancyInterval],
    env: &Environment,
    src: &mut S,
) -> Result<()> {
    let level = stream.level;
    for m in &mut stream.marks {
        let parent = parents
            .get(m.parent)
            .ok_or_else(|| Error::Domain(format!("mark at {} has no prefix", m.position)))?;
        let gamma = env.gamma_child(level, parent.vertex, m.label).ok_or_else(|| {
            Error::Lookup(format!(
                "γ_{level} missing for label {} under vertex {}",
                m.label, parent.vertex
            ))
        })?;
        m.weight = gamma * src.exp1();
    }
    Ok(())
}

/// Assigns weights to `stream` and returns its clock `Γ_l`.
pub fn build_clock<S: Source + ?Sized>(
    stream: &mut MarkStream,
    parents: &[ConstancyInterval],
    env: &Environment,
    src: &mut S,
) -> Result<ClockProcess> {
    assign_weights(stream, parents, env, src)?;
    let mut clock = ClockProcess::new();
    for m in &stream.marks {
        clock.push(m.position, m.weight)?;
    }
    Ok(clock)
}

/// Purely atomic nondecreasing step function with compensated running sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClockProcess {
    positions: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    sum: f64,
    comp: f64,
}

impl ClockProcess {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut c = Self::new();
        for &(r, w) in atoms {
            c.push(r, w)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, position: f64, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Domain(format!("atom weight must be positive, got {weight}")));
        }
        if !(position >= self.positions.last().copied().unwrap_or(0.0) && position.is_finite()) {
            return Err(Error::Domain(format!("atom at {position} out of order")));
        }
        // Neumaier summation.
        let t = self.sum + weight;
        if self.sum.abs() >= weight {
            self.comp += (self.sum - t) + weight;
        } else {
            self.comp += (weight - t) + self.sum;
        }
        self.sum = t;
        let prev = self.total();
        self.positions.push(position);
        self.weights.push(weight);
        self.cumulative.push((self.sum + self.comp).max(prev));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn atom(&self, i: usize) -> (f64, f64) {
        (self.positions[i], self.weights[i])
    }

    /// `Γ(s_i-)`.
    pub fn left_limit(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    /// `Γ(s_i)`.
    pub fn at_atom(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    /// `Γ(r) = Σ_{s ≤ r} w_s`.
    pub fn value(&self, r: f64) -> f64 {
        match self.positions.partition_point(|&s| s <= r) {
            0 => 0.0,
            n => self.cumulative[n - 1],
        }
    }

    /// Index of the atom `s` with `Γ(s-) ≤ t < Γ(s)`.
    pub fn invert_index(&self, t: f64) -> Result<usize> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("clock inverse needs t ≥ 0, got {t}")));
        }
        let i = self.cumulative.partition_point(|&c| c <= t);
        if i == self.len() {
            return Err(Error::HorizonExhausted {
                requested: t,
                available: self.total(),
            });
        }
        Ok(i)
    }

    /// `φ(t) = inf{r ≥ 0 : Γ(r) > t}`.
    pub fn invert(&self, t: f64) -> Result<f64> {
        self.invert_index(t).map(|i| self.positions[i])
    }
}

/// One interval `[Γ(s-), Γ(s))` per mark of `stream`, valued at the
/// child of the mark's prefix. Intervals that are empty in floating point
/// (an atom below the resolution of the running sum) are dropped.
pub fn constancy_intervals(
    stream: &MarkStream,
    clock: &ClockProcess,
    parents: &[ConstancyInterval],
    volume: u64,
) -> Vec<ConstancyInterval> {
    intervals_from(clock, 0, &stream.marks, parents, volume)
}

fn intervals_from(
    clock: &ClockProcess,
    first_atom: usize,
    marks: &[Mark],
    parents: &[ConstancyInterval],
    volume: u64,
) -> Vec<ConstancyInterval> {
    marks
        .iter()
        .enumerate()
        .map(|(i, m)| ConstancyInterval {
            left: clock.left_limit(first_atom + i),
            right: clock.at_atom(first_atom + i),
            vertex: parents[m.parent].vertex * volume + m.label - 1,
        })
        .filter(|iv| !iv.is_empty())
        .collect()
}

/// Marks, clock and constancy intervals of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub stream: MarkStream,
    pub clock: ClockProcess,
    pub intervals: Vec<ConstancyInterval>,
}

/// The construction on a growing level-1 window `[0, axis_end)`.
#[derive(Debug, Clone)]
pub struct MarkConstruction<'a> {
    env: &'a Environment,
    extra_marks: bool,
    axis_end: f64,
    levels: Vec<LevelRecord>,
}

impl<'a> MarkConstruction<'a> {
    /// `extra_marks = false` gives the infinite-volume (K-process) rule.
    pub fn new(env: &'a Environment, extra_marks: bool) -> Result<Self> {
        env.require_dense()?;
        let levels = (1..=env.tree().levels())
            .map(|level| LevelRecord {
                stream: MarkStream {
                    level,
                    marks: Vec::new(),
                },
                clock: ClockProcess::new(),
                intervals: Vec::new(),
            })
            .collect();
        Ok(MarkConstruction {
            env,
            extra_marks,
            axis_end: 0.0,
            levels,
        })
    }

    pub fn env(&self) -> &Environment {
        self.env
    }

    pub fn axis_end(&self) -> f64 {
        self.axis_end
    }

    /// Record of level `j` (1-based).
    pub fn level(&self, j: usize) -> &LevelRecord {
        &self.levels[j - 1]
    }

    pub fn leaf(&self) -> &LevelRecord {
        self.levels.last().unwrap()
    }

    /// `Θ_k(axis_end) = Γ_k ∘ .. ∘ Γ_1(axis_end)`.
    pub fn leaf_total(&self) -> f64 {
        self.leaf().clock.total()
    }

    /// Appends the level-1 window `[axis_end, end)` and everything it
    /// generates below.
    pub fn extend_to<S: Source + ?Sized>(&mut self, end: f64, src: &mut S) -> Result<()> {
        if !(end > self.axis_end) || !end.is_finite() {
            return Err(Error::Domain(format!(
                "window end {end} must exceed the current end {}",
                self.axis_end
            )));
        }
        let tree = self.env.tree().clone();
        let mut parents = vec![ConstancyInterval {
            left: self.axis_end,
            right: end,
            vertex: 0,
        }];
        let mut parent_offset = 0;
        for level in 1..=tree.levels() {
            let volume = tree.volume(level);
            let mut fresh = generate_marks_level(level, &parents, volume, self.extra_marks, src)?;
            assign_weights(&mut fresh, &parents, self.env, src)?;
            let rec = &mut self.levels[level - 1];
            let first_atom = rec.clock.len();
            for m in &fresh.marks {
                rec.clock.push(m.position, m.weight)?;
            }
            let new_intervals = intervals_from(&rec.clock, first_atom, &fresh.marks, &parents, volume);
            for mut m in fresh.marks {
                m.parent += parent_offset;
                rec.stream.marks.push(m);
            }
            parent_offset = rec.intervals.len();
            rec.intervals.extend_from_slice(&new_intervals);
            parents = new_intervals;
        }
        self.axis_end = end;
        Ok(())
    }

    fn first_window(&self) -> f64 {
        let k = self.env.tree().levels();
        let per_unit = self.env.gamma_bar_total(k);
        if per_unit > 0.0 && per_unit.is_finite() {
            1.0 / per_unit
        } else {
            1.0
        }
    }

    /// Doubles the window until the leaf clock exceeds `horizon`.
    pub fn cover<S: Source + ?Sized>(&mut self, horizon: f64, src: &mut S) -> Result<()> {
        let mut end = if self.axis_end > 0.0 {
            self.axis_end
        } else {
            horizon * self.first_window()
        };
        while self.leaf_total() <= horizon {
            if self.axis_end > 0.0 {
                end *= 2.0;
            }
            self.extend_to(end, src)?;
        }
        Ok(())
    }

    /// Doubles the window until at least `n` leaf sojourns are complete.
    pub fn cover_sojourns<S: Source + ?Sized>(&mut self, n: usize, src: &mut S) -> Result<()> {
        let mut end = if self.axis_end > 0.0 {
            self.axis_end
        } else {
            self.first_window()
        };
        while self.leaf().intervals.len() < n {
            if self.axis_end > 0.0 {
                end *= 2.0;
            }
            self.extend_to(end, src)?;
        }
        Ok(())
    }

    /// Leaf path on `[0, horizon]`; the leaf clock must already cover it.
    pub fn trajectory(&self, horizon: f64) -> Result<Trajectory> {
        let leaf = self.leaf();
        if leaf.clock.total() <= horizon {
            return Err(Error::HorizonExhausted {
                requested: horizon,
                available: leaf.clock.total(),
            });
        }
        let tree = self.env.tree();
        let k = tree.levels();
        let state = |iv: &ConstancyInterval| State::from(&tree.address_of(k, iv.vertex));
        let mut ivs = leaf.intervals.iter();
        let mut out = TrajectoryBuilder::new(state(ivs.next().unwrap()));
        for iv in ivs.take_while(|iv| iv.left < horizon) {
            out.push(iv.left, state(iv));
        }
        out.finish(horizon)
    }

    /// The first `jumps` jumps of the leaf process.
    pub fn jump_chain(&self, jumps: usize) -> Result<JumpChain> {
        let ivs = &self.leaf().intervals;
        if ivs.len() < jumps + 1 {
            return Err(Error::HorizonExhausted {
                requested: (jumps + 1) as f64,
                available: ivs.len() as f64,
            });
        }
        Ok(JumpChain {
            states: ivs[..=jumps].iter().map(|iv| iv.vertex).collect(),
            holds: ivs[..jumps].iter().map(|iv| iv.len()).collect(),
        })
    }
}

/// Leaf path of the finite-volume construction on `[0, horizon]`.
pub fn simulate_mark<S: Source + ?Sized>(env: &Environment, horizon: f64, src: &mut S) -> Result<Trajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut c = MarkConstruction::new(env, true)?;
    c.cover(horizon, src)?;
    c.trajectory(horizon)
}

/// The first `jumps` jumps of the finite-volume construction.
pub fn mark_jump_chain<S: Source + ?Sized>(env: &Environment, jumps: usize, src: &mut S) -> Result<JumpChain> {
    let mut c = MarkConstruction::new(env, true)?;
    c.cover_sojourns(jumps + 1, src)?;
    c.jump_chain(jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{replica_rng, Forced};
    use crate::tree_env::make_tree;

    fn atoms() -> ClockProcess {
        ClockProcess::from_atoms(&[(0.5, 2.0), (1.0, 3.0)]).unwrap()
    }

    #[test]
    fn clock_inverse() {
        let c = atoms();
        assert_eq!(c.invert(1.0).unwrap(), 0.5);
        assert_eq!(c.invert(0.0).unwrap(), 0.5);
        assert_eq!(c.invert(2.0).unwrap(), 1.0);
        assert!(matches!(c.invert(5.0), Err(Error::HorizonExhausted { .. })));
        assert_eq!(c.value(0.49), 0.0);
        assert_eq!(c.value(0.5), 2.0);
        assert_eq!(c.value(7.0), 5.0);
    }

    #[test]
    fn empty_clock_is_zero() {
        let c = ClockProcess::new();
        assert_eq!(c.value(10.0), 0.0);
        assert!(c.invert(0.0).is_err());
    }

    #[test]
    fn clock_rejects_bad_atoms() {
        assert!(ClockProcess::from_atoms(&[(1.0, 0.0)]).is_err());
        assert!(ClockProcess::from_atoms(&[(1.0, 1.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn compensated_sum_is_exact_on_many_small_atoms() {
        let mut c = ClockProcess::new();
        c.push(0.0, 1e8).unwrap();
        for i in 0..100_000 {
            c.push(1.0 + i as f64, 1e-9).unwrap();
        }
        assert!((c.total() - (1e8 + 1e-4)).abs() < 1e-8);
    }

    #[test]
    fn single_forced_mark() {
        let env = Environment::new(make_tree(&[1]).unwrap(), vec![vec![2.0]]).unwrap();
        let mut stream = MarkStream {
            level: 1,
            marks: vec![Mark {
                position: 0.5,
                label: 1,
                kind: MarkKind::Poisson,
                weight: 0.0,
                parent: 0,
            }],
        };
        let root = [ConstancyInterval {
            left: 0.0,
            right: 1.0,
            vertex: 0,
        }];
        let clock = build_clock(&mut stream, &root, &env, &mut Forced::new().with_exps([1.0])).unwrap();
        assert_eq!(clock.value(0.4), 0.0);
        assert_eq!(clock.value(0.5), 2.0);
        let ivs = constancy_intervals(&stream, &clock, &root, 1);
        assert_eq!(
            ivs,
            vec![ConstancyInterval {
                left: 0.0,
                right: 2.0,
                vertex: 0
            }]
        );
        assert!(build_clock(&mut stream, &[], &env, &mut Forced::new().with_exps([1.0])).is_err());
    }

    #[test]
    fn forced_two_level_construction() {
        // γ_1 ≡ 1 on two labels, γ_2 = (1,2 | 3,4).
        let env = Environment::new(
            make_tree(&[2, 2]).unwrap(),
            vec![vec![1.0, 1.0], vec![1.0, 2.0, 3.0, 4.0]],
        )
        .unwrap();
        let mut c = MarkConstruction::new(&env, true).unwrap();
        let mut src = Forced::new()
            // level 1: one mark at 0.25 (spacing 0.5 / rate 2), overshoot
            .with_exps([0.5, 10.0])
            .with_labels([2])
            // level-1 weight: interval [0, 1.5)
            .with_exps([1.5])
            // level 2: extra mark label 1, one Poisson mark at 0.5 label 2, overshoot
            .with_labels([1])
            .with_exps([1.0])
            .with_labels([2])
            .with_exps([10.0])
            // level-2 weights: 3·1 and 4·0.5
            .with_exps([1.0, 0.5]);
        c.extend_to(1.0, &mut src).unwrap();
        let l1 = c.level(1);
        assert_eq!(
            l1.intervals,
            vec![ConstancyInterval {
                left: 0.0,
                right: 1.5,
                vertex: 1
            }]
        );
        let l2 = c.level(2);
        assert_eq!(l2.stream.marks[0].kind, MarkKind::Extra);
        assert_eq!(l2.stream.marks[0].position, 0.0);
        assert_eq!(l2.stream.marks[1].position, 0.5);
        assert_eq!(
            l2.intervals,
            vec![
                ConstancyInterval {
                    left: 0.0,
                    right: 3.0,
                    vertex: 2
                },
                ConstancyInterval {
                    left: 3.0,
                    right: 5.0,
                    vertex: 3
                },
            ]
        );
        let t = c.trajectory(4.0).unwrap();
        assert_eq!(t.start(), &State::from_coords(&[2, 1]));
        assert_eq!(t.events(), &[(3.0, State::from_coords(&[2, 2]))]);
        assert!(c.trajectory(5.0).is_err());
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let ivs = [
            ConstancyInterval {
                left: 0.0,
                right: 2.0,
                vertex: 0,
            },
            ConstancyInterval {
                left: 1.0,
                right: 3.0,
                vertex: 0,
            },
        ];
        assert!(generate_marks_level(2, &ivs, 3, true, &mut replica_rng(0, 0)).is_err());
    }

    #[test]
    fn every_interval_gets_one_extra_mark_at_its_left_end() {
        let env = Environment::constant(make_tree(&[3, 4, 2]).unwrap(), 0.7).unwrap();
        let mut c = MarkConstruction::new(&env, true).unwrap();
        c.extend_to(20.0, &mut replica_rng(5, 0)).unwrap();
        for j in 2..=3 {
            let parents = &c.level(j - 1).intervals;
            let mut extras = vec![0usize; parents.len()];
            for m in &c.level(j).stream.marks {
                let p = &parents[m.parent];
                assert!(m.position >= p.left && m.position < p.right);
                if m.kind == MarkKind::Extra {
                    assert_eq!(m.position, p.left);
                    extras[m.parent] += 1;
                }
            }
            assert!(extras.iter().all(|&e| e == 1));
        }
    }

    #[test]
    fn intervals_tile_the_clock_range() {
        let env = Environment::constant(make_tree(&[2, 3]).unwrap(), 1.3).unwrap();
        let mut c = MarkConstruction::new(&env, true).unwrap();
        c.cover(50.0, &mut replica_rng(2, 0)).unwrap();
        c.cover(120.0, &mut replica_rng(2, 1)).unwrap();
        for j in 1..=2 {
            let rec = c.level(j);
            assert_eq!(rec.intervals.len(), rec.clock.len());
            assert_eq!(rec.intervals[0].left, 0.0);
            for w in rec.intervals.windows(2) {
                assert_eq!(w[0].right, w[1].left);
            }
            assert_eq!(rec.intervals.last().unwrap().right, rec.clock.total());
        }
        let t = c.trajectory(120.0).unwrap();
        let total: f64 = t.sojourns().map(|s| s.1).sum();
        assert!((total - 120.0).abs() < 1e-9);
    }

    #[test]
    fn trajectory_and_chain_use_the_same_sojourns() {
        let env = Environment::new(
            make_tree(&[2, 2]).unwrap(),
            vec![vec![0.5, 2.0], vec![1.0, 2.0, 3.0, 4.0]],
        )
        .unwrap();
        let chain = mark_jump_chain(&env, 30, &mut replica_rng(8, 0)).unwrap();
        assert_eq!(chain.states.len(), 31);
        assert!(chain.holds.iter().all(|h| *h > 0.0));
        let a = simulate_mark(&env, 30.0, &mut replica_rng(8, 1)).unwrap();
        let b = simulate_mark(&env, 30.0, &mut replica_rng(8, 1)).unwrap();
        assert_eq!(a, b);
        assert!(simulate_mark(&env, -1.0, &mut replica_rng(8, 1)).is_err());
    }
}
