//! Càdlàg paths on the compactified leaf space and their CSV form.
//!
//! ```text
//! # horizon = 1.0000000000000000e1
//! t,x1,x2
//! 0.0000000000000000e0,1,2
//! 3.2500000000000000e-1,1,inf
//! ```
//!
//! The first data row is the start state at time 0; every further row is
//! one jump (self-jumps included). Times are written with 17 significant
//! digits so that parsing recovers them bit for bit.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tree_env::Address;

/// A coordinate in `N* ∪ {∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(u64);

impl Label {
    pub const INF: Label = Label(u64::MAX);

    pub fn new(x: u64) -> Result<Self> {
        if x == 0 || x == u64::MAX {
            return Err(Error::Domain(format!("label {x} out of range")));
        }
        Ok(Label(x))
    }

    pub(crate) fn finite(x: u64) -> Self {
        debug_assert!(x != 0 && x != u64::MAX);
        Label(x)
    }

    pub fn is_infinite(self) -> bool {
        self == Label::INF
    }

    pub fn get(self) -> Option<u64> {
        (!self.is_infinite()).then_some(self.0)
    }

    /// `1/x`, with `1/∞ = 0`.
    pub fn recip(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0 as f64
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.get() {
            Some(x) => write!(f, "{x}"),
            None => f.write_str("inf"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" {
            return Ok(Label::INF);
        }
        let x: u64 = s.parse().map_err(|_| Error::Parse(format!("bad label {s:?}")))?;
        Label::new(x).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// A point of `N̄*^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<Label>);

impl State {
    pub fn from_coords(coords: &[u64]) -> Self {
        State(coords.iter().map(|&x| Label::finite(x)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    /// The leaf address, if no coordinate is infinite.
    pub fn to_address(&self) -> Option<Address> {
        self.0.iter().map(|l| l.get()).collect::<Option<Vec<_>>>().map(Address)
    }
}

impl From<&Address> for State {
    fn from(a: &Address) -> Self {
        State::from_coords(a.coords())
    }
}

/// A right-continuous path observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: State,
    events: Vec<(f64, State)>,
    horizon: f64,
}

impl Trajectory {
    pub fn new(start: State, events: Vec<(f64, State)>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if start.dim() == 0 {
            return Err(Error::Domain("states need at least one coordinate".into()));
        }
        let mut prev = 0.0;
        for (t, s) in &events {
            if s.dim() != start.dim() {
                return Err(Error::Dimension {
                    expected: start.dim(),
                    got: s.dim(),
                });
            }
            if !(*t > prev && *t < horizon) {
                return Err(Error::Domain(format!(
                    "jump times must increase strictly inside (0, horizon); saw {t} after {prev}"
                )));
            }
            prev = *t;
        }
        Ok(Trajectory { start, events, horizon })
    }

    /// Path that never moves.
    pub fn constant(state: State, horizon: f64) -> Result<Self> {
        Self::new(state, Vec::new(), horizon)
    }

    pub fn start(&self) -> &State {
        &self.start
    }

    pub fn events(&self) -> &[(f64, State)] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    pub fn jumps(&self) -> usize {
        self.events.len()
    }

    /// The state at time `t` (the last state persists past the horizon).
    pub fn state_at(&self, t: f64) -> &State {
        let i = self.events.partition_point(|(s, _)| *s <= t);
        if i == 0 {
            &self.start
        } else {
            &self.events[i - 1].1
        }
    }

    /// Visited states in order, starting with the initial one.
    pub fn states(&self) -> impl Iterator<Item = &State> {
        std::iter::once(&self.start).chain(self.events.iter().map(|(_, s)| s))
    }

    /// Jump times, with 0 prepended.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(self.events.iter().map(|(t, _)| *t))
    }

    /// `(state, length, complete)` for every sojourn; the last one is
    /// clipped at the horizon and marked incomplete.
    pub fn sojourns(&self) -> impl Iterator<Item = (&State, f64, bool)> {
        let ends = self
            .events
            .iter()
            .map(|(t, _)| (*t, true))
            .chain(std::iter::once((self.horizon, false)));
        self.states()
            .zip(self.times())
            .zip(ends)
            .map(|((s, a), (b, complete))| (s, b - a, complete))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# horizon = {:.16e}", self.horizon).unwrap();
        out.push('t');
        for j in 1..=self.dim() {
            write!(out, ",x{j}").unwrap();
        }
        out.push('\n');
        for (t, s) in std::iter::once((0.0, &self.start)).chain(self.events.iter().map(|(t, s)| (*t, s))) {
            write!(out, "{t:.16e}").unwrap();
            for l in s.labels() {
                write!(out, ",{l}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut header = None;
        let mut rows: Vec<(f64, State)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("horizon") {
                    let v = v.trim_start().strip_prefix('=').unwrap_or(v).trim();
                    horizon = Some(
                        v.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("line {}: bad horizon {v:?}", n + 1)))?,
                    );
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some(k) = header else {
                if fields.len() < 2 || fields[0] != "t" {
                    return Err(Error::Parse("missing `t,x1,..` header".into()));
                }
                for (j, f) in fields[1..].iter().enumerate() {
                    if *f != format!("x{}", j + 1) {
                        return Err(Error::Parse(format!("bad header column {f:?}")));
                    }
                }
                header = Some(fields.len() - 1);
                continue;
            };
            if fields.len() != k + 1 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    n + 1,
                    k + 1,
                    fields.len()
                )));
            }
            let t: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad time {:?}", n + 1, fields[0])))?;
            let state = fields[1..]
                .iter()
                .map(|f| f.parse::<Label>())
                .collect::<Result<Vec<_>>>()?;
            rows.push((t, State(state)));
        }
        let horizon = horizon.ok_or_else(|| Error::Parse("missing `# horizon = ..` line".into()))?;
        let mut rows = rows.into_iter();
        let (t0, start) = rows.next().ok_or_else(|| Error::Parse("no start state".into()))?;
        if t0 != 0.0 {
            return Err(Error::Parse(format!("first row must be at t = 0, got {t0}")));
        }
        Trajectory::new(start, rows.collect(), horizon).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Accumulates jumps in time order. A jump at the same instant as the
/// previous one overwrites it, so zero-length sojourns (floating-point
/// underflow of a hold) never produce duplicate times.
#[derive(Debug, Clone)]
pub struct TrajectoryBuilder {
    start: State,
    events: Vec<(f64, State)>,
}

impl TrajectoryBuilder {
    pub fn new(start: State) -> Self {
        TrajectoryBuilder {
            start,
            events: Vec::new(),
        }
    }

    pub fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.0)
    }

    pub fn push(&mut self, t: f64, state: State) {
        if t > self.last_time() {
            self.events.push((t, state));
        } else if let Some(last) = self.events.last_mut() {
            last.1 = state;
        } else {
            self.start = state;
        }
    }

    pub fn finish(self, horizon: f64) -> Result<Trajectory> {
        Trajectory::new(self.start, self.events, horizon)
    }
}

/// Leaf sequence and sojourn lengths of a jump process, by leaf index.
/// `holds[i]` is the time spent in `states[i]`; the final state has no
/// recorded hold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpChain {
    pub states: Vec<u64>,
    pub holds: Vec<f64>,
}

impl JumpChain {
    pub fn jumps(&self) -> usize {
        self.holds.len()
    }

    /// `counts[a][b]` = number of jumps from leaf `a` to leaf `b`.
    pub fn transition_counts(&self, leaves: usize) -> Vec<Vec<u64>> {
        let mut c = vec![vec![0u64; leaves]; leaves];
        for w in self.states.windows(2) {
            c[w[0] as usize][w[1] as usize] += 1;
        }
        c
    }

    /// Completed sojourn lengths grouped by leaf.
    pub fn holds_by_leaf(&self, leaves: usize) -> Vec<Vec<f64>> {
        let mut h = vec![Vec::new(); leaves];
        for (s, d) in self.states.iter().zip(&self.holds) {
            h[*s as usize].push(*d);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Trajectory {
        Trajectory::new(
            State::from_coords(&[1, 2]),
            vec![
                (0.5, State::from_coords(&[1, 2])),
                (1.25, State(vec![Label::finite(3), Label::INF])),
            ],
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn state_lookup_is_right_continuous() {
        let t = sample();
        assert_eq!(t.state_at(0.0), &State::from_coords(&[1, 2]));
        assert_eq!(t.state_at(1.25).0[1], Label::INF);
        assert_eq!(t.state_at(10.0).0[0], Label::finite(3));
    }

    #[test]
    fn sojourns_sum_to_horizon() {
        let t = sample();
        let total: f64 = t.sojourns().map(|(_, d, _)| d).sum();
        assert_eq!(total, 2.0);
        assert_eq!(t.sojourns().filter(|s| s.2).count(), 2);
    }

    #[test]
    fn rejects_unordered_events() {
        let s = State::from_coords(&[1]);
        assert!(Trajectory::new(s.clone(), vec![(0.5, s.clone()), (0.5, s.clone())], 1.0).is_err());
        assert!(Trajectory::new(s.clone(), vec![(1.5, s.clone())], 1.0).is_err());
        assert!(Trajectory::new(s, vec![], 0.0).is_err());
    }

    #[test]
    fn builder_merges_simultaneous_jumps() {
        let mut b = TrajectoryBuilder::new(State::from_coords(&[1]));
        b.push(0.0, State::from_coords(&[2]));
        b.push(1.0, State::from_coords(&[3]));
        b.push(1.0, State::from_coords(&[4]));
        let t = b.finish(2.0).unwrap();
        assert_eq!(t.start(), &State::from_coords(&[2]));
        assert_eq!(t.events(), &[(1.0, State::from_coords(&[4]))]);
    }

    #[test]
    fn chain_counts() {
        let c = JumpChain {
            states: vec![0, 1, 1, 0],
            holds: vec![0.5, 1.0, 2.0],
        };
        assert_eq!(c.transition_counts(2), vec![vec![0, 1], vec![1, 1]]);
        assert_eq!(c.holds_by_leaf(2), vec![vec![0.5], vec![1.0, 2.0]]);
    }

    #[test]
    fn csv_format() {
        let csv = sample().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[1], "t,x1,x2");
        assert_eq!(lines[2], "0.0000000000000000e0,1,2");
        assert!(lines[4].ends_with(",3,inf"));
        assert_eq!(Trajectory::from_csv(&csv).unwrap(), sample());
    }

    #[test]
    fn csv_errors() {
        for bad in [
            "t,x1\n0,1\n",
            "# horizon = 1\nt,x2\n0,1\n",
            "# horizon = 1\nt,x1\n0.5,1\n",
            "# horizon = 1\nt,x1\n0,0\n",
            "# horizon = 1\nt,x1\n0,1,2\n",
            "# horizon = 1\nt,x1\n",
            "# horizon = 1\n0,1\n",
        ] {
            assert!(Trajectory::from_csv(bad).is_err(), "accepted {bad:?}");
        }
    }

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        (1usize..4, 1e-3f64..1e3).prop_flat_map(|(k, horizon)| {
            let state = proptest::collection::vec(
                prop_oneof![9 => (1u64..1_000_000).prop_map(Label::finite), 1 => Just(Label::INF)],
                k,
            )
            .prop_map(State);
            (
                state.clone(),
                proptest::collection::vec((0.0f64..1.0, state), 0..20),
                Just(horizon),
            )
                .prop_map(|(s, mut ev, h)| {
                    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
                    ev.dedup_by(|a, b| a.0 == b.0);
                    let ev = ev
                        .into_iter()
                        .map(|(u, s)| (u * h, s))
                        .filter(|(t, _)| *t > 0.0 && *t < h)
                        .collect();
                    Trajectory::new(s, ev, h).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(t in arb_traj()) {
            prop_assert_eq!(Trajectory::from_csv(&t.to_csv()).unwrap(), t);
        }
    }
}
