//! Seed derivation and the randomness interface used by the simulators.
//!
//! Every replica and every GREM parent vertex gets its own ChaCha8 stream.
//! A stream is identified by `(seed, stream_id)`; seeds for replicas are
//! derived from the master seed with a SplitMix64 finaliser, so the result
//! of replica `i` never depends on how many replicas ran before it or on
//! which worker ran it.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, OpenClosed01};

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child `key` under `seed`.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key))
}

/// The RNG for replica `replica` of an experiment seeded with `master`.
pub fn replica_rng(master: u64, replica: u64) -> SimRng {
    stream_rng(derive_seed(master, replica), 0)
}

/// ChaCha8 keyed by `seed`, positioned on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for a vertex of the tree: `level` plus the parent path.
/// The top bit is set so ids never collide with the dynamics stream 0.
pub fn address_stream(level: usize, parent: &[u64]) -> u64 {
    let mut h = mix64(level as u64 ^ 0x5851_f42d_4c95_7f2d);
    for &x in parent {
        h = mix64(h ^ x);
    }
    h | (1 << 63)
}

/// Primitive draws consumed by the simulators.
///
/// Any [`RngCore`] is a source. [`Forced`] replays scripted values so that
/// hand-computed examples can be checked exactly.
pub trait Source {
    /// Mean-one exponential.
    fn exp1(&mut self) -> f64;
    /// Uniform on (0, 1].
    fn unit(&mut self) -> f64;
    /// Uniform on `{1, .., volume}`.
    fn label(&mut self, volume: u64) -> u64;
    /// Bernoulli(p).
    fn coin(&mut self, p: f64) -> bool {
        self.unit() <= p
    }
}

impl<R: RngCore> Source for R {
    fn exp1(&mut self) -> f64 {
        self.sample(Exp1)
    }

    fn unit(&mut self) -> f64 {
        self.sample(OpenClosed01)
    }

    fn label(&mut self, volume: u64) -> u64 {
        self.random_range(1..=volume)
    }

    fn coin(&mut self, p: f64) -> bool {
        self.random::<f64>() < p
    }
}

/// Scripted randomness. Panics when a queue runs dry.
#[derive(Debug, Default, Clone)]
pub struct Forced {
    pub exps: VecDeque<f64>,
    pub units: VecDeque<f64>,
    pub labels: VecDeque<u64>,
}

impl Forced {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_exps(mut self, v: impl IntoIterator<Item = f64>) -> Self {
        self.exps.extend(v);
        self
    }

    pub fn with_units(mut self, v: impl IntoIterator<Item = f64>) -> Self {
        self.units.extend(v);
        self
    }

    pub fn with_labels(mut self, v: impl IntoIterator<Item = u64>) -> Self {
        self.labels.extend(v);
        self
    }
}

impl Source for Forced {
    fn exp1(&mut self) -> f64 {
        self.exps.pop_front().expect("forced exponential queue exhausted")
    }

    fn unit(&mut self) -> f64 {
        self.units.pop_front().expect("forced uniform queue exhausted")
    }

    fn label(&mut self, volume: u64) -> u64 {
        let l = self.labels.pop_front().expect("forced label queue exhausted");
        assert!((1..=volume).contains(&l), "forced label {l} outside 1..={volume}");
        l
    }
}
