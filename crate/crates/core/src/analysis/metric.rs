//! The compactifying metric on `N̄*^k`.

use crate::error::{Error, Result};
use crate::trajectory::State;

/// `d(x, y) = max_j |1/x_j - 1/y_j|` with `1/∞ = 0`; always in `[0, 1]`.
pub fn state_distance(x: &State, y: &State) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(distance_unchecked(x, y))
}

pub(crate) fn distance_unchecked(x: &State, y: &State) -> f64 {
    x.labels()
        .iter()
        .zip(y.labels())
        .map(|(a, b)| (a.recip() - b.recip()).abs())
        .fold(0.0, f64::max)
}
