//! Direct simulation of the trap model through its coin-tossing jump rule.
//!
//! From leaf `x` the walk waits an exponential time of mean `γ_k(x)`, then
//! flips the coins at `x|_{k-1}, x|_{k-2}, ..` in turn. Heads (probability
//! `p_j`) moves on to the next ancestor up; the first tails at generation
//! `g` stops the climb (all heads gives `g = 0`). Coordinates `g+1..k` are
//! then redrawn uniformly. The new leaf may equal the old one; such
//! self-jumps are kept as events.
//!
//! Randomness is consumed in a fixed order for each step: the hold time,
//! the coins from generation `k-1` upward, then one uniform label per
//! redrawn coordinate from generation `g+1` down to `k`.

use crate::error::{Error, Result};
use crate::rng::Source;
use crate::trajectory::{JumpChain, State, Trajectory, TrajectoryBuilder};
use crate::tree_env::{Address, CoinModel};

/// Outcome of one jump: the new leaf and the generation it branched at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Jump {
    pub target: Address,
    pub generation: usize,
}

fn draw_generation<S: Source + ?Sized>(coins: &[f64], src: &mut S) -> usize {
    for j in (1..=coins.len()).rev() {
        if !src.coin(coins[j - 1]) {
            return j;
        }
    }
    0
}

/// In-place jump on raw coordinates; returns the branching generation.
fn jump_coords<S: Source + ?Sized>(model: &CoinModel, coords: &mut [u64], src: &mut S) -> usize {
    let g = draw_generation(&model.coin_path(coords), src);
    let tree = model.tree();
    for j in g + 1..=tree.levels() {
        coords[j - 1] = src.label(tree.volume(j));
    }
    g
}

pub fn sample_jump_target<S: Source + ?Sized>(model: &CoinModel, current: &Address, src: &mut S) -> Result<Jump> {
    model.tree().check_leaf(current)?;
    let mut coords = current.coords().to_vec();
    let generation = jump_coords(model, &mut coords, src);
    Ok(Jump {
        target: Address(coords),
        generation,
    })
}

fn hold<S: Source + ?Sized>(model: &CoinModel, coords: &[u64], src: &mut S) -> f64 {
    let i = model.tree().index_unchecked(coords) as usize;
    model.leaf_gamma()[i] * src.exp1()
}

/// The walk from `start` on `[0, horizon]`.
pub fn simulate_coin<S: Source + ?Sized>(
    model: &CoinModel,
    start: &Address,
    horizon: f64,
    src: &mut S,
) -> Result<Trajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    model.tree().check_leaf(start)?;
    let mut coords = start.coords().to_vec();
    let mut out = TrajectoryBuilder::new(State::from_coords(&coords));
    let mut t = 0.0;
    loop {
        t += hold(model, &coords, src);
        if t >= horizon {
            break;
        }
        jump_coords(model, &mut coords, src);
        out.push(t, State::from_coords(&coords));
    }
    out.finish(horizon)
}

/// The first `jumps` jumps of the walk, as leaf indices and holds.
pub fn coin_jump_chain<S: Source + ?Sized>(
    model: &CoinModel,
    start: &Address,
    jumps: usize,
    src: &mut S,
) -> Result<JumpChain> {
    let tree = model.tree();
    tree.check_leaf(start)?;
    let mut coords = start.coords().to_vec();
    let mut chain = JumpChain {
        states: Vec::with_capacity(jumps + 1),
        holds: Vec::with_capacity(jumps),
    };
    chain.states.push(tree.index_unchecked(&coords));
    for _ in 0..jumps {
        chain.holds.push(hold(model, &coords, src));
        jump_coords(model, &mut coords, src);
        chain.states.push(tree.index_unchecked(&coords));
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{replica_rng, Forced};
    use crate::tree_env::{make_tree, Environment};

    fn model_2x2() -> CoinModel {
        CoinModel::new(
            make_tree(&[2, 2]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0],
            vec![vec![1.0 / 3.0, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn forced_jump_consumes_coins_then_labels() {
        let m = model_2x2();
        // p_1(2) = 1/2: unit 0.7 is tails, so g = 1 and only x_2 is redrawn.
        let mut src = Forced::new().with_units([0.7]).with_labels([1]);
        let j = sample_jump_target(&m, &Address::new([2, 2]), &mut src).unwrap();
        assert_eq!(
            j,
            Jump {
                target: Address::new([2, 1]),
                generation: 1
            }
        );
        // Heads: climb to the root and redraw both coordinates top-down.
        let mut src = Forced::new().with_units([0.2]).with_labels([1, 2]);
        let j = sample_jump_target(&m, &Address::new([2, 2]), &mut src).unwrap();
        assert_eq!(
            j,
            Jump {
                target: Address::new([1, 2]),
                generation: 0
            }
        );
    }

    #[test]
    fn forced_walk() {
        let m = model_2x2();
        // Leaf (1,1) has γ = 1, leaf (1,2) has γ = 2.
        let mut src = Forced::new()
            .with_exps([0.5, 1.0, 10.0])
            .with_units([0.9, 0.9])
            .with_labels([2, 2]);
        let t = simulate_coin(&m, &Address::new([1, 1]), 3.0, &mut src).unwrap();
        assert_eq!(
            t.events(),
            &[(0.5, State::from_coords(&[1, 2])), (2.5, State::from_coords(&[1, 2])),]
        );
        assert_eq!(t.horizon(), 3.0);
    }

    #[test]
    fn single_level_targets_any_leaf() {
        let m = CoinModel::from_environment(&Environment::constant(make_tree(&[5]).unwrap(), 1.0).unwrap()).unwrap();
        let mut src = Forced::new().with_labels([4]);
        let j = sample_jump_target(&m, &Address::new([2]), &mut src).unwrap();
        assert_eq!(j.generation, 0);
        assert_eq!(j.target, Address::new([4]));
    }

    #[test]
    fn errors() {
        let m = model_2x2();
        let mut rng = replica_rng(1, 0);
        assert!(simulate_coin(&m, &Address::new([1, 1]), 0.0, &mut rng).is_err());
        assert!(simulate_coin(&m, &Address::new([1]), 1.0, &mut rng).is_err());
        assert!(sample_jump_target(&m, &Address::new([3, 1]), &mut rng).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let m = model_2x2();
        let a = simulate_coin(&m, &Address::new([1, 1]), 50.0, &mut replica_rng(9, 3)).unwrap();
        let b = simulate_coin(&m, &Address::new([1, 1]), 50.0, &mut replica_rng(9, 3)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.jumps() > 0);
    }

    #[test]
    fn chain_and_path_agree() {
        let m = model_2x2();
        let chain = coin_jump_chain(&m, &Address::new([2, 1]), 40, &mut replica_rng(4, 0)).unwrap();
        let horizon = chain.holds.iter().sum::<f64>() * (1.0 + 1e-12);
        let path = simulate_coin(&m, &Address::new([2, 1]), horizon, &mut replica_rng(4, 0)).unwrap();
        let leaves: Vec<u64> = path
            .states()
            .take(41)
            .map(|s| m.tree().index_of(&s.to_address().unwrap()).unwrap())
            .collect();
        assert_eq!(leaves, chain.states);
    }
}
