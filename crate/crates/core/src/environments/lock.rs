//! Combination lock: a hidden action sequence must be replayed exactly.
//!
//! Horizon `m + 1`, latent states good/bad. Steps `1..=m` emit a single dummy
//! observation; taking `a*_h` keeps the good state, anything else drops to
//! the absorbing bad state. Step `m + 1` reveals good/bad and pays 1 for good.
//! The state at step `m` is a function of `a_{1:m-1}`, so memory `m` is both
//! sufficient and necessary.

use crate::error::{Error, Result};
use crate::model::{PomdpParts, TabularPomdp};

use super::with_constructed_decoder;

pub const LOCK_GOOD: usize = 0;
pub const LOCK_BAD: usize = 1;

const DUMMY: usize = 0;
const SHOW_GOOD: usize = 1;
const SHOW_BAD: usize = 2;

/// The correct action at step `h` (1-based).
pub fn lock_special_action(step: usize, num_actions: usize) -> usize {
    (num_actions - step % num_actions) % num_actions
}

pub fn make_combination_lock(memory: usize, num_actions: usize) -> Result<TabularPomdp> {
    if memory < 2 || num_actions < 2 {
        return Err(Error::InvalidArgument("lock needs m >= 2 and A >= 2".into()));
    }
    let horizon = memory + 1;
    let stay_bad = vec![vec![0.0, 1.0]; num_actions];
    let transitions = (1..horizon)
        .map(|h| {
            let good = (0..num_actions)
                .map(|a| if a == lock_special_action(h, num_actions) { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
                .collect();
            vec![good, stay_bad.clone()]
        })
        .collect();
    let mut emissions = vec![vec![vec![1.0, 0.0, 0.0]; 2]; horizon];
    emissions[horizon - 1][LOCK_GOOD] = vec![0.0, 1.0, 0.0];
    emissions[horizon - 1][LOCK_BAD] = vec![0.0, 0.0, 1.0];
    let mut rewards = vec![vec![0.0; 3]; horizon];
    rewards[horizon - 1][SHOW_GOOD] = 1.0;
    debug_assert_eq!((DUMMY, SHOW_BAD), (0, 2));
    with_constructed_decoder(PomdpParts {
        horizon,
        memory,
        num_states: 2,
        num_observations: 3,
        num_actions,
        init: vec![1.0, 0.0],
        transitions,
        emissions,
        rewards,
        decoder: None,
    })
}
