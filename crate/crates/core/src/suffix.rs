//! Memory windows over the observable history.
//!
//! At step `h` an m-step agent sees the suffix
//! `z_h = (o_{m(h)}, a_{m(h)}, ..., a_{h-1}, o_h)` with `m(h) = max(h - m + 1, 1)`,
//! i.e. the last `min(h, m)` observations and the actions between them.
//! Steps are 1-based throughout the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::HistoryDisplay;

/// First step covered by the memory window ending at `step`: `max(step - memory + 1, 1)`.
pub fn window_start(step: usize, memory: usize) -> usize {
    debug_assert!(step >= 1 && memory >= 1);
    if step >= memory {
        step + 1 - memory
    } else {
        1
    }
}

/// Number of observations in the window ending at `step`.
pub fn window_len(step: usize, memory: usize) -> usize {
    step.min(memory)
}

/// Canonical suffix key: observations `o_{m(h):h}` and actions `a_{m(h):h-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Suffix {
    step: usize,
    obs: Vec<usize>,
    actions: Vec<usize>,
}

impl Suffix {
    /// Builds a suffix from its parts.
    ///
    /// Panics if `actions.len() + 1 != obs.len()` or if the window is longer than `step`.
    pub fn new(step: usize, obs: Vec<usize>, actions: Vec<usize>) -> Self {
        assert!(!obs.is_empty() && obs.len() == actions.len() + 1, "malformed suffix");
        assert!(obs.len() <= step, "suffix longer than history");
        Self { step, obs, actions }
    }

    /// Extracts `z_h` from a history prefix. `obs` must hold at least `step`
    /// observations and `actions` at least `step - 1` actions; extra entries are ignored.
    pub fn extract(obs: &[usize], actions: &[usize], step: usize, memory: usize) -> Self {
        let start = window_start(step, memory);
        Self {
            step,
            obs: obs[start - 1..step].to_vec(),
            actions: actions[start - 1..step - 1].to_vec(),
        }
    }

    /// `z_{h+1}` obtained by appending `(action, next_obs)` and dropping what falls
    /// out of the window.
    pub fn shift(&self, action: usize, next_obs: usize, memory: usize) -> Self {
        let mut obs = self.obs.clone();
        let mut actions = self.actions.clone();
        actions.push(action);
        obs.push(next_obs);
        if obs.len() > memory {
            let drop = obs.len() - memory;
            obs.drain(..drop);
            actions.drain(..drop);
        }
        Self { step: self.step + 1, obs, actions }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn observations(&self) -> &[usize] {
        &self.obs
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn last_observation(&self) -> usize {
        *self.obs.last().expect("suffix has at least one observation")
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Suffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "z{}{}",
            self.step,
            HistoryDisplay { obs: &self.obs, actions: &self.actions }
        )
    }
}
