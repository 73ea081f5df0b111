//! The layered tabular POMDP.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::suffix::Suffix;

/// Tolerance for probability vectors at construction time. Vectors outside it
/// are rejected, never renormalized.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Ground-truth map from reachable suffixes to latent states, one table per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    memory: usize,
    tables: Vec<BTreeMap<Suffix, usize>>,
}

impl Decoder {
    pub fn new(memory: usize, tables: Vec<BTreeMap<Suffix, usize>>) -> Self {
        Self { memory, tables }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    /// Decoded state for `suffix`, `None` if the suffix is not in the table.
    pub fn decode(&self, suffix: &Suffix) -> Option<usize> {
        self.tables.get(suffix.step() - 1)?.get(suffix).copied()
    }

    /// Table for step `h` (1-based).
    pub fn table(&self, h: usize) -> &BTreeMap<Suffix, usize> {
        &self.tables[h - 1]
    }
}

/// Raw pieces of a model; [`TabularPomdp::new`] validates them.
#[derive(Clone, Debug)]
pub struct PomdpParts {
    pub horizon: usize,
    pub memory: usize,
    pub num_states: usize,
    pub num_observations: usize,
    pub num_actions: usize,
    pub init: Vec<f64>,
    /// `transitions[h-1][s][a][s']` for `h` in `1..H`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `emissions[h-1][s][o]` for `h` in `1..=H`.
    pub emissions: Vec<Vec<Vec<f64>>>,
    /// `rewards[h-1][o]` in `[0, 1]`.
    pub rewards: Vec<Vec<f64>>,
    pub decoder: Option<Decoder>,
}

/// Finite-horizon POMDP with layered transitions and emissions and
/// observation-dependent deterministic rewards. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPomdp {
    horizon: usize,
    memory: usize,
    num_states: usize,
    num_observations: usize,
    num_actions: usize,
    init: Vec<f64>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    emissions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    decoder: Option<Decoder>,
}

fn check_distribution(what: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::InvalidModel(format!("{what}: expected {len} entries, got {}", p.len())));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidModel(format!("{what}: invalid probability {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what}: sums to {total:.17}")));
    }
    Ok(())
}

impl TabularPomdp {
    pub fn new(parts: PomdpParts) -> Result<Self> {
        let PomdpParts {
            horizon,
            memory,
            num_states,
            num_observations,
            num_actions,
            init,
            transitions,
            emissions,
            rewards,
            decoder,
        } = parts;
        if horizon == 0 || num_states == 0 || num_observations == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("H, S, O and A must be positive".into()));
        }
        if memory == 0 || memory > horizon {
            return Err(Error::InvalidModel(format!("memory {memory} outside [1, {horizon}]")));
        }
        check_distribution("init", &init, num_states)?;
        if transitions.len() != horizon - 1 {
            return Err(Error::InvalidModel(format!(
                "expected {} transition layers, got {}",
                horizon - 1,
                transitions.len()
            )));
        }
        for (h, layer) in transitions.iter().enumerate() {
            if layer.len() != num_states {
                return Err(Error::InvalidModel(format!("transition layer {} has wrong state count", h + 1)));
            }
            for (s, row) in layer.iter().enumerate() {
                if row.len() != num_actions {
                    return Err(Error::InvalidModel(format!(
                        "transition layer {} state {s} has wrong action count",
                        h + 1
                    )));
                }
                for (a, p) in row.iter().enumerate() {
                    check_distribution(&format!("P_{}(.|{s},{a})", h + 1), p, num_states)?;
                }
            }
        }
        if emissions.len() != horizon {
            return Err(Error::InvalidModel(format!("expected {horizon} emission layers")));
        }
        for (h, layer) in emissions.iter().enumerate() {
            if layer.len() != num_states {
                return Err(Error::InvalidModel(format!("emission layer {} has wrong state count", h + 1)));
            }
            for (s, p) in layer.iter().enumerate() {
                check_distribution(&format!("O_{}(.|{s})", h + 1), p, num_observations)?;
            }
        }
        if rewards.len() != horizon {
            return Err(Error::InvalidModel(format!("expected {horizon} reward layers")));
        }
        for (h, layer) in rewards.iter().enumerate() {
            if layer.len() != num_observations {
                return Err(Error::InvalidModel(format!("reward layer {} has wrong length", h + 1)));
            }
            if let Some(r) = layer.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::InvalidModel(format!("reward {r} at step {} outside [0,1]", h + 1)));
            }
        }
        if let Some(d) = &decoder {
            if d.horizon() != horizon || d.memory() != memory {
                return Err(Error::InvalidModel("decoder shape does not match model".into()));
            }
            if d.tables.iter().flat_map(|t| t.values()).any(|&s| s >= num_states) {
                return Err(Error::InvalidModel("decoder maps to an unknown state".into()));
            }
        }
        Ok(Self {
            horizon,
            memory,
            num_states,
            num_observations,
            num_actions,
            init,
            transitions,
            emissions,
            rewards,
            decoder,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    /// `P_h(. | s, a)` for `h` in `1..H`.
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h - 1][s][a]
    }

    /// `O_h(. | s)` for `h` in `1..=H`.
    pub fn emission(&self, h: usize, s: usize) -> &[f64] {
        &self.emissions[h - 1][s]
    }

    pub fn reward(&self, h: usize, o: usize) -> f64 {
        self.rewards[h - 1][o]
    }

    pub fn rewards(&self, h: usize) -> &[f64] {
        &self.rewards[h - 1]
    }

    pub fn decoder(&self) -> Option<&Decoder> {
        self.decoder.as_ref()
    }

    /// Copy of the model with the decoder replaced.
    pub fn with_decoder(&self, decoder: Option<Decoder>) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.decoder = decoder;
        Self::new(parts)
    }

    /// Same dynamics, different memory length (the decoder is dropped because it
    /// is keyed on suffixes of the old length).
    pub fn with_memory(&self, memory: usize) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.memory = memory;
        parts.decoder = None;
        Self::new(parts)
    }

    pub fn to_parts(&self) -> PomdpParts {
        PomdpParts {
            horizon: self.horizon,
            memory: self.memory,
            num_states: self.num_states,
            num_observations: self.num_observations,
            num_actions: self.num_actions,
            init: self.init.clone(),
            transitions: self.transitions.clone(),
            emissions: self.emissions.clone(),
            rewards: self.rewards.clone(),
            decoder: self.decoder.clone(),
        }
    }
}
