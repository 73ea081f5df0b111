//! Policies over observable histories, and the window view used by the oracle.
//!
//! [`Policy`] is what learners and the simulator see: the full observable
//! history `(o_{1:h}, a_{1:h-1})`. [`BlockPolicy`] is the oracle-side view of
//! the same decision, evaluated on a window of the joint process that also
//! carries latent states. Suffix policies implement both; moment-matching
//! policies only make sense on windows.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::error::{Error, HistoryDisplay, Result};
use crate::model::PROBABILITY_TOLERANCE;
use crate::suffix::Suffix;

/// Observable history at step `h = obs.len()`: `o_{1:h}` and `a_{1:h-1}`.
#[derive(Clone, Copy, Debug)]
pub struct History<'a> {
    obs: &'a [usize],
    actions: &'a [usize],
}

impl<'a> History<'a> {
    pub fn new(obs: &'a [usize], actions: &'a [usize]) -> Self {
        assert!(!obs.is_empty() && actions.len() + 1 == obs.len(), "malformed history");
        Self { obs, actions }
    }

    pub fn step(&self) -> usize {
        self.obs.len()
    }

    pub fn observations(&self) -> &'a [usize] {
        self.obs
    }

    pub fn actions(&self) -> &'a [usize] {
        self.actions
    }

    pub fn suffix(&self, memory: usize) -> Suffix {
        Suffix::extract(self.obs, self.actions, self.step(), memory)
    }

    pub(crate) fn undefined(&self) -> Error {
        Error::PolicyUndefined {
            step: self.step(),
            history: HistoryDisplay { obs: self.obs, actions: self.actions }.to_string(),
        }
    }
}

/// A (possibly randomized, possibly history-dependent) policy.
pub trait Policy: Send + Sync {
    /// Distribution over actions at the current step of `history`.
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        (**self).action_distribution(history)
    }
}

/// Window of the joint process ending at step `start + len - 1`:
/// latent states, observations and the actions in between.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub start: usize,
    pub states: Vec<usize>,
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Block {
    pub fn initial(step: usize, state: usize, obs: usize) -> Self {
        Self { start: step, states: vec![state], obs: vec![obs], actions: Vec::new() }
    }

    pub fn step(&self) -> usize {
        self.start + self.obs.len() - 1
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("nonempty block")
    }

    /// Appends `(action, state, obs)`, keeping at most `window` steps.
    pub fn push(&self, action: usize, state: usize, obs: usize, window: usize) -> Self {
        let mut next = self.clone();
        next.actions.push(action);
        next.states.push(state);
        next.obs.push(obs);
        if next.obs.len() > window {
            let drop = next.obs.len() - window;
            next.states.drain(..drop);
            next.obs.drain(..drop);
            next.actions.drain(..drop);
            next.start += drop;
        }
        next
    }

    /// Sub-window starting at step `from` (must lie inside the block).
    pub fn restrict(&self, from: usize) -> Self {
        assert!(from >= self.start && from <= self.step(), "restriction outside block");
        let skip = from - self.start;
        Self {
            start: from,
            states: self.states[skip..].to_vec(),
            obs: self.obs[skip..].to_vec(),
            actions: self.actions[skip..].to_vec(),
        }
    }

    /// Observable suffix of the given memory; the block must cover it.
    pub fn suffix(&self, memory: usize) -> Suffix {
        let step = self.step();
        let from = crate::suffix::window_start(step, memory);
        assert!(from >= self.start, "block too short for memory {memory}");
        let skip = from - self.start;
        Suffix::new(step, self.obs[skip..].to_vec(), self.actions[skip..].to_vec())
    }
}

/// A policy evaluated on windows of the joint process.
pub trait BlockPolicy: Send + Sync {
    /// Number of trailing steps the policy needs to see.
    fn window(&self) -> usize;

    fn block_distribution(&self, block: &Block) -> Result<Cow<'_, [f64]>>;
}

impl<P: BlockPolicy + ?Sized> BlockPolicy for &P {
    fn window(&self) -> usize {
        (**self).window()
    }

    fn block_distribution(&self, block: &Block) -> Result<Cow<'_, [f64]>> {
        (**self).block_distribution(block)
    }
}

fn validate_distribution(p: &[f64], num_actions: usize) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.len() != num_actions
        || p.iter().any(|x| !x.is_finite() || *x < 0.0)
        || (total - 1.0).abs() > PROBABILITY_TOLERANCE
    {
        return Err(Error::InvalidArgument(format!("invalid action distribution {p:?}")));
    }
    Ok(())
}

pub(crate) fn point_mass(num_actions: usize, action: usize) -> Vec<f64> {
    let mut p = vec![0.0; num_actions];
    p[action] = 1.0;
    p
}

/// An m-step policy: one action distribution per suffix and step.
#[derive(Clone, Debug)]
pub struct SuffixPolicy {
    horizon: usize,
    memory: usize,
    num_actions: usize,
    tables: Vec<HashMap<Suffix, Vec<f64>>>,
    fallback: Option<Vec<f64>>,
    deterministic: bool,
}

impl SuffixPolicy {
    /// Table-backed policy. `fallback`, when present, answers suffixes missing from the tables.
    pub fn from_tables(
        horizon: usize,
        memory: usize,
        num_actions: usize,
        tables: Vec<HashMap<Suffix, Vec<f64>>>,
        fallback: Option<Vec<f64>>,
    ) -> Result<Self> {
        if tables.len() != horizon {
            return Err(Error::InvalidArgument(format!("expected {horizon} policy tables")));
        }
        for p in tables.iter().flat_map(|t| t.values()).chain(fallback.iter()) {
            validate_distribution(p, num_actions)?;
        }
        let is_point = |p: &Vec<f64>| p.iter().filter(|x| **x > 0.0).count() == 1;
        let deterministic =
            tables.iter().flat_map(|t| t.values()).all(is_point) && fallback.iter().all(is_point);
        Ok(Self { horizon, memory, num_actions, tables, fallback, deterministic })
    }

    pub fn uniform(horizon: usize, memory: usize, num_actions: usize) -> Self {
        let p = vec![1.0 / num_actions as f64; num_actions];
        Self::from_tables(horizon, memory, num_actions, vec![HashMap::new(); horizon], Some(p))
            .expect("uniform distribution is valid")
    }

    /// Plays `action` at every step.
    pub fn constant(horizon: usize, memory: usize, num_actions: usize, action: usize) -> Self {
        Self::from_tables(
            horizon,
            memory,
            num_actions,
            vec![HashMap::new(); horizon],
            Some(point_mass(num_actions, action)),
        )
        .expect("point mass is valid")
    }

    pub fn deterministic(
        horizon: usize,
        memory: usize,
        num_actions: usize,
        choices: Vec<HashMap<Suffix, usize>>,
    ) -> Result<Self> {
        if choices.iter().flat_map(|t| t.values()).any(|&a| a >= num_actions) {
            return Err(Error::InvalidArgument("action out of range".into()));
        }
        let tables = choices
            .into_iter()
            .map(|t| t.into_iter().map(|(z, a)| (z, point_mass(num_actions, a))).collect())
            .collect();
        Self::from_tables(horizon, memory, num_actions, tables, None)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// `pi_h(. | z)`, or `None` when the policy is undefined there.
    pub fn distribution(&self, suffix: &Suffix) -> Option<&[f64]> {
        self.tables
            .get(suffix.step().checked_sub(1)?)?
            .get(suffix)
            .or(self.fallback.as_ref())
            .map(Vec::as_slice)
    }

    /// The chosen action of a deterministic policy at `suffix`.
    pub fn action(&self, suffix: &Suffix) -> Option<usize> {
        let p = self.distribution(suffix)?;
        p.iter().position(|x| *x > 0.0)
    }
}

impl Policy for SuffixPolicy {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        self.distribution(&history.suffix(self.memory))
            .map(<[f64]>::to_vec)
            .ok_or_else(|| history.undefined())
    }
}

impl BlockPolicy for SuffixPolicy {
    fn window(&self) -> usize {
        self.memory
    }

    fn block_distribution(&self, block: &Block) -> Result<Cow<'_, [f64]>> {
        let z = block.suffix(self.memory);
        self.distribution(&z)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::PolicyUndefined { step: z.step(), history: z.to_string() })
    }
}

/// Full-history policy backed by a function.
pub struct HistoryPolicy {
    rule: Box<HistoryRule>,
}

type HistoryRule = dyn Fn(History<'_>) -> Option<Vec<f64>> + Send + Sync;

impl HistoryPolicy {
    pub fn from_fn(rule: impl Fn(History<'_>) -> Option<Vec<f64>> + Send + Sync + 'static) -> Self {
        Self { rule: Box::new(rule) }
    }
}

impl Policy for HistoryPolicy {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        (self.rule)(history).ok_or_else(|| history.undefined())
    }
}

/// `prefix ∘_t suffix`: acts as `prefix` for steps `< t` and as `suffix` from step `t` on.
#[derive(Clone, Debug)]
pub struct ComposedPolicy<P, Q> {
    prefix: P,
    suffix: Q,
    switch: usize,
}

pub fn compose<P, Q>(prefix: P, suffix: Q, switch: usize) -> ComposedPolicy<P, Q> {
    ComposedPolicy { prefix, suffix, switch }
}

impl<P, Q> ComposedPolicy<P, Q> {
    pub fn switch_step(&self) -> usize {
        self.switch
    }
}

impl<P: Policy, Q: Policy> Policy for ComposedPolicy<P, Q> {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        if history.step() < self.switch {
            self.prefix.action_distribution(history)
        } else {
            self.suffix.action_distribution(history)
        }
    }
}

impl<P: BlockPolicy, Q: BlockPolicy> BlockPolicy for ComposedPolicy<P, Q> {
    fn window(&self) -> usize {
        self.prefix.window().max(self.suffix.window())
    }

    fn block_distribution(&self, block: &Block) -> Result<Cow<'_, [f64]>> {
        if block.step() < self.switch {
            self.prefix.block_distribution(block)
        } else {
            self.suffix.block_distribution(block)
        }
    }
}

/// Uniform mixture over deterministic m-step policies; one component is drawn
/// per episode.
#[derive(Clone, Debug)]
pub struct MixturePolicy {
    components: Vec<SuffixPolicy>,
}

impl MixturePolicy {
    pub fn new(components: Vec<SuffixPolicy>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[SuffixPolicy] {
        &self.components
    }
}
