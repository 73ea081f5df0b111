//! Episode simulation.
//!
//! [`Trajectory`] keeps the latent states but only hands them out through
//! [`Trajectory::latent_states`]; learners never see a `Trajectory` at all.
//! They drive the model through an [`EpisodeSampler`], which returns the
//! observable projection only.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::TabularPomdp;
use crate::policy::{History, Policy};

/// What the agent sees of an episode: `o_h`, `a_h` and `r_h(o_h)` for `h = 1..=H`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableTrajectory {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl ObservableTrajectory {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn history(&self, step: usize) -> History<'_> {
        History::new(&self.observations[..step], &self.actions[..step - 1])
    }
}

/// A full episode, including the hidden latent states.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    latent: Vec<usize>,
    observable: ObservableTrajectory,
}

impl Trajectory {
    /// Latent states `s_{1:H}`. Meant for the oracle and tests only.
    pub fn latent_states(&self) -> &[usize] {
        &self.latent
    }

    pub fn observable(&self) -> &ObservableTrajectory {
        &self.observable
    }

    pub fn into_observable(self) -> ObservableTrajectory {
        self.observable
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs).expect("validated distribution").sample(rng)
}

/// Samples one episode with the caller's generator.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    pomdp: &TabularPomdp,
    policy: &dyn Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    let horizon = pomdp.horizon();
    let mut latent = Vec::with_capacity(horizon);
    let mut obs = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut state = sample_index(pomdp.init(), rng);
    for h in 1..=horizon {
        if h > 1 {
            state = sample_index(pomdp.transition(h - 1, state, actions[h - 2]), rng);
        }
        let o = sample_index(pomdp.emission(h, state), rng);
        latent.push(state);
        obs.push(o);
        rewards.push(pomdp.reward(h, o));
        let dist = policy.action_distribution(History::new(&obs, &actions))?;
        if dist.len() != pomdp.num_actions() {
            return Err(Error::InvalidArgument(format!(
                "policy returned {} action probabilities, model has {} actions",
                dist.len(),
                pomdp.num_actions()
            )));
        }
        actions.push(sample_index(&dist, rng));
    }
    Ok(Trajectory { latent, observable: ObservableTrajectory { observations: obs, actions, rewards } })
}

/// Samples one episode; a pure function of `(pomdp, policy, seed)`.
pub fn simulate_episode(pomdp: &TabularPomdp, policy: &dyn Policy, seed: u64) -> Result<Trajectory> {
    simulate_with_rng(pomdp, policy, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Black-box access to a model for learners: episodes in, observable
/// trajectories out.
pub struct EpisodeSampler<'a> {
    pomdp: &'a TabularPomdp,
    rng: ChaCha8Rng,
    episodes: usize,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(pomdp: &'a TabularPomdp, seed: u64) -> Self {
        Self { pomdp, rng: ChaCha8Rng::seed_from_u64(seed), episodes: 0 }
    }

    pub fn horizon(&self) -> usize {
        self.pomdp.horizon()
    }

    pub fn memory(&self) -> usize {
        self.pomdp.memory()
    }

    pub fn num_actions(&self) -> usize {
        self.pomdp.num_actions()
    }

    /// Episodes run so far.
    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn run(&mut self, policy: &dyn Policy) -> Result<ObservableTrajectory> {
        self.episodes += 1;
        simulate_with_rng(self.pomdp, policy, &mut self.rng).map(Trajectory::into_observable)
    }
}
