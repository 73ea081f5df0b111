//! Importance-sampling policy search over belief-operator policies.
//!
//! All trajectories come from the uniform policy and are reused to score
//! every candidate with the weight `prod_h pi(a_h | history) * A`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits;
use crate::model::TabularPomdp;
use crate::oracle::{enumerate_paths, QFunction};
use crate::policy::{point_mass, History, Policy, SuffixPolicy};
use crate::simulate::{EpisodeSampler, ObservableTrajectory};

/// State-update recursion `s_1 = b_1(o_1)`, `s_h = b_h(s_{h-1}, a_{h-1}, o_h)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeliefChain {
    first: Vec<usize>,
    /// `[h-2][s][a][o]` for `h = 2..=H`.
    updates: Vec<Vec<Vec<Vec<usize>>>>,
}

impl BeliefChain {
    pub fn new(first: Vec<usize>, updates: Vec<Vec<Vec<Vec<usize>>>>) -> Self {
        Self { first, updates }
    }

    pub fn horizon(&self) -> usize {
        self.updates.len() + 1
    }

    /// `b_h(s, a, o)` for `h >= 2`.
    pub fn update(&self, h: usize, state: usize, action: usize, obs: usize) -> usize {
        self.updates[h - 2][state][action][obs]
    }

    pub fn initial(&self, obs: usize) -> usize {
        self.first[obs]
    }

    /// Predicted states `s_{1:h}` along an observable history.
    pub fn predict(&self, obs: &[usize], actions: &[usize]) -> Vec<usize> {
        let mut states = Vec::with_capacity(obs.len());
        states.push(self.first[obs[0]]);
        for h in 2..=obs.len() {
            let prev = states[h - 2];
            states.push(self.update(h, prev, actions[h - 2], obs[h - 1]));
        }
        states
    }
}

/// Latent states reachable at each step under some action sequence.
fn reachable_states(pomdp: &TabularPomdp) -> Vec<Vec<bool>> {
    let s_count = pomdp.num_states();
    let mut out = vec![pomdp.init().iter().map(|p| *p > 0.0).collect::<Vec<_>>()];
    for h in 1..pomdp.horizon() {
        let mut next = vec![false; s_count];
        for s in (0..s_count).filter(|&s| out[h - 1][s]) {
            for a in 0..pomdp.num_actions() {
                for (s2, &p) in pomdp.transition(h, s, a).iter().enumerate() {
                    next[s2] |= p > 0.0;
                }
            }
        }
        out.push(next);
    }
    out
}

/// `b*` read off the model: the unique latent state consistent with
/// `(s_{h-1}, a_{h-1}, o_h)`; unreachable triples map to state 0.
pub fn construct_bstar(pomdp: &TabularPomdp) -> Result<BeliefChain> {
    let (s_count, o_count, a_count) = (pomdp.num_states(), pomdp.num_observations(), pomdp.num_actions());
    let unique = |cands: Vec<usize>, what: String| -> Result<usize> {
        match cands.as_slice() {
            [] => Ok(0),
            [s] => Ok(*s),
            many => Err(Error::InvalidModel(format!("{what} is consistent with states {many:?}"))),
        }
    };
    let first = (0..o_count)
        .map(|o| {
            let cands = (0..s_count).filter(|&s| pomdp.init()[s] * pomdp.emission(1, s)[o] > 0.0).collect();
            unique(cands, format!("first observation o{o}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let reach = reachable_states(pomdp);
    let mut updates = Vec::with_capacity(pomdp.horizon().saturating_sub(1));
    for h in 2..=pomdp.horizon() {
        let mut layer = vec![vec![vec![0; o_count]; a_count]; s_count];
        for (s, row) in layer.iter_mut().enumerate().filter(|(s, _)| reach[h - 2][*s]) {
            for (a, cells) in row.iter_mut().enumerate() {
                for (o, cell) in cells.iter_mut().enumerate() {
                    let cands = (0..s_count)
                        .filter(|&s2| pomdp.transition(h - 1, s, a)[s2] * pomdp.emission(h, s2)[o] > 0.0)
                        .collect();
                    *cell = unique(cands, format!("(s{s}, a{a}, o{o}) at step {h}"))?;
                }
            }
        }
        updates.push(layer);
    }
    Ok(BeliefChain { first, updates })
}

/// Deterministic policy acting on the chain's predicted state.
#[derive(Clone, Debug)]
pub struct BeliefPolicy {
    chain: Arc<BeliefChain>,
    /// `[h-1][s]`.
    actions: Vec<Vec<usize>>,
    num_actions: usize,
}

impl BeliefPolicy {
    pub fn new(chain: Arc<BeliefChain>, actions: Vec<Vec<usize>>, num_actions: usize) -> Result<Self> {
        if actions.len() != chain.horizon() || actions.iter().flatten().any(|&a| a >= num_actions) {
            return Err(Error::InvalidArgument("belief policy action table has the wrong shape".into()));
        }
        Ok(Self { chain, actions, num_actions })
    }

    pub fn chain(&self) -> &BeliefChain {
        &self.chain
    }

    pub fn actions(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn action(&self, history: History<'_>) -> usize {
        let states = self.chain.predict(history.observations(), history.actions());
        self.actions[history.step() - 1][*states.last().expect("nonempty")]
    }
}

impl Policy for BeliefPolicy {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        Ok(point_mass(self.num_actions, self.action(history)))
    }
}

/// Which policies to search over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassMode {
    /// Every chain and every state-to-action map.
    Full,
    /// `b*` with every state-to-action map: `A^{SH}` policies.
    FixedChain,
}

/// Exact class size for a mode.
pub fn policy_class_size(pomdp: &TabularPomdp, mode: &ClassMode) -> f64 {
    let (s, o, a, h) = (
        pomdp.num_states() as f64,
        pomdp.num_observations() as f64,
        pomdp.num_actions() as f64,
        pomdp.horizon() as f64,
    );
    let maps = a.powf(s * h);
    match mode {
        ClassMode::FixedChain => maps,
        ClassMode::Full => s.powf(o) * s.powf((h - 1.0) * s * a * o) * maps,
    }
}

/// Mixed-radix digits of `index` (least significant first).
fn digits(mut index: usize, radix: usize, len: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let d = index % radix;
            index /= radix;
            d
        })
        .collect()
}

fn action_maps(s: usize, h: usize, a: usize, index: usize) -> Vec<Vec<usize>> {
    digits(index, a, s * h).chunks(s).map(<[usize]>::to_vec).collect()
}

/// Policies of the class in a fixed order; refuses when the count exceeds `cap`.
pub fn enumerate_policy_class(pomdp: &TabularPomdp, mode: &ClassMode, cap: usize) -> Result<Vec<BeliefPolicy>> {
    let count = policy_class_size(pomdp, mode);
    limits::check("policy class", count, cap)?;
    let (s, o, a, h) = (pomdp.num_states(), pomdp.num_observations(), pomdp.num_actions(), pomdp.horizon());
    let maps = a.pow((s * h) as u32);
    let chains: Vec<Arc<BeliefChain>> = match mode {
        ClassMode::FixedChain => vec![Arc::new(construct_bstar(pomdp)?)],
        ClassMode::Full => {
            let len = o + (h - 1) * s * a * o;
            (0..s.pow(len as u32))
                .map(|i| {
                    let d = digits(i, s, len);
                    let first = d[..o].to_vec();
                    let updates = d[o..]
                        .chunks(s * a * o)
                        .map(|layer| layer.chunks(a * o).map(|sa| sa.chunks(o).map(<[usize]>::to_vec).collect()).collect())
                        .collect();
                    Arc::new(BeliefChain::new(first, updates))
                })
                .collect()
        }
    };
    let mut out = Vec::with_capacity(chains.len() * maps);
    for chain in chains {
        for i in 0..maps {
            out.push(BeliefPolicy::new(chain.clone(), action_maps(s, h, a, i), a)?);
        }
    }
    Ok(out)
}

/// The fixed-chain policy that plays `Q*`'s greedy action in each decoded state.
pub fn greedy_belief_policy(pomdp: &TabularPomdp, qstar: &QFunction, decoder: &crate::model::Decoder) -> Result<BeliefPolicy> {
    let chain = Arc::new(construct_bstar(pomdp)?);
    let mut actions = vec![vec![0; pomdp.num_states()]; pomdp.horizon()];
    for (h, row) in actions.iter_mut().enumerate() {
        for (z, &s) in decoder.table(h + 1) {
            row[s] = qstar.greedy_action(z)?;
        }
    }
    BeliefPolicy::new(chain, actions, pomdp.num_actions())
}

/// `prod_h pi(a_h | history) * A`. Policy probabilities are multiplied in
/// log space; the `A^H` factor is applied with an integer power so that
/// deterministic weights come out exactly `A^H` or 0.
pub fn importance_weight(policy: &dyn Policy, t: &ObservableTrajectory, num_actions: usize) -> Result<f64> {
    let mut log_p = 0.0;
    for h in 1..=t.observations.len() {
        let p = policy.action_distribution(t.history(h))?[t.actions[h - 1]];
        if p <= 0.0 {
            return Ok(0.0);
        }
        log_p += p.ln();
    }
    Ok(log_p.exp() * (num_actions as f64).powi(t.observations.len() as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsRlOutput {
    /// Index of the selected policy (first maximizer).
    pub best: usize,
    pub estimates: Vec<f64>,
    pub episodes: usize,
}

/// `N` uniform trajectories, scored against every policy in `class`.
pub fn is_rl<P: Policy>(sampler: &mut EpisodeSampler<'_>, class: &[P], samples: usize) -> Result<IsRlOutput> {
    if class.is_empty() || samples == 0 {
        return Err(Error::InvalidArgument("IS-RL needs a nonempty class and N >= 1".into()));
    }
    let a = sampler.num_actions();
    let uniform = SuffixPolicy::uniform(sampler.horizon(), 1, a);
    let data = (0..samples).map(|_| sampler.run(&uniform)).collect::<Result<Vec<_>>>()?;
    let estimates = class
        .par_iter()
        .map(|pi| {
            let mut total = 0.0;
            for t in &data {
                total += importance_weight(pi, t, a)? * t.total_reward();
            }
            Ok(total / samples as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IsRlOutput { best: crate::oracle::argmax(&estimates), estimates, episodes: samples })
}

/// Required sample size `H A^H ln(|Pi| / delta) / eps^2`, rounded up.
pub fn required_samples(horizon: usize, num_actions: usize, class_size: f64, delta: f64, epsilon: f64) -> usize {
    let n = horizon as f64 * (num_actions as f64).powi(horizon as i32) * (class_size / delta).ln() / (epsilon * epsilon);
    n.ceil() as usize
}

/// `E[V-hat^pi]` for one uniform trajectory, by enumerating every trajectory
/// (including the final action) with its probability and weight.
pub fn exact_estimator_mean(pomdp: &TabularPomdp, policy: &dyn Policy, cap: usize) -> Result<f64> {
    let a = pomdp.num_actions();
    let uniform = SuffixPolicy::uniform(pomdp.horizon(), 1, a);
    let paths = enumerate_paths(pomdp, &uniform, pomdp.horizon(), cap)?;
    let mut total = 0.0;
    for p in &paths {
        let rewards: Vec<f64> = p.obs.iter().enumerate().map(|(i, &o)| pomdp.reward(i + 1, o)).collect();
        for last in 0..a {
            let mut actions = p.actions.clone();
            actions.push(last);
            let t = ObservableTrajectory { observations: p.obs.clone(), actions, rewards: rewards.clone() };
            total += p.prob / a as f64 * importance_weight(policy, &t, a)? * t.total_reward();
        }
    }
    Ok(total)
}
