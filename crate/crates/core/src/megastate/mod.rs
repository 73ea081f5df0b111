//! The fully observable MDP over reachable suffixes, and a UCB-VI learner on it.

mod ucbvi;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::decode::verify_decodability_with_cap;
use crate::error::{Error, Result};
use crate::limits;
use crate::model::TabularPomdp;
use crate::oracle::argmax;
use crate::policy::SuffixPolicy;
use crate::simulate::sample_index;
use crate::suffix::Suffix;

pub use ucbvi::{ucbvi_learn, EpisodeRecord, UcbviConfig, UcbviOutput};

/// A deterministic megastate policy: `actions[h-1][i]` for state `i` of layer `h`.
pub type LayeredPolicy = Vec<Vec<usize>>;

/// Sparse next-state law `(index in the next layer, probability)`.
type SparseRow = Vec<(usize, f64)>;

/// Layered MDP whose states at step `h` are the reachable `z_h`.
#[derive(Clone, Debug)]
pub struct MegastateMdp {
    memory: usize,
    num_actions: usize,
    layers: Vec<Vec<Suffix>>,
    index: Vec<HashMap<Suffix, usize>>,
    initial: Vec<f64>,
    /// `[h-1][i][a]` -> sparse `(j, p)` over layer `h+1`.
    transitions: Vec<Vec<Vec<SparseRow>>>,
    /// `[h-1][i]` = `r_h` of the suffix's last observation.
    rewards: Vec<Vec<f64>>,
}

/// Exact reduction. Fails if the model is not decodable at `memory`.
pub fn build_megastate_mdp(pomdp: &TabularPomdp, memory: usize) -> Result<MegastateMdp> {
    let cap = limits::oracle_cap();
    let report = verify_decodability_with_cap(pomdp, memory, cap)?;
    let Some(decoder) = report.decoder else {
        let (witness, states) = report.witness.expect("witness");
        return Err(Error::NotDecodable { memory, witness, states });
    };
    let horizon = pomdp.horizon();
    let layers: Vec<Vec<Suffix>> = (1..=horizon).map(|h| decoder.table(h).keys().cloned().collect()).collect();
    let index: Vec<HashMap<Suffix, usize>> =
        layers.iter().map(|l| l.iter().enumerate().map(|(i, z)| (z.clone(), i)).collect()).collect();
    let mut initial = vec![0.0; layers[0].len()];
    for (s, &p) in pomdp.init().iter().enumerate() {
        for (o, &q) in pomdp.emission(1, s).iter().enumerate() {
            if p * q > 0.0 {
                initial[index[0][&Suffix::new(1, vec![o], vec![])]] += p * q;
            }
        }
    }
    let mut transitions = Vec::with_capacity(horizon.saturating_sub(1));
    for h in 1..horizon {
        let mut layer = Vec::with_capacity(layers[h - 1].len());
        for z in &layers[h - 1] {
            let s = decoder.decode(z).expect("reachable");
            let mut rows = Vec::with_capacity(pomdp.num_actions());
            for a in 0..pomdp.num_actions() {
                let mut next = BTreeMap::<usize, f64>::new();
                for (s2, &p) in pomdp.transition(h, s, a).iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    for (o, &q) in pomdp.emission(h + 1, s2).iter().enumerate() {
                        if q > 0.0 {
                            *next.entry(index[h][&z.shift(a, o, memory)]).or_insert(0.0) += p * q;
                        }
                    }
                }
                rows.push(next.into_iter().collect());
            }
            layer.push(rows);
        }
        transitions.push(layer);
    }
    let rewards = layers
        .iter()
        .enumerate()
        .map(|(i, l)| l.iter().map(|z| pomdp.reward(i + 1, z.last_observation())).collect())
        .collect();
    Ok(MegastateMdp { memory, num_actions: pomdp.num_actions(), layers, index, initial, transitions, rewards })
}

impl MegastateMdp {
    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Megastates of layer `h`.
    pub fn layer(&self, h: usize) -> &[Suffix] {
        &self.layers[h - 1]
    }

    pub fn state_index(&self, z: &Suffix) -> Option<usize> {
        self.index.get(z.step() - 1)?.get(z).copied()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Sparse `P^m(. | i, a)` over layer `h+1`, `h < H`.
    pub fn transition(&self, h: usize, i: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[h - 1][i][a]
    }

    pub fn reward(&self, h: usize, i: usize) -> f64 {
        self.rewards[h - 1][i]
    }

    pub fn max_layer_size(&self) -> usize {
        self.layers.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `Q*` by backward induction, `[h-1][i][a]`, excluding `r_h`.
    pub fn optimal_q(&self) -> Vec<Vec<Vec<f64>>> {
        self.backward(|_, _, v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn backward(&self, mut pick: impl FnMut(usize, usize, &[f64]) -> f64) -> Vec<Vec<Vec<f64>>> {
        let horizon = self.horizon();
        let mut q = vec![Vec::new(); horizon];
        q[horizon - 1] = vec![vec![0.0; self.num_actions]; self.layers[horizon - 1].len()];
        for h in (1..horizon).rev() {
            let next_values: Vec<f64> =
                q[h].iter().enumerate().map(|(j, row): (usize, &Vec<f64>)| self.reward(h + 1, j) + pick(h + 1, j, row)).collect();
            q[h - 1] = (0..self.layers[h - 1].len())
                .map(|i| {
                    (0..self.num_actions)
                        .map(|a| self.transition(h, i, a).iter().map(|&(j, p)| p * next_values[j]).sum())
                        .collect()
                })
                .collect();
        }
        q
    }

    fn start_value(&self, q1: &[Vec<f64>], pick: impl Fn(usize, &[f64]) -> f64) -> f64 {
        self.initial.iter().enumerate().map(|(i, p)| p * (self.reward(1, i) + pick(i, &q1[i]))).sum()
    }

    pub fn optimal_value(&self) -> f64 {
        let q = self.optimal_q();
        self.start_value(&q[0], |_, v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Greedy policy of a `[h-1][i][a]` table, ties to the lowest action.
    pub fn greedy(q: &[Vec<Vec<f64>>]) -> LayeredPolicy {
        q.iter().map(|l| l.iter().map(|v| argmax(v)).collect()).collect()
    }

    /// Exact value of a deterministic megastate policy.
    pub fn policy_value(&self, policy: &LayeredPolicy) -> f64 {
        let q = self.backward(|h, j, row| row[policy[h - 1][j]]);
        self.start_value(&q[0], |i, v| v[policy[0][i]])
    }

    /// The same decisions as an m-step suffix policy of the original model.
    pub fn pull_back(&self, policy: &LayeredPolicy) -> SuffixPolicy {
        let choices = self
            .layers
            .iter()
            .zip(policy)
            .map(|(l, acts)| l.iter().cloned().zip(acts.iter().copied()).collect::<HashMap<_, _>>())
            .collect();
        SuffixPolicy::deterministic(self.horizon(), self.memory, self.num_actions, choices)
            .expect("actions in range")
    }

    /// Samples a trajectory of megastate indices under `policy`; returns the
    /// states visited and actions taken.
    pub(crate) fn sample<R: Rng>(&self, policy: &LayeredPolicy, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut states = vec![sample_index(&self.initial, rng)];
        let mut actions = Vec::with_capacity(self.horizon());
        for h in 1..=self.horizon() {
            let i = states[h - 1];
            let a = policy[h - 1][i];
            actions.push(a);
            if h < self.horizon() {
                let row = self.transition(h, i, a);
                let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
                states.push(row[sample_index(&probs, rng)].0);
            }
        }
        (states, actions)
    }
}

/// Largest discrepancy between `P(o_{h+1} | full history, a_h)` and the
/// megastate transition, over every reachable history and action. The full
/// history law is computed by exact filtering, independently of any decoder.
pub fn markov_deviation(pomdp: &TabularPomdp, mdp: &MegastateMdp) -> Result<f64> {
    let (s_count, horizon) = (pomdp.num_states(), pomdp.horizon());
    let size = ((pomdp.num_observations() * pomdp.num_actions()) as f64).powi(horizon as i32);
    limits::check("history enumeration", size, limits::oracle_cap())?;
    // unnormalized filter: P(s_h, o_{1:h} | a_{1:h-1})
    let mut frontier: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = Vec::new();
    for o in 0..pomdp.num_observations() {
        let joint: Vec<f64> = (0..s_count).map(|s| pomdp.init()[s] * pomdp.emission(1, s)[o]).collect();
        if joint.iter().sum::<f64>() > 0.0 {
            frontier.push((vec![o], vec![], joint));
        }
    }
    let mut worst = 0.0f64;
    for h in 1..horizon {
        let mut next = Vec::new();
        for (obs, acts, joint) in &frontier {
            let total: f64 = joint.iter().sum();
            let z = Suffix::extract(obs, acts, h, mdp.memory());
            let i = mdp.state_index(&z).ok_or_else(|| Error::UndefinedEntry { step: h, suffix: z.clone() })?;
            for a in 0..pomdp.num_actions() {
                let mut predicted = vec![0.0; pomdp.num_observations()];
                let mut forward = vec![vec![0.0; s_count]; pomdp.num_observations()];
                for (s, &w) in joint.iter().enumerate() {
                    if w <= 0.0 {
                        continue;
                    }
                    for (s2, &p) in pomdp.transition(h, s, a).iter().enumerate() {
                        for (o, &q) in pomdp.emission(h + 1, s2).iter().enumerate() {
                            predicted[o] += w * p * q / total;
                            forward[o][s2] += w * p * q;
                        }
                    }
                }
                let mut megastate = vec![0.0; pomdp.num_observations()];
                for &(j, p) in mdp.transition(h, i, a) {
                    megastate[mdp.layer(h + 1)[j].last_observation()] += p;
                }
                for (x, y) in predicted.iter().zip(&megastate) {
                    worst = worst.max((x - y).abs());
                }
                for (o, f) in forward.into_iter().enumerate() {
                    if f.iter().sum::<f64>() > 0.0 {
                        let mut obs2 = obs.clone();
                        obs2.push(o);
                        let mut acts2 = acts.clone();
                        acts2.push(a);
                        next.push((obs2, acts2, f));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(worst)
}
