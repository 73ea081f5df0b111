//! Episodic UCB-VI with Hoeffding bonuses on a megastate MDP.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LayeredPolicy, MegastateMdp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcbviConfig {
    pub episodes: usize,
    pub delta: f64,
    /// `c_b` in `c_b H sqrt(ln(S A H K / delta) / max(1, n))`.
    pub bonus_scale: f64,
    /// Plan with the true transitions instead of empirical ones.
    #[serde(default)]
    pub known_model: bool,
}

impl Default for UcbviConfig {
    fn default() -> Self {
        Self { episodes: 1000, delta: 0.1, bonus_scale: 1.0, known_model: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Realized total reward.
    pub total_reward: f64,
    /// `V* - V^{pi_k}` of the policy played in this episode.
    pub gap: f64,
    pub cumulative_regret: f64,
}

#[derive(Clone, Debug)]
pub struct UcbviOutput {
    /// Greedy policy of the optimistic values after the last episode.
    pub policy: LayeredPolicy,
    pub final_gap: f64,
    pub curve: Vec<EpisodeRecord>,
}

impl UcbviOutput {
    /// Episodes until the played policy's gap stays at or below `threshold`.
    pub fn episodes_to_gap(&self, threshold: f64) -> Option<usize> {
        let gaps: Vec<f64> = self.curve.iter().map(|r| r.gap).collect();
        crate::metrics::settle_point(&gaps, threshold)
    }
}

struct Counts {
    visits: Vec<Vec<Vec<usize>>>,
    next: Vec<Vec<Vec<BTreeMap<usize, usize>>>>,
}

fn plan(mdp: &MegastateMdp, counts: &Counts, config: &UcbviConfig, log_term: f64) -> LayeredPolicy {
    let horizon = mdp.horizon();
    let a_count = mdp.num_actions();
    let mut q: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    q[horizon - 1] = vec![vec![0.0; a_count]; mdp.layer(horizon).len()];
    for h in (1..horizon).rev() {
        let next_values: Vec<f64> = q[h]
            .iter()
            .enumerate()
            .map(|(j, row)| mdp.reward(h + 1, j) + row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        q[h - 1] = (0..mdp.layer(h).len())
            .map(|i| {
                (0..a_count)
                    .map(|a| {
                        if config.known_model {
                            let v: f64 = mdp.transition(h, i, a).iter().map(|&(j, p)| p * next_values[j]).sum();
                            return v.min(1.0);
                        }
                        let n = counts.visits[h - 1][i][a];
                        if n == 0 {
                            return 1.0;
                        }
                        let mean: f64 = counts.next[h - 1][i][a]
                            .iter()
                            .map(|(&j, &c)| c as f64 * next_values[j])
                            .sum::<f64>()
                            / n as f64;
                        let bonus = config.bonus_scale * horizon as f64 * (log_term / n as f64).sqrt();
                        (mean + bonus).min(1.0)
                    })
                    .collect()
            })
            .collect();
    }
    MegastateMdp::greedy(&q)
}

/// Runs `config.episodes` episodes; `seed` drives the sampled transitions.
pub fn ucbvi_learn(mdp: &MegastateMdp, config: &UcbviConfig, seed: u64) -> Result<UcbviOutput> {
    if config.episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be positive".into()));
    }
    let delta_ok = config.delta > 0.0 && config.delta < 1.0;
    if !delta_ok || config.bonus_scale.is_nan() || config.bonus_scale < 0.0 {
        return Err(Error::InvalidArgument("delta must be in (0, 1) and the bonus scale nonnegative".into()));
    }
    let horizon = mdp.horizon();
    let a_count = mdp.num_actions();
    let log_term = ((mdp.max_layer_size() * a_count * horizon * config.episodes) as f64 / config.delta).ln();
    let mut counts = Counts {
        visits: (1..=horizon).map(|h| vec![vec![0; a_count]; mdp.layer(h).len()]).collect(),
        next: (1..=horizon).map(|h| vec![vec![BTreeMap::new(); a_count]; mdp.layer(h).len()]).collect(),
    };
    let optimal = mdp.optimal_value();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(config.episodes);
    let mut regret = 0.0;
    for episode in 1..=config.episodes {
        let policy = plan(mdp, &counts, config, log_term);
        let gap = optimal - mdp.policy_value(&policy);
        regret += gap;
        let (states, actions) = mdp.sample(&policy, &mut rng);
        let total_reward = states.iter().enumerate().map(|(h, &i)| mdp.reward(h + 1, i)).sum();
        for h in 1..horizon {
            let (i, a) = (states[h - 1], actions[h - 1]);
            counts.visits[h - 1][i][a] += 1;
            *counts.next[h - 1][i][a].entry(states[h]).or_insert(0) += 1;
        }
        curve.push(EpisodeRecord { episode, total_reward, gap, cumulative_regret: regret });
    }
    let policy = plan(mdp, &counts, config, log_term);
    let final_gap = optimal - mdp.policy_value(&policy);
    Ok(UcbviOutput { policy, final_gap, curve })
}
