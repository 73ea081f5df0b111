//! Average-Bellman-error elimination over a finite function class.
//!
//! Each round rolls out the greedy policy of the most optimistic survivor. If
//! its on-policy residuals are small at every step it is returned; otherwise
//! the worst step is used to test every survivor under that roll-in and the
//! ones with a large average error are removed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{argmax, Oracle, QFunction};
use crate::policy::{compose, SuffixPolicy};
use crate::simulate::{EpisodeSampler, ObservableTrajectory};
use crate::suffix::Suffix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OliveConfig {
    /// Termination threshold on the on-policy residual.
    pub eps_act: f64,
    /// Elimination threshold on a survivor's average error.
    pub eps_elim: f64,
    /// Episodes per estimate.
    pub n_est: usize,
    /// Use oracle errors and values instead of estimates (episodes still counted).
    pub exact: bool,
    pub max_rounds: usize,
}

impl Default for OliveConfig {
    fn default() -> Self {
        Self { eps_act: 0.125, eps_elim: 0.125, n_est: 1000, exact: false, max_rounds: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OliveRound {
    pub round: usize,
    pub selected: usize,
    /// On-policy average residual per step.
    pub on_policy: Vec<f64>,
    /// Step used for elimination, `None` when the round terminated.
    pub violating_step: Option<usize>,
    pub eliminated: Vec<usize>,
    pub survivors: usize,
    /// Episodes used so far, initial-value episodes included.
    pub episodes_used: usize,
    pub exact_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OliveOutput {
    pub policy: SuffixPolicy,
    pub selected: usize,
    pub rounds: Vec<OliveRound>,
    pub initial_values: Vec<f64>,
    pub episodes_used: usize,
    /// The termination test passed.
    pub terminated: bool,
    /// Every function was eliminated; `policy` is the round with the smallest residual.
    pub exhausted: bool,
}

impl OliveOutput {
    /// Episodes used by the round from which every selected policy is within
    /// `threshold` of optimal.
    pub fn episodes_to_gap(&self, threshold: f64) -> Option<usize> {
        let gaps: Option<Vec<f64>> = self.rounds.iter().map(|r| r.exact_gap).collect();
        let k = crate::metrics::settle_point(&gaps?, threshold)?;
        Some(self.rounds[k - 1].episodes_used)
    }
}

/// `f_h(z_h, a_h) - r_{h+1} - max_a f_{h+1}(z_{h+1}, a)` along one trajectory.
fn residual(f: &QFunction, t: &ObservableTrajectory, h: usize, memory: usize) -> Result<f64> {
    let z = t.history(h).suffix(memory);
    let a = t.actions[h - 1];
    let mut r = f.value(&z, a)?;
    if h < t.observations.len() {
        r -= t.rewards[h] + f.max_value(&z.shift(a, t.observations[h], memory))?;
    }
    Ok(r)
}

fn max_abs_index(values: &[f64]) -> usize {
    argmax(&values.iter().map(|v| v.abs()).collect::<Vec<_>>())
}

/// Runs the learner. The oracle is needed in exact mode and for gap reporting;
/// in estimation mode it never influences decisions.
pub fn run_olive(
    sampler: &mut EpisodeSampler<'_>,
    functions: &[QFunction],
    config: &OliveConfig,
    evaluator: Option<&Oracle<'_>>,
) -> Result<OliveOutput> {
    if functions.is_empty() || config.n_est == 0 || config.max_rounds == 0 {
        return Err(Error::InvalidArgument("OLIVE needs a nonempty class, n_est >= 1 and max_rounds >= 1".into()));
    }
    let (horizon, memory, actions) = (sampler.horizon(), sampler.memory(), sampler.num_actions());
    if functions.iter().any(|f| f.horizon() != horizon || f.memory() != memory || f.num_actions() != actions) {
        return Err(Error::InvalidArgument("function class does not match the environment".into()));
    }
    let exact = match (config.exact, evaluator) {
        (true, None) => return Err(Error::InvalidArgument("exact mode needs an oracle".into())),
        (true, Some(o)) => Some(o),
        (false, _) => None,
    };
    let n = config.n_est;
    let uniform = SuffixPolicy::uniform(horizon, memory, actions);
    let policies: Vec<SuffixPolicy> = functions.iter().map(QFunction::greedy_policy).collect();

    let initial_values = match exact {
        Some(o) => {
            for _ in 0..n {
                sampler.run(&uniform)?;
            }
            functions.iter().map(|f| o.initial_value(f)).collect::<Result<Vec<_>>>()?
        }
        None => {
            let mut sums = vec![0.0; functions.len()];
            for _ in 0..n {
                let t = sampler.run(&uniform)?;
                let z = Suffix::new(1, vec![t.observations[0]], vec![]);
                for (s, f) in sums.iter_mut().zip(functions) {
                    *s += t.rewards[0] + f.max_value(&z)?;
                }
            }
            sums.into_iter().map(|s| s / n as f64).collect()
        }
    };
    let optimal_value = evaluator.map(Oracle::optimal_value).transpose()?;

    let mut survivors: Vec<usize> = (0..functions.len()).collect();
    let mut rounds = Vec::new();
    let mut terminated = false;
    for round in 1..=config.max_rounds {
        if survivors.is_empty() {
            break;
        }
        let scores: Vec<f64> = survivors.iter().map(|&i| initial_values[i]).collect();
        let selected = survivors[argmax(&scores)];
        let f = &functions[selected];
        let pi = &policies[selected];

        let on_policy = match exact {
            Some(o) => {
                for _ in 0..n {
                    sampler.run(pi)?;
                }
                (1..=horizon).map(|h| o.bellman_error(pi, f, h)).collect::<Result<Vec<_>>>()?
            }
            None => {
                let mut sums = vec![0.0; horizon];
                for _ in 0..n {
                    let t = sampler.run(pi)?;
                    for (h, s) in sums.iter_mut().enumerate() {
                        *s += residual(f, &t, h + 1, memory)?;
                    }
                }
                sums.into_iter().map(|s| s / n as f64).collect()
            }
        };
        let exact_gap = match (evaluator, optimal_value) {
            (Some(o), Some(v)) => Some(v - o.policy_value(pi)?),
            _ => None,
        };

        if on_policy.iter().all(|e| e.abs() <= config.eps_act) {
            rounds.push(OliveRound {
                round,
                selected,
                on_policy,
                violating_step: None,
                eliminated: vec![],
                survivors: survivors.len(),
                episodes_used: sampler.episodes(),
                exact_gap,
            });
            terminated = true;
            break;
        }

        let step = max_abs_index(&on_policy) + 1;
        let errors: Vec<f64> = match exact {
            Some(o) => {
                for _ in 0..n {
                    sampler.run(&compose(pi, &uniform, step))?;
                }
                survivors.iter().map(|&j| o.bellman_error(pi, &functions[j], step)).collect::<Result<_>>()?
            }
            None => {
                let explore = compose(pi, &uniform, step);
                let mut sums = vec![0.0; survivors.len()];
                for _ in 0..n {
                    let t = sampler.run(&explore)?;
                    let z = t.history(step).suffix(memory);
                    for (s, &j) in sums.iter_mut().zip(&survivors) {
                        if policies[j].action(&z) == Some(t.actions[step - 1]) {
                            *s += actions as f64 * residual(&functions[j], &t, step, memory)?;
                        }
                    }
                }
                sums.into_iter().map(|s| s / n as f64).collect()
            }
        };
        let mut eliminated = Vec::new();
        let mut kept = Vec::new();
        for (&j, e) in survivors.iter().zip(&errors) {
            if e.abs() > config.eps_elim {
                eliminated.push(j);
            } else {
                kept.push(j);
            }
        }
        survivors = kept;
        rounds.push(OliveRound {
            round,
            selected,
            on_policy,
            violating_step: Some(step),
            eliminated,
            survivors: survivors.len(),
            episodes_used: sampler.episodes(),
            exact_gap,
        });
    }

    let exhausted = !terminated && survivors.is_empty();
    let selected = if terminated {
        rounds.last().expect("terminated in some round").selected
    } else {
        let worst: Vec<f64> =
            rounds.iter().map(|r| -r.on_policy.iter().fold(0.0_f64, |m, e| m.max(e.abs()))).collect();
        rounds[argmax(&worst)].selected
    };
    Ok(OliveOutput {
        policy: policies[selected].clone(),
        selected,
        rounds,
        initial_values,
        episodes_used: sampler.episodes(),
        terminated,
        exhausted,
    })
}
