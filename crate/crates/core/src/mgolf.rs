//! Optimistic confidence-set learning over a finite class of suffix value
//! functions.
//!
//! Each epoch plays the greedy policy of the most optimistic surviving
//! function and collects one episode per step `h`, switching to uniform actions
//! at `m(h)`. A function survives if, at every step, its squared Bellman loss
//! is within `beta` of the best auxiliary function's loss against the same
//! target.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{argmax, FunctionClassPair, Oracle, QFunction};
use crate::policy::{compose, MixturePolicy, SuffixPolicy};
use crate::simulate::{EpisodeSampler, ObservableTrajectory};
use crate::suffix::{window_start, Suffix};

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MGolfConfig {
    pub epochs: usize,
    /// Episodes for the initial-value estimate; `None` uses the default formula.
    pub k_est: Option<usize>,
    /// Fixed threshold; `None` uses the default formula with `beta_c`.
    pub beta: Option<f64>,
    pub beta_c: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Latent state count entering the formula for `rho`; the harness
    /// replaces 0 with the model's count.
    pub num_states: usize,
    /// Retry with `2 beta` when the confidence set empties.
    pub beta_doubling: bool,
}

impl Default for MGolfConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            k_est: None,
            beta: None,
            beta_c: 1.0,
            epsilon: 0.1,
            delta: 0.1,
            num_states: 0,
            beta_doubling: false,
        }
    }
}

/// `rho = eps^2 / (H^2 A^m S ln(S / eps))`, with the logarithm floored at 1.
pub fn default_rho(epsilon: f64, horizon: usize, num_actions: usize, memory: usize, num_states: usize) -> f64 {
    let log = (num_states as f64 / epsilon).ln().max(1.0);
    epsilon * epsilon
        / ((horizon * horizon) as f64 * (num_actions as f64).powi(memory as i32) * num_states as f64 * log)
}

/// `beta = c (ln(|G| K H / delta) + K rho)`.
pub fn default_beta(c: f64, class_size: usize, epochs: usize, horizon: usize, delta: f64, rho: f64) -> f64 {
    c * (((class_size * epochs * horizon) as f64 / delta).ln() + epochs as f64 * rho)
}

/// `K_est = ceil(c ln(|F| / delta) / eps^2)`, at least 1.
pub fn default_k_est(c: f64, class_size: usize, delta: f64, epsilon: f64) -> usize {
    ((c * (class_size as f64 / delta).ln() / (epsilon * epsilon)).ceil() as usize).max(1)
}

/// `(z_h, a_h, r_{h+1}(o_{h+1}), o_{h+1})`; at `h = H` there is no next
/// observation and the reward is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub suffix: Suffix,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Option<usize>,
}

impl Transition {
    pub fn from_trajectory(t: &ObservableTrajectory, h: usize, memory: usize) -> Self {
        let horizon = t.observations.len();
        let (reward, next_obs) = if h < horizon { (t.rewards[h], Some(t.observations[h])) } else { (0.0, None) };
        Self { suffix: t.history(h).suffix(memory), action: t.actions[h - 1], reward, next_obs }
    }

    /// `r + max_a' zeta_{h+1}(z_{h+1}, a')`.
    pub fn target(&self, zeta: &QFunction) -> Result<f64> {
        match self.next_obs {
            None => Ok(self.reward),
            Some(o) => Ok(self.reward + zeta.max_value(&self.suffix.shift(self.action, o, zeta.memory()))?),
        }
    }
}

/// `sum over data of (xi_h(z, a) - r - max_a' zeta_{h+1}(z', a'))^2`.
pub fn squared_loss(data: &[Transition], xi: &QFunction, zeta: &QFunction) -> Result<f64> {
    let mut total = 0.0;
    for t in data {
        let r = xi.value(&t.suffix, t.action)? - t.target(zeta)?;
        total += r * r;
    }
    Ok(total)
}

/// `(1/K_est) sum_t max_a f_1(o_1^t, a)` for every `f`, from the first
/// observation of `k_est` fresh episodes.
pub fn estimate_initial_values(
    sampler: &mut EpisodeSampler<'_>,
    functions: &[QFunction],
    k_est: usize,
) -> Result<Vec<f64>> {
    if k_est == 0 {
        return Err(Error::InvalidArgument("k_est must be positive".into()));
    }
    let uniform = SuffixPolicy::uniform(sampler.horizon(), sampler.memory(), sampler.num_actions());
    let mut sums = vec![0.0; functions.len()];
    for _ in 0..k_est {
        let t = sampler.run(&uniform)?;
        let z = Suffix::new(1, vec![t.observations[0]], vec![]);
        for (s, f) in sums.iter_mut().zip(functions) {
            *s += f.max_value(&z)?;
        }
    }
    Ok(sums.into_iter().map(|s| s / k_est as f64).collect())
}

/// One episode per step `h`: `policy` before `m(h)`, uniform from `m(h)` on.
/// Returns the step-`h` transition of episode `h`.
pub fn collect_epoch(sampler: &mut EpisodeSampler<'_>, policy: &SuffixPolicy) -> Result<Vec<Transition>> {
    let (horizon, memory) = (sampler.horizon(), sampler.memory());
    let uniform = SuffixPolicy::uniform(horizon, memory, sampler.num_actions());
    (1..=horizon)
        .map(|h| {
            let t = sampler.run(&compose(policy, &uniform, window_start(h, memory)))?;
            Ok(Transition::from_trajectory(&t, h, memory))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceSet {
    pub epoch: usize,
    pub members: Vec<usize>,
    pub beta: f64,
}

/// Batch form of the confidence-set rule, used for checks and small data.
pub fn update_confidence_set(
    classes: &FunctionClassPair,
    datasets: &[Vec<Transition>],
    beta: f64,
    epoch: usize,
) -> Result<ConfidenceSet> {
    let mut members = Vec::new();
    'f: for (i, f) in classes.functions().iter().enumerate() {
        for data in datasets {
            let own = squared_loss(data, f, f)?;
            let mut best = f64::INFINITY;
            for g in 0..classes.len_g() {
                best = best.min(squared_loss(data, classes.g(g), f)?);
            }
            if own.is_nan() || own > best + beta {
                continue 'f;
            }
        }
        members.push(i);
    }
    Ok(ConfidenceSet { epoch, members, beta })
}

/// Running losses `L_h[g][f]` = loss of `g_h` against targets built from `f_{h+1}`.
struct LossTables {
    tables: Vec<Vec<Vec<f64>>>,
}

impl LossTables {
    fn new(horizon: usize, num_g: usize, num_f: usize) -> Self {
        Self { tables: vec![vec![vec![0.0; num_f]; num_g]; horizon] }
    }

    fn add(&mut self, h: usize, t: &Transition, classes: &FunctionClassPair) -> Result<()> {
        let targets = classes.functions().iter().map(|f| t.target(f)).collect::<Result<Vec<_>>>()?;
        let table = &mut self.tables[h - 1];
        for (g, row) in table.iter_mut().enumerate() {
            let pred = classes.g(g).value(&t.suffix, t.action)?;
            for (cell, target) in row.iter_mut().zip(&targets) {
                let r = pred - target;
                *cell += r * r;
            }
        }
        Ok(())
    }

    fn members(&self, num_f: usize, beta: f64) -> Vec<usize> {
        (0..num_f)
            .filter(|&f| {
                self.tables.iter().all(|table| {
                    let best = table.iter().map(|row| row[f]).fold(f64::INFINITY, f64::min);
                    table[f][f] <= best + beta
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Index into `F` of the optimistic function.
    pub selected: usize,
    pub optimistic_value: f64,
    /// `|B^k|` after this epoch's update.
    pub confset_size: usize,
    /// Learning episodes so far (the initial-value episodes are not included).
    pub episodes_used: usize,
    /// `V* - V^{pi^k}` when an oracle was supplied.
    pub exact_gap: Option<f64>,
    /// Whether `Q*` is in `B^k`, when its index is known.
    pub qstar_in_set: Option<bool>,
    pub beta: f64,
}

#[derive(Clone, Debug)]
pub struct MGolfOutput {
    pub mixture: MixturePolicy,
    pub records: Vec<EpochRecord>,
    pub confidence_sets: Vec<ConfidenceSet>,
    pub initial_values: Vec<f64>,
    pub k_est: usize,
    /// Threshold in force at the end of the run.
    pub beta: f64,
    /// Exact value of the output mixture when an oracle was supplied.
    pub mixture_value: Option<f64>,
    pub optimal_value: Option<f64>,
    /// Epoch whose selection found the confidence set empty (no doubling).
    pub aborted_at: Option<usize>,
}

impl MGolfOutput {
    /// Learning episodes plus initial-value episodes.
    pub fn total_episodes(&self) -> usize {
        self.k_est + self.records.last().map_or(0, |r| r.episodes_used)
    }

    /// First epoch from which every selected policy is within `threshold` of
    /// optimal, counted in total episodes (initial-value episodes included).
    pub fn episodes_to_gap(&self, threshold: f64) -> Option<usize> {
        let gaps: Option<Vec<f64>> = self.records.iter().map(|r| r.exact_gap).collect();
        let k = crate::metrics::settle_point(&gaps?, threshold)?;
        Some(self.k_est + self.records[k - 1].episodes_used)
    }
}

const MAX_DOUBLINGS: usize = 64;

/// Runs the learner. The sampler is its only access to the model; `evaluator`
/// is used for diagnostics only (exact gaps) and never influences decisions.
pub fn run_mgolf(
    sampler: &mut EpisodeSampler<'_>,
    classes: &FunctionClassPair,
    config: &MGolfConfig,
    evaluator: Option<&Oracle<'_>>,
) -> Result<MGolfOutput> {
    if config.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    let (horizon, memory, actions) = (sampler.horizon(), sampler.memory(), sampler.num_actions());
    let functions = classes.functions();
    if functions.iter().any(|f| f.horizon() != horizon || f.memory() != memory || f.num_actions() != actions) {
        return Err(Error::InvalidArgument("function class does not match the environment".into()));
    }
    let k_est = config
        .k_est
        .unwrap_or_else(|| default_k_est(config.beta_c, functions.len(), config.delta, config.epsilon));
    let mut beta = config.beta.unwrap_or_else(|| {
        let rho = default_rho(config.epsilon, horizon, actions, memory, config.num_states.max(1));
        default_beta(config.beta_c, classes.len_g(), config.epochs, horizon, config.delta, rho)
    });
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    let initial_values = estimate_initial_values(sampler, functions, k_est)?;
    let optimal_value = evaluator.map(|o| o.optimal_value()).transpose()?;
    let mut values_cache: Vec<Option<f64>> = vec![None; functions.len()];
    let policies: Vec<SuffixPolicy> = functions.iter().map(QFunction::greedy_policy).collect();

    let mut losses = LossTables::new(horizon, classes.len_g(), functions.len());
    let mut members: Vec<usize> = (0..functions.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut sets = Vec::with_capacity(config.epochs);
    let mut chosen = Vec::with_capacity(config.epochs);
    let mut aborted_at = None;

    for epoch in 1..=config.epochs {
        if members.is_empty() {
            if !config.beta_doubling {
                aborted_at = Some(epoch);
                break;
            }
            let mut doublings = 0;
            while members.is_empty() && doublings < MAX_DOUBLINGS {
                beta = if beta > 0.0 { 2.0 * beta } else { 1e-6 };
                members = losses.members(functions.len(), beta);
                doublings += 1;
            }
            if members.is_empty() {
                aborted_at = Some(epoch);
                break;
            }
        }
        let scores: Vec<f64> = members.iter().map(|&i| initial_values[i]).collect();
        let selected = members[argmax(&scores)];
        chosen.push(selected);
        for (h, t) in collect_epoch(sampler, &policies[selected])?.iter().enumerate() {
            losses.add(h + 1, t, classes)?;
        }
        members = losses.members(functions.len(), beta);
        let exact_gap = match (evaluator, optimal_value) {
            (Some(o), Some(v)) => {
                let value = match values_cache[selected] {
                    Some(v) => v,
                    None => {
                        let v = o.policy_value(&policies[selected])?;
                        values_cache[selected] = Some(v);
                        v
                    }
                };
                Some(v - value)
            }
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            selected,
            optimistic_value: initial_values[selected],
            confset_size: members.len(),
            episodes_used: sampler.episodes() - k_est,
            exact_gap,
            qstar_in_set: classes.qstar_index().map(|q| members.contains(&q)),
            beta,
        });
        sets.push(ConfidenceSet { epoch, members: members.clone(), beta });
    }

    let mixture_value = match (optimal_value, records.is_empty()) {
        (Some(v), false) => Some(v - records.iter().map(|r| r.exact_gap.unwrap_or(0.0)).sum::<f64>() / records.len() as f64),
        _ => None,
    };
    Ok(MGolfOutput {
        mixture: MixturePolicy::new(chosen.iter().map(|&i| policies[i].clone()).collect()),
        records,
        confidence_sets: sets,
        initial_values,
        k_est,
        beta,
        mixture_value,
        optimal_value,
        aborted_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::make_hadamard_instance;
    use crate::oracle::StepTable;

    fn constant(value: f64, horizon: usize, oracle: &Oracle<'_>) -> QFunction {
        let a = oracle.pomdp().num_actions();
        let tables: Vec<StepTable> =
            (1..=horizon).map(|h| oracle.reachable(h).map(|z| (z.clone(), vec![value; a])).collect()).collect();
        QFunction::new(format!("c{value}"), oracle.pomdp().memory(), a, tables).unwrap()
    }

    #[test]
    fn loss_examples() {
        let inst = make_hadamard_instance(2, false).unwrap();
        let o = Oracle::new(&inst.pomdp).unwrap();
        let one = constant(1.0, 3, &o);
        let zero = constant(0.0, 3, &o);
        assert_eq!(squared_loss(&[], &one, &zero).unwrap(), 0.0);
        let t = Transition { suffix: Suffix::new(3, vec![4, 5], vec![0]), action: 0, reward: 1.0, next_obs: None };
        assert_eq!(squared_loss(std::slice::from_ref(&t), &one, &zero).unwrap(), 0.0);
        assert_eq!(squared_loss(&[t], &zero, &zero).unwrap(), 1.0);
        let missing = Transition { suffix: Suffix::new(3, vec![0, 0], vec![0]), action: 0, reward: 0.0, next_obs: None };
        assert!(matches!(squared_loss(&[missing], &one, &zero), Err(Error::UndefinedEntry { .. })));
    }

    #[test]
    fn constant_function_estimates_exactly() {
        let inst = make_hadamard_instance(2, false).unwrap();
        let o = Oracle::new(&inst.pomdp).unwrap();
        let f = constant(0.375, 3, &o);
        let mut sampler = EpisodeSampler::new(&inst.pomdp, 3);
        assert_eq!(estimate_initial_values(&mut sampler, std::slice::from_ref(&f), 17).unwrap(), vec![0.375]);
        let mut sampler = EpisodeSampler::new(&inst.pomdp, 4);
        let v = estimate_initial_values(&mut sampler, &[inst.decoys()[0].clone()], 1).unwrap()[0];
        assert!(v == 1.0 || v == 0.75);
    }

    #[test]
    fn one_tuple_eliminates_sets_containing_the_observation() {
        let inst = make_hadamard_instance(3, false).unwrap();
        let blank = inst.observations.blank;
        let drawn = 0usize;
        // step-2 tuple of an episode that took action 0 and landed in s_1
        let t = Transition {
            suffix: Suffix::new(2, vec![drawn, blank], vec![0]),
            action: 0,
            reward: 0.5,
            next_obs: Some(inst.observations.half),
        };
        let datasets = vec![vec![], vec![t], vec![]];
        let set = update_confidence_set(&inst.classes, &datasets, 0.1, 1).unwrap();
        for (i, s) in inst.sets.iter().enumerate() {
            if s.contains(&drawn) {
                assert!(!set.members.contains(&(i + 1)), "f_{} survived", i + 1);
            }
        }
        assert!(set.members.contains(&0));
        let everything = update_confidence_set(&inst.classes, &datasets, f64::INFINITY, 1).unwrap();
        assert_eq!(everything.members.len(), inst.classes.len_f());
        let empty = update_confidence_set(&inst.classes, &[vec![], vec![], vec![]], 0.0, 0).unwrap();
        assert_eq!(empty.members.len(), inst.classes.len_f());
    }

    #[test]
    fn default_formulas() {
        assert_eq!(default_k_est(1.0, 10, 0.1, 0.1), ((100f64).ln() * 100.0).ceil() as usize);
        let rho = default_rho(0.1, 3, 2, 2, 3);
        assert!((rho - 0.01 / (9.0 * 4.0 * 3.0 * 30f64.ln())).abs() < 1e-18);
        let b = default_beta(1.0, 5, 10, 3, 0.1, rho);
        assert!((b - ((1500f64).ln() + 10.0 * rho)).abs() < 1e-12);
    }
}
