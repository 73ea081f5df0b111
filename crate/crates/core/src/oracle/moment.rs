//! Moment-matching policies.
//!
//! For a target `(pi, h)` the policy `mu_{h'}(a | x_{h'})`, `h'` in `[m(h), h]`,
//! is the conditional law of `pi`'s action given the extended block
//! `x_{h'} = (s, o, a)_{m(h):h'}`. It only looks at the window starting at
//! `m(h)`, which is what breaks the dependence on the deep past.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Decoder;
use crate::policy::{compose, Block, BlockPolicy, History, Policy, SuffixPolicy};
use crate::suffix::{window_start, Suffix};

use super::forward::{extend_blocks, forward_blocks, BlockLayer, SuffixDistribution};
use super::{Oracle, QFunction};

#[derive(Clone, Debug)]
pub struct MomentMatchingPolicy {
    target: usize,
    start: usize,
    uniform: Vec<f64>,
    /// Indexed by `h' - start`.
    conditionals: Vec<BTreeMap<Block, Vec<f64>>>,
    probabilities: Vec<BTreeMap<Block, f64>>,
}

impl MomentMatchingPolicy {
    pub fn target_step(&self) -> usize {
        self.target
    }

    /// `m(h)`, the first step the policy acts on.
    pub fn start_step(&self) -> usize {
        self.start
    }

    /// `mu_{h'}(. | x)` for a block with positive probability under the target.
    pub fn conditional(&self, x: &Block) -> Option<&[f64]> {
        self.layer(x.step())?.get(x).map(Vec::as_slice)
    }

    /// `false` when `x` had zero probability and the uniform fallback applies.
    pub fn is_matched(&self, x: &Block) -> bool {
        self.conditional(x).is_some()
    }

    /// `P_pi(x_{h'})` under the target policy.
    pub fn block_probability(&self, x: &Block) -> f64 {
        x.step()
            .checked_sub(self.start)
            .and_then(|i| self.probabilities.get(i))
            .and_then(|t| t.get(x))
            .copied()
            .unwrap_or(0.0)
    }

    /// Blocks with positive probability at step `h'`.
    pub fn blocks(&self, step: usize) -> impl Iterator<Item = (&Block, &Vec<f64>)> + '_ {
        self.layer(step).into_iter().flat_map(|t| t.iter())
    }

    fn layer(&self, step: usize) -> Option<&BTreeMap<Block, Vec<f64>>> {
        self.conditionals.get(step.checked_sub(self.start)?)
    }

    fn lookup(&self, x: &Block) -> &[f64] {
        self.conditional(x).unwrap_or(&self.uniform)
    }

    /// The history policy `nu`: decodes `s_{m(h):h'}` with `decoder` and
    /// applies `mu`.
    pub fn history_policy<'a>(&'a self, decoder: &'a Decoder) -> NuPolicy<'a> {
        NuPolicy { mu: self, decoder }
    }
}

impl BlockPolicy for MomentMatchingPolicy {
    fn window(&self) -> usize {
        self.target - self.start + 1
    }

    fn block_distribution(&self, block: &Block) -> Result<Cow<'_, [f64]>> {
        let step = block.step();
        if step < self.start || step > self.target || block.start > self.start {
            return Err(Error::PolicyUndefined {
                step,
                history: format!("moment-matching block outside [{}, {}]", self.start, self.target),
            });
        }
        Ok(Cow::Borrowed(self.lookup(&block.restrict(self.start))))
    }
}

/// `nu^{pi,h}` on observable histories, defined for steps in `[m(h), h]`.
pub struct NuPolicy<'a> {
    mu: &'a MomentMatchingPolicy,
    decoder: &'a Decoder,
}

impl Policy for NuPolicy<'_> {
    fn action_distribution(&self, history: History<'_>) -> Result<Vec<f64>> {
        let step = history.step();
        let start = self.mu.start;
        if step < start || step > self.mu.target {
            return Err(history.undefined());
        }
        let (obs, actions) = (history.observations(), history.actions());
        let states = (start..=step)
            .map(|j| self.decoder.decode(&Suffix::extract(obs, actions, j, self.decoder.memory())))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| history.undefined())?;
        let x = Block {
            start,
            states,
            obs: obs[start - 1..step].to_vec(),
            actions: actions[start - 1..step - 1].to_vec(),
        };
        Ok(self.mu.lookup(&x).to_vec())
    }
}

impl Oracle<'_> {
    /// `mu^{pi,h}` by exact conditioning over the joint law under `pi`.
    /// Requires the model to carry a ground-truth decoder (used by `nu`).
    pub fn moment_matching<P: BlockPolicy + ?Sized>(&self, pi: &P, h: usize) -> Result<MomentMatchingPolicy> {
        if self.pomdp().decoder().is_none() {
            return Err(Error::MissingDecoder);
        }
        let start = window_start(h, self.pomdp().memory());
        let layers = forward_blocks(self.pomdp(), pi, self.pomdp().memory(), h, self.cap())?;
        let num_actions = self.pomdp().num_actions();
        let mut conditionals = Vec::with_capacity(h + 1 - start);
        let mut probabilities = Vec::with_capacity(h + 1 - start);
        for layer in &layers[start - 1..h] {
            let mut mass = BTreeMap::<Block, f64>::new();
            let mut weighted = BTreeMap::<Block, Vec<f64>>::new();
            for (b, &p) in layer {
                let dist = pi.block_distribution(b)?;
                let x = b.restrict(start);
                *mass.entry(x.clone()).or_insert(0.0) += p;
                let acc = weighted.entry(x).or_insert_with(|| vec![0.0; num_actions]);
                for (w, d) in acc.iter_mut().zip(dist.iter()) {
                    *w += p * d;
                }
            }
            for (x, w) in weighted.iter_mut() {
                let total = mass[x];
                for v in w.iter_mut() {
                    *v /= total;
                }
            }
            conditionals.push(weighted);
            probabilities.push(mass);
        }
        Ok(MomentMatchingPolicy {
            target: h,
            start,
            uniform: vec![1.0 / num_actions as f64; num_actions],
            conditionals,
            probabilities,
        })
    }

    /// `E*_h(roll_in, f)` with a precomputed `mu^{pi_f,h}`.
    pub fn surrogate_bellman_error_with<P: BlockPolicy + ?Sized>(
        &self,
        roll_in: &P,
        f: &QFunction,
        mu: &MomentMatchingPolicy,
    ) -> Result<f64> {
        let h = mu.target_step();
        let dist = self.exact_distribution(&compose(roll_in, mu, mu.start_step()), h)?;
        self.expected_residual(f, dist.suffixes())
    }

    /// `E*_h(pi, f)`: the Bellman error with actions `m(h)..h-1` drawn from
    /// the moment-matching policy of `pi_f`.
    pub fn surrogate_bellman_error<P: BlockPolicy + ?Sized>(&self, roll_in: &P, f: &QFunction, h: usize) -> Result<f64> {
        let mu = self.moment_matching(&f.greedy_policy(), h)?;
        self.surrogate_bellman_error_with(roll_in, f, &mu)
    }

    /// Law of `z_h` when the window starts in latent state `state` at `m(h)`
    /// and actions follow `mu`.
    pub fn conditional_suffix_law(&self, mu: &MomentMatchingPolicy, state: usize) -> Result<BTreeMap<Suffix, f64>> {
        let (start, h) = (mu.start_step(), mu.target_step());
        let mut first = BlockLayer::new();
        for (o, &q) in self.pomdp().emission(start, state).iter().enumerate() {
            if q > 0.0 {
                first.insert(Block::initial(start, state, o), q);
            }
        }
        if first.is_empty() {
            return Ok(BTreeMap::new());
        }
        let layers = extend_blocks(self.pomdp(), mu, mu.window(), first, h)?;
        let dist = SuffixDistribution::from_layer(
            layers.last().expect("nonempty"),
            h,
            self.pomdp().memory(),
            self.pomdp().num_states(),
        );
        Ok(dist.suffixes().clone())
    }
}

/// Largest deviations found by [`Oracle::check_moment_matching`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MomentCheck {
    pub step: usize,
    /// `max_z |P^pi(z_h) - P^{pi o mu}(z_h)|`.
    pub distribution_gap: f64,
    /// `max_z |P^{rho o mu}(z_h) - sum_s P^rho(s_{m(h)} = s) P_mu(z_h | s)|`.
    pub factorization_gap: f64,
    /// `|E*_h(pi_f, f) - E_h(pi_f, f)|`.
    pub surrogate_gap: f64,
}

fn max_gap(a: &BTreeMap<Suffix, f64>, b: &BTreeMap<Suffix, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|z| (a.get(z).copied().unwrap_or(0.0) - b.get(z).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

impl Oracle<'_> {
    /// Checks the moment-matching identities at step `h` for `pi = pi_f` and
    /// an arbitrary roll-in policy.
    pub fn check_moment_matching<P: BlockPolicy + ?Sized>(&self, roll_in: &P, f: &QFunction, h: usize) -> Result<MomentCheck> {
        let pi = f.greedy_policy();
        let mu = self.moment_matching(&pi, h)?;
        let start = mu.start_step();

        let on_policy = self.exact_distribution(&pi, h)?;
        let matched = self.exact_distribution(&compose(&pi, &mu, start), h)?;
        let distribution_gap = max_gap(on_policy.suffixes(), matched.suffixes());

        let mixed = self.exact_distribution(&compose(roll_in, &mu, start), h)?;
        let start_law = self.exact_distribution(roll_in, start)?;
        let mut factored = BTreeMap::<Suffix, f64>::new();
        for (s, &p) in start_law.states().iter().enumerate() {
            if p > 0.0 {
                for (z, q) in self.conditional_suffix_law(&mu, s)? {
                    *factored.entry(z).or_insert(0.0) += p * q;
                }
            }
        }
        let factorization_gap = max_gap(mixed.suffixes(), &factored);

        let surrogate = self.surrogate_bellman_error_with(&pi, f, &mu)?;
        let exact = self.expected_residual(f, on_policy.suffixes())?;
        Ok(MomentCheck { step: h, distribution_gap, factorization_gap, surrogate_gap: (surrogate - exact).abs() })
    }
}

/// Convenience wrapper for a deterministic or randomized suffix policy.
pub fn moment_matching_policy(pomdp: &crate::model::TabularPomdp, pi: &SuffixPolicy, h: usize) -> Result<MomentMatchingPolicy> {
    Oracle::new(pomdp)?.moment_matching(pi, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_random_decodable, RandomSpec};
    use crate::oracle::{enumerate_paths, path_suffix_marginal};
    use std::collections::HashMap;

    fn instance() -> crate::model::TabularPomdp {
        make_random_decodable(&RandomSpec {
            states: 3,
            observations: 3,
            actions: 2,
            horizon: 4,
            memory: 2,
            seed: 11,
            max_retries: 2000,
        })
        .unwrap()
        .pomdp
    }

    #[test]
    fn memory_one_conditioning_is_vacuous() {
        use crate::model::{PomdpParts, TabularPomdp};
        let parts = PomdpParts {
            horizon: 3,
            memory: 1,
            num_states: 2,
            num_observations: 4,
            num_actions: 2,
            init: vec![0.5, 0.5],
            transitions: vec![vec![vec![vec![0.3, 0.7], vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]]; 2],
            emissions: vec![vec![vec![0.4, 0.6, 0.0, 0.0], vec![0.0, 0.0, 0.2, 0.8]]; 3],
            rewards: vec![vec![0.0; 4]; 3],
            decoder: None,
        };
        let bare = TabularPomdp::new(parts).unwrap();
        let decoder = Oracle::new(&bare).unwrap().decoder().clone();
        let m = bare.with_decoder(Some(decoder)).unwrap();
        let o = Oracle::new(&m).unwrap();
        let mut table = HashMap::new();
        for obs in 0..4 {
            table.insert(Suffix::new(3, vec![obs], vec![]), vec![0.1 * obs as f64, 1.0 - 0.1 * obs as f64]);
        }
        let mut tables = vec![HashMap::new(); 3];
        tables[2] = table;
        let pi = SuffixPolicy::from_tables(3, 1, 2, tables, Some(vec![0.5, 0.5])).unwrap();
        let mu = o.moment_matching(&pi, 3).unwrap();
        assert_eq!(mu.start_step(), 3);
        let mut seen = 0;
        for (x, d) in mu.blocks(3) {
            assert_eq!(d.as_slice(), pi.distribution(&x.suffix(1)).unwrap());
            seen += 1;
        }
        assert_eq!(seen, 4);
        assert!(!mu.is_matched(&Block::initial(3, 0, 3)));
    }

    #[test]
    fn item_one_on_random_instance() {
        let m = instance();
        let o = Oracle::new(&m).unwrap();
        let decoder = m.decoder().unwrap();
        let mut choices = vec![HashMap::new(); 4];
        for h in 1..=4 {
            for (i, z) in o.reachable(h).enumerate() {
                choices[h - 1].insert(z.clone(), (i * 7 + h) % 2);
            }
        }
        let pi = SuffixPolicy::deterministic(4, 2, 2, choices).unwrap();
        for h in 1..=4 {
            let mu = o.moment_matching(&pi, h).unwrap();
            let nu = mu.history_policy(decoder);
            let mixed = compose(&pi, &nu, mu.start_step());
            let paths = enumerate_paths(&m, &mixed, h, o.cap()).unwrap();
            let tilde = path_suffix_marginal(&paths, 2);
            let exact = o.exact_distribution(&pi, h).unwrap();
            for (z, p) in exact.suffixes() {
                assert!((p - tilde.get(z).copied().unwrap_or(0.0)).abs() < 1e-12);
            }
            assert!((tilde.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identities_hold_for_random_functions() {
        let m = instance();
        let o = Oracle::new(&m).unwrap();
        let roll_in = crate::environments::random_function(&o, "g", 5).unwrap().greedy_policy();
        for seed in 0..5 {
            let f = crate::environments::random_function(&o, "f", seed).unwrap();
            for h in 1..=4 {
                let c = o.check_moment_matching(&roll_in, &f, h).unwrap();
                assert!(c.distribution_gap < 1e-12 && c.factorization_gap < 1e-12 && c.surrogate_gap < 1e-12, "{c:?}");
            }
        }
    }
}
