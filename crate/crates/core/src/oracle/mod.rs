//! Exact ground truth: distributions, values, Bellman backups and errors,
//! moment-matching policies and Bellman-rank matrices.
//!
//! Everything here is computed by enumeration or dynamic programming on the
//! full model, guarded by an enumeration cap (see [`crate::limits`]).

mod forward;
mod moment;
mod qfunction;
mod rank;

use std::collections::BTreeMap;

pub use forward::{
    block_space, enumerate_paths, forward_blocks, path_suffix_marginal, path_value, BlockLayer, Path,
    SuffixDistribution,
};
pub use moment::{moment_matching_policy, MomentCheck, MomentMatchingPolicy, NuPolicy};
pub use qfunction::{FunctionClassPair, QFunction, StepTable, CLASS_TOLERANCE};
pub use rank::{bellman_error_matrix, numerical_rank, ErrorKind, RankReport, DEFAULT_RANK_TOLERANCE};

pub(crate) use qfunction::argmax;

use crate::decode::verify_decodability_with_cap;
use crate::error::{Error, Result};
use crate::limits;
use crate::model::{Decoder, TabularPomdp};
use crate::policy::{BlockPolicy, MixturePolicy};
use crate::suffix::Suffix;

/// Exact-computation handle for one model. Building it verifies decodability
/// at the model's memory length and keeps the constructed decoder.
#[derive(Clone, Debug)]
pub struct Oracle<'a> {
    pomdp: &'a TabularPomdp,
    decoder: Decoder,
    cap: usize,
}

impl<'a> Oracle<'a> {
    pub fn new(pomdp: &'a TabularPomdp) -> Result<Self> {
        Self::with_cap(pomdp, limits::oracle_cap())
    }

    pub fn with_cap(pomdp: &'a TabularPomdp, cap: usize) -> Result<Self> {
        let report = verify_decodability_with_cap(pomdp, pomdp.memory(), cap)?;
        match report.decoder {
            Some(decoder) => Ok(Self { pomdp, decoder, cap }),
            None => {
                let (witness, states) = report.witness.expect("undecodable report has a witness");
                Err(Error::NotDecodable { memory: pomdp.memory(), witness, states })
            }
        }
    }

    pub fn pomdp(&self) -> &'a TabularPomdp {
        self.pomdp
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Decoder constructed from the model (not the one attached to it).
    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Reachable suffixes at step `h`, in canonical order.
    pub fn reachable(&self, h: usize) -> impl Iterator<Item = &Suffix> + '_ {
        self.decoder.table(h).keys()
    }

    pub fn state_of(&self, z: &Suffix) -> Result<usize> {
        self.decoder
            .decode(z)
            .ok_or_else(|| Error::UndefinedEntry { step: z.step(), suffix: z.clone() })
    }

    /// `P(o_{h+1} | z_h, a_h)` as `(observation, probability)` pairs, `h < H`.
    pub fn next_observation_law(&self, z: &Suffix, action: usize) -> Result<Vec<(usize, f64)>> {
        let h = z.step();
        let s = self.state_of(z)?;
        let mut law = vec![0.0; self.pomdp.num_observations()];
        for (s2, &p) in self.pomdp.transition(h, s, action).iter().enumerate() {
            if p > 0.0 {
                for (o, &q) in self.pomdp.emission(h + 1, s2).iter().enumerate() {
                    law[o] += p * q;
                }
            }
        }
        Ok(law.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect())
    }

    /// `(T_h f_{h+1})(z, a)`; zero at `h = H`.
    pub fn backup_value(&self, f: &QFunction, z: &Suffix, action: usize) -> Result<f64> {
        let h = z.step();
        if h >= self.pomdp.horizon() {
            return Ok(0.0);
        }
        let m = self.pomdp.memory();
        let mut total = 0.0;
        for (o, p) in self.next_observation_law(z, action)? {
            total += p * (self.pomdp.reward(h + 1, o) + f.max_value(&z.shift(action, o, m))?);
        }
        Ok(total)
    }

    /// `T_h` applied to `f`'s step-`(h+1)` table, on every reachable `z_h`.
    /// Unreachable suffixes are absent from the result.
    pub fn bellman_backup(&self, f: &QFunction, h: usize) -> Result<StepTable> {
        self.reachable(h)
            .map(|z| {
                let values = (0..self.pomdp.num_actions())
                    .map(|a| self.backup_value(f, z, a))
                    .collect::<Result<Vec<_>>>()?;
                Ok((z.clone(), values))
            })
            .collect()
    }

    /// The whole function `h -> T_h f_{h+1}`.
    pub fn backup_function(&self, f: &QFunction) -> Result<QFunction> {
        self.check_shape(f)?;
        let tables = (1..=self.pomdp.horizon())
            .map(|h| self.bellman_backup(f, h))
            .collect::<Result<Vec<_>>>()?;
        QFunction::new(format!("T({})", f.name()), self.pomdp.memory(), self.pomdp.num_actions(), tables)
    }

    /// `Q*` by backward induction.
    pub fn qstar(&self) -> Result<QFunction> {
        let horizon = self.pomdp.horizon();
        let (m, a) = (self.pomdp.memory(), self.pomdp.num_actions());
        let mut tables = vec![StepTable::new(); horizon];
        for h in (1..=horizon).rev() {
            let partial = QFunction::new("Q*", m, a, tables.clone())?;
            tables[h - 1] = self.bellman_backup(&partial, h)?;
        }
        QFunction::new("Q*", m, a, tables)
    }

    /// `V* = E[r_1(o_1) + max_a Q*_1(o_1, a)]`.
    pub fn optimal_value(&self) -> Result<f64> {
        let q = self.qstar()?;
        self.initial_value(&q)
    }

    /// `E[r_1(o_1) + max_a f_1(o_1, a)]` under the true law of `o_1`.
    pub fn initial_value(&self, f: &QFunction) -> Result<f64> {
        let mut total = 0.0;
        for (s, &p) in self.pomdp.init().iter().enumerate() {
            for (o, &q) in self.pomdp.emission(1, s).iter().enumerate() {
                if p * q > 0.0 {
                    let z = Suffix::new(1, vec![o], vec![]);
                    total += p * q * (self.pomdp.reward(1, o) + f.max_value(&z)?);
                }
            }
        }
        Ok(total)
    }

    /// Law of `x_h`, `z_h` and the window's first latent state under `policy`.
    pub fn exact_distribution<P: BlockPolicy + ?Sized>(&self, policy: &P, h: usize) -> Result<SuffixDistribution> {
        let layers = forward_blocks(self.pomdp, policy, self.pomdp.memory(), h, self.cap)?;
        Ok(SuffixDistribution::from_layer(
            layers.last().expect("at least one layer"),
            h,
            self.pomdp.memory(),
            self.pomdp.num_states(),
        ))
    }

    /// Exact expected total reward.
    pub fn policy_value<P: BlockPolicy + ?Sized>(&self, policy: &P) -> Result<f64> {
        let layers = forward_blocks(self.pomdp, policy, self.pomdp.memory(), self.pomdp.horizon(), self.cap)?;
        Ok(layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                layer.iter().map(|(b, p)| p * self.pomdp.reward(i + 1, *b.obs.last().expect("nonempty"))).sum::<f64>()
            })
            .sum())
    }

    /// Value of a uniform mixture over deterministic components.
    pub fn mixture_value(&self, mixture: &MixturePolicy) -> Result<f64> {
        let parts = mixture.components();
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty mixture".into()));
        }
        let mut total = 0.0;
        for p in parts {
            total += self.policy_value(p)?;
        }
        Ok(total / parts.len() as f64)
    }

    /// Expected residual `(f_h - T_h f_{h+1})(z_h, pi_f(z_h))` under a law on `z_h`.
    pub fn expected_residual(&self, f: &QFunction, suffixes: &BTreeMap<Suffix, f64>) -> Result<f64> {
        let mut total = 0.0;
        for (z, &p) in suffixes {
            let a = f.greedy_action(z)?;
            total += p * (f.value(z, a)? - self.backup_value(f, z, a)?);
        }
        Ok(total)
    }

    /// `E_h(pi, f)`: average Bellman error at step `h` under roll-in `pi`.
    pub fn bellman_error<P: BlockPolicy + ?Sized>(&self, roll_in: &P, f: &QFunction, h: usize) -> Result<f64> {
        self.check_shape(f)?;
        let dist = self.exact_distribution(roll_in, h)?;
        self.expected_residual(f, dist.suffixes())
    }

    fn check_shape(&self, f: &QFunction) -> Result<()> {
        if f.memory() != self.pomdp.memory()
            || f.num_actions() != self.pomdp.num_actions()
            || f.horizon() != self.pomdp.horizon()
        {
            return Err(Error::InvalidArgument(format!(
                "function {} does not match the model's memory, actions or horizon",
                f.name()
            )));
        }
        Ok(())
    }
}

/// Convenience wrappers over a throwaway [`Oracle`].
pub fn exact_distribution<P: BlockPolicy + ?Sized>(
    pomdp: &TabularPomdp,
    policy: &P,
    h: usize,
) -> Result<SuffixDistribution> {
    Oracle::new(pomdp)?.exact_distribution(policy, h)
}

pub fn policy_value<P: BlockPolicy + ?Sized>(pomdp: &TabularPomdp, policy: &P) -> Result<f64> {
    Oracle::new(pomdp)?.policy_value(policy)
}

pub fn compute_qstar(pomdp: &TabularPomdp) -> Result<QFunction> {
    Oracle::new(pomdp)?.qstar()
}

pub fn bellman_error<P: BlockPolicy + ?Sized>(
    pomdp: &TabularPomdp,
    roll_in: &P,
    f: &QFunction,
    h: usize,
) -> Result<f64> {
    Oracle::new(pomdp)?.bellman_error(roll_in, f, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::trivial;
    use crate::model::PomdpParts;
    use crate::policy::SuffixPolicy;

    /// Deterministic chain: two states, action 0 keeps the state, action 1 flips it.
    fn chain() -> TabularPomdp {
        TabularPomdp::new(PomdpParts {
            horizon: 3,
            memory: 1,
            num_states: 2,
            num_observations: 2,
            num_actions: 2,
            init: vec![1.0, 0.0],
            transitions: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]]]; 2],
            emissions: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 3],
            rewards: vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.0, 0.5]],
            decoder: None,
        })
        .unwrap()
    }

    #[test]
    fn deterministic_chain_has_point_mass() {
        let m = chain();
        let o = Oracle::new(&m).unwrap();
        let pi = SuffixPolicy::constant(3, 1, 2, 1);
        let d = o.exact_distribution(&pi, 3).unwrap();
        assert_eq!(d.suffixes().len(), 1);
        assert_eq!(d.suffix_probability(&Suffix::new(3, vec![0], vec![])), 1.0);
        assert_eq!(o.policy_value(&pi).unwrap(), 0.5);
        assert_eq!(o.policy_value(&SuffixPolicy::constant(3, 1, 2, 0)).unwrap(), 0.0);
    }

    #[test]
    fn qstar_is_a_fixed_point() {
        let m = chain();
        let o = Oracle::new(&m).unwrap();
        let q = o.qstar().unwrap();
        // hand table: from state 0 at h=1, flipping then staying earns 1/2 + 1/2
        assert_eq!(q.values(&Suffix::new(1, vec![0], vec![])).unwrap(), &[0.5, 1.0]);
        assert_eq!(o.optimal_value().unwrap(), 1.0);
        for h in 1..=3 {
            assert_eq!(&o.bellman_backup(&q, h).unwrap(), q.table(h));
        }
        let pi = SuffixPolicy::uniform(3, 1, 2);
        for h in 1..=3 {
            assert!(o.bellman_error(&pi, &q, h).unwrap().abs() < 1e-12);
        }
        assert!((o.policy_value(&q.greedy_policy()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_function_backs_up_to_zero() {
        let m = TabularPomdp::new(trivial(3)).unwrap();
        let o = Oracle::new(&m).unwrap();
        let zero = QFunction::new(
            "0",
            1,
            1,
            (1..=3).map(|h| o.reachable(h).map(|z| (z.clone(), vec![0.0])).collect()).collect(),
        )
        .unwrap();
        for h in 1..=3 {
            assert_eq!(o.bellman_backup(&zero, h).unwrap(), *zero.table(h));
        }
    }

    #[test]
    fn single_step_qstar_is_zero() {
        let mut parts = trivial(1);
        parts.rewards = vec![vec![0.25]];
        let m = TabularPomdp::new(parts).unwrap();
        let o = Oracle::new(&m).unwrap();
        let q = o.qstar().unwrap();
        assert_eq!(q.values(&Suffix::new(1, vec![0], vec![])).unwrap(), &[0.0]);
        assert_eq!(o.optimal_value().unwrap(), 0.25);
    }

    #[test]
    fn path_enumeration_matches_block_dp() {
        let m = chain();
        let o = Oracle::new(&m).unwrap();
        let pi = SuffixPolicy::uniform(3, 1, 2);
        let paths = enumerate_paths(&m, &pi, 3, o.cap()).unwrap();
        assert!((path_value(&m, &paths) - o.policy_value(&pi).unwrap()).abs() < 1e-15);
        let from_paths = path_suffix_marginal(&paths, 1);
        let d = o.exact_distribution(&pi, 3).unwrap();
        assert_eq!(&from_paths, d.suffixes());
    }
}
