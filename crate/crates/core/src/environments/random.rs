//! Rejection-sampled random decodable models.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decode::verify_decodability_with_cap;
use crate::error::{Error, Result};
use crate::limits;
use crate::model::{PomdpParts, TabularPomdp};

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub states: usize,
    pub observations: usize,
    pub actions: usize,
    pub horizon: usize,
    pub memory: usize,
    pub seed: u64,
    pub max_retries: usize,
}

#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub pomdp: TabularPomdp,
    /// The model is not decodable with one step less memory.
    pub needs_full_memory: bool,
    /// Attempts drawn, including the accepted one.
    pub attempts: usize,
}

/// Distribution with a random support of one or two entries.
fn sparse_distribution<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let support = if len > 1 && rng.random_bool(0.5) { 2 } else { 1 };
    let picks = sample(rng, len, support);
    let mut p = vec![0.0; len];
    if support == 1 {
        p[picks.index(0)] = 1.0;
    } else {
        let w: f64 = rng.random_range(0.1..0.9);
        p[picks.index(0)] = w;
        p[picks.index(1)] = 1.0 - w;
    }
    p
}

fn draw<R: Rng>(rng: &mut R, spec: &RandomSpec) -> PomdpParts {
    let (s, o, a, h) = (spec.states, spec.observations, spec.actions, spec.horizon);
    let init = sparse_distribution(rng, s);
    let transitions = (1..h)
        .map(|_| (0..s).map(|_| (0..a).map(|_| sparse_distribution(rng, s)).collect()).collect())
        .collect();
    let emissions = (0..h).map(|_| (0..s).map(|_| sparse_distribution(rng, o)).collect()).collect();
    // rewards on a 1/1000 grid, scaled by 1/H so any trajectory totals at most 1
    let rewards = (0..h)
        .map(|_| (0..o).map(|_| rng.random_range(0..=1000u32) as f64 / 1000.0 / h as f64).collect())
        .collect();
    PomdpParts {
        horizon: h,
        memory: spec.memory,
        num_states: s,
        num_observations: o,
        num_actions: a,
        init,
        transitions,
        emissions,
        rewards,
        decoder: None,
    }
}

/// Draws models until one is decodable at `memory` but not at `memory - 1`.
/// If only the weaker property is ever met, the first such model is returned
/// with `needs_full_memory = false`.
pub fn make_random_decodable(spec: &RandomSpec) -> Result<RandomInstance> {
    if spec.states == 0 || spec.observations == 0 || spec.actions == 0 || spec.horizon == 0 {
        return Err(Error::InvalidArgument("sizes must be positive".into()));
    }
    if spec.memory == 0 || spec.memory > spec.horizon {
        return Err(Error::InvalidArgument(format!("memory {} outside [1, {}]", spec.memory, spec.horizon)));
    }
    let cap = limits::oracle_cap();
    let size = ((spec.observations * spec.actions) as f64).powi(spec.horizon as i32);
    limits::check("random model trajectory space", size, cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fallback = None;
    for attempt in 1..=spec.max_retries {
        let parts = draw(&mut rng, spec);
        let bare = TabularPomdp::new(parts)?;
        let report = verify_decodability_with_cap(&bare, spec.memory, cap)?;
        let Some(decoder) = report.decoder else { continue };
        let pomdp = bare.with_decoder(Some(decoder))?;
        let shorter = spec.memory > 1 && verify_decodability_with_cap(&pomdp, spec.memory - 1, cap)?.decodable;
        if !shorter {
            return Ok(RandomInstance { pomdp, needs_full_memory: spec.memory > 1, attempts: attempt });
        }
        if fallback.is_none() {
            fallback = Some((pomdp, attempt));
        }
    }
    match fallback {
        Some((pomdp, attempts)) => Ok(RandomInstance { pomdp, needs_full_memory: false, attempts }),
        None => Err(Error::RetriesExhausted {
            retries: spec.max_retries,
            reason: format!("no draw was {}-step decodable", spec.memory),
        }),
    }
}
