//! Exhaustive decodability check.
//!
//! Reachability of a (suffix, latent state) pair only depends on the latent
//! state, so the reachable pairs can be propagated layer by layer without
//! enumerating whole trajectories.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::limits;
use crate::model::{Decoder, TabularPomdp};
use crate::suffix::Suffix;

/// Reachable suffixes at each step with the latent states they occur with.
pub type ReachableSuffixes = Vec<BTreeMap<Suffix, BTreeSet<usize>>>;

#[derive(Clone, Debug)]
pub struct DecodabilityReport {
    pub memory: usize,
    pub decodable: bool,
    /// First suffix (by step, then canonical order) seen with two or more states.
    pub witness: Option<(Suffix, Vec<usize>)>,
    /// Decoder built from the reachable pairs when `decodable`.
    pub decoder: Option<Decoder>,
    pub reachable: ReachableSuffixes,
}

/// Enumerates reachable `(z_h, s_h)` pairs for suffixes of length `memory`.
pub fn reachable_suffixes(pomdp: &TabularPomdp, memory: usize, cap: usize) -> Result<ReachableSuffixes> {
    if memory == 0 {
        return Err(Error::InvalidArgument("memory must be positive".into()));
    }
    let size = ((pomdp.num_observations() * pomdp.num_actions()) as f64).powi(pomdp.horizon() as i32);
    limits::check("reachable-trajectory enumeration", size, cap)?;

    let mut layers: ReachableSuffixes = Vec::with_capacity(pomdp.horizon());
    let mut first = BTreeMap::<Suffix, BTreeSet<usize>>::new();
    for (s, &p) in pomdp.init().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for (o, &q) in pomdp.emission(1, s).iter().enumerate() {
            if q > 0.0 {
                first.entry(Suffix::new(1, vec![o], vec![])).or_default().insert(s);
            }
        }
    }
    layers.push(first);
    for h in 1..pomdp.horizon() {
        let mut next = BTreeMap::<Suffix, BTreeSet<usize>>::new();
        for (z, states) in &layers[h - 1] {
            for &s in states {
                for a in 0..pomdp.num_actions() {
                    for (s2, &p) in pomdp.transition(h, s, a).iter().enumerate() {
                        if p <= 0.0 {
                            continue;
                        }
                        for (o2, &q) in pomdp.emission(h + 1, s2).iter().enumerate() {
                            if q > 0.0 {
                                next.entry(z.shift(a, o2, memory)).or_default().insert(s2);
                            }
                        }
                    }
                }
            }
        }
        layers.push(next);
    }
    Ok(layers)
}

pub fn verify_decodability(pomdp: &TabularPomdp, memory: usize) -> Result<DecodabilityReport> {
    verify_decodability_with_cap(pomdp, memory, limits::oracle_cap())
}

pub fn verify_decodability_with_cap(
    pomdp: &TabularPomdp,
    memory: usize,
    cap: usize,
) -> Result<DecodabilityReport> {
    let reachable = reachable_suffixes(pomdp, memory, cap)?;
    let witness = reachable
        .iter()
        .flat_map(|layer| layer.iter())
        .find(|(_, states)| states.len() > 1)
        .map(|(z, states)| (z.clone(), states.iter().copied().collect::<Vec<_>>()));
    let decodable = witness.is_none();
    let decoder = decodable.then(|| {
        Decoder::new(
            memory,
            reachable
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|(z, states)| (z.clone(), *states.iter().next().expect("nonempty")))
                        .collect()
                })
                .collect(),
        )
    });
    Ok(DecodabilityReport { memory, decodable, witness, decoder, reachable })
}

/// Checks that the model's own decoder agrees with the constructed one on every
/// reachable suffix.
pub fn check_decoder(pomdp: &TabularPomdp) -> Result<()> {
    let decoder = pomdp.decoder().ok_or(Error::MissingDecoder)?;
    let report = verify_decodability(pomdp, decoder.memory())?;
    if let Some((witness, states)) = report.witness {
        return Err(Error::NotDecodable { memory: decoder.memory(), witness, states });
    }
    for layer in &report.reachable {
        for (z, states) in layer {
            let s = *states.iter().next().expect("nonempty");
            if decoder.decode(z) != Some(s) {
                return Err(Error::InvalidModel(format!("decoder disagrees with the model at {z}")));
            }
        }
    }
    Ok(())
}
