//! Forward dynamic programs over the joint (latent, observable) process.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::limits;
use crate::model::TabularPomdp;
use crate::policy::{Block, BlockPolicy, History, Policy};
use crate::suffix::{window_start, Suffix};

/// Probabilities of trailing windows at one step.
pub type BlockLayer = BTreeMap<Block, f64>;

/// Upper estimate of the number of distinct windows of `window` steps.
pub fn block_space(pomdp: &TabularPomdp, window: usize) -> f64 {
    let so = (pomdp.num_states() * pomdp.num_observations()) as f64;
    so.powi(window as i32) * (pomdp.num_actions() as f64).powi(window as i32 - 1)
}

pub(crate) fn initial_layer(pomdp: &TabularPomdp) -> BlockLayer {
    let mut layer = BlockLayer::new();
    for (s, &p) in pomdp.init().iter().enumerate() {
        for (o, &q) in pomdp.emission(1, s).iter().enumerate() {
            if p * q > 0.0 {
                *layer.entry(Block::initial(1, s, o)).or_insert(0.0) += p * q;
            }
        }
    }
    layer
}

/// Windows at steps `1..=upto`, each keeping the last `window` steps
/// (widened to the policy's own window if needed).
pub fn forward_blocks<P: BlockPolicy + ?Sized>(
    pomdp: &TabularPomdp,
    policy: &P,
    window: usize,
    upto: usize,
    cap: usize,
) -> Result<Vec<BlockLayer>> {
    let window = window.max(policy.window()).max(1);
    limits::check("block enumeration", block_space(pomdp, window), cap)?;
    extend_blocks(pomdp, policy, window, initial_layer(pomdp), upto)
}

/// Pushes `first` forward until step `upto`. Returns one layer per step,
/// starting with `first`.
pub(crate) fn extend_blocks<P: BlockPolicy + ?Sized>(
    pomdp: &TabularPomdp,
    policy: &P,
    window: usize,
    first: BlockLayer,
    upto: usize,
) -> Result<Vec<BlockLayer>> {
    let mut step = first.keys().next().map_or(upto, Block::step);
    let mut layers = vec![first];
    while step < upto {
        let mut next = BlockLayer::new();
        for (block, &p) in layers.last().expect("nonempty") {
            let dist = policy.block_distribution(block)?;
            let s = block.last_state();
            for (a, &pa) in dist.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                for (s2, &pt) in pomdp.transition(step, s, a).iter().enumerate() {
                    if pt <= 0.0 {
                        continue;
                    }
                    for (o2, &po) in pomdp.emission(step + 1, s2).iter().enumerate() {
                        if po > 0.0 {
                            *next.entry(block.push(a, s2, o2, window)).or_insert(0.0) += p * pa * pt * po;
                        }
                    }
                }
            }
        }
        layers.push(next);
        step += 1;
    }
    Ok(layers)
}

/// Exact law at step `h`: extended blocks `x_h` over `[m(h), h]` and their
/// marginals on `z_h`, `s_{m(h)}` and `s_h`.
#[derive(Clone, Debug)]
pub struct SuffixDistribution {
    step: usize,
    memory: usize,
    blocks: BTreeMap<Block, f64>,
    suffixes: BTreeMap<Suffix, f64>,
    start_states: Vec<f64>,
    states: Vec<f64>,
}

impl SuffixDistribution {
    pub(crate) fn from_layer(layer: &BlockLayer, step: usize, memory: usize, num_states: usize) -> Self {
        let from = window_start(step, memory);
        let mut blocks = BTreeMap::new();
        let mut suffixes = BTreeMap::new();
        let mut start_states = vec![0.0; num_states];
        let mut states = vec![0.0; num_states];
        for (b, &p) in layer {
            let x = b.restrict(from);
            start_states[x.states[0]] += p;
            states[x.last_state()] += p;
            *suffixes.entry(b.suffix(memory)).or_insert(0.0) += p;
            *blocks.entry(x).or_insert(0.0) += p;
        }
        Self { step, memory, blocks, suffixes, start_states, states }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// `P(x_h)` for blocks with positive probability.
    pub fn blocks(&self) -> &BTreeMap<Block, f64> {
        &self.blocks
    }

    /// `P(z_h)` for suffixes with positive probability.
    pub fn suffixes(&self) -> &BTreeMap<Suffix, f64> {
        &self.suffixes
    }

    pub fn suffix_probability(&self, z: &Suffix) -> f64 {
        self.suffixes.get(z).copied().unwrap_or(0.0)
    }

    /// `P(s_{m(h)} = s)`.
    pub fn start_states(&self) -> &[f64] {
        &self.start_states
    }

    /// `P(s_h = s)`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn total(&self) -> f64 {
        self.blocks.values().sum()
    }
}

/// One observable-plus-latent trajectory prefix with its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub states: Vec<usize>,
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
    pub prob: f64,
}

impl Path {
    pub fn history(&self) -> History<'_> {
        History::new(&self.obs, &self.actions)
    }
}

/// All positive-probability prefixes up to step `upto` under a history policy.
/// The policy is queried at steps `1..upto` only.
pub fn enumerate_paths(pomdp: &TabularPomdp, policy: &dyn Policy, upto: usize, cap: usize) -> Result<Vec<Path>> {
    let width = (pomdp.num_states() * pomdp.num_observations() * pomdp.num_actions()) as f64;
    limits::check("trajectory enumeration", width.powi(upto as i32), cap)?;
    let mut paths = Vec::new();
    for (s, &p) in pomdp.init().iter().enumerate() {
        for (o, &q) in pomdp.emission(1, s).iter().enumerate() {
            if p * q > 0.0 {
                paths.push(Path { states: vec![s], obs: vec![o], actions: vec![], prob: p * q });
            }
        }
    }
    for step in 1..upto {
        let mut next = Vec::new();
        for path in &paths {
            let dist = policy.action_distribution(path.history())?;
            let s = *path.states.last().expect("nonempty");
            for (a, &pa) in dist.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                for (s2, &pt) in pomdp.transition(step, s, a).iter().enumerate() {
                    if pt <= 0.0 {
                        continue;
                    }
                    for (o2, &po) in pomdp.emission(step + 1, s2).iter().enumerate() {
                        if po > 0.0 {
                            let mut p = path.clone();
                            p.states.push(s2);
                            p.obs.push(o2);
                            p.actions.push(a);
                            p.prob *= pa * pt * po;
                            next.push(p);
                        }
                    }
                }
            }
        }
        paths = next;
    }
    Ok(paths)
}

/// Law of `z_h` (with `h` the paths' length) implied by enumerated paths.
pub fn path_suffix_marginal(paths: &[Path], memory: usize) -> BTreeMap<Suffix, f64> {
    let mut out = BTreeMap::new();
    for p in paths {
        *out.entry(p.history().suffix(memory)).or_insert(0.0) += p.prob;
    }
    out
}

/// Expected total reward over enumerated full-horizon paths.
pub fn path_value(pomdp: &TabularPomdp, paths: &[Path]) -> f64 {
    paths
        .iter()
        .map(|p| p.prob * p.obs.iter().enumerate().map(|(i, &o)| pomdp.reward(i + 1, o)).sum::<f64>())
        .sum()
}
