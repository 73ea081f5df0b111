//! Suffix-indexed value tables and finite function classes.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::policy::SuffixPolicy;
use crate::suffix::Suffix;

use super::Oracle;

/// Tolerance used when comparing tables for realizability and completeness.
pub const CLASS_TOLERANCE: f64 = 1e-10;

const RANGE_SLACK: f64 = 1e-9;

/// One step-`h` table: reachable suffix to per-action values.
pub type StepTable = BTreeMap<Suffix, Vec<f64>>;

/// Candidate action-value function `f_h(z, a)` for `h = 1..=H`; `f_{H+1} = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QFunction {
    name: String,
    memory: usize,
    num_actions: usize,
    tables: Vec<StepTable>,
}

impl QFunction {
    pub fn new(name: impl Into<String>, memory: usize, num_actions: usize, tables: Vec<StepTable>) -> Result<Self> {
        for (z, v) in tables.iter().flat_map(|t| t.iter()) {
            if v.len() != num_actions {
                return Err(Error::InvalidArgument(format!("{z}: expected {num_actions} action values")));
            }
            if v.iter().any(|x| !x.is_finite() || *x < -RANGE_SLACK || *x > 1.0 + RANGE_SLACK) {
                return Err(Error::InvalidArgument(format!("{z}: values {v:?} outside [0, 1]")));
            }
        }
        for (h, t) in tables.iter().enumerate() {
            if let Some(z) = t.keys().find(|z| z.step() != h + 1 || z.len() != z.step().min(memory)) {
                return Err(Error::InvalidArgument(format!("suffix {z} filed under step {}", h + 1)));
            }
        }
        Ok(Self { name: name.into(), memory, num_actions, tables })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, h: usize) -> &StepTable {
        &self.tables[h - 1]
    }

    pub fn tables(&self) -> &[StepTable] {
        &self.tables
    }

    pub fn values(&self, z: &Suffix) -> Result<&[f64]> {
        self.tables
            .get(z.step() - 1)
            .and_then(|t| t.get(z))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UndefinedEntry { step: z.step(), suffix: z.clone() })
    }

    pub fn value(&self, z: &Suffix, action: usize) -> Result<f64> {
        Ok(self.values(z)?[action])
    }

    /// `max_a f_h(z, a)`, zero past the horizon.
    pub fn max_value(&self, z: &Suffix) -> Result<f64> {
        if z.step() > self.horizon() {
            return Ok(0.0);
        }
        Ok(self.values(z)?.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Greedy action with ties to the lowest index.
    pub fn greedy_action(&self, z: &Suffix) -> Result<usize> {
        Ok(argmax(self.values(z)?))
    }

    /// The deterministic policy `pi_f`, defined on every suffix in the tables.
    pub fn greedy_policy(&self) -> SuffixPolicy {
        let choices = self
            .tables
            .iter()
            .map(|t| t.iter().map(|(z, v)| (z.clone(), argmax(v))).collect::<HashMap<_, _>>())
            .collect();
        SuffixPolicy::deterministic(self.horizon(), self.memory, self.num_actions, choices)
            .expect("argmax is a valid action")
    }

    /// Largest absolute difference at step `h` over `suffixes`; infinite if either
    /// table misses one of them.
    pub fn distance_at<'a>(&self, other: &QFunction, h: usize, suffixes: impl IntoIterator<Item = &'a Suffix>) -> f64 {
        let mut worst = 0.0f64;
        for z in suffixes {
            match (self.tables[h - 1].get(z), other.tables.get(h - 1).and_then(|t| t.get(z))) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.iter().zip(b) {
                        worst = worst.max((x - y).abs());
                    }
                }
                _ => return f64::INFINITY,
            }
        }
        worst
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = a;
        }
    }
    best
}

/// Finite classes `F` and `G` with `F` a prefix of `G`.
#[derive(Clone, Debug)]
pub struct FunctionClassPair {
    functions: Vec<QFunction>,
    auxiliary: Vec<QFunction>,
    realizable: Option<bool>,
    complete: Option<bool>,
    qstar_index: Option<usize>,
}

impl FunctionClassPair {
    /// `G = F ∪ extra`, flags unknown until [`FunctionClassPair::check`] runs.
    pub fn new(functions: Vec<QFunction>, auxiliary: Vec<QFunction>) -> Result<Self> {
        let Some(first) = functions.first() else {
            return Err(Error::InvalidArgument("function class is empty".into()));
        };
        let shape = (first.memory(), first.num_actions(), first.horizon());
        if functions
            .iter()
            .chain(&auxiliary)
            .any(|f| (f.memory(), f.num_actions(), f.horizon()) != shape)
        {
            return Err(Error::InvalidArgument("functions disagree on memory, actions or horizon".into()));
        }
        Ok(Self { functions, auxiliary, realizable: None, complete: None, qstar_index: None })
    }

    /// Closes `F` under exact backups (whole-function `g_h = T_h f_{h+1}`) and checks both flags.
    pub fn with_backups(oracle: &Oracle<'_>, functions: Vec<QFunction>) -> Result<Self> {
        let mut auxiliary: Vec<QFunction> = Vec::new();
        for f in &functions {
            let g = oracle.backup_function(f)?.renamed(format!("T({})", f.name()));
            if !functions.iter().chain(&auxiliary).any(|h| h.tables == g.tables) {
                auxiliary.push(g);
            }
        }
        let mut pair = Self::new(functions, auxiliary)?;
        pair.check(oracle)?;
        Ok(pair)
    }

    pub fn functions(&self) -> &[QFunction] {
        &self.functions
    }

    pub fn auxiliary(&self) -> &[QFunction] {
        &self.auxiliary
    }

    pub fn len_f(&self) -> usize {
        self.functions.len()
    }

    pub fn len_g(&self) -> usize {
        self.functions.len() + self.auxiliary.len()
    }

    /// Element `i` of `G` (the first `|F|` are `F`).
    pub fn g(&self, i: usize) -> &QFunction {
        if i < self.functions.len() {
            &self.functions[i]
        } else {
            &self.auxiliary[i - self.functions.len()]
        }
    }

    pub fn realizable(&self) -> Option<bool> {
        self.realizable
    }

    pub fn complete(&self) -> Option<bool> {
        self.complete
    }

    /// Index of `Q*` in `F`, when known.
    pub fn qstar_index(&self) -> Option<usize> {
        self.qstar_index
    }

    pub(crate) fn set_flags(&mut self, realizable: Option<bool>, complete: Option<bool>, qstar_index: Option<usize>) {
        self.realizable = realizable;
        self.complete = complete;
        self.qstar_index = qstar_index;
    }

    /// Verifies realizability and completeness on reachable suffixes.
    pub fn check(&mut self, oracle: &Oracle<'_>) -> Result<()> {
        let horizon = oracle.pomdp().horizon();
        let qstar = oracle.qstar()?;
        let close = |a: &QFunction, b: &QFunction, h: usize| a.distance_at(b, h, oracle.reachable(h)) <= CLASS_TOLERANCE;
        self.qstar_index = self
            .functions
            .iter()
            .position(|f| (1..=horizon).all(|h| close(f, &qstar, h)));
        self.realizable = Some(self.qstar_index.is_some());
        let mut complete = true;
        'outer: for f in &self.functions {
            let g = oracle.backup_function(f)?;
            for h in 1..=horizon {
                if !(0..self.len_g()).any(|i| close(self.g(i), &g, h)) {
                    complete = false;
                    break 'outer;
                }
            }
        }
        self.complete = Some(complete);
        Ok(())
    }
}
