//! Instance with Bellman rank linear in the number of observations.
//!
//! From `s_0` the first observation is uniform over `O = 2^k` values; action 0
//! leads to `s_1`, action 1 to `s_2`, both emitting a shared blank observation at
//! step 2. At step 3 `s_1` emits a terminal observation worth 1/2 and `s_2` one
//! worth 3/4. The decoy functions `f_i` overvalue action 0 exactly on the set
//! `S_i` of observations where column `i` of a Sylvester Hadamard matrix is +1.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{PomdpParts, TabularPomdp};
use crate::oracle::{FunctionClassPair, Oracle, QFunction, StepTable};

use super::with_constructed_decoder;

/// Observation indices of a Hadamard instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HadamardObservations {
    /// Number of informative first observations, `2^k`.
    pub informative: usize,
    pub blank: usize,
    pub half: usize,
    pub three_quarters: usize,
}

#[derive(Clone, Debug)]
pub struct HadamardInstance {
    pub pomdp: TabularPomdp,
    pub observations: HadamardObservations,
    /// `S_1..S_{O-1}` as sorted observation indices.
    pub sets: Vec<Vec<usize>>,
    /// `F = {Q*} ∪ {f_i}` closed into `G` by exact backups.
    pub classes: FunctionClassPair,
}

/// Sylvester construction of the `2^k x 2^k` Hadamard matrix.
pub fn sylvester_hadamard(exponent: u32) -> Vec<Vec<i64>> {
    let mut h = vec![vec![1i64]];
    for _ in 0..exponent {
        let n = h.len();
        let mut next = vec![vec![0i64; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

fn check_set_system(matrix: &[Vec<i64>], sets: &[Vec<usize>], size: usize) -> Result<()> {
    let col = |i: usize| matrix.iter().map(move |row| row[i]);
    for i in 1..size {
        if col(i).sum::<i64>() != 0 {
            return Err(Error::Construction(format!("column {i} is not orthogonal to the all-ones column")));
        }
        for j in 1..size {
            if i != j {
                let split: i64 = col(i).zip(col(j)).filter(|(a, _)| *a == 1).map(|(_, b)| b).sum();
                if split != 0 {
                    return Err(Error::Construction(format!("columns {i} and {j} are not balanced")));
                }
            }
        }
    }
    for (i, a) in sets.iter().enumerate() {
        if a.len() * 2 != size {
            return Err(Error::Construction(format!("|S_{}| = {} != O/2", i + 1, a.len())));
        }
        for (j, b) in sets.iter().enumerate() {
            if i != j {
                let inter = a.iter().filter(|o| b.contains(o)).count();
                if inter * 4 != size || (a.len() - inter) * 4 != size {
                    return Err(Error::Construction(format!("S_{} and S_{} overlap in {inter}", i + 1, j + 1)));
                }
            }
        }
    }
    Ok(())
}

fn build_model(size: usize) -> Result<(TabularPomdp, HadamardObservations)> {
    let obs = HadamardObservations { informative: size, blank: size, half: size + 1, three_quarters: size + 2 };
    let num_obs = size + 3;
    let point = |o: usize| {
        let mut p = vec![0.0; num_obs];
        p[o] = 1.0;
        p
    };
    let mut uniform = vec![1.0 / size as f64; size];
    uniform.extend([0.0; 3]);
    let to = |s: usize| {
        let mut p = vec![0.0; 3];
        p[s] = 1.0;
        p
    };
    let stay: Vec<Vec<Vec<f64>>> = (0..3).map(|s| vec![to(s), to(s)]).collect();
    let mut first = stay.clone();
    first[0] = vec![to(1), to(2)];
    let mut rewards = vec![vec![0.0; num_obs]; 3];
    rewards[2][obs.half] = 0.5;
    rewards[2][obs.three_quarters] = 0.75;
    let pomdp = with_constructed_decoder(PomdpParts {
        horizon: 3,
        memory: 2,
        num_states: 3,
        num_observations: num_obs,
        num_actions: 2,
        init: vec![1.0, 0.0, 0.0],
        transitions: vec![first, stay],
        emissions: vec![
            vec![uniform, point(obs.blank), point(obs.blank)],
            vec![point(obs.blank); 3],
            vec![point(obs.blank), point(obs.half), point(obs.three_quarters)],
        ],
        rewards,
        decoder: None,
    })?;
    Ok((pomdp, obs))
}

/// `f_S`: value 1 for action 0 on `set`, 0 for action 0 elsewhere, 3/4 for action 1;
/// step-2 entries repeat the step-1 value of the action that led there.
fn set_function(name: String, oracle: &Oracle<'_>, set: &[usize]) -> Result<QFunction> {
    let first = |o: usize, a: usize| if a == 1 { 0.75 } else if set.contains(&o) { 1.0 } else { 0.0 };
    let step1: StepTable =
        oracle.reachable(1).map(|z| (z.clone(), vec![first(z.last_observation(), 0), first(z.last_observation(), 1)])).collect();
    let step2: StepTable = oracle
        .reachable(2)
        .map(|z| {
            let v = first(z.observations()[0], z.actions()[0]);
            (z.clone(), vec![v, v])
        })
        .collect();
    let step3: StepTable = oracle.reachable(3).map(|z| (z.clone(), vec![0.0, 0.0])).collect();
    QFunction::new(name, 2, 2, vec![step1, step2, step3])
}

/// `exponent = k` gives `O = 2^k` informative observations. With
/// `all_ones_decoy`, the class also contains `f_0` built from the excluded
/// all-ones column (`S_0` = every observation).
pub fn make_hadamard_instance(exponent: u32, all_ones_decoy: bool) -> Result<HadamardInstance> {
    if exponent < 2 {
        return Err(Error::InvalidArgument("Hadamard instance needs exponent >= 2".into()));
    }
    let size = 1usize << exponent;
    let matrix = sylvester_hadamard(exponent);
    let sets: Vec<Vec<usize>> =
        (1..size).map(|i| (0..size).filter(|&o| matrix[o][i] == 1).collect()).collect();
    check_set_system(&matrix, &sets, size)?;
    let (pomdp, observations) = build_model(size)?;
    let oracle = Oracle::new(&pomdp)?;
    let mut functions = vec![oracle.qstar()?];
    for (i, set) in sets.iter().enumerate() {
        functions.push(set_function(format!("f_{}", i + 1), &oracle, set)?);
    }
    if all_ones_decoy {
        functions.push(set_function("f_0".into(), &oracle, &(0..size).collect::<Vec<_>>())?);
    }
    let classes = FunctionClassPair::with_backups(&oracle, functions)?;
    drop(oracle);
    Ok(HadamardInstance { pomdp, observations, sets, classes })
}

impl HadamardInstance {
    /// The decoys `f_1..f_{O-1}` (and `f_0` if present), in class order.
    pub fn decoys(&self) -> &[QFunction] {
        &self.classes.functions()[1..]
    }

    pub fn qstar(&self) -> &QFunction {
        &self.classes.functions()[0]
    }

    /// Membership table `observation -> sets containing it`, for diagnostics.
    pub fn membership(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out = BTreeMap::new();
        for (i, set) in self.sets.iter().enumerate() {
            for &o in set {
                out.entry(o).or_insert_with(Vec::new).push(i + 1);
            }
        }
        out
    }
}
