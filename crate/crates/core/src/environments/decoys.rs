//! Function classes made of `Q*` and corrupted copies of it.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::{FunctionClassPair, Oracle, QFunction};

const MAX_DRAWS: usize = 1000;

/// `F = {decoy_1, .., decoy_n, Q*}`. Each decoy is `Q*` with its action values
/// rotated by one position at a random nonempty set of steps in `[1, H-1]`;
/// duplicates (and copies of `Q*`) are redrawn. `G` closes `F` under backups.
pub fn decoy_class(oracle: &Oracle<'_>, num_decoys: usize, seed: u64) -> Result<FunctionClassPair> {
    let qstar = oracle.qstar()?;
    let horizon = qstar.horizon();
    if horizon < 2 && num_decoys > 0 {
        return Err(Error::InvalidArgument("decoys need a horizon of at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decoys: Vec<QFunction> = Vec::new();
    let mut draws = 0;
    while decoys.len() < num_decoys {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::RetriesExhausted {
                retries: MAX_DRAWS,
                reason: format!("only {} distinct decoys found", decoys.len()),
            });
        }
        let count = rng.random_range(1..horizon);
        let steps = sample(&mut rng, horizon - 1, count);
        let mut tables = qstar.tables().to_vec();
        for i in steps.iter() {
            for values in tables[i].values_mut() {
                values.rotate_left(1);
            }
        }
        let f = QFunction::new(format!("decoy_{}", decoys.len() + 1), qstar.memory(), qstar.num_actions(), tables)?;
        if f.tables() != qstar.tables() && decoys.iter().all(|d| d.tables() != f.tables()) {
            decoys.push(f);
        }
    }
    decoys.push(qstar);
    FunctionClassPair::with_backups(oracle, decoys)
}

/// A function with i.i.d. uniform values in `[0, 1]` on every reachable
/// suffix; its greedy policy is a random deterministic suffix policy.
pub fn random_function(oracle: &Oracle<'_>, name: &str, seed: u64) -> Result<QFunction> {
    let pomdp = oracle.pomdp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = (1..=pomdp.horizon())
        .map(|h| {
            oracle
                .reachable(h)
                .map(|z| (z.clone(), (0..pomdp.num_actions()).map(|_| rng.random::<f64>()).collect()))
                .collect()
        })
        .collect();
    QFunction::new(name, pomdp.memory(), pomdp.num_actions(), tables)
}
