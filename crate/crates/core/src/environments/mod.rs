//! Built-in models and the function classes used with them.

mod decoys;
mod hadamard;
mod lock;
mod random;

pub use decoys::{decoy_class, random_function};
pub use hadamard::{make_hadamard_instance, sylvester_hadamard, HadamardInstance, HadamardObservations};
pub use lock::{lock_special_action, make_combination_lock, LOCK_BAD, LOCK_GOOD};
pub use random::{make_random_decodable, RandomInstance, RandomSpec};

use crate::decode::verify_decodability;
use crate::error::{Error, Result};
use crate::model::{PomdpParts, TabularPomdp};

/// Validates `parts` and attaches the decoder constructed at `parts.memory`.
pub(crate) fn with_constructed_decoder(parts: PomdpParts) -> Result<TabularPomdp> {
    let bare = TabularPomdp::new(parts)?;
    let report = verify_decodability(&bare, bare.memory())?;
    match report.decoder {
        Some(d) => bare.with_decoder(Some(d)),
        None => {
            let (witness, states) = report.witness.expect("witness");
            Err(Error::NotDecodable { memory: bare.memory(), witness, states })
        }
    }
}
