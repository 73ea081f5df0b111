//! Models, exact analysis and learners for POMDPs whose latent state is a
//! function of the last `m` observations and actions.

pub mod decode;
pub mod environments;
pub mod error;
pub mod harness;
pub mod io;
pub mod isrl;
pub mod limits;
pub mod megastate;
pub mod metrics;
pub mod mgolf;
pub mod model;
pub mod olive;
pub mod oracle;
pub mod policy;
pub mod simulate;
pub mod suffix;

pub use error::{Error, Result};
pub use model::{Decoder, PomdpParts, TabularPomdp};
pub use policy::{compose, Block, BlockPolicy, History, HistoryPolicy, MixturePolicy, Policy, SuffixPolicy};
pub use suffix::Suffix;
