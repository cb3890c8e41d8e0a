//! Exact fair division of indivisible goods under additive valuations.
//!
//! Values are exact rationals throughout. Per-agent computations run on an integer
//! rescaling of the agent's row (see [`instance::ScaledValuation`]), so every comparison
//! is an exact integer comparison.

pub mod combinat;
pub mod divider;
pub mod efxpart;
pub mod error;
pub mod fairness;
pub mod generate;
pub mod instance;
pub mod itemset;
pub mod oracle;
pub mod shares;
pub mod value;

pub use error::{Error, Result};
pub use instance::{Allocation, Instance};
pub use itemset::ItemSet;
pub use value::ExactValue;
