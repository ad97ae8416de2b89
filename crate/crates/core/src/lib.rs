//! Device-independent certification of one-shot distillable entanglement
//! from CHSH game statistics.
//!
//! The crate is organised bottom-up:
//!
//! - [`quantum`]: density matrices, Bell basis, twirling, Jordan blocks, entropies.
//! - [`chsh`]: strategies, exact winning probabilities and the ω ↔ β map.
//! - [`entropy`]: the single-round conditional entropy bound for Bell-diagonal
//!   states together with an independent brute-force optimiser.
//! - [`rates`]: tradeoff functions, η / η_opt, certified log L and the
//!   parameter optimiser.
//! - [`sim`]: sequential Monte Carlo execution of the test protocol and its
//!   modified (projected and twirled) variant against pluggable devices.
//! - [`cli`]: the `diec` command surface (CSV / JSON emitters).
//!
//! Logarithms are base 2 throughout unless a function says otherwise.

pub mod chsh;
pub mod cli;
pub mod entropy;
mod error;
pub mod optimize;
pub mod quantum;
pub mod rates;
pub mod reference;
pub mod sim;

pub use error::{Error, Result};
