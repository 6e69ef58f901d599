//! Exact distributions, information-spectrum quantities, and a simulator for
//! one-shot message compression with two senders and a receiver holding side
//! information.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`]: exact rational joint distributions over named variables.
//! * [`info`]: entropies, spectrum divergences and rate-region predicates.
//! * [`coding`]: convex split, sequential decoding and the receiver's test set.
//! * [`protocol`]: the executable two-sender protocol and its special cases.
//! * [`experiments`]: hard instances, the counterexample family, and
//!   shared-randomness reduction.
//! * [`lemmas`]: randomized property batteries with exact oracles.

pub mod coding;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod gen;
pub mod info;
pub mod lemmas;
pub mod numeric;
pub mod protocol;

pub use dist::{Assignment, EventSet, JointDist, Var};
pub use error::{Error, Result};
pub use numeric::Prob;
