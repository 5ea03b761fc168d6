//! School-choice markets where students can buy priority by misrepresenting
//! their address.
//!
//! The crate covers the economy model ([`market`]), the individual best
//! response ([`deception`]), IA and DA ([`mechanisms`]), market-clearing
//! cutoffs ([`equilibrium`]), envy audits ([`envy`]), difference-in-differences
//! estimation ([`econometrics`]), the reform counterfactual ([`policy`]) and
//! JSON scenarios ([`scenario`]).

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Per-student and per-school loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod deception;
pub mod econometrics;
pub mod envy;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod instances;
pub mod market;
pub mod mechanisms;
pub mod policy;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
