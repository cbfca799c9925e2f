//! Market equilibria for private goods (Fisher), public goods (Lindahl)
//! and chores: verification, duality maps, convex programs and dynamics.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chores;
pub mod dynamics;
pub mod error;
mod forest;
pub mod market;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod programs;
pub mod utilities;

pub use dynamics::{run, DynamicKind, DynamicsConfig, DynamicsTrace, Init, TraceRecord};
pub use error::{Error, Result};
pub use market::{
    dualize, dualize_equilibrium, verify, verify_fisher, verify_fisher_chores, verify_lindahl, verify_lindahl_chores,
    Agents, Equilibrium, MarketInstance, MarketKind, ResidualReport,
};
pub use utilities::{DisutilityFamily, UtilityFamily};

/// Dense row-major matrix: one row per agent, one column per item.
pub type Matrix = Vec<Vec<f64>>;
