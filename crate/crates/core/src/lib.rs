//! Aggressive-comment dynamics in online discussions.
//!
//! The crate covers four layers that share one set of parameter types:
//!
//! * [`corpus`]: annotated comment records, CSV ingestion, validation and
//!   synthetic corpus generation from known parameters.
//! * [`stats`]: conditional-probability estimation with Wilson intervals,
//!   marginal shares and pairwise Cramér's V association.
//! * [`meanfield`]: the deterministic recurrence for the aggressive
//!   fraction, its equilibria under soft (injection) and hard (deletion)
//!   moderation, and the back-solver from observed equilibrium/floor pairs.
//! * [`montecarlo`]: per-comment stochastic simulation producing seeded,
//!   reproducible ensembles that track the mean-field trajectory.
//!
//! [`cli`] wires these into the `aggrodyn` command-line tool.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod fmt;
pub mod meanfield;
pub mod montecarlo;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};
pub use meanfield::{
    Composites, ControlPolicy, EquilibriumReport, ModelParams, Regime, Trajectory,
};
