//! Mechanical DNA unzipping as a killed birth-death walk in a base-sequence
//! environment, with exact Bayesian recovery of the sequence from replica
//! statistics.
//!
//! Modules:
//! - [`energy_model`]: bases, binding energies, force profiles, jump law.
//! - [`walker`]: discrete and continuous walks and replica ensembles.
//! - [`rate_theory`]: closed-form escape probabilities, count laws and error rates.
//! - [`inference`]: site posteriors, chain MAP decoding and error probabilities.
//! - [`oracle`]: brute-force enumeration used to cross-check [`inference`].
//! - [`force_protocols`]: force windows, force ladders and energy estimation.
//! - [`io`]: CSV and JSON formats.

pub mod energy_model;
pub mod error;
pub mod force_protocols;
pub mod inference;
pub mod io;
pub mod numeric;
pub mod oracle;
pub mod rate_theory;
pub mod walker;

pub use energy_model::{Base, BaseSequence, EnergyTable, Environment, ForceField, Landscape, Model, ModelParams};
pub use error::{Error, Result};
pub use walker::{AggregateStats, Execution, Mode, SeedSpec, WalkStats};
