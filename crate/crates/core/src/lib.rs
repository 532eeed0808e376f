//! Coupled awareness-epidemic dynamics.
//!
//! Two SIR processes share one population: a pathogen (S, I, R) and
//! information about it (unaware U, active-aware A1, inactive-aware A2).
//! The nine joint compartments are integrated as a mean-field ODE system.
//! On top of the integrator the crate provides scalar observables,
//! next-generation-matrix reproduction numbers, parameter-grid sweeps,
//! correlation statistics, empirical case-data ingestion and per-wave
//! parameter fitting.

pub mod fit;
pub mod ingest;
pub mod model;
pub mod observables;
pub mod optim;
pub mod reproduction;
pub mod series;
pub mod special;
pub mod stats;
pub mod sweep;

pub use model::{integrate, rk4_step, CompartmentState, ModelError, ModelParams, Trajectory};
pub use observables::{EquilibriumDecomposition, Observables};
pub use series::{DateSeries, SeriesError, TimeSeries};
