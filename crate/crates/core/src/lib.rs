//! Energy disaggregation with linear dynamical device models.
//!
//! Each appliance is a discrete-time LTI single-input single-output system
//! whose output is its power draw and whose input is its setting. The
//! aggregate meter signal is explained by choosing sparse, piecewise-constant
//! inputs for every device in a library of models.
//!
//! Modules:
//!
//! - [`model`]: device models, simulation, step responses, DC gain, random stable models
//! - [`sysid`]: plug-level change detection and ARX identification
//! - [`ingest`]: emonTx CSV parsing, resampling, signal CSV, channel summation
//! - [`scenario`]: synthetic problems with ground truth
//! - [`engine`]: greedy and beam-search disaggregation
//! - [`eval`]: event matching and error metrics
//! - [`cli`]: the `nilm` command-line front end

pub mod cli;
pub mod engine;
mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod scenario;
mod signal;
pub mod sysid;

pub use engine::{disaggregate, disaggregate_beam, DisaggregationResult, EngineParams, EventKind, LoggedEvent};
pub use error::{Error, Result};
pub use model::{DeviceModel, StateVector};
pub use scenario::Scenario;
pub use signal::{PiecewiseInput, SignalSeries};
