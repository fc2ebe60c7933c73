//! Detection analysis for passive chemical microsensors drifting through a
//! small blood vessel.
//!
//! The crate covers the whole pipeline: the steady plume of a wall source
//! ([`chemfield`]), Poisson capture statistics and per-robot detection
//! hazards ([`poisson_detect`]), fleet-level true/false-positive rates and
//! ROC curves ([`continuum`]), and an independent discrete-event Monte Carlo
//! simulator used to cross-check the continuum numbers ([`montecarlo`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chemfield;
pub mod cli;
pub mod continuum;
pub mod error;
pub mod hydro;
pub mod montecarlo;
pub mod params;
pub mod poisson_detect;

pub use chemfield::{GridSpec, ScalarField};
pub use continuum::{DetectionRates, RocPoint};
pub use error::{Error, Result};
pub use hydro::Position;
pub use montecarlo::{TrialConfig, TrialEstimate};
pub use params::{Config, ScenarioParams};
