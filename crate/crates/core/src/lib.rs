//! Ranking transmission lines of a DC power network by overload probability.
//!
//! The pipeline is:
//!
//! 1. [`case_io`] parses a MATPOWER case into a [`GridCase`].
//! 2. [`dc_model`] builds the linear injection-to-flow map `F = V_s P + V_d a`.
//! 3. [`stochastic`] describes and samples the random injections `P`.
//! 4. [`ranking`] turns samples into per-line overload scores with one of
//!    four estimators and ranks the lines.
//! 5. [`experiments`] replicates the whole procedure to measure how often
//!    each estimator picks the wrong lines.
//!
//! Internally all power quantities are per-unit on the case's MVA base.

pub mod case_io;
pub mod cases;
pub mod dc_model;
mod error;
pub mod experiments;
pub mod lp;
pub mod ranking;
pub mod rng;
pub mod stochastic;

pub use case_io::{susceptance, Branch, Bus, Generator, GridCase};
pub use dc_model::DcModel;
pub use error::{Error, Result};
pub use experiments::{FalseSelectionCurve, GroundTruth, GroundTruthSource, RankIntervalReport};
pub use ranking::{Algorithm, RateDiagnostics, ScoreTable, Thresholds};
pub use stochastic::{GaussianSpec, InjectionSpec, LaplaceSpec, SampleSet};
