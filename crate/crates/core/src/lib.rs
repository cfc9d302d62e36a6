//! Stochastic-Lagrangian particle approximation of the viscous Burgers
//! equation on the unit torus, with periodic resetting of the flow maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`] periodic grids, spectral calculus, discrete norms and the
//!   monotone periodic interpolant every other module relies on.
//! * [`noise`] addressable Wiener increment streams keyed by
//!   `(seed, copy, step)` and the averaged common noise.
//! * [`flow_maps`] monotone circle maps in displacement form, Euler–Maruyama
//!   stepping, inversion and Jacobian monitoring.
//! * [`particle`] the N-copy reset/no-reset particle system.
//! * [`reference`] deterministic Burgers (plus the Cole–Hopf exact
//!   solution), the limiting common-noise SPDE, and inviscid characteristics.
//! * [`experiments`] Monte Carlo drivers and log-log rate fits.
//! * [`config`] and [`output`] the declarative config format, CSV tables and
//!   run manifests used by the command-line front end.

pub mod config;
pub mod experiments;
pub mod fields;
pub mod flow_maps;
pub mod noise;
pub mod output;
pub mod particle;
pub mod reference;

pub use fields::{PeriodicGrid, ScalarField, Spectrum};
pub use flow_maps::{CircleDiffeo, InverseMap};
pub use noise::{CommonNoisePath, NoiseDriver};
pub use particle::{EnsembleState, RunConfig, RunReport, StopReason};

/// Default viscosity; the normalisation under which the noise coefficient
/// `sqrt(2 nu)` equals one.
pub const DEFAULT_NU: f64 = 0.5;

/// Default Jacobian threshold below which a flow map is treated as singular.
pub const DEFAULT_EPS_JAC: f64 = 1e-3;
