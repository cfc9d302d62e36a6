//! Reference dynamics: deterministic viscous Burgers with its Cole–Hopf
//! closed form, the limiting common-noise SPDE, and inviscid
//! characteristics.

pub mod burgers;
pub mod characteristics;
pub mod cole_hopf;
pub mod spde;

use thiserror::Error;

pub use burgers::{burgers_drift, burgers_solve, BurgersSolver, Trajectory};
pub use characteristics::inviscid_shock_time;
pub use cole_hopf::{cole_hopf, ColeHopf};
pub use spde::{ito_euler_path, spde_v_shift_oracle, SpdeSolver, SpectralState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("CFL violation at t = {t}: dt * max|u| * 2 pi K = {number} >= 1")]
    CflViolation { t: f64, number: f64 },
    #[error("initial data has mean {0}; the Cole-Hopf potential needs mean zero")]
    NonZeroMean(f64),
    #[error("initial data is non-decreasing; characteristics never cross")]
    NoShock,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
