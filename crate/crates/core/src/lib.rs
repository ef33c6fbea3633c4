//! Construction, placement and verification of multi-spot steady states of
//! the two-species logistic Keller-Segel system in two dimensions.
//!
//! The asymptotic pipeline runs
//! [`model`] → [`liouville`] → [`sigma`] → [`greens`] → [`placement`] →
//! [`ansatz`], and [`pdesim`] integrates the full time-dependent system for
//! comparison.

pub mod ansatz;
pub mod error;
pub mod greens;
pub mod grid;
pub mod linalg;
pub mod liouville;
pub mod model;
pub mod ode;
pub mod pdesim;
pub mod placement;
pub mod radial;
pub mod sigma;

pub use error::{Error, Result};

pub use liouville::{CorrectionProfile, LiouvilleProfile};
pub use model::{AssumptionReport, BMatrix, ModelParams};
pub use grid::{Domain2D, Grid};
pub use sigma::SigmaSolution;
