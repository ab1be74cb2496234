//! Reduced-order models of squeeze-film damping for an electrostatically
//! actuated clamped-clamped microbeam.
//!
//! The crate provides
//!
//! - modal bases for the beam and the film pressure ([`basis`]),
//! - the coupled modal-projection model and its assembly ([`rom`]),
//! - implicit time integration and pull-in detection ([`sim`]),
//! - a trajectory piecewise-linear acceleration ([`tpwl`]),
//! - a trajectory-independent piecewise-linear model over mechanical
//!   coordinates ([`pwl_mech`]),
//! - a finite-difference full-order solver used as an oracle ([`oracle`]).

pub mod basis;
pub mod cli;
pub mod beam;
pub mod config;
pub mod error;
pub mod quadrature;
pub mod rom;
pub mod squeeze;
pub mod state;

pub use config::DeviceConfig;
pub use error::{Error, Result};
pub use rom::{Coefficients, RomSystem};
pub use state::StateVector;
pub mod io;
pub mod matrix_serde;
pub mod newton;
pub mod oracle;
pub mod pwl_mech;
pub mod sim;
pub mod tpwl;
pub mod weights;
