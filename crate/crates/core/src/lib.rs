//! Thermal state estimation for battery cell strings: lumped thermal models,
//! H-infinity observer synthesis by semidefinite programming, and greedy
//! sensor placement.

pub mod config;
pub mod error;
pub mod export;
pub mod hinf;
pub mod linalg;
pub mod model;
pub mod placement;
pub mod sdp;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{CellParams, SensorSelection, ThermalModel};
