//! Multi-camera 3D multi-object tracking with track queries that reason
//! over their own past and forecast their future.

pub mod baselines;
pub mod error;
pub mod future;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod modes;
pub mod par;
pub mod past;
pub mod plot;
pub mod repro;
pub mod sim;
pub mod tracker;
pub mod train;
pub mod types;

pub use error::{Error, Result};
