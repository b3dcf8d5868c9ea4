//! Step-up and step-down multiple testing: critical-value schedules, exact
//! false discovery rate computations under Dirac-uniform configurations,
//! calibration, asymptotics and Monte Carlo validation.

pub mod asymptotics;
pub mod calibration;
pub mod error;
pub mod exactdu;
pub mod exec;
pub mod models;
pub mod montecarlo;
pub mod schedules;
pub mod testing;

pub use error::{Error, Result};
pub use exec::Exec;
