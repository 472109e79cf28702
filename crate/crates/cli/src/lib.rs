//! Command-line front end: scenario configs, point evaluations, curve
//! scans and curve comparison.

pub mod app;
pub mod baseline;
pub mod compare;
pub mod config;
pub mod output;

pub use app::run;
