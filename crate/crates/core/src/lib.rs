//! Linear-optics model of measurement-device-independent QKD with an
//! entangled photon source between two Bell-state measurements.
//!
//! Alice and Bob send phase-randomized weak coherent pulses to the relays
//! David and Ethan; Charles, in the middle, sends one half of a type-II
//! down-conversion pair to each relay. A key bit is kept when both relays
//! announce a Bell state. The crate computes the four-fold coincidence
//! statistics exactly (up to a photon-number truncation), turns them into
//! gains, error rates and key rates, bounds the single-photon quantities
//! with decoy states and finite statistics, and optimizes intensities and
//! relay placement as a function of channel loss.

pub mod channel;
pub mod coincidence;
pub mod decoy;
pub mod error;
pub mod fock;
pub mod interference;
pub mod math;
pub mod optimize;
pub mod rates;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::{Links, Scenario};
