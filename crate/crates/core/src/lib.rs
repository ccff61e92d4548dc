//! Security games over the cell transmission model.
//!
//! The crate models attacks on traffic-signal schedules as a three-stage
//! game: the defender configures anomaly detectors, the attacker tampers with
//! signals, and the defender mitigates once an alarm fires. Congestion comes
//! from a linear program over the cell transmission model; detection delays
//! come from a Gaussian-process detector trained on simulated traffic.

pub mod anneal;
pub mod attack;
pub mod ctm_lp;
pub mod error;
pub mod game;
pub mod experiment;
pub mod gp;
pub mod lp;
pub mod netgen;
pub mod network;
pub mod proportions;
pub mod setcover;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
