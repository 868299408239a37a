//! Attitude control of a small satellite with magnetic torquers and
//! drag panels: dynamics, linearized models, Riccati/LQR and MPC
//! controllers, controllability tests and a closed-loop simulator.

pub mod analysis;
pub mod attitude;
pub mod config;
pub mod control;
pub mod controllability;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod linmodel;
pub mod numerics;
pub mod sim;

pub use error::{Error, ErrorCategory, Result};
