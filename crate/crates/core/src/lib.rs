//! Fault-tolerant hexarotor flight and precision-landing library.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation: the torque-force model and control allocation, rotor-failure
//! reconfiguration, rigid-body dynamics, nested PID control, the observer bank
//! used for fault detection and identification, the simulated downward camera,
//! the fixed-gain position fusion, the landing state machine, the framed link
//! codec between the two on-board computers, and the simulation engine that
//! ties them together. File formats, logging and the CLI live in the
//! `hexaland` crate.
//!
//! Frames: inertial frame is north-east-down (z down), body frame is
//! forward-right-down. Rotor forces are non-negative magnitudes along each
//! rotor's thrust direction, which is body `-z` for an untilted rotor.

#![no_std]

extern crate alloc;

pub mod allocation;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod fdi;
pub mod geometry;
pub mod link;
pub mod math;
pub mod mission;
pub mod noise;
pub mod reconfig;
pub mod scenario;
pub mod sim;
pub mod vision;

pub use error::{Error, Result};

/// Number of rotors on the vehicle.
pub const ROTOR_COUNT: usize = 6;

/// Standard gravity [m/s²].
pub const GRAVITY: f64 = 9.81;
