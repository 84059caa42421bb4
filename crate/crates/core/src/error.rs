use thiserror::Error;

use crate::geometry::RotorIndex;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Validation(alloc::string::String),

    #[error("rotor {failed} failure cannot be compensated by any reconfigurable rotor")]
    UnsupportedFailure { failed: RotorIndex },

    #[error("rotor index {0} out of range 1..=6")]
    RotorIndex(usize),

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },

    #[error("touchdown report requested in phase {0:?}")]
    InvalidPhase(crate::mission::LandingPhase),
}

pub(crate) fn invalid(msg: impl Into<alloc::string::String>) -> Error {
    Error::Validation(msg.into())
}
