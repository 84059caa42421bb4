//! Simulation engine. The vehicle is split like the real system: the flight
//! computer (dynamics, control, FDI) and the vision computer (camera,
//! estimator, mission) exchange nothing but encoded link frames.
//!
//! The two sides meet once per camera frame. At frame `k` the flight side
//! hands over an [`Exchange`] (link bytes plus the true body state, which the
//! simulated camera needs) and the vision side answers with link bytes. The
//! answer to frame `k` takes effect at frame `k + 1`, one frame of processing
//! latency, so both sides can run concurrently without changing the result.

mod flight;
mod vision;

use alloc::string::String;
use alloc::vec::Vec;

pub use flight::{FlightComputer, FlightSummary};
pub use vision::{VisionComputer, VisionSummary};

use crate::dynamics::{RigidBodyState, ScheduledFailure};
use crate::error::Result;
use crate::estimator::CorrectionSource;
use crate::fdi::HYPOTHESES;
use crate::math::Vec3;
use crate::mission::{LandingPhase, PhaseTransition};
use crate::noise::NoiseStream;
use crate::scenario::Scenario;
use crate::vision::MarkerId;
use crate::ROTOR_COUNT;

/// Attitude error bound used for the recovery time [deg].
pub const RECOVERY_BOUND_DEG: f64 = 5.0;
/// The attitude counts as recovered once it stays within the bound this long [s].
pub const RECOVERY_SETTLE_TIME: f64 = 1.0;

/// Traffic from the flight side at one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub frame: u64,
    pub t: f64,
    pub bytes: Vec<u8>,
    /// Ground truth for the simulated camera only.
    pub truth: RigidBodyState,
    /// Simulated time is used up; this is the last frame.
    pub last: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightRecord {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Roll, pitch, yaw [rad].
    pub euler: [f64; 3],
    pub angular_rate: Vec3,
    pub setpoint_euler: [f64; 3],
    /// Commanded velocity when following the vision computer.
    pub velocity_command: Option<Vec3>,
    pub vertical_force: f64,
    pub forces_cmd: [f64; ROTOR_COUNT],
    pub forces: [f64; ROTOR_COUNT],
    pub servo_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdiRecord {
    pub t: f64,
    pub residues: [f64; HYPOTHESES],
    pub believed: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub t: f64,
    pub marker: MarkerId,
    pub p_c: Vec3,
    pub corners: [[f64; 2]; 4],
    /// Vehicle position relative to the marker.
    pub y: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub t: f64,
    pub estimate: Vec3,
    pub truth: Vec3,
    pub source: CorrectionSource,
    pub marker: Option<MarkerId>,
    pub innovation: Option<Vec3>,
    pub phase: LandingPhase,
}

pub trait FlightRecorder {
    fn flight(&mut self, _r: &FlightRecord) {}
    fn fdi(&mut self, _r: &FdiRecord) {}
}

pub trait VisionRecorder {
    fn observation(&mut self, _r: &ObservationRecord) {}
    fn estimate(&mut self, _r: &EstimateRecord) {}
    fn phase(&mut self, _r: &PhaseTransition) {}
}

impl FlightRecorder for () {}
impl VisionRecorder for () {}

/// Keeps every record in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryRecorder {
    pub flight: Vec<FlightRecord>,
    pub fdi: Vec<FdiRecord>,
    pub observations: Vec<ObservationRecord>,
    pub estimates: Vec<EstimateRecord>,
    pub phases: Vec<PhaseTransition>,
}

impl FlightRecorder for MemoryRecorder {
    fn flight(&mut self, r: &FlightRecord) {
        self.flight.push(*r);
    }
    fn fdi(&mut self, r: &FdiRecord) {
        self.fdi.push(*r);
    }
}

impl VisionRecorder for MemoryRecorder {
    fn observation(&mut self, r: &ObservationRecord) {
        self.observations.push(*r);
    }
    fn estimate(&mut self, r: &EstimateRecord) {
        self.estimates.push(*r);
    }
    fn phase(&mut self, r: &PhaseTransition) {
        self.phases.push(*r);
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TransitionReport {
    pub t: f64,
    pub from: LandingPhase,
    pub to: LandingPhase,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub final_time: f64,
    pub final_phase: LandingPhase,
    pub touchdown_time: Option<f64>,
    /// Horizontal distance to the marker center at touchdown [m].
    pub touchdown_error: Option<f64>,
    pub injected_fault: Option<ScheduledFailure>,
    pub believed_state: i32,
    pub detection_time: Option<f64>,
    pub identification_time: Option<f64>,
    pub detection_latency: Option<f64>,
    pub identification_latency: Option<f64>,
    pub identified_correctly: Option<bool>,
    /// Time after identification until the attitude enters the recovery
    /// bound of its setpoint and stays there for the settle time [s].
    pub recovery_time: Option<f64>,
    /// Largest distance from the hold setpoint (hold mode) [m].
    pub max_hold_error: Option<f64>,
    /// Estimate error at the end of the run [m].
    pub final_estimate_error: f64,
    pub transitions: Vec<TransitionReport>,
    pub attitude_messages_sent: u64,
    pub attitude_messages_received: u64,
    pub frames_dropped_flight: usize,
    pub frames_dropped_vision: usize,
}

impl RunReport {
    pub fn assemble(scenario: &Scenario, flight: &FlightSummary, vision: &VisionSummary) -> Self {
        let fault = scenario.faults.first_failure().copied();
        let latency = |t: Option<f64>| match (t, fault) {
            (Some(t), Some(f)) => Some(t - f.time),
            _ => None,
        };
        Self {
            name: scenario.name.clone(),
            seed: scenario.seed(),
            final_time: flight.final_time,
            final_phase: vision.phase,
            touchdown_time: vision.touchdown.map(|(t, _)| t),
            touchdown_error: vision.touchdown.map(|(_, e)| e),
            injected_fault: fault,
            believed_state: flight.status.believed.code(),
            detection_time: flight.status.detection_time,
            identification_time: flight.status.identification_time,
            detection_latency: latency(flight.status.detection_time),
            identification_latency: latency(flight.status.identification_time),
            identified_correctly: fault
                .map(|f| flight.status.believed.code() == f.rotor.number() as i32),
            recovery_time: flight.recovery_time,
            max_hold_error: flight.max_hold_error,
            final_estimate_error: vision.final_estimate_error,
            transitions: vision
                .transitions
                .iter()
                .map(|p| TransitionReport {
                    t: p.t,
                    from: p.from,
                    to: p.to,
                })
                .collect(),
            attitude_messages_sent: flight.attitude_messages_sent,
            attitude_messages_received: vision.attitude_messages_received,
            frames_dropped_flight: flight.frames_dropped,
            frames_dropped_vision: vision.frames_dropped,
        }
    }
}

/// Passes encoded frames through a lossy channel: with probability `p` a
/// frame gets one byte corrupted, which the receiver's checksum rejects.
pub(crate) fn transmit(frame: Vec<u8>, p: f64, noise: &mut NoiseStream, out: &mut Vec<u8>) {
    let mut frame = frame;
    if p > 0.0 && noise.uniform() < p {
        let i = ((noise.uniform() * frame.len() as f64) as usize).min(frame.len() - 1);
        let mask = 1u8 << ((noise.uniform() * 8.0) as u32).min(7);
        frame[i] ^= mask;
    }
    out.extend(frame);
}

/// Runs both sides in a single context. The concurrent runner in the
/// `hexaland` crate produces the same records and report.
pub fn run<F: FlightRecorder, V: VisionRecorder>(
    scenario: &Scenario,
    flight_rec: &mut F,
    vision_rec: &mut V,
) -> Result<RunReport> {
    scenario.validate()?;
    let mut flight = FlightComputer::new(scenario)?;
    let mut vision = VisionComputer::new(scenario)?;
    let mut exchange = flight.start();
    let mut pending = Vec::new();
    loop {
        let reply = vision.process(&exchange, vision_rec);
        let next = flight.advance(&pending, flight_rec)?;
        if exchange.last || vision.finished() {
            break;
        }
        pending = reply;
        exchange = next;
    }
    Ok(RunReport::assemble(
        scenario,
        &flight.summary(),
        &vision.summary(),
    ))
}
