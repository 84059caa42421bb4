//! Waypoint mission and precision-landing state machine. Runs on the vision
//! computer at camera rate and outputs inertial velocity commands.
//!
//! ```text
//! EnRoute -> AcquireTarget -> CenterAndDescend -> FinalDescent -> Touchdown
//!                 |   ^              |    |              |
//!                 |   +--(lost)------+    +--(fault)-----+
//!                 +-> Aborted <----------(unresolved fault above the
//!                                         minimum recovery altitude)
//! ```

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::error::{invalid, Error, Result};
use crate::estimator::PoseEstimate;
use crate::fdi::{BelievedState, FaultStatus};
use crate::math::Vec3;
use crate::vision::LandingTarget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandingPhase {
    EnRoute,
    AcquireTarget,
    CenterAndDescend,
    FinalDescent,
    Touchdown,
    Aborted,
}

impl LandingPhase {
    pub fn code(&self) -> u8 {
        match self {
            LandingPhase::EnRoute => 0,
            LandingPhase::AcquireTarget => 1,
            LandingPhase::CenterAndDescend => 2,
            LandingPhase::FinalDescent => 3,
            LandingPhase::Touchdown => 4,
            LandingPhase::Aborted => 5,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LandingPhase::EnRoute => "en_route",
            LandingPhase::AcquireTarget => "acquire_target",
            LandingPhase::CenterAndDescend => "center_and_descend",
            LandingPhase::FinalDescent => "final_descent",
            LandingPhase::Touchdown => "touchdown",
            LandingPhase::Aborted => "aborted",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, LandingPhase::Touchdown | LandingPhase::Aborted)
    }

    /// Edges of the transition graph.
    pub fn can_transition_to(&self, next: LandingPhase) -> bool {
        use LandingPhase::*;
        matches!(
            (self, next),
            (EnRoute, AcquireTarget)
                | (EnRoute, Aborted)
                | (AcquireTarget, CenterAndDescend)
                | (AcquireTarget, Aborted)
                | (CenterAndDescend, FinalDescent)
                | (CenterAndDescend, AcquireTarget)
                | (CenterAndDescend, Aborted)
                | (FinalDescent, Touchdown)
                | (FinalDescent, Aborted)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionPlan {
    /// Inertial waypoints [m]; the last one is near the landing target.
    pub waypoints: Vec<[f64; 3]>,
    /// Height above the target at which the landing starts [m].
    pub landing_start_altitude: f64,
}

impl Default for MissionPlan {
    fn default() -> Self {
        Self {
            waypoints: alloc::vec![[0.0, 0.0, -6.0]],
            landing_start_altitude: 6.0,
        }
    }
}

impl MissionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(invalid("mission needs at least one waypoint"));
        }
        if self.waypoints.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("waypoints must be finite"));
        }
        if !(self.landing_start_altitude > 0.0) {
            return Err(invalid("landing_start_altitude must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub waypoint_tolerance: f64,
    pub waypoint_kp: f64,
    /// Speed clamp while en route and holding [m/s].
    pub cruise_speed: f64,
    /// Continuous sighting needed to start the landing [s].
    pub acquire_dwell: f64,
    pub acquire_timeout: f64,
    /// Marker unseen this long during the descent → back to AcquireTarget [s].
    pub target_lost_timeout: f64,
    pub centering_kp: f64,
    pub centering_tolerance: f64,
    /// Horizontal speed clamp during the landing [m/s].
    pub max_centering_speed: f64,
    pub descent_speed: f64,
    pub final_descent_altitude: f64,
    pub final_descent_speed: f64,
    pub touchdown_altitude: f64,
    /// Vertical speed below which the descent counts as stopped [m/s].
    pub touchdown_speed: f64,
    /// Stall time accepted as touchdown below `touchdown_stall_altitude` [s].
    pub touchdown_stall_time: f64,
    pub touchdown_stall_altitude: f64,
    /// Unresolved faults below this height do not abort the landing [m].
    pub min_recovery_altitude: f64,
    pub safe_altitude: f64,
    pub climb_speed: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            waypoint_tolerance: 0.5,
            waypoint_kp: 0.8,
            cruise_speed: 2.0,
            acquire_dwell: 0.5,
            acquire_timeout: 30.0,
            target_lost_timeout: 3.0,
            centering_kp: 0.8,
            centering_tolerance: 0.3,
            max_centering_speed: 0.5,
            descent_speed: 0.5,
            final_descent_altitude: 1.5,
            final_descent_speed: 0.3,
            touchdown_altitude: 0.05,
            touchdown_speed: 0.05,
            touchdown_stall_time: 2.0,
            touchdown_stall_altitude: 0.3,
            min_recovery_altitude: 3.0,
            safe_altitude: 10.0,
            climb_speed: 1.0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.waypoint_tolerance,
            self.waypoint_kp,
            self.cruise_speed,
            self.acquire_timeout,
            self.target_lost_timeout,
            self.centering_kp,
            self.centering_tolerance,
            self.max_centering_speed,
            self.descent_speed,
            self.final_descent_altitude,
            self.final_descent_speed,
            self.touchdown_altitude,
            self.touchdown_speed,
            self.touchdown_stall_time,
            self.touchdown_stall_altitude,
            self.safe_altitude,
            self.climb_speed,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid(
                "mission speeds, gains, timeouts and altitudes must be > 0",
            ));
        }
        if !(self.acquire_dwell >= 0.0 && self.min_recovery_altitude >= 0.0) {
            return Err(invalid(
                "acquire_dwell and min_recovery_altitude must be >= 0",
            ));
        }
        Ok(())
    }

    /// Largest command magnitude any phase can issue.
    pub fn speed_bound(&self) -> f64 {
        let landing = libm::hypot(
            self.max_centering_speed,
            self.descent_speed.max(self.final_descent_speed),
        );
        self.cruise_speed.max(landing).max(self.climb_speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionInput {
    pub t: f64,
    pub estimate: PoseEstimate,
    /// Velocity reported by the flight computer [m/s].
    pub velocity: Vec3,
    pub marker_visible: bool,
    pub fault: FaultStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransition {
    pub t: f64,
    pub from: LandingPhase,
    pub to: LandingPhase,
}

#[derive(Debug, Clone)]
pub struct Mission {
    plan: MissionPlan,
    config: MissionConfig,
    target: Vec3,
    phase: LandingPhase,
    waypoint: usize,
    phase_start: f64,
    visible_since: Option<f64>,
    last_seen: Option<f64>,
    stalled_since: Option<f64>,
    abort_point: Option<Vec3>,
    transitions: Vec<PhaseTransition>,
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl Mission {
    pub fn new(plan: MissionPlan, config: MissionConfig, target: Vec3) -> Self {
        Self {
            plan,
            config,
            target,
            phase: LandingPhase::EnRoute,
            waypoint: 0,
            phase_start: 0.0,
            visible_since: None,
            last_seen: None,
            stalled_since: None,
            abort_point: None,
            transitions: Vec::new(),
        }
    }

    pub fn phase(&self) -> LandingPhase {
        self.phase
    }

    pub fn transitions(&self) -> &[PhaseTransition] {
        &self.transitions
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    /// Point held while acquiring the target.
    pub fn hold_point(&self) -> Vec3 {
        let last = self.plan.waypoints[self.plan.waypoints.len() - 1];
        Vec3::new(
            last[0],
            last[1],
            self.target.z - self.plan.landing_start_altitude,
        )
    }

    fn enter(&mut self, next: LandingPhase, t: f64) {
        debug_assert!(self.phase.can_transition_to(next));
        self.transitions.push(PhaseTransition {
            t,
            from: self.phase,
            to: next,
        });
        self.phase = next;
        self.phase_start = t;
        self.stalled_since = None;
    }

    fn altitude(&self, p: &Vec3) -> f64 {
        self.target.z - p.z
    }

    fn centering(&self, p: &Vec3) -> (Vec3, f64) {
        let e = Vec3::new(self.target.x - p.x, self.target.y - p.y, 0.0);
        (
            clamp_norm(
                e * self.config.centering_kp,
                self.config.max_centering_speed,
            ),
            e.norm(),
        )
    }

    /// Advance one tick and return the inertial velocity command [m/s].
    pub fn step(&mut self, input: &MissionInput) -> Vec3 {
        use LandingPhase::*;
        let cfg = self.config;
        let t = input.t;
        let p = input.estimate.position;
        let altitude = self.altitude(&p);

        if input.marker_visible {
            self.last_seen = Some(t);
            self.visible_since.get_or_insert(t);
        } else {
            self.visible_since = None;
        }

        if !self.phase.is_terminal()
            && input.fault.believed == BelievedState::Unresolved
            && altitude > cfg.min_recovery_altitude
        {
            self.enter(Aborted, t);
        } else if self.phase == CenterAndDescend
            && input.fault.believed != BelievedState::Nominal
            && altitude <= cfg.min_recovery_altitude
        {
            self.enter(FinalDescent, t);
        }

        match self.phase {
            EnRoute => {
                let wp = Vec3::from(self.plan.waypoints[self.waypoint]);
                if (wp - p).norm() < cfg.waypoint_tolerance {
                    self.waypoint += 1;
                    if self.waypoint == self.plan.waypoints.len() {
                        self.enter(AcquireTarget, t);
                        return self.step_phase(input, altitude);
                    }
                }
                let wp = Vec3::from(self.plan.waypoints[self.waypoint]);
                clamp_norm((wp - p) * cfg.waypoint_kp, cfg.cruise_speed)
            }
            _ => self.step_phase(input, altitude),
        }
    }

    fn step_phase(&mut self, input: &MissionInput, altitude: f64) -> Vec3 {
        use LandingPhase::*;
        let cfg = self.config;
        let t = input.t;
        let p = input.estimate.position;
        let lost = self
            .last_seen
            .is_none_or(|s| t - s > cfg.target_lost_timeout);
        match self.phase {
            EnRoute => unreachable!("handled by step"),
            AcquireTarget => {
                if self
                    .visible_since
                    .is_some_and(|s| t - s >= cfg.acquire_dwell)
                {
                    self.enter(CenterAndDescend, t);
                    return self.step_phase(input, altitude);
                }
                if t - self.phase_start > cfg.acquire_timeout {
                    self.enter(Aborted, t);
                    return self.step_phase(input, altitude);
                }
                clamp_norm((self.hold_point() - p) * cfg.waypoint_kp, cfg.cruise_speed)
            }
            CenterAndDescend => {
                if lost {
                    self.enter(AcquireTarget, t);
                    return self.step_phase(input, altitude);
                }
                if altitude < cfg.final_descent_altitude {
                    self.enter(FinalDescent, t);
                    return self.step_phase(input, altitude);
                }
                let (v, err) = self.centering(&p);
                let vz = if err < cfg.centering_tolerance {
                    cfg.descent_speed
                } else {
                    0.0
                };
                Vec3::new(v.x, v.y, vz)
            }
            FinalDescent => {
                let stalled = input.velocity.z.abs() < cfg.touchdown_speed;
                if stalled {
                    self.stalled_since.get_or_insert(t);
                } else {
                    self.stalled_since = None;
                }
                let stall_time = self.stalled_since.map_or(0.0, |s| t - s);
                let landed = (altitude < cfg.touchdown_altitude && stalled)
                    || (altitude < cfg.touchdown_stall_altitude
                        && stall_time >= cfg.touchdown_stall_time);
                if landed {
                    self.enter(Touchdown, t);
                    return Vec3::zeros();
                }
                let (v, _) = self.centering(&p);
                Vec3::new(v.x, v.y, cfg.final_descent_speed)
            }
            Touchdown => Vec3::zeros(),
            Aborted => {
                let anchor = *self.abort_point.get_or_insert(p);
                let h = clamp_norm(
                    Vec3::new(anchor.x - p.x, anchor.y - p.y, 0.0) * cfg.waypoint_kp,
                    cfg.cruise_speed,
                );
                let vz = if altitude < cfg.safe_altitude {
                    -cfg.climb_speed
                } else {
                    0.0
                };
                clamp_norm(Vec3::new(h.x, h.y, vz), cfg.speed_bound())
            }
        }
    }
}

/// Horizontal distance between the vehicle and the marker center after
/// touchdown.
pub fn touchdown_report(
    phase: LandingPhase,
    truth: &RigidBodyState,
    target: &LandingTarget,
) -> Result<f64> {
    if phase != LandingPhase::Touchdown {
        return Err(Error::InvalidPhase(phase));
    }
    let d = truth.position - target.center();
    Ok(libm::hypot(d.x, d.y))
}
