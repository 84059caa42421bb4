//! Scenario description: every parameter of one simulation run. Missing
//! tables take their defaults, so scenario files only list what differs.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::control::ControlGains;
use crate::dynamics::{FaultSchedule, PhysicalParams};
use crate::error::{invalid, Result};
use crate::estimator::EstimatorConfig;
use crate::fdi::FdiConfig;
use crate::geometry::{RotorIndex, VehicleGeometry};
use crate::math::Vec3;
use crate::mission::{MissionConfig, MissionPlan};
use crate::reconfig::ReconfigCriteria;
use crate::vision::{CameraIntrinsics, DetectionConfig, Extrinsics, LandingTarget};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    /// Physics integration rate [Hz]; control rates must divide it.
    pub physics_rate: u32,
    /// Camera / estimator / mission rate [Hz].
    pub camera_rate: u32,
    /// GNSS report rate [Hz].
    pub gnss_rate: u32,
    /// Rows per second in the flight log.
    pub flight_log_rate: u32,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            physics_rate: 1000,
            camera_rate: 30,
            gnss_rate: 10,
            flight_log_rate: 100,
        }
    }
}

impl Timing {
    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.physics_rate)
    }

    /// Physics ticks per period of a loop running at `rate` Hz.
    pub fn divider(&self, rate: f64) -> Result<u64> {
        let ratio = f64::from(self.physics_rate) / rate;
        let n = libm::round(ratio);
        if !(n >= 1.0 && (ratio - n).abs() < 1e-9) {
            return Err(invalid("loop rates must divide timing.physics_rate"));
        }
        Ok(n as u64)
    }

    /// First physics tick at or after camera frame `k`.
    pub fn camera_tick(&self, k: u64) -> u64 {
        let p = u64::from(self.physics_rate);
        let c = u64::from(self.camera_rate);
        (k * p).div_ceil(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub arm_length: f64,
    pub torque_coeff: f64,
    /// Rotors fitted with a tilt servo.
    pub servo_rotors: Vec<RotorIndex>,
    /// The two servo slots of the full design.
    pub servo_pair: [RotorIndex; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = VehicleGeometry::default();
        Self {
            arm_length: g.arm_length,
            torque_coeff: g.torque_coeff,
            servo_rotors: g.reconfigurable_set,
            servo_pair: g.servo_pair,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> VehicleGeometry {
        VehicleGeometry {
            reconfigurable_set: self.servo_rotors.clone(),
            servo_pair: self.servo_pair,
            ..VehicleGeometry::canonical(self.arm_length, self.torque_coeff)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconfigSettings {
    /// Fraction of `f_max` kept free on both sides at hover.
    pub reserve_fraction: f64,
    pub sigma_threshold: f64,
}

impl Default for ReconfigSettings {
    fn default() -> Self {
        let c = ReconfigCriteria::default();
        Self {
            reserve_fraction: c.reserve_fraction,
            sigma_threshold: c.sigma_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Off: every sensor and the velocity report are exact.
    pub enabled: bool,
    /// Attitude noise per axis [deg].
    pub attitude_deg: f64,
    /// Gyro noise per axis [rad/s].
    pub gyro: f64,
    /// GNSS noise per axis [m].
    pub gnss: f64,
    /// Noise on the velocity sent to the vision computer [m/s].
    pub velocity: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            attitude_deg: 0.5,
            gyro: 0.01,
            gnss: 0.3,
            velocity: 0.05,
        }
    }
}

impl SensorConfig {
    /// Noise levels actually applied.
    pub fn effective(&self) -> Self {
        if self.enabled {
            *self
        } else {
            Self {
                enabled: false,
                attitude_deg: 0.0,
                gyro: 0.0,
                gnss: 0.0,
                velocity: 0.0,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.attitude_deg, self.gyro, self.gnss, self.velocity]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return Err(invalid("sensor noise levels must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Probability that a frame gets one byte corrupted, per direction.
    pub drop_probability: f64,
    /// Velocity commands older than this are ignored and the flight
    /// computer holds position [s].
    pub command_timeout: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            command_timeout: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// Inertial position [m], z down.
    pub position: [f64; 3],
    /// Heading [deg].
    pub yaw_deg: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, -6.0],
            yaw_deg: 0.0,
        }
    }
}

/// What the flight computer is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlightMode {
    /// Follow the vision computer's velocity commands (waypoints + landing).
    #[default]
    Mission,
    /// Hold a fixed position; the vision computer only estimates.
    Hold {
        /// Defaults to the initial position.
        #[serde(default)]
        setpoint: Option<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Log directory, relative to the working directory.
    pub directory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// Root of every noise stream; required.
    pub seed: Option<u64>,
    /// Simulated time limit [s].
    pub duration: f64,
    pub mode: FlightMode,
    pub timing: Timing,
    pub vehicle: PhysicalParams,
    pub geometry: GeometryConfig,
    pub reconfig: ReconfigSettings,
    pub control: ControlGains,
    pub fdi: FdiConfig,
    pub camera: CameraIntrinsics,
    pub extrinsics: Extrinsics,
    pub detection: DetectionConfig,
    pub target: LandingTarget,
    pub estimator: EstimatorConfig,
    pub mission: MissionPlan,
    pub landing: MissionConfig,
    pub faults: FaultSchedule,
    pub sensors: SensorConfig,
    pub link: LinkConfig,
    pub initial: InitialState,
    pub output: OutputConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: String::from("default"),
            seed: None,
            duration: 120.0,
            mode: FlightMode::default(),
            timing: Timing::default(),
            vehicle: PhysicalParams::default(),
            geometry: GeometryConfig::default(),
            reconfig: ReconfigSettings::default(),
            control: ControlGains::default(),
            fdi: FdiConfig::default(),
            camera: CameraIntrinsics::default(),
            extrinsics: Extrinsics::default(),
            detection: DetectionConfig::default(),
            target: LandingTarget::default(),
            estimator: EstimatorConfig::default(),
            mission: MissionPlan::default(),
            landing: MissionConfig::default(),
            faults: FaultSchedule::default(),
            sensors: SensorConfig::default(),
            link: LinkConfig::default(),
            initial: InitialState::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Scenario {
    /// Defaults with a seed set.
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn vehicle_geometry(&self) -> VehicleGeometry {
        self.geometry.build()
    }

    pub fn reconfig_criteria(&self) -> ReconfigCriteria {
        ReconfigCriteria {
            hover_thrust: self.vehicle.mass * self.vehicle.gravity,
            f_max: self.vehicle.f_max,
            reserve_fraction: self.reconfig.reserve_fraction,
            sigma_threshold: self.reconfig.sigma_threshold,
        }
    }

    pub fn initial_position(&self) -> Vec3 {
        Vec3::from(self.initial.position)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(alloc::format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seed.is_none() {
            return Err(invalid("seed is required"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration must be > 0"));
        }
        let t = &self.timing;
        if t.physics_rate == 0 || t.camera_rate == 0 || t.gnss_rate == 0 || t.flight_log_rate == 0 {
            return Err(invalid("timing rates must be > 0"));
        }
        if t.dt() > crate::dynamics::MAX_STEP {
            return Err(invalid("physics_rate too low for the integrator"));
        }
        if t.camera_rate > t.physics_rate {
            return Err(invalid("camera_rate must not exceed physics_rate"));
        }
        self.control.validate()?;
        for rate in [
            self.control.attitude_rate,
            self.control.position_rate,
            f64::from(t.gnss_rate),
            f64::from(t.flight_log_rate),
        ] {
            t.divider(rate)?;
        }
        self.vehicle.validate()?;
        self.vehicle_geometry().validate()?;
        self.reconfig_criteria().validate()?;
        self.fdi.validate()?;
        self.camera.validate()?;
        self.extrinsics.validate()?;
        self.detection.validate()?;
        self.target.validate()?;
        self.estimator.validate()?;
        self.mission.validate()?;
        self.landing.validate()?;
        self.faults.validate()?;
        self.sensors.validate()?;
        if !(0.0..=1.0).contains(&self.link.drop_probability) {
            return Err(invalid("link.drop_probability must lie in [0, 1]"));
        }
        if !(self.link.command_timeout > 0.0) {
            return Err(invalid("link.command_timeout must be > 0"));
        }
        let finite = self
            .initial
            .position
            .iter()
            .chain(&self.target.position)
            .all(|x| x.is_finite());
        if !finite || !self.initial.yaw_deg.is_finite() {
            return Err(invalid("initial state and target pose must be finite"));
        }
        if let FlightMode::Hold { setpoint: Some(p) } = self.mode {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid("hold setpoint must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_need_a_seed() {
        assert!(Scenario::default().validate().is_err());
        Scenario::seeded(1).validate().unwrap();
    }

    #[test]
    fn camera_ticks_cover_every_frame() {
        let t = Timing::default();
        assert_eq!(t.camera_tick(0), 0);
        assert_eq!(t.camera_tick(1), 34);
        assert_eq!(t.camera_tick(3), 100);
        for k in 0..300 {
            let gap = t.camera_tick(k + 1) - t.camera_tick(k);
            assert!(gap == 33 || gap == 34);
        }
    }

    #[test]
    fn rates_must_divide_physics() {
        let mut s = Scenario::seeded(1);
        s.control.attitude_rate = 300.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::seeded(1);
        s.schema_version = 2;
        assert!(s.validate().is_err());
        let mut s = Scenario::seeded(1);
        s.link.drop_probability = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn geometry_config_matches_default_vehicle() {
        assert_eq!(
            GeometryConfig::default().build(),
            VehicleGeometry::default()
        );
    }
}
