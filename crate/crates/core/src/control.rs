//! Nested PID control: the position loop produces an attitude setpoint and a
//! vertical force, the attitude loop produces a body torque. The allocation
//! matrix is the only thing that changes after a reconfiguration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{rotation_from_euler, rotation_log, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: [f64; 3],
    pub ki: [f64; 3],
    pub kd: [f64; 3],
    /// Symmetric clamp on each integrator state.
    pub integrator_limit: f64,
    /// Symmetric clamp on each output component.
    pub output_limit: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let gains = self.kp.iter().chain(&self.ki).chain(&self.kd);
        if gains.clone().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(invalid("PID gains must be finite and >= 0"));
        }
        if !(self.integrator_limit > 0.0 && self.output_limit > 0.0) {
            return Err(invalid("PID limits must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionGains {
    /// Position error → velocity setpoint [1/s], per inertial axis.
    pub position_kp: [f64; 3],
    /// Velocity loop; output is an acceleration command [m/s²].
    pub velocity: PidGains,
    /// Horizontal speed limit in position-hold mode [m/s].
    pub max_horizontal_speed: f64,
    /// Vertical speed limit in position-hold mode [m/s].
    pub max_vertical_speed: f64,
    /// Roll/pitch setpoint clamp [deg].
    pub max_tilt_deg: f64,
    /// Collective thrust range [N].
    pub min_thrust: f64,
    pub max_thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlGains {
    pub position: PositionGains,
    pub attitude: PidGains,
    /// Position loop rate [Hz].
    pub position_rate: f64,
    /// Attitude loop, allocation and FDI rate [Hz].
    pub attitude_rate: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            position: PositionGains {
                position_kp: [1.2, 1.2, 1.5],
                velocity: PidGains {
                    kp: [2.2, 2.2, 4.0],
                    ki: [0.3, 0.3, 1.0],
                    kd: [0.0; 3],
                    integrator_limit: 2.0,
                    output_limit: 4.0,
                },
                max_horizontal_speed: 2.0,
                max_vertical_speed: 1.0,
                max_tilt_deg: 20.0,
                min_thrust: 5.0,
                max_thrust: 50.0,
            },
            attitude: PidGains {
                kp: [2.0, 2.0, 0.6],
                ki: [0.3, 0.3, 0.1],
                kd: [0.35, 0.35, 0.25],
                integrator_limit: 0.5,
                output_limit: 2.0,
            },
            position_rate: 100.0,
            attitude_rate: 500.0,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        self.attitude.validate()?;
        self.position.velocity.validate()?;
        let p = &self.position;
        if p.position_kp.iter().any(|g| !(*g >= 0.0)) {
            return Err(invalid("position_kp must be >= 0"));
        }
        if !(p.max_horizontal_speed > 0.0 && p.max_vertical_speed > 0.0) {
            return Err(invalid("speed limits must be > 0"));
        }
        if !(p.max_tilt_deg > 0.0 && p.max_tilt_deg < 90.0) {
            return Err(invalid("max_tilt_deg must lie in (0, 90)"));
        }
        if !(p.min_thrust >= 0.0 && p.max_thrust > p.min_thrust) {
            return Err(invalid("thrust range must satisfy 0 <= min < max"));
        }
        if !(self.position_rate > 0.0 && self.attitude_rate >= self.position_rate) {
            return Err(invalid(
                "loop rates must satisfy 0 < position_rate <= attitude_rate",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setpoint {
    Position(Vec3),
    Velocity(Vec3),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeSetpoint {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl AttitudeSetpoint {
    pub fn rotation(&self) -> Mat3 {
        rotation_from_euler(self.roll, self.pitch, self.yaw)
    }
}

fn clamp_abs(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}

#[derive(Debug, Clone)]
pub struct PositionController {
    gains: PositionGains,
    integral: Vec3,
    prev_error: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionOutput {
    pub attitude: AttitudeSetpoint,
    /// Body vertical force [N], negative = up.
    pub vertical_force: f64,
    /// Acceleration command actually used (after clamping) [m/s²].
    pub acceleration: Vec3,
}

impl PositionController {
    pub fn new(gains: PositionGains) -> Self {
        Self {
            gains,
            integral: Vec3::zeros(),
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = Vec3::zeros();
        self.prev_error = None;
    }

    pub fn update(
        &mut self,
        position: &Vec3,
        velocity: &Vec3,
        setpoint: Setpoint,
        yaw: f64,
        mass: f64,
        gravity: f64,
        dt: f64,
    ) -> PositionOutput {
        let g = &self.gains;
        let v_sp = match setpoint {
            Setpoint::Velocity(v) => v,
            Setpoint::Position(p) => {
                let e = p - position;
                let mut v = Vec3::new(
                    e.x * g.position_kp[0],
                    e.y * g.position_kp[1],
                    e.z * g.position_kp[2],
                );
                let h = v.xy().norm();
                if h > g.max_horizontal_speed {
                    let s = g.max_horizontal_speed / h;
                    v.x *= s;
                    v.y *= s;
                }
                v.z = clamp_abs(v.z, g.max_vertical_speed);
                v
            }
        };

        let pid = &g.velocity;
        let err = v_sp - velocity;
        let deriv = match self.prev_error {
            Some(prev) if dt > 0.0 => (err - prev) / dt,
            _ => Vec3::zeros(),
        };
        self.prev_error = Some(err);
        let mut accel = Vec3::zeros();
        for i in 0..3 {
            if pid.ki[i] > 0.0 {
                self.integral[i] = clamp_abs(self.integral[i] + err[i] * dt, pid.integrator_limit);
            }
            accel[i] = clamp_abs(
                pid.kp[i] * err[i] + pid.ki[i] * self.integral[i] + pid.kd[i] * deriv[i],
                pid.output_limit,
            );
        }

        // small-angle inversion in the yaw-aligned frame
        let (s, c) = (libm::sin(yaw), libm::cos(yaw));
        let forward = c * accel.x + s * accel.y;
        let right = -s * accel.x + c * accel.y;
        let max_tilt = g.max_tilt_deg.to_radians();
        let pitch = clamp_abs(-forward / gravity, max_tilt);
        let roll = clamp_abs(right / gravity, max_tilt);
        let thrust = (mass * (gravity - accel.z) / (libm::cos(roll) * libm::cos(pitch)))
            .clamp(g.min_thrust, g.max_thrust);
        PositionOutput {
            attitude: AttitudeSetpoint { roll, pitch, yaw },
            vertical_force: -thrust,
            acceleration: accel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttitudeController {
    gains: PidGains,
    integral: Vec3,
}

impl AttitudeController {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: Vec3::zeros(),
        }
    }

    pub fn reset(&mut self) {
        self.integral = Vec3::zeros();
    }

    /// Body torque from the rotation-vector error between the measured and
    /// desired attitude, with damping on the measured rate.
    pub fn update(&mut self, attitude: &Mat3, rate: &Vec3, setpoint: &Mat3, dt: f64) -> Vec3 {
        let g = &self.gains;
        let err = rotation_log(&(attitude.transpose() * setpoint));
        let mut torque = Vec3::zeros();
        for i in 0..3 {
            if g.ki[i] > 0.0 {
                self.integral[i] = clamp_abs(self.integral[i] + err[i] * dt, g.integrator_limit);
            }
            torque[i] = clamp_abs(
                g.kp[i] * err[i] + g.ki[i] * self.integral[i] - g.kd[i] * rate[i],
                g.output_limit,
            );
        }
        torque
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p_only(kp: [f64; 3]) -> PidGains {
        PidGains {
            kp,
            ki: [0.0; 3],
            kd: [0.0; 3],
            integrator_limit: 1.0,
            output_limit: 100.0,
        }
    }

    #[test]
    fn zero_error_is_level_hover() {
        let mut pc = PositionController::new(ControlGains::default().position);
        let p = Vec3::new(1.0, 2.0, -5.0);
        let out = pc.update(
            &p,
            &Vec3::zeros(),
            Setpoint::Position(p),
            0.0,
            2.8,
            9.81,
            0.01,
        );
        assert_eq!(out.attitude.roll, 0.0);
        assert_eq!(out.attitude.pitch, 0.0);
        assert_relative_eq!(out.vertical_force, -2.8 * 9.81, epsilon = 1e-12);
    }

    #[test]
    fn forward_velocity_command_pitches_nose_down() {
        let mut pc = PositionController::new(ControlGains::default().position);
        let out = pc.update(
            &Vec3::zeros(),
            &Vec3::zeros(),
            Setpoint::Velocity(Vec3::new(1.0, 0.0, 0.0)),
            0.0,
            2.8,
            9.81,
            0.01,
        );
        assert!(out.attitude.pitch < 0.0);
        assert_eq!(out.attitude.roll, 0.0);
        // rotated thrust accelerates toward +x
        let thrust_dir = out.attitude.rotation() * Vec3::new(0.0, 0.0, -1.0);
        assert!(thrust_dir.x > 0.0);
        let out = pc.update(
            &Vec3::zeros(),
            &Vec3::zeros(),
            Setpoint::Velocity(Vec3::new(0.0, 1.0, 0.0)),
            0.0,
            2.8,
            9.81,
            0.01,
        );
        assert!((out.attitude.rotation() * Vec3::new(0.0, 0.0, -1.0)).y > 0.0);
    }

    #[test]
    fn tilt_is_clamped() {
        let mut gains = ControlGains::default().position;
        gains.velocity.output_limit = 50.0;
        let mut pc = PositionController::new(gains);
        let out = pc.update(
            &Vec3::zeros(),
            &Vec3::zeros(),
            Setpoint::Velocity(Vec3::new(100.0, -100.0, 0.0)),
            0.3,
            2.8,
            9.81,
            0.01,
        );
        assert!(out.attitude.pitch.abs() <= 20f64.to_radians() + 1e-12);
        assert!(out.attitude.roll.abs() <= 20f64.to_radians() + 1e-12);
    }

    #[test]
    fn attitude_zero_error_zero_torque() {
        let mut ac = AttitudeController::new(ControlGains::default().attitude);
        let r = rotation_from_euler(0.1, 0.2, 0.3);
        assert_eq!(ac.update(&r, &Vec3::zeros(), &r, 0.002).norm(), 0.0);
    }

    #[test]
    fn yaw_error_p_only() {
        let kp_yaw = 0.7;
        let mut ac = AttitudeController::new(p_only([2.0, 2.0, kp_yaw]));
        let sp = rotation_from_euler(0.0, 0.0, 10f64.to_radians());
        let q = ac.update(&Mat3::identity(), &Vec3::zeros(), &sp, 0.002);
        assert_relative_eq!(
            q,
            Vec3::new(0.0, 0.0, kp_yaw * 10f64.to_radians()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn memoryless_without_integrator() {
        let mut gains = ControlGains::default();
        gains.attitude.ki = [0.0; 3];
        gains.position.velocity.ki = [0.0; 3];
        let mut ac = AttitudeController::new(gains.attitude);
        let mut pc = PositionController::new(gains.position);
        let att = rotation_from_euler(0.05, -0.02, 0.4);
        let sp = rotation_from_euler(0.0, 0.1, 0.3);
        let w = Vec3::new(0.1, 0.2, -0.3);
        let first = ac.update(&att, &w, &sp, 0.002);
        for _ in 0..5 {
            assert_eq!(ac.update(&att, &w, &sp, 0.002), first);
        }
        let p = Vec3::new(1.0, -1.0, -3.0);
        let v = Vec3::new(0.3, 0.1, 0.0);
        let a = pc.update(
            &p,
            &v,
            Setpoint::Position(Vec3::zeros()),
            0.0,
            2.8,
            9.81,
            0.01,
        );
        let b = pc.update(
            &p,
            &v,
            Setpoint::Position(Vec3::zeros()),
            0.0,
            2.8,
            9.81,
            0.01,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn integrator_is_clamped() {
        let mut gains = ControlGains::default().attitude;
        gains.kp = [0.0; 3];
        gains.kd = [0.0; 3];
        gains.ki = [1.0; 3];
        let mut ac = AttitudeController::new(gains);
        let sp = rotation_from_euler(0.5, 0.0, 0.0);
        let mut q = Vec3::zeros();
        for _ in 0..10_000 {
            q = ac.update(&Mat3::identity(), &Vec3::zeros(), &sp, 0.002);
        }
        assert_relative_eq!(q.x, gains.integrator_limit, epsilon = 1e-12);
    }
}
