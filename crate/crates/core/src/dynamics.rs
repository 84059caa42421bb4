//! Rigid-body 6-DOF model of the hexarotor with first-order rotor lag,
//! scheduled total rotor failures and the tilt servo.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{RotorIndex, Tilt, VehicleGeometry};
use crate::math::{is_finite3, reorthonormalize, skew, Mat3, Vec3};
use crate::ROTOR_COUNT;

pub const MAX_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// [kg]
    pub mass: f64,
    /// Body-frame inertia [kg·m²], row-major.
    pub inertia: [[f64; 3]; 3],
    /// Rotor thrust response time constant [s].
    pub rotor_time_constant: f64,
    /// Per-rotor thrust limit [N].
    pub f_max: f64,
    /// [m/s²]
    pub gravity: f64,
    /// Linear translational drag [N·s/m].
    pub linear_drag: f64,
    /// Clamp the vehicle at the ground plane z = 0.
    pub ground_contact: bool,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            mass: 2.8,
            inertia: [[0.035, 0.0, 0.0], [0.0, 0.035, 0.0], [0.0, 0.0, 0.06]],
            rotor_time_constant: 0.05,
            f_max: crate::GRAVITY,
            gravity: crate::GRAVITY,
            linear_drag: 0.25,
            ground_contact: true,
        }
    }
}

impl PhysicalParams {
    pub fn inertia_matrix(&self) -> Mat3 {
        let i = &self.inertia;
        Mat3::new(
            i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2],
        )
    }

    pub fn hover_force(&self) -> f64 {
        self.mass * self.gravity / ROTOR_COUNT as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(invalid("mass must be > 0"));
        }
        if !(self.f_max > 0.0) {
            return Err(invalid("f_max must be > 0"));
        }
        if !(self.rotor_time_constant > 0.0) {
            return Err(invalid("rotor_time_constant must be > 0"));
        }
        if !(self.gravity >= 0.0 && self.linear_drag >= 0.0) {
            return Err(invalid("gravity and linear_drag must be >= 0"));
        }
        let j = self.inertia_matrix();
        if (j - j.transpose()).amax() > 1e-12 || j.cholesky().is_none() {
            return Err(invalid("inertia must be symmetric positive definite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// Inertial position [m], z down.
    pub position: Vec3,
    /// Inertial velocity [m/s].
    pub velocity: Vec3,
    /// Rotation body→inertial.
    pub attitude: Mat3,
    /// Body angular rate [rad/s].
    pub angular_rate: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: Mat3::identity(),
            angular_rate: Vec3::zeros(),
        }
    }

    pub fn rotational_energy(&self, inertia: &Mat3) -> f64 {
        0.5 * self.angular_rate.dot(&(inertia * self.angular_rate))
    }

    fn is_finite(&self) -> bool {
        is_finite3(&self.position)
            && is_finite3(&self.velocity)
            && is_finite3(&self.angular_rate)
            && self.attitude.iter().all(|v| v.is_finite())
    }
}

/// Body state plus the actual (lagged) rotor forces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub time: f64,
    pub body: RigidBodyState,
    pub rotor_forces: [f64; ROTOR_COUNT],
}

impl VehicleState {
    /// Level, at rest, rotors already producing `forces`.
    pub fn new(position: Vec3, forces: [f64; ROTOR_COUNT]) -> Self {
        Self {
            time: 0.0,
            body: RigidBodyState::at_rest(position),
            rotor_forces: forces,
        }
    }
}

#[derive(Clone, Copy)]
struct Derivative {
    dp: Vec3,
    dv: Vec3,
    dr: Mat3,
    dw: Vec3,
    df: [f64; ROTOR_COUNT],
}

struct Model<'a> {
    thrust_dirs: [Vec3; ROTOR_COUNT],
    torque_dirs: [Vec3; ROTOR_COUNT],
    targets: [f64; ROTOR_COUNT],
    inertia: Mat3,
    inertia_inv: Mat3,
    params: &'a PhysicalParams,
}

impl Model<'_> {
    fn derivative(&self, body: &RigidBodyState, forces: &[f64; ROTOR_COUNT]) -> Derivative {
        let p = self.params;
        let mut force_b = Vec3::zeros();
        let mut torque_b = Vec3::zeros();
        for i in 0..ROTOR_COUNT {
            force_b += self.thrust_dirs[i] * forces[i];
            torque_b += self.torque_dirs[i] * forces[i];
        }
        let w = body.angular_rate;
        let dv = body.attitude * force_b / p.mass + Vec3::new(0.0, 0.0, p.gravity)
            - body.velocity * (p.linear_drag / p.mass);
        let dw = self.inertia_inv * (torque_b - w.cross(&(self.inertia * w)));
        let mut df = [0.0; ROTOR_COUNT];
        for i in 0..ROTOR_COUNT {
            df[i] = (self.targets[i] - forces[i]) / p.rotor_time_constant;
        }
        Derivative {
            dp: body.velocity,
            dv,
            dr: body.attitude * skew(&w),
            dw,
            df,
        }
    }
}

fn advance(
    body: &RigidBodyState,
    forces: &[f64; ROTOR_COUNT],
    k: &Derivative,
    h: f64,
) -> (RigidBodyState, [f64; ROTOR_COUNT]) {
    let mut f = *forces;
    for i in 0..ROTOR_COUNT {
        f[i] += k.df[i] * h;
    }
    (
        RigidBodyState {
            position: body.position + k.dp * h,
            velocity: body.velocity + k.dv * h,
            attitude: body.attitude + k.dr * h,
            angular_rate: body.angular_rate + k.dw * h,
        },
        f,
    )
}

/// Advances the vehicle by `dt` with classic RK4. `geom` is the true
/// geometry: failed rotors (zero effectiveness) produce no force whatever
/// they are commanded.
pub fn step(
    state: &VehicleState,
    forces_cmd: &[f64; ROTOR_COUNT],
    geom: &VehicleGeometry,
    params: &PhysicalParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(invalid("dt must lie in (0, 0.02] s"));
    }
    let inertia = params.inertia_matrix();
    let mut model = Model {
        thrust_dirs: [Vec3::zeros(); ROTOR_COUNT],
        torque_dirs: [Vec3::zeros(); ROTOR_COUNT],
        targets: [0.0; ROTOR_COUNT],
        inertia,
        inertia_inv: inertia
            .try_inverse()
            .ok_or_else(|| invalid("singular inertia"))?,
        params,
    };
    let mut forces = state.rotor_forces;
    for i in 0..ROTOR_COUNT {
        model.thrust_dirs[i] = geom.thrust_direction(i);
        model.torque_dirs[i] = geom.torque_direction(i);
        model.targets[i] = geom.effectiveness[i] * forces_cmd[i].clamp(0.0, params.f_max);
        if geom.effectiveness[i] == 0.0 {
            forces[i] = 0.0;
        }
    }

    let b0 = state.body;
    let k1 = model.derivative(&b0, &forces);
    let (b1, f1) = advance(&b0, &forces, &k1, dt / 2.0);
    let k2 = model.derivative(&b1, &f1);
    let (b2, f2) = advance(&b0, &forces, &k2, dt / 2.0);
    let k3 = model.derivative(&b2, &f2);
    let (b3, f3) = advance(&b0, &forces, &k3, dt);
    let k4 = model.derivative(&b3, &f3);

    let sum = Derivative {
        dp: (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) / 6.0,
        dv: (k1.dv + k2.dv * 2.0 + k3.dv * 2.0 + k4.dv) / 6.0,
        dr: (k1.dr + k2.dr * 2.0 + k3.dr * 2.0 + k4.dr) / 6.0,
        dw: (k1.dw + k2.dw * 2.0 + k3.dw * 2.0 + k4.dw) / 6.0,
        df: core::array::from_fn(|i| (k1.df[i] + 2.0 * k2.df[i] + 2.0 * k3.df[i] + k4.df[i]) / 6.0),
    };
    let (mut body, forces) = advance(&b0, &forces, &sum, dt);
    body.attitude = reorthonormalize(&body.attitude);

    if params.ground_contact && body.position.z > 0.0 {
        body.position.z = 0.0;
        if body.velocity.z > 0.0 {
            body.velocity = Vec3::zeros();
            body.angular_rate = Vec3::zeros();
        }
    }

    let time = state.time + dt;
    if !body.is_finite() || forces.iter().any(|f| !f.is_finite()) {
        return Err(Error::Diverged { time });
    }
    Ok(VehicleState {
        time,
        body,
        rotor_forces: forces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledFailure {
    /// [s]
    pub time: f64,
    pub rotor: RotorIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    #[serde(default)]
    pub failures: Vec<ScheduledFailure>,
    /// Tilt servo first-order time constant [s].
    #[serde(default = "default_latency")]
    pub reconfiguration_latency: f64,
}

fn default_latency() -> f64 {
    0.1
}

impl Default for FaultSchedule {
    fn default() -> Self {
        Self {
            failures: Vec::new(),
            reconfiguration_latency: default_latency(),
        }
    }
}

impl FaultSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.failures.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(invalid("failure times must be non-decreasing"));
        }
        for (i, f) in self.failures.iter().enumerate() {
            if !f.time.is_finite() {
                return Err(invalid("failure time must be finite"));
            }
            if self.failures[..i].iter().any(|g| g.rotor == f.rotor) {
                return Err(invalid("at most one failure per rotor"));
            }
        }
        if !(self.reconfiguration_latency > 0.0) {
            return Err(invalid("reconfiguration_latency must be > 0"));
        }
        Ok(())
    }

    pub fn first_failure(&self) -> Option<&ScheduledFailure> {
        self.failures.first()
    }
}

/// True geometry at time `t`: every rotor whose failure time has passed has
/// zero effectiveness. Tilts are left untouched; they follow the servo, which
/// only moves once the flight computer commands it.
pub fn apply_schedule(schedule: &FaultSchedule, t: f64, geom: &VehicleGeometry) -> VehicleGeometry {
    let mut out = geom.clone();
    for f in schedule.failures.iter().filter(|f| t >= f.time) {
        out.effectiveness[f.rotor.slot()] = 0.0;
    }
    out
}

/// Tilt servo modeled as a first-order lag toward the commanded angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltServo {
    pub rotor: RotorIndex,
    pub angle: f64,
    pub commanded: f64,
    pub time_constant: f64,
}

impl TiltServo {
    pub fn new(rotor: RotorIndex, time_constant: f64) -> Self {
        Self {
            rotor,
            angle: 0.0,
            commanded: 0.0,
            time_constant,
        }
    }

    pub fn command(&mut self, tilt: Tilt) {
        debug_assert_eq!(tilt.rotor, self.rotor);
        self.commanded = tilt.angle;
    }

    pub fn step(&mut self, dt: f64) {
        let alpha = 1.0 - libm::exp(-dt / self.time_constant);
        self.angle += (self.commanded - self.angle) * alpha;
    }

    pub fn apply(&self, geom: &VehicleGeometry) -> VehicleGeometry {
        let mut g = geom.clone();
        g.tilt[self.rotor.slot()] = self.angle;
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hover_state(params: &PhysicalParams) -> VehicleState {
        VehicleState::new(
            Vec3::new(0.0, 0.0, -10.0),
            [params.hover_force(); ROTOR_COUNT],
        )
    }

    #[test]
    fn hover_equilibrium_holds() {
        let params = PhysicalParams::default();
        let geom = VehicleGeometry::default();
        let mut s = hover_state(&params);
        let cmd = [params.hover_force(); ROTOR_COUNT];
        let p0 = s.body.position;
        for _ in 0..1000 {
            s = step(&s, &cmd, &geom, &params, 1e-3).unwrap();
        }
        assert!((s.body.position - p0).norm() <= 1e-6);
    }

    #[test]
    fn free_fall_matches_gravity() {
        let params = PhysicalParams {
            linear_drag: 0.0,
            ..Default::default()
        };
        let geom = VehicleGeometry::default();
        let mut s = VehicleState::new(Vec3::new(0.0, 0.0, -500.0), [0.0; ROTOR_COUNT]);
        for _ in 0..2000 {
            s = step(&s, &[0.0; ROTOR_COUNT], &geom, &params, 1e-3).unwrap();
        }
        assert_relative_eq!(s.body.velocity.z, params.gravity * s.time, epsilon = 1e-9);
        assert!(s.body.velocity.xy().norm() < 1e-12);
    }

    fn tumble(dt: f64, seconds: f64) -> (RigidBodyState, f64) {
        let params = PhysicalParams {
            linear_drag: 0.0,
            ground_contact: false,
            ..Default::default()
        };
        let geom = VehicleGeometry::default();
        let mut s = VehicleState::new(Vec3::zeros(), [0.0; ROTOR_COUNT]);
        s.body.angular_rate = Vec3::new(2.0, -1.0, 3.0);
        let e0 = s.body.rotational_energy(&params.inertia_matrix());
        let n = libm::round(seconds / dt) as usize;
        for _ in 0..n {
            s = step(&s, &[0.0; ROTOR_COUNT], &geom, &params, dt).unwrap();
        }
        (s.body, e0)
    }

    #[test]
    fn torque_free_tumbling_conserves_energy() {
        let params = PhysicalParams::default();
        let (body, e0) = tumble(1e-3, 10.0);
        let e = body.rotational_energy(&params.inertia_matrix());
        assert!(((e - e0) / e0).abs() < 1e-6);
        let ortho = (body.attitude.transpose() * body.attitude - Mat3::identity()).amax();
        assert!(ortho < 1e-9);
        assert_relative_eq!(body.attitude.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tumbling_converges_against_finer_step() {
        let (coarse, _) = tumble(1e-3, 1.0);
        let (fine, _) = tumble(1e-4, 1.0);
        assert!((coarse.angular_rate - fine.angular_rate).norm() < 1e-6);
        assert!((coarse.attitude - fine.attitude).norm() < 1e-6);
    }

    #[test]
    fn failed_rotor_gives_no_force() {
        let params = PhysicalParams::default();
        let schedule = FaultSchedule {
            failures: alloc::vec![ScheduledFailure {
                time: 0.0,
                rotor: RotorIndex::new(3).unwrap()
            }],
            ..Default::default()
        };
        let geom = apply_schedule(&schedule, 0.0, &VehicleGeometry::default());
        let s = step(
            &hover_state(&params),
            &[9.0; ROTOR_COUNT],
            &geom,
            &params,
            1e-3,
        )
        .unwrap();
        assert_eq!(s.rotor_forces[2], 0.0);
        // losing rotor 3 (roll arm +d) rolls the vehicle negatively
        assert!(s.body.angular_rate.x < 0.0);
    }

    #[test]
    fn schedule_is_pure_in_time() {
        let schedule = FaultSchedule {
            failures: alloc::vec![ScheduledFailure {
                time: 6.3,
                rotor: RotorIndex::new(3).unwrap()
            }],
            ..Default::default()
        };
        let g = VehicleGeometry::default();
        assert_eq!(apply_schedule(&schedule, 6.0, &g), g);
        let after = apply_schedule(&schedule, 6.3, &g);
        assert_eq!(after.effectiveness[2], 0.0);
        assert_eq!(apply_schedule(&schedule, 6.3, &g), after);
        let a = crate::geometry::torque_force_matrix(&after);
        assert!(a.0.column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn schedule_validation() {
        let r = RotorIndex::new(2).unwrap();
        let twice = FaultSchedule {
            failures: alloc::vec![
                ScheduledFailure {
                    time: 1.0,
                    rotor: r
                },
                ScheduledFailure {
                    time: 2.0,
                    rotor: r
                }
            ],
            ..Default::default()
        };
        assert!(twice.validate().is_err());
        let backwards = FaultSchedule {
            failures: alloc::vec![
                ScheduledFailure {
                    time: 2.0,
                    rotor: r
                },
                ScheduledFailure {
                    time: 1.0,
                    rotor: RotorIndex::new(3).unwrap()
                }
            ],
            ..Default::default()
        };
        assert!(backwards.validate().is_err());
    }

    #[test]
    fn nan_command_diverges() {
        let params = PhysicalParams::default();
        let mut s = hover_state(&params);
        s.body.angular_rate.x = f64::NAN;
        let err = step(
            &s,
            &[1.0; ROTOR_COUNT],
            &VehicleGeometry::default(),
            &params,
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn ground_stops_descent() {
        let params = PhysicalParams::default();
        let mut s = VehicleState::new(Vec3::new(0.0, 0.0, -0.01), [0.0; ROTOR_COUNT]);
        s.body.velocity.z = 1.0;
        for _ in 0..100 {
            s = step(
                &s,
                &[0.0; ROTOR_COUNT],
                &VehicleGeometry::default(),
                &params,
                1e-3,
            )
            .unwrap();
        }
        assert_eq!(s.body.position.z, 0.0);
        assert_eq!(s.body.velocity, Vec3::zeros());
    }

    #[test]
    fn servo_converges() {
        let mut servo = TiltServo::new(RotorIndex::new(1).unwrap(), 0.1);
        servo.command(Tilt {
            rotor: servo.rotor,
            angle: 0.3,
        });
        for _ in 0..2000 {
            servo.step(1e-3);
        }
        assert_relative_eq!(servo.angle, 0.3, epsilon = 1e-5);
    }
}
