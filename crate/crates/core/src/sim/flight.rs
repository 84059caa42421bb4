use alloc::vec::Vec;

use nalgebra::{Rotation3, UnitQuaternion};

use super::{
    transmit, Exchange, FdiRecord, FlightRecord, FlightRecorder, RECOVERY_BOUND_DEG,
    RECOVERY_SETTLE_TIME,
};
use crate::allocation::Allocator;
use crate::control::{AttitudeController, PositionController, Setpoint};
use crate::dynamics::{
    self, apply_schedule, FaultSchedule, PhysicalParams, TiltServo, VehicleState,
};
use crate::error::Result;
use crate::fdi::{FaultDetector, FaultStatus, ObserverBank};
use crate::geometry::{
    failure_matrix_unchecked, torque_force_matrix, RotorIndex, VehicleGeometry, Wrench,
};
use crate::link::{encode_frame, FrameDecoder, Message};
use crate::math::{
    euler_from_rotation, rotation_exp, rotation_from_euler, rotation_log, Mat3, Vec3,
};
use crate::noise::{NoiseStream, Stream};
use crate::reconfig::ReconfigTable;
use crate::scenario::{FlightMode, LinkConfig, Scenario, SensorConfig, Timing};
use crate::ROTOR_COUNT;

struct Dividers {
    attitude: u64,
    position: u64,
    gnss: u64,
    log: u64,
}

struct Noise {
    attitude: NoiseStream,
    gyro: NoiseStream,
    gnss: NoiseStream,
    velocity: NoiseStream,
    link: NoiseStream,
}

/// Flight-computer side: truth dynamics, sensors, nested control, FDI and
/// reconfiguration.
pub struct FlightComputer {
    params: PhysicalParams,
    timing: Timing,
    div: Dividers,
    schedule: FaultSchedule,
    sensors: SensorConfig,
    link: LinkConfig,
    mode: FlightMode,
    duration: f64,
    nominal: VehicleGeometry,
    servo: Option<TiltServo>,
    table: ReconfigTable,
    allocator: Allocator,
    state: VehicleState,
    tick: u64,
    frame: u64,
    position_ctl: PositionController,
    attitude_ctl: AttitudeController,
    bank: ObserverBank,
    detector: FaultDetector,
    forces_cmd: [f64; ROTOR_COUNT],
    yaw_setpoint: f64,
    setpoint: Mat3,
    setpoint_euler: [f64; 3],
    vertical_force: f64,
    command: Option<(f64, Vec3)>,
    active_command: Option<Vec3>,
    hold_point: Vec3,
    holding: bool,
    measured_attitude: Mat3,
    measured_rate: Vec3,
    decoder: FrameDecoder,
    outbox: Vec<u8>,
    noise: Noise,
    /// Start of the current stretch within the recovery bound.
    inside_since: Option<f64>,
    recovered_at: Option<f64>,
    max_hold_error: f64,
    attitude_messages_sent: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightSummary {
    pub final_time: f64,
    pub status: FaultStatus,
    pub recovery_time: Option<f64>,
    pub max_hold_error: Option<f64>,
    pub attitude_messages_sent: u64,
    pub frames_dropped: usize,
}

impl FlightComputer {
    pub fn new(scn: &Scenario) -> Result<Self> {
        let timing = scn.timing;
        let div = Dividers {
            attitude: timing.divider(scn.control.attitude_rate)?,
            position: timing.divider(scn.control.position_rate)?,
            gnss: timing.divider(f64::from(timing.gnss_rate))?,
            log: timing.divider(f64::from(timing.flight_log_rate))?,
        };
        let nominal = scn.vehicle_geometry();
        let table = ReconfigTable::build(&nominal, &scn.reconfig_criteria(), false)?;
        let allocator = Allocator::new(torque_force_matrix(&nominal));
        let params = scn.vehicle;
        let yaw = scn.initial.yaw_deg.to_radians();
        let hover = allocator
            .allocate(&Wrench::hover(params.mass, params.gravity), params.f_max)
            .forces;
        let mut state = VehicleState::new(scn.initial_position(), hover);
        state.body.attitude = rotation_from_euler(0.0, 0.0, yaw);
        let seed = scn.seed();
        let servo = nominal
            .reconfigurable_set
            .first()
            .map(|&r| TiltServo::new(r, scn.faults.reconfiguration_latency));
        let hold_point = match scn.mode {
            FlightMode::Hold { setpoint: Some(p) } => Vec3::from(p),
            _ => scn.initial_position(),
        };
        Ok(Self {
            params,
            timing,
            div,
            schedule: scn.faults.clone(),
            sensors: scn.sensors.effective(),
            link: scn.link,
            mode: scn.mode,
            duration: scn.duration,
            nominal,
            servo,
            table,
            allocator,
            tick: 0,
            frame: 0,
            position_ctl: PositionController::new(scn.control.position),
            attitude_ctl: AttitudeController::new(scn.control.attitude),
            bank: ObserverBank::new(scn.fdi, Vec3::zeros(), hover),
            detector: FaultDetector::new(scn.fdi),
            forces_cmd: hover,
            yaw_setpoint: yaw,
            setpoint: state.body.attitude,
            setpoint_euler: [0.0, 0.0, yaw],
            vertical_force: -params.mass * params.gravity,
            command: None,
            active_command: None,
            hold_point,
            holding: true,
            measured_attitude: state.body.attitude,
            measured_rate: Vec3::zeros(),
            state,
            decoder: FrameDecoder::new(),
            outbox: Vec::new(),
            noise: Noise {
                attitude: NoiseStream::new(seed, Stream::Attitude),
                gyro: NoiseStream::new(seed, Stream::Gyro),
                gnss: NoiseStream::new(seed, Stream::Gnss),
                velocity: NoiseStream::new(seed, Stream::Velocity),
                link: NoiseStream::new(seed, Stream::LinkDown),
            },
            inside_since: None,
            recovered_at: None,
            max_hold_error: 0.0,
            attitude_messages_sent: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.timing.dt()
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn status(&self) -> FaultStatus {
        self.detector.status()
    }

    /// Exchange for frame 0, before any physics step.
    pub fn start(&mut self) -> Exchange {
        self.measure();
        self.exchange()
    }

    /// Applies the vision computer's bytes, runs physics up to the next
    /// camera frame and returns that frame's exchange.
    pub fn advance<R: FlightRecorder>(&mut self, inbound: &[u8], rec: &mut R) -> Result<Exchange> {
        self.decoder.push(inbound);
        while let Some(msg) = self.decoder.next_message() {
            if let Message::VelocityCommand { t, v } = msg {
                self.command = Some((
                    f64::from(t),
                    Vec3::new(v[0].into(), v[1].into(), v[2].into()),
                ));
            }
        }
        let until = self.timing.camera_tick(self.frame + 1);
        while self.tick < until {
            self.tick_once(rec)?;
        }
        self.frame += 1;
        Ok(self.exchange())
    }

    pub fn summary(&self) -> FlightSummary {
        let status = self.status();
        FlightSummary {
            final_time: self.time(),
            status,
            recovery_time: status
                .identification_time
                .zip(self.recovered_at)
                .map(|(t_id, t)| t - t_id),
            max_hold_error: matches!(self.mode, FlightMode::Hold { .. })
                .then_some(self.max_hold_error),
            attitude_messages_sent: self.attitude_messages_sent,
            frames_dropped: self.decoder.dropped(),
        }
    }

    fn exchange(&mut self) -> Exchange {
        let t = self.time();
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.measured_attitude,
        ));
        let v = self.state.body.velocity + self.noise.velocity.gaussian3(self.sensors.velocity);
        let status = self.status();
        let time_or_none = |x: Option<f64>| x.map_or(-1.0, |x| x as f32);
        let msgs = [
            Message::AttitudeVelocity {
                t: t as f32,
                q: [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
                v: [v.x as f32, v.y as f32, v.z as f32],
            },
            Message::FaultStatus {
                t: t as f32,
                state: status.believed.code() as i8,
                detection_time: time_or_none(status.detection_time),
                identification_time: time_or_none(status.identification_time),
            },
        ];
        for m in &msgs {
            self.send(m);
        }
        self.attitude_messages_sent += 1;
        Exchange {
            frame: self.frame,
            t,
            bytes: core::mem::take(&mut self.outbox),
            truth: self.state.body,
            last: t >= self.duration - 1e-9,
        }
    }

    fn send(&mut self, msg: &Message) {
        transmit(
            encode_frame(msg),
            self.link.drop_probability,
            &mut self.noise.link,
            &mut self.outbox,
        );
    }

    fn measure(&mut self) {
        let body = &self.state.body;
        let att_noise = self
            .noise
            .attitude
            .gaussian3(self.sensors.attitude_deg.to_radians());
        self.measured_attitude = body.attitude * rotation_exp(&att_noise);
        self.measured_rate = body.angular_rate + self.noise.gyro.gaussian3(self.sensors.gyro);
    }

    fn position_setpoint(&mut self, t: f64) -> Setpoint {
        if let FlightMode::Hold { .. } = self.mode {
            self.active_command = None;
            return Setpoint::Position(self.hold_point);
        }
        let fresh = self
            .command
            .filter(|(tc, _)| t - tc <= self.link.command_timeout);
        match fresh {
            Some((_, v)) => {
                self.holding = false;
                self.active_command = Some(v);
                Setpoint::Velocity(v)
            }
            None => {
                if !self.holding {
                    self.holding = true;
                    self.hold_point = self.state.body.position;
                }
                self.active_command = None;
                Setpoint::Position(self.hold_point)
            }
        }
    }

    fn reconfigure(&mut self, failed: RotorIndex) {
        match self.table.lookup(failed) {
            Some(entry) => {
                self.allocator = Allocator::new(entry.matrix(&self.nominal));
                if let Some(servo) = self
                    .servo
                    .as_mut()
                    .filter(|s| s.rotor == entry.reconfig_rotor)
                {
                    servo.command(entry.tilt());
                }
            }
            // no servo can help: drop the rotor and give up yaw authority
            None => {
                self.allocator =
                    Allocator::new(failure_matrix_unchecked(&self.nominal, failed, None))
            }
        }
    }

    fn tick_once<R: FlightRecorder>(&mut self, rec: &mut R) -> Result<()> {
        let n = self.tick;
        let t = self.time();
        let dt = self.timing.dt();

        if n.is_multiple_of(self.div.position) {
            let sp = self.position_setpoint(t);
            let body = &self.state.body;
            let out = self.position_ctl.update(
                &body.position,
                &body.velocity,
                sp,
                self.yaw_setpoint,
                self.params.mass,
                self.params.gravity,
                self.div.position as f64 * dt,
            );
            self.setpoint = out.attitude.rotation();
            self.setpoint_euler = [out.attitude.roll, out.attitude.pitch, out.attitude.yaw];
            self.vertical_force = out.vertical_force;
            if let FlightMode::Hold { .. } = self.mode {
                self.max_hold_error = self
                    .max_hold_error
                    .max((body.position - self.hold_point).norm());
            }
        }

        if n.is_multiple_of(self.div.attitude) {
            let dt_att = self.div.attitude as f64 * dt;
            self.measure();
            let torque = self.attitude_ctl.update(
                &self.measured_attitude,
                &self.measured_rate,
                &self.setpoint,
                dt_att,
            );
            let wrench = Wrench::new(torque, self.vertical_force);
            self.forces_cmd = self.allocator.allocate(&wrench, self.params.f_max).forces;
            self.bank.observer_step(
                &self.measured_rate,
                &self.forces_cmd,
                &self.nominal,
                &self.params,
                dt_att,
            );
            let decision = self.detector.decide(self.bank.residues(), t);
            if decision.detected {
                self.bank.restart_failure_hypotheses(&self.measured_rate);
            }
            if let Some(failed) = decision.reconfigure {
                self.reconfigure(failed);
            }
            rec.fdi(&FdiRecord {
                t,
                residues: *self.bank.residues(),
                believed: decision.status.believed.code(),
            });
            if let (Some(t_id), None) = (decision.status.identification_time, self.recovered_at) {
                let err =
                    rotation_log(&(self.state.body.attitude.transpose() * self.setpoint)).norm();
                if t < t_id || err.to_degrees() > RECOVERY_BOUND_DEG {
                    self.inside_since = None;
                } else {
                    let since = *self.inside_since.get_or_insert(t);
                    if t - since + 1e-12 >= RECOVERY_SETTLE_TIME {
                        self.recovered_at = Some(since);
                    }
                }
            }
        }

        if n.is_multiple_of(self.div.gnss) {
            let p = self.state.body.position + self.noise.gnss.gaussian3(self.sensors.gnss);
            self.send(&Message::PositionReport {
                t: t as f32,
                p: [p.x as f32, p.y as f32, p.z as f32],
            });
        }

        if n.is_multiple_of(self.div.log) {
            let body = &self.state.body;
            let (r, p, y) = euler_from_rotation(&body.attitude);
            rec.flight(&FlightRecord {
                t,
                position: body.position,
                velocity: body.velocity,
                euler: [r, p, y],
                angular_rate: body.angular_rate,
                setpoint_euler: self.setpoint_euler,
                velocity_command: self.active_command,
                vertical_force: self.vertical_force,
                forces_cmd: self.forces_cmd,
                forces: self.state.rotor_forces,
                servo_angle: self.servo.map_or(0.0, |s| s.angle),
            });
        }

        let mut truth = apply_schedule(&self.schedule, t, &self.nominal);
        if let Some(servo) = self.servo.as_mut() {
            truth = servo.apply(&truth);
            servo.step(dt);
        }
        self.state = dynamics::step(&self.state, &self.forces_cmd, &truth, &self.params, dt)?;
        // keep the time exact: integer ticks, not accumulated dt
        self.tick += 1;
        self.state.time = self.time();
        Ok(())
    }
}
