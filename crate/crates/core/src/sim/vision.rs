use alloc::vec::Vec;

use nalgebra::{Quaternion, UnitQuaternion};

use super::{transmit, EstimateRecord, Exchange, ObservationRecord, VisionRecorder};
use crate::error::Result;
use crate::estimator::{fuse_step, CorrectionSource, EstimatorConfig, FuseInput, PoseEstimate};
use crate::fdi::{BelievedState, FaultStatus};
use crate::link::{encode_frame, FrameDecoder, Message};
use crate::math::{Mat3, Vec3};
use crate::mission::{touchdown_report, LandingPhase, Mission, MissionInput, PhaseTransition};
use crate::noise::{NoiseStream, Stream};
use crate::scenario::{FlightMode, Scenario};
use crate::vision::{
    detect_markers, measure_position, CameraIntrinsics, DetectionConfig, Extrinsics, LandingTarget,
};

/// Vision-computer side: camera, position fusion and the landing mission.
pub struct VisionComputer {
    mode: FlightMode,
    camera: CameraIntrinsics,
    extrinsics: Extrinsics,
    detection: DetectionConfig,
    target: LandingTarget,
    estimator: EstimatorConfig,
    drop_probability: f64,
    mission: Mission,
    estimate: PoseEstimate,
    attitude: Mat3,
    velocity: Vec3,
    gnss: Option<Vec3>,
    fault: FaultStatus,
    decoder: FrameDecoder,
    camera_noise: NoiseStream,
    link_noise: NoiseStream,
    logged_transitions: usize,
    touchdown: Option<(f64, f64)>,
    attitude_messages_received: u64,
    final_estimate_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionSummary {
    pub phase: LandingPhase,
    /// (time, horizontal error) at touchdown.
    pub touchdown: Option<(f64, f64)>,
    pub transitions: Vec<PhaseTransition>,
    pub attitude_messages_received: u64,
    pub frames_dropped: usize,
    pub final_estimate_error: f64,
}

fn optional_time(x: f32) -> Option<f64> {
    (x >= 0.0).then_some(f64::from(x))
}

fn vec3(v: [f32; 3]) -> Vec3 {
    Vec3::new(v[0].into(), v[1].into(), v[2].into())
}

impl VisionComputer {
    pub fn new(scn: &Scenario) -> Result<Self> {
        let seed = scn.seed();
        Ok(Self {
            mode: scn.mode,
            camera: scn.camera,
            extrinsics: scn.extrinsics,
            detection: scn.detection,
            target: scn.target,
            estimator: scn.estimator,
            drop_probability: scn.link.drop_probability,
            mission: Mission::new(scn.mission.clone(), scn.landing, scn.target.center()),
            // the take-off position is known
            estimate: PoseEstimate::new(scn.initial_position(), 0.0),
            attitude: Mat3::identity(),
            velocity: Vec3::zeros(),
            gnss: None,
            fault: FaultStatus::default(),
            decoder: FrameDecoder::new(),
            camera_noise: NoiseStream::new(seed, Stream::Vision),
            link_noise: NoiseStream::new(seed, Stream::LinkUp),
            logged_transitions: 0,
            touchdown: None,
            attitude_messages_received: 0,
            final_estimate_error: 0.0,
        })
    }

    pub fn phase(&self) -> LandingPhase {
        self.mission.phase()
    }

    pub fn estimate(&self) -> &PoseEstimate {
        &self.estimate
    }

    /// The mission has landed; nothing more to simulate.
    pub fn finished(&self) -> bool {
        self.touchdown.is_some()
    }

    fn receive(&mut self, bytes: &[u8]) {
        self.decoder.push(bytes);
        while let Some(msg) = self.decoder.next_message() {
            match msg {
                Message::AttitudeVelocity { q, v, .. } => {
                    let q = Quaternion::new(q[0].into(), q[1].into(), q[2].into(), q[3].into());
                    self.attitude = UnitQuaternion::from_quaternion(q)
                        .to_rotation_matrix()
                        .into_inner();
                    self.velocity = vec3(v);
                    self.attitude_messages_received += 1;
                }
                Message::PositionReport { p, .. } => self.gnss = Some(vec3(p)),
                Message::FaultStatus {
                    state,
                    detection_time,
                    identification_time,
                    ..
                } => {
                    self.fault = FaultStatus {
                        believed: BelievedState::from_code(state.into())
                            .unwrap_or(BelievedState::Nominal),
                        detection_time: optional_time(detection_time),
                        identification_time: optional_time(identification_time),
                    }
                }
                Message::VelocityCommand { .. } => {}
            }
        }
    }

    /// Handles one camera frame and returns the bytes for the flight computer.
    pub fn process<R: VisionRecorder>(&mut self, ex: &Exchange, rec: &mut R) -> Vec<u8> {
        let t = ex.t;
        self.receive(&ex.bytes);

        let observations = detect_markers(
            &ex.truth,
            &self.target,
            &self.camera,
            &self.extrinsics,
            &self.detection,
            &mut self.camera_noise,
            t,
        );
        let input = FuseInput {
            velocity: self.velocity,
            dt: t - self.estimate.time,
            body_to_inertial: self.attitude,
            observations: &observations,
            target_position: self.target.center(),
            gnss: self.gnss.take(),
        };
        let fused = fuse_step(&self.estimate, &input, &self.extrinsics, &self.estimator);
        self.estimate = PoseEstimate {
            time: t,
            ..fused.estimate
        };
        for obs in &observations {
            rec.observation(&ObservationRecord {
                t,
                marker: obs.id,
                p_c: obs.p_c,
                corners: obs.corners,
                y: measure_position(obs, &self.attitude, &self.extrinsics),
            });
        }

        let mut reply = Vec::new();
        if self.mode == FlightMode::Mission {
            let v = self.mission.step(&MissionInput {
                t,
                estimate: self.estimate,
                velocity: self.velocity,
                marker_visible: !observations.is_empty(),
                fault: self.fault,
            });
            for tr in &self.mission.transitions()[self.logged_transitions..] {
                rec.phase(tr);
            }
            self.logged_transitions = self.mission.transitions().len();
            if self.touchdown.is_none() {
                if let Ok(err) = touchdown_report(self.mission.phase(), &ex.truth, &self.target) {
                    self.touchdown = Some((t, err));
                }
            }
            let msg = Message::VelocityCommand {
                t: t as f32,
                v: [v.x as f32, v.y as f32, v.z as f32],
            };
            transmit(
                encode_frame(&msg),
                self.drop_probability,
                &mut self.link_noise,
                &mut reply,
            );
        }

        self.final_estimate_error = (self.estimate.position - ex.truth.position).norm();
        rec.estimate(&EstimateRecord {
            t,
            estimate: self.estimate.position,
            truth: ex.truth.position,
            source: if fused.measurement.is_some() {
                fused.estimate.source
            } else {
                CorrectionSource::None
            },
            marker: fused.marker,
            innovation: fused.innovation,
            phase: self.mission.phase(),
        });
        reply
    }

    pub fn summary(&self) -> VisionSummary {
        VisionSummary {
            phase: self.mission.phase(),
            touchdown: self.touchdown,
            transitions: self.mission.transitions().to_vec(),
            attitude_messages_received: self.attitude_messages_received,
            frames_dropped: self.decoder.dropped(),
            final_estimate_error: self.final_estimate_error,
        }
    }
}
