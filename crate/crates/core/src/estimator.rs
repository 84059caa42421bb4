//! Fixed-gain position fusion: dead reckoning with the velocity reported by
//! the flight computer, corrected by marker measurements or, without a
//! marker in view, by GNSS.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{is_finite3, Mat3, Vec3};
use crate::vision::{measure_position, Extrinsics, MarkerId, MarkerObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionSource {
    #[default]
    None,
    Marker,
    Gnss,
}

impl CorrectionSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionSource::None => "none",
            CorrectionSource::Marker => "marker",
            CorrectionSource::Gnss => "gnss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    /// Inertial position [m].
    pub position: Vec3,
    /// Time of the estimate [s].
    pub time: f64,
    /// Time of the last correction [s].
    pub last_update: Option<f64>,
    pub source: CorrectionSource,
}

impl PoseEstimate {
    pub fn new(position: Vec3, time: f64) -> Self {
        Self {
            position,
            time,
            last_update: None,
            source: CorrectionSource::None,
        }
    }

    pub fn is_finite(&self) -> bool {
        is_finite3(&self.position) && self.time.is_finite()
    }
}

/// Per-axis gain in [0, 1]. In files either `[kx, ky, kz]` or one number
/// for all axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GainRepr", into = "[f64; 3]")]
pub struct FusionGain(pub [f64; 3]);

#[derive(Deserialize)]
#[serde(untagged)]
enum GainRepr {
    Uniform(f64),
    PerAxis([f64; 3]),
}

impl From<GainRepr> for FusionGain {
    fn from(r: GainRepr) -> Self {
        match r {
            GainRepr::Uniform(k) => Self::uniform(k),
            GainRepr::PerAxis(k) => Self(k),
        }
    }
}

impl From<FusionGain> for [f64; 3] {
    fn from(g: FusionGain) -> Self {
        g.0
    }
}

impl FusionGain {
    pub fn uniform(k: f64) -> Self {
        Self([k; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|k| (0.0..=1.0).contains(k)) {
            Ok(())
        } else {
            Err(invalid("fusion gain must lie in [0, 1] per axis"))
        }
    }

    pub fn diagonal(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub marker_gain: FusionGain,
    pub gnss_gain: FusionGain,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            marker_gain: FusionGain::uniform(0.3),
            gnss_gain: FusionGain::uniform(0.15),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.marker_gain.validate()?;
        self.gnss_gain.validate()
    }
}

/// `p ← p + v Δt`.
pub fn predict(est: &PoseEstimate, v: &Vec3, dt: f64) -> PoseEstimate {
    PoseEstimate {
        position: est.position + v * dt,
        time: est.time + dt,
        ..*est
    }
}

/// `p ← p + K (y − p)`.
pub fn update(
    est: &PoseEstimate,
    y: &Vec3,
    k: &FusionGain,
    source: CorrectionSource,
) -> PoseEstimate {
    PoseEstimate {
        position: est.position + k.diagonal() * (y - est.position),
        last_update: Some(est.time),
        source,
        ..*est
    }
}

/// Marker used for the measurement: the small one when reported, else the big one.
pub fn preferred_observation(observations: &[MarkerObservation]) -> Option<&MarkerObservation> {
    observations
        .iter()
        .find(|o| o.id == MarkerId::Small)
        .or_else(|| observations.iter().find(|o| o.id == MarkerId::Big))
}

/// Inputs for one estimator tick.
#[derive(Debug, Clone, Copy)]
pub struct FuseInput<'a> {
    pub velocity: Vec3,
    pub dt: f64,
    pub body_to_inertial: Mat3,
    pub observations: &'a [MarkerObservation],
    /// Inertial position of the marker center; marker measurements are
    /// relative to it.
    pub target_position: Vec3,
    pub gnss: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuseOutput {
    pub estimate: PoseEstimate,
    /// Absolute position measurement used for the correction.
    pub measurement: Option<Vec3>,
    /// `y − p_{k+1|k}`.
    pub innovation: Option<Vec3>,
    pub marker: Option<MarkerId>,
}

/// One estimator tick: predict, then correct with the preferred marker or
/// GNSS if available.
pub fn fuse_step(
    est: &PoseEstimate,
    input: &FuseInput<'_>,
    extr: &Extrinsics,
    config: &EstimatorConfig,
) -> FuseOutput {
    let predicted = predict(est, &input.velocity, input.dt);
    if let Some(obs) = preferred_observation(input.observations) {
        let y = input.target_position + measure_position(obs, &input.body_to_inertial, extr);
        return FuseOutput {
            estimate: update(
                &predicted,
                &y,
                &config.marker_gain,
                CorrectionSource::Marker,
            ),
            measurement: Some(y),
            innovation: Some(y - predicted.position),
            marker: Some(obs.id),
        };
    }
    if let Some(y) = input.gnss {
        return FuseOutput {
            estimate: update(&predicted, &y, &config.gnss_gain, CorrectionSource::Gnss),
            measurement: Some(y),
            innovation: Some(y - predicted.position),
            marker: None,
        };
    }
    FuseOutput {
        estimate: predicted,
        measurement: None,
        innovation: None,
        marker: None,
    }
}

/// Steady-state error variance of `p ← p + K(y − p)` with white measurement
/// noise of variance `sigma²` and exact prediction.
pub fn steady_state_variance(k: f64, sigma: f64) -> f64 {
    sigma * sigma * k / (2.0 - k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RigidBodyState;
    use crate::math::rotation_from_euler;
    use crate::noise::{NoiseStream, Stream};
    use crate::vision::{camera_pose, LandingTarget};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn est(p: Vec3) -> PoseEstimate {
        PoseEstimate::new(p, 0.0)
    }

    fn exact_obs(
        state: &RigidBodyState,
        target: &LandingTarget,
        id: MarkerId,
    ) -> MarkerObservation {
        let (cam_pos, cam_rot) = camera_pose(state, &Extrinsics::default());
        MarkerObservation {
            id,
            p_c: cam_rot.transpose() * (target.center() - cam_pos),
            corners: [[0.0; 2]; 4],
            timestamp: 0.0,
        }
    }

    #[test]
    fn predict_examples() {
        let p = predict(&est(Vec3::zeros()), &Vec3::new(1.0, 0.0, 0.0), 0.1);
        assert_relative_eq!(p.position, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(p.time, 0.1);
        let q = predict(&est(Vec3::new(1.0, 2.0, 3.0)), &Vec3::zeros(), 0.5);
        assert_eq!(q.position, Vec3::new(1.0, 2.0, 3.0));
        let v = Vec3::new(0.3, -1.1, 0.7);
        let half = predict(&predict(&est(Vec3::zeros()), &v, 0.05), &v, 0.05);
        assert_relative_eq!(
            half.position,
            predict(&est(Vec3::zeros()), &v, 0.1).position,
            epsilon = 1e-15
        );
    }

    #[test]
    fn update_examples() {
        let y = Vec3::new(2.0, 0.0, 0.0);
        let src = CorrectionSource::Marker;
        assert_eq!(
            update(&est(Vec3::zeros()), &y, &FusionGain::uniform(1.0), src).position,
            y
        );
        assert_eq!(
            update(&est(Vec3::zeros()), &y, &FusionGain::uniform(0.0), src).position,
            Vec3::zeros()
        );
        assert_eq!(
            update(&est(Vec3::zeros()), &y, &FusionGain::uniform(0.5), src).position,
            Vec3::new(1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn gain_validation() {
        assert!(FusionGain([0.0, 0.5, 1.0]).validate().is_ok());
        assert!(FusionGain([0.0, 1.5, 1.0]).validate().is_err());
        assert!(FusionGain([-0.1, 0.5, 1.0]).validate().is_err());
    }

    #[test]
    fn empty_tick_is_predict() {
        let e = est(Vec3::new(1.0, 2.0, -3.0));
        let input = FuseInput {
            velocity: Vec3::new(0.2, 0.0, -0.1),
            dt: 1.0 / 30.0,
            body_to_inertial: Mat3::identity(),
            observations: &[],
            target_position: Vec3::zeros(),
            gnss: None,
        };
        let out = fuse_step(
            &e,
            &input,
            &Extrinsics::default(),
            &EstimatorConfig::default(),
        );
        assert_eq!(out.estimate, predict(&e, &input.velocity, input.dt));
        assert!(out.innovation.is_none());
    }

    #[test]
    fn full_trust_recovers_truth() {
        let target = LandingTarget {
            position: [1.0, -2.0, 0.0],
            ..Default::default()
        };
        let state = RigidBodyState {
            attitude: rotation_from_euler(0.05, -0.02, 0.7),
            ..RigidBodyState::at_rest(Vec3::new(1.3, -1.8, -6.0))
        };
        let obs = [exact_obs(&state, &target, MarkerId::Big)];
        let input = FuseInput {
            velocity: Vec3::zeros(),
            dt: 1.0 / 30.0,
            body_to_inertial: state.attitude,
            observations: &obs,
            target_position: target.center(),
            gnss: Some(Vec3::new(50.0, 50.0, 50.0)),
        };
        let cfg = EstimatorConfig {
            marker_gain: FusionGain::uniform(1.0),
            ..Default::default()
        };
        let out = fuse_step(&est(Vec3::zeros()), &input, &Extrinsics::default(), &cfg);
        assert_relative_eq!(out.estimate.position, state.position, epsilon = 1e-9);
        assert_eq!(out.estimate.source, CorrectionSource::Marker);
    }

    #[test]
    fn small_marker_preferred() {
        let target = LandingTarget::default();
        let state = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, -2.0));
        let mut big = exact_obs(&state, &target, MarkerId::Big);
        big.p_c.x += 1.0;
        let small = exact_obs(&state, &target, MarkerId::Small);
        let obs = [big, small];
        assert_eq!(preferred_observation(&obs).unwrap().id, MarkerId::Small);
        assert_eq!(preferred_observation(&obs[..1]).unwrap().id, MarkerId::Big);
        assert!(preferred_observation(&[]).is_none());
    }

    #[test]
    fn gnss_used_without_marker() {
        let input = FuseInput {
            velocity: Vec3::zeros(),
            dt: 0.1,
            body_to_inertial: Mat3::identity(),
            observations: &[],
            target_position: Vec3::zeros(),
            gnss: Some(Vec3::new(1.0, 0.0, 0.0)),
        };
        let out = fuse_step(
            &est(Vec3::zeros()),
            &input,
            &Extrinsics::default(),
            &EstimatorConfig::default(),
        );
        assert_relative_eq!(out.estimate.position.x, 0.15, epsilon = 1e-15);
        assert_eq!(out.estimate.source, CorrectionSource::Gnss);
    }

    #[test]
    fn steady_state_rms_below_sigma() {
        let sigma = 0.05;
        let k = 0.3;
        let cfg = EstimatorConfig {
            marker_gain: FusionGain::uniform(k),
            ..Default::default()
        };
        let mut noise = NoiseStream::new(11, Stream::Vision);
        let v = Vec3::new(0.5, -0.2, 0.1);
        let dt = 1.0 / 30.0;
        let mut e = est(Vec3::zeros());
        let mut truth = Vec3::zeros();
        let mut sq = 0.0;
        let n = 20_000;
        for i in 0..n {
            truth += v * dt;
            let y = truth + noise.gaussian3(sigma);
            e = update(
                &predict(&e, &v, dt),
                &y,
                &cfg.marker_gain,
                CorrectionSource::Marker,
            );
            if i >= 100 {
                sq += (e.position.x - truth.x).powi(2);
            }
        }
        let rms = libm::sqrt(sq / (n - 100) as f64);
        assert!(rms < sigma);
        assert_relative_eq!(
            rms * rms,
            steady_state_variance(k, sigma),
            max_relative = 0.1
        );
    }

    proptest! {
        #[test]
        fn update_contracts_toward_measurement(
            p in prop::array::uniform3(-10.0f64..10.0),
            y in prop::array::uniform3(-10.0f64..10.0),
            k in 0.0f64..=1.0,
        ) {
            let out = update(&est(Vec3::from(p)), &Vec3::from(y), &FusionGain::uniform(k), CorrectionSource::Marker);
            for i in 0..3 {
                let lhs = (out.position[i] - y[i]).abs();
                let rhs = (1.0 - k) * (p[i] - y[i]).abs();
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }
        }

        #[test]
        fn fusion_is_frame_consistent(
            yaw in -3.1f64..3.1,
            p in prop::array::uniform3(-5.0f64..5.0),
            g in prop::array::uniform3(-5.0f64..5.0),
            v in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let r = rotation_from_euler(0.0, 0.0, yaw);
            let cfg = EstimatorConfig::default();
            let run = |rot: &Mat3| {
                let gnss = [rot * Vec3::from(g)];
                let input = FuseInput {
                    velocity: rot * Vec3::from(v),
                    dt: 0.05,
                    body_to_inertial: Mat3::identity(),
                    observations: &[],
                    target_position: Vec3::zeros(),
                    gnss: Some(gnss[0]),
                };
                fuse_step(&est(rot * Vec3::from(p)), &input, &Extrinsics::default(), &cfg).estimate.position
            };
            let a = run(&Mat3::identity());
            let b = run(&r);
            prop_assert!((r * a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn marker_measurement_frame_consistent() {
        let target = LandingTarget::default();
        let base = RigidBodyState {
            attitude: rotation_from_euler(0.02, 0.03, 0.0),
            ..RigidBodyState::at_rest(Vec3::new(0.4, 0.1, -5.0))
        };
        let yaw = 1.1;
        let r = rotation_from_euler(0.0, 0.0, yaw);
        let rotated = RigidBodyState {
            attitude: r * base.attitude,
            position: r * base.position,
            ..base
        };
        let y = |s: &RigidBodyState| {
            let obs = exact_obs(s, &target, MarkerId::Big);
            measure_position(&obs, &s.attitude, &Extrinsics::default())
        };
        assert_relative_eq!(r * y(&base), y(&rotated), epsilon = 1e-9);
    }
}
