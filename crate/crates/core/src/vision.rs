//! Simulated downward camera: pinhole projection, visibility of the two
//! nested fiducial markers and the relative-position measurement.
//!
//! Marker detection is geometric. A marker is reported when all four corners
//! project inside the image, it is within range, and its projected side is
//! long enough; the big marker is dropped once it fills most of the image so
//! the small one takes over near the ground. The measured marker position is
//! ground truth plus Gaussian noise proportional to range.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::error::{invalid, Error, Result};
use crate::math::{Mat3, Vec3};
use crate::noise::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// [px]
    pub focal_length: f64,
    /// Principal point [px].
    pub cx: f64,
    pub cy: f64,
    /// Resolution [px].
    pub width: f64,
    pub height: f64,
    /// Processed frames per second [Hz].
    pub frame_rate: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_length: 915.0,
            cx: 640.0,
            cy: 360.0,
            width: 1280.0,
            height: 720.0,
            frame_rate: 30.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) {
            return Err(invalid("focal_length must be > 0"));
        }
        if !(self.cx > 0.0 && self.cx < self.width && self.cy > 0.0 && self.cy < self.height) {
            return Err(invalid("principal point must lie inside the image"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(invalid("frame_rate must be > 0"));
        }
        Ok(())
    }

    pub fn contains(&self, px: &[f64; 2]) -> bool {
        (0.0..=self.width).contains(&px[0]) && (0.0..=self.height).contains(&px[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extrinsics {
    /// Rotation camera→body, row-major.
    pub camera_to_body: [[f64; 3]; 3],
    /// Camera optical center in the body frame [m].
    pub lever_arm: [f64; 3],
}

impl Default for Extrinsics {
    /// Looking straight down, image x along body right, image y along body
    /// backward, 5 cm below the body origin.
    fn default() -> Self {
        Self {
            camera_to_body: [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            lever_arm: [0.0, 0.0, 0.05],
        }
    }
}

impl Extrinsics {
    pub fn rotation(&self) -> Mat3 {
        let c = &self.camera_to_body;
        Mat3::new(
            c[0][0], c[0][1], c[0][2], c[1][0], c[1][1], c[1][2], c[2][0], c[2][1], c[2][2],
        )
    }

    pub fn lever(&self) -> Vec3 {
        Vec3::from(self.lever_arm)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation();
        if (r.transpose() * r - Mat3::identity()).amax() > 1e-9
            || (r.determinant() - 1.0).abs() > 1e-9
        {
            return Err(invalid("camera_to_body must be a rotation"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandingTarget {
    /// Side of the outer marker [m].
    pub big_marker_length: f64,
    /// Side of the inner marker, centered in the outer one [m].
    pub small_marker_length: f64,
    /// Side of the square board [m].
    pub board_size: f64,
    /// Marker center in the inertial frame [m].
    pub position: [f64; 3],
    /// Board heading [rad].
    pub yaw: f64,
}

impl Default for LandingTarget {
    fn default() -> Self {
        Self {
            big_marker_length: 0.640,
            small_marker_length: 0.108,
            board_size: 0.800,
            position: [0.0; 3],
            yaw: 0.0,
        }
    }
}

impl LandingTarget {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn marker_length(&self, id: MarkerId) -> f64 {
        match id {
            MarkerId::Big => self.big_marker_length,
            MarkerId::Small => self.small_marker_length,
        }
    }

    /// Inertial corners of a marker, counter-clockwise seen from above.
    pub fn corners(&self, id: MarkerId) -> [Vec3; 4] {
        let h = self.marker_length(id) / 2.0;
        let (s, c) = (libm::sin(self.yaw), libm::cos(self.yaw));
        let center = self.center();
        [(h, h), (h, -h), (-h, -h), (-h, h)]
            .map(|(x, y)| center + Vec3::new(c * x - s * y, s * x + c * y, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.small_marker_length > 0.0
            && self.small_marker_length < self.big_marker_length
            && self.big_marker_length <= self.board_size)
        {
            return Err(invalid(
                "marker sizes must satisfy 0 < small < big <= board",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Maximum detection range of the big marker [m]; the small marker's
    /// range scales with its side length.
    pub max_range_big: f64,
    /// Minimum projected side length [px].
    pub min_footprint_px: f64,
    /// Big marker is dropped above this fraction of the minor image side.
    pub handoff_fraction: f64,
    /// Measurement noise standard deviation per axis, as a fraction of range.
    pub noise_fraction: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            max_range_big: 28.0,
            min_footprint_px: 12.0,
            handoff_fraction: 0.7,
            noise_fraction: 0.005,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range_big > 0.0 && self.min_footprint_px >= 0.0) {
            return Err(invalid("detection range must be > 0"));
        }
        if !(self.handoff_fraction > 0.0 && self.handoff_fraction <= 1.0) {
            return Err(invalid("handoff_fraction must lie in (0, 1]"));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(invalid("noise_fraction must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerId {
    Big,
    Small,
}

impl MarkerId {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarkerId::Big => "big",
            MarkerId::Small => "small",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerObservation {
    pub id: MarkerId,
    /// Marker center in the camera frame [m].
    pub p_c: Vec3,
    /// Projected corners [px].
    pub corners: [[f64; 2]; 4],
    pub timestamp: f64,
}

/// Pinhole projection of a camera-frame point.
pub fn project(intr: &CameraIntrinsics, point: &Vec3) -> Result<[f64; 2]> {
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera { depth: point.z });
    }
    Ok([
        intr.focal_length * point.x / point.z + intr.cx,
        intr.focal_length * point.y / point.z + intr.cy,
    ])
}

/// Camera pose in the inertial frame: (optical center, rotation camera→inertial).
pub fn camera_pose(state: &RigidBodyState, extr: &Extrinsics) -> (Vec3, Mat3) {
    (
        state.position + state.attitude * extr.lever(),
        state.attitude * extr.rotation(),
    )
}

fn side_lengths(px: &[[f64; 2]; 4]) -> [f64; 4] {
    core::array::from_fn(|i| {
        let a = px[i];
        let b = px[(i + 1) % 4];
        libm::hypot(b[0] - a[0], b[1] - a[1])
    })
}

struct Projected {
    center_cam: Vec3,
    corners: [[f64; 2]; 4],
    in_image: bool,
    footprint: f64,
}

fn project_marker(
    target: &LandingTarget,
    id: MarkerId,
    cam_pos: &Vec3,
    cam_rot: &Mat3,
    intr: &CameraIntrinsics,
) -> Option<Projected> {
    let to_cam = |p: &Vec3| cam_rot.transpose() * (p - cam_pos);
    let mut corners = [[0.0; 2]; 4];
    for (out, c) in corners.iter_mut().zip(target.corners(id).iter()) {
        *out = project(intr, &to_cam(c)).ok()?;
    }
    let sides = side_lengths(&corners);
    Some(Projected {
        center_cam: to_cam(&target.center()),
        in_image: corners.iter().all(|c| intr.contains(c)),
        footprint: sides.iter().copied().fold(f64::INFINITY, f64::min),
        corners,
    })
}

/// Markers visible from `state` at time `t`. `noise` supplies the measurement
/// perturbation; with `noise_fraction = 0` observations are exact.
pub fn detect_markers(
    state: &RigidBodyState,
    target: &LandingTarget,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
    config: &DetectionConfig,
    noise: &mut NoiseStream,
    t: f64,
) -> Vec<MarkerObservation> {
    let (cam_pos, cam_rot) = camera_pose(state, extr);
    let handoff_px = config.handoff_fraction * intr.width.min(intr.height);
    let mut out = Vec::new();
    for id in [MarkerId::Big, MarkerId::Small] {
        let Some(proj) = project_marker(target, id, &cam_pos, &cam_rot, intr) else {
            continue;
        };
        let range = proj.center_cam.norm();
        let max_range = config.max_range_big * target.marker_length(id) / target.big_marker_length;
        let visible =
            proj.in_image && range <= max_range && proj.footprint >= config.min_footprint_px;
        if !visible || (id == MarkerId::Big && proj.footprint > handoff_px) {
            continue;
        }
        let sigma = config.noise_fraction * range;
        let p_c = proj.center_cam + noise.gaussian3(sigma);
        out.push(MarkerObservation {
            id,
            p_c,
            corners: proj.corners,
            timestamp: t,
        });
    }
    out
}

/// Vehicle position relative to the marker center, in inertial axes:
/// `y = -C_b→i (C_c→b p_c + lever)`. With a zero lever arm this is exactly
/// `-C_b→i C_c→b p_c`.
pub fn measure_position(
    obs: &MarkerObservation,
    body_to_inertial: &Mat3,
    extr: &Extrinsics,
) -> Vec3 {
    -(body_to_inertial * (extr.rotation() * obs.p_c + extr.lever()))
}
