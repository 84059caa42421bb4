//! Rotor layout and the 4×6 torque-force matrix.
//!
//! Rotors are numbered 1..=6 clockwise seen from above, starting with the
//! front-right rotor at 30° azimuth. With that numbering and alternating spin
//! the nominal matrix is
//!
//! ```text
//!  -d/2    d/2    d    d/2   -d/2   -d
//!  √3d/2  √3d/2   0  -√3d/2 -√3d/2   0
//!   kt    -kt    kt   -kt    kt    -kt
//!   -1     -1    -1    -1    -1     -1
//! ```
//!
//! with rows roll torque, pitch torque, yaw torque and vertical force.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::Vec3;
use crate::ROTOR_COUNT;

/// One-based rotor number, 1..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RotorIndex(u8);

impl RotorIndex {
    pub fn new(number: usize) -> Result<Self> {
        if (1..=ROTOR_COUNT).contains(&number) {
            Ok(Self(number as u8))
        } else {
            Err(Error::RotorIndex(number))
        }
    }

    /// Zero-based slot for array access.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn number(self) -> usize {
        self.0 as usize
    }

    pub fn from_slot(slot: usize) -> Self {
        assert!(slot < ROTOR_COUNT, "rotor slot {slot} out of range");
        Self(slot as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = RotorIndex> {
        (0..ROTOR_COUNT).map(Self::from_slot)
    }
}

impl TryFrom<usize> for RotorIndex {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RotorIndex> for usize {
    fn from(r: RotorIndex) -> usize {
        r.number()
    }
}

impl fmt::Display for RotorIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sideways tilt of one rotor: rotation of its thrust vector about its own
/// arm axis by `angle` radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    pub rotor: RotorIndex,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    /// Distance from the geometric center to each rotor [m].
    pub arm_length: f64,
    /// Drag-torque to thrust ratio [m].
    pub torque_coeff: f64,
    /// Rotor azimuths in the body x-y plane [rad].
    pub rotor_azimuths: [f64; ROTOR_COUNT],
    /// +1 or -1 per rotor; +1 produces `+kt` yaw torque per newton of thrust.
    pub spin_signs: [f64; ROTOR_COUNT],
    /// Current tilt angle of each rotor about its arm axis [rad].
    #[serde(default)]
    pub tilt: [f64; ROTOR_COUNT],
    /// 1 for a working rotor, 0 for a failed one.
    #[serde(default = "full_effectiveness")]
    pub effectiveness: [f64; ROTOR_COUNT],
    /// Rotors actually fitted with a tilt servo.
    pub reconfigurable_set: Vec<RotorIndex>,
    /// The two servo slots of the full reconfigurable design. Each slot is
    /// responsible for the failures it compensates better than its partner.
    pub servo_pair: [RotorIndex; 2],
}

fn full_effectiveness() -> [f64; ROTOR_COUNT] {
    [1.0; ROTOR_COUNT]
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self::canonical(0.275, 0.016)
    }
}

impl VehicleGeometry {
    /// Regular hexagon, alternating spin, rotor 1 fitted with the tilt servo
    /// and paired with rotor 2 in the two-servo design.
    pub fn canonical(arm_length: f64, torque_coeff: f64) -> Self {
        let mut rotor_azimuths = [0.0; ROTOR_COUNT];
        let mut spin_signs = [0.0; ROTOR_COUNT];
        for i in 0..ROTOR_COUNT {
            rotor_azimuths[i] = (30.0 - 60.0 * i as f64).to_radians();
            spin_signs[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        Self {
            arm_length,
            torque_coeff,
            rotor_azimuths,
            spin_signs,
            tilt: [0.0; ROTOR_COUNT],
            effectiveness: full_effectiveness(),
            reconfigurable_set: alloc::vec![RotorIndex(1)],
            servo_pair: [RotorIndex(1), RotorIndex(2)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arm_length > 0.0 && self.arm_length.is_finite()) {
            return Err(invalid("arm_length must be > 0"));
        }
        if !(self.torque_coeff > 0.0 && self.torque_coeff.is_finite()) {
            return Err(invalid("torque_coeff must be > 0"));
        }
        if self.spin_signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(invalid("spin_signs must be +1 or -1"));
        }
        if self.spin_signs.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("spin_signs must alternate"));
        }
        if self
            .rotor_azimuths
            .iter()
            .chain(&self.tilt)
            .any(|a| !a.is_finite())
        {
            return Err(invalid("rotor angles must be finite"));
        }
        if self.effectiveness.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("effectiveness must lie in [0, 1]"));
        }
        if self.servo_pair[0] == self.servo_pair[1] {
            return Err(invalid("servo_pair must name two distinct rotors"));
        }
        if self
            .reconfigurable_set
            .iter()
            .any(|r| !self.servo_pair.contains(r))
        {
            return Err(invalid("every fitted servo must occupy a servo_pair slot"));
        }
        Ok(())
    }

    pub fn is_reconfigurable(&self, rotor: RotorIndex) -> bool {
        self.reconfigurable_set.contains(&rotor)
    }

    /// Partner slot of `rotor` in the two-servo design, if `rotor` is a slot.
    pub fn servo_partner(&self, rotor: RotorIndex) -> Option<RotorIndex> {
        match self.servo_pair {
            [a, b] if a == rotor => Some(b),
            [a, b] if b == rotor => Some(a),
            _ => None,
        }
    }

    pub fn with_tilt(mut self, tilt: Tilt) -> Self {
        self.tilt[tilt.rotor.slot()] = tilt.angle;
        self
    }

    pub fn with_failed(mut self, rotor: RotorIndex) -> Self {
        self.effectiveness[rotor.slot()] = 0.0;
        self
    }

    pub fn rotor_position(&self, slot: usize) -> Vec3 {
        let (s, c) = sin_cos_snapped(self.rotor_azimuths[slot]);
        Vec3::new(self.arm_length * c, self.arm_length * s, 0.0)
    }

    /// Unit thrust direction of a rotor in the body frame.
    pub fn thrust_direction(&self, slot: usize) -> Vec3 {
        let (s, c) = sin_cos_snapped(self.rotor_azimuths[slot]);
        let (st, ct) = sin_cos_snapped(self.tilt[slot]);
        // tangential unit vector, i.e. arm axis rotated +90° about body z
        Vec3::new(-s * st, c * st, -ct)
    }

    /// Torque per newton of rotor thrust: lever-arm moment plus the rotor's
    /// reaction torque along its own axis.
    pub fn torque_direction(&self, slot: usize) -> Vec3 {
        let r = self.rotor_position(slot);
        let t = self.thrust_direction(slot);
        let reaction = self.spin_signs[slot] * self.torque_coeff;
        Vec3::new(
            r.y * t.z - r.z * t.y - reaction * t.x,
            r.z * t.x - r.x * t.z - reaction * t.y,
            r.x * t.y - r.y * t.x - reaction * t.z,
        )
    }
}

/// sin/cos that return exact table values on multiples of 30°.
fn sin_cos_snapped(angle: f64) -> (f64, f64) {
    let step = core::f64::consts::PI / 6.0;
    let k = angle / step;
    let kr = libm::round(k);
    if libm::fabs(k - kr) < 1e-12 {
        let half_root3 = libm::sqrt(3.0) / 2.0;
        let cos_table = [1.0, half_root3, 0.5, 0.0, -0.5, -half_root3];
        let idx = (kr as i64).rem_euclid(12) as usize;
        let cos_of = |i: usize| {
            let i = i % 12;
            if i < 6 {
                cos_table[i]
            } else {
                -cos_table[i - 6]
            }
        };
        // sin(x) = cos(x - 90°)
        (cos_of(idx + 9), cos_of(idx))
    } else {
        (libm::sin(angle), libm::cos(angle))
    }
}

pub type Matrix4x6 = SMatrix<f64, 4, ROTOR_COUNT>;

/// Linear map from the six rotor forces to `[roll, pitch, yaw torque, vertical force]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueForceMatrix(pub Matrix4x6);

/// Body torque [N·m] and vertical force [N, negative = upward].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub torque: Vec3,
    pub vertical_force: f64,
}

impl Wrench {
    pub fn new(torque: Vec3, vertical_force: f64) -> Self {
        Self {
            torque,
            vertical_force,
        }
    }

    /// Zero torque, thrust equal to the weight.
    pub fn hover(mass: f64, gravity: f64) -> Self {
        Self::new(Vec3::zeros(), -mass * gravity)
    }

    pub fn to_vector(&self) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(
            self.torque.x,
            self.torque.y,
            self.torque.z,
            self.vertical_force,
        )
    }

    pub fn from_vector(v: &SVector<f64, 4>) -> Self {
        Self::new(Vec3::new(v[0], v[1], v[2]), v[3])
    }
}

impl TorqueForceMatrix {
    pub fn matrix(&self) -> &Matrix4x6 {
        &self.0
    }

    pub fn apply(&self, forces: &[f64; ROTOR_COUNT]) -> Wrench {
        Wrench::from_vector(&(self.0 * SVector::<f64, ROTOR_COUNT>::from(*forces)))
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 4] {
        let mut s: [f64; 4] = self.0.singular_values().into();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Numerical rank with tolerance `1e-9 · σ_max`.
    pub fn rank(&self) -> usize {
        let s = self.singular_values();
        let tol = 1e-9 * s[0];
        s.iter().filter(|v| **v > tol).count()
    }

    /// Copy with the three torque rows divided by `arm_length`, making every
    /// entry dimensionless.
    pub fn normalized(&self, arm_length: f64) -> Matrix4x6 {
        let mut m = self.0;
        for r in 0..3 {
            for c in 0..ROTOR_COUNT {
                m[(r, c)] /= arm_length;
            }
        }
        m
    }

    /// Smallest of the four singular values of the normalized matrix
    /// restricted to `columns`; zero when fewer than four columns remain.
    pub fn min_singular_value_of(&self, arm_length: f64, columns: &[usize]) -> f64 {
        if columns.len() < 4 {
            return 0.0;
        }
        let n = self.normalized(arm_length);
        let sub = DMatrix::from_fn(4, columns.len(), |r, c| n[(r, columns[c])]);
        sub.singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Normalized minimum singular value over the rotors that are strictly
    /// inside their range at the given hover allocation. A rotor pinned at
    /// zero thrust cannot modulate in both directions and is excluded, which
    /// is what makes a standard hexarotor with a failed rotor lose rank.
    pub fn hover_effective_min_singular_value(
        &self,
        arm_length: f64,
        hover_forces: &[f64; ROTOR_COUNT],
        f_max: f64,
    ) -> f64 {
        let tol = 1e-9 * f_max;
        let active: Vec<usize> = (0..ROTOR_COUNT)
            .filter(|&i| {
                self.0.column(i).norm() > 0.0
                    && hover_forces[i] > tol
                    && hover_forces[i] < f_max - tol
            })
            .collect();
        self.min_singular_value_of(arm_length, &active)
    }
}

/// Torque-force matrix of the geometry in its current state (tilts and
/// effectiveness included).
pub fn torque_force_matrix(geom: &VehicleGeometry) -> TorqueForceMatrix {
    let mut m = Matrix4x6::zeros();
    for i in 0..ROTOR_COUNT {
        let eff = geom.effectiveness[i];
        if eff == 0.0 {
            continue;
        }
        let tq = geom.torque_direction(i);
        let t = geom.thrust_direction(i);
        m[(0, i)] = eff * tq.x;
        m[(1, i)] = eff * tq.y;
        m[(2, i)] = eff * tq.z;
        m[(3, i)] = eff * t.z;
    }
    TorqueForceMatrix(m)
}

/// Nominal matrix: all rotors healthy and untilted.
pub fn build_nominal_matrix(geom: &VehicleGeometry) -> Result<TorqueForceMatrix> {
    geom.validate()?;
    let mut nominal = geom.clone();
    nominal.tilt = [0.0; ROTOR_COUNT];
    nominal.effectiveness = full_effectiveness();
    Ok(torque_force_matrix(&nominal))
}

/// Matrix with `failed` zeroed and `tilt` applied, without checking whether
/// the tilt actually compensates the failure.
pub fn failure_matrix_unchecked(
    geom: &VehicleGeometry,
    failed: RotorIndex,
    tilt: Option<Tilt>,
) -> TorqueForceMatrix {
    let mut g = geom.clone();
    g.tilt = [0.0; ROTOR_COUNT];
    g.effectiveness = full_effectiveness();
    if let Some(t) = tilt {
        g.tilt[t.rotor.slot()] = t.angle;
    }
    torque_force_matrix(&g.with_failed(failed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_matrix(d: f64, kt: f64) -> Matrix4x6 {
        let s = libm::sqrt(3.0) * d / 2.0;
        #[rustfmt::skip]
        let m = Matrix4x6::from_row_slice(&[
            -d / 2.0, d / 2.0, d, d / 2.0, -d / 2.0, -d,
            s, s, 0.0, -s, -s, 0.0,
            kt, -kt, kt, -kt, kt, -kt,
            -1.0, -1.0, -1.0, -1.0, -1.0, -1.0,
        ]);
        m
    }

    #[test]
    fn nominal_matrix_is_exact() {
        for &(d, kt) in &[(0.275, 0.016), (1.0, 0.1), (0.31, 0.013)] {
            let a = build_nominal_matrix(&VehicleGeometry::canonical(d, kt)).unwrap();
            assert_eq!(a.0, reference_matrix(d, kt));
        }
    }

    #[test]
    fn nominal_columns_three_and_six() {
        let g = VehicleGeometry::default();
        let a = build_nominal_matrix(&g).unwrap();
        let (d, kt) = (g.arm_length, g.torque_coeff);
        assert_eq!(
            a.0.column(2).iter().copied().collect::<Vec<_>>(),
            [d, 0.0, kt, -1.0]
        );
        assert_eq!(
            a.0.column(5).iter().copied().collect::<Vec<_>>(),
            [-d, 0.0, -kt, -1.0]
        );
    }

    #[test]
    fn equal_forces_give_pure_thrust() {
        let a = build_nominal_matrix(&VehicleGeometry::default()).unwrap();
        for c in [0.0, 1.0, 4.578, 9.81] {
            let w = a.apply(&[c; 6]);
            assert_relative_eq!(w.torque.norm(), 0.0, epsilon = 1e-15);
            assert_relative_eq!(w.vertical_force, -6.0 * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn torque_row_sums_vanish() {
        let a = build_nominal_matrix(&VehicleGeometry::default()).unwrap();
        for r in 0..3 {
            assert!(a.0.row(r).sum().abs() < 1e-15);
        }
        assert_eq!(a.rank(), 4);
    }

    #[test]
    fn invalid_arm_length_rejected() {
        let g = VehicleGeometry::canonical(0.0, 0.016);
        assert!(matches!(
            build_nominal_matrix(&g),
            Err(Error::Validation(_))
        ));
        let g = VehicleGeometry::canonical(-1.0, 0.016);
        assert!(build_nominal_matrix(&g).is_err());
    }

    #[test]
    fn non_alternating_spin_rejected() {
        let mut g = VehicleGeometry::default();
        g.spin_signs[1] = 1.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn tilt_keeps_unit_thrust_and_adds_yaw_lever() {
        let g = VehicleGeometry::default().with_tilt(Tilt {
            rotor: RotorIndex::new(1).unwrap(),
            angle: 0.3,
        });
        let t = g.thrust_direction(0);
        assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-15);
        // thrust stays orthogonal to the arm
        assert_relative_eq!(t.dot(&g.rotor_position(0)), 0.0, epsilon = 1e-15);
        let tq = g.torque_direction(0);
        let expected_yaw = g.arm_length * libm::sin(0.3) + g.torque_coeff * libm::cos(0.3);
        assert_relative_eq!(tq.z, expected_yaw, epsilon = 1e-15);
    }

    #[test]
    fn failure_matrix_zeroes_column() {
        let g = VehicleGeometry::default();
        let a = failure_matrix_unchecked(&g, RotorIndex::new(3).unwrap(), None);
        assert!(a.0.column(2).iter().all(|v| *v == 0.0));
        let nominal = build_nominal_matrix(&g).unwrap();
        for c in [0, 1, 3, 4, 5] {
            assert_eq!(a.0.column(c), nominal.0.column(c));
        }
    }

    #[test]
    fn rotor_index_bounds() {
        assert!(RotorIndex::new(0).is_err());
        assert!(RotorIndex::new(7).is_err());
        assert_eq!(RotorIndex::new(6).unwrap().slot(), 5);
    }
}
