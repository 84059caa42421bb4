//! Rotor-failure reconfiguration: choosing the sideways tilt of a servo
//! rotor that restores full attitude control after a total rotor failure,
//! and the precomputed table the flight computer switches between.
//!
//! The tilt objective is the minimum singular value of the d-normalized
//! failure matrix, and is only credited when the hover allocation keeps every
//! remaining rotor inside `[reserve·f_max, (1 - reserve)·f_max]`. An untilted
//! hexarotor with a failed rotor always pins the opposite rotor at zero
//! thrust, so its objective is zero.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::allocation::allocate;
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    failure_matrix_unchecked, RotorIndex, Tilt, TorqueForceMatrix, VehicleGeometry, Wrench,
};
use crate::ROTOR_COUNT;

/// Grid half-range [deg]; ±90° would remove all vertical thrust.
const GRID_LIMIT_DEG: i32 = 89;
const GOLDEN_TOL_RAD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconfigCriteria {
    /// Hover thrust magnitude `m·g` [N].
    pub hover_thrust: f64,
    /// Per-rotor thrust limit [N].
    pub f_max: f64,
    /// Fraction of `f_max` each rotor must keep free at hover, on both sides.
    pub reserve_fraction: f64,
    /// Minimum normalized singular value for a failure to count as compensable.
    pub sigma_threshold: f64,
}

impl Default for ReconfigCriteria {
    fn default() -> Self {
        Self {
            hover_thrust: 2.8 * crate::GRAVITY,
            f_max: crate::GRAVITY,
            reserve_fraction: 0.1,
            sigma_threshold: 1e-3,
        }
    }
}

impl ReconfigCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.hover_thrust > 0.0 && self.f_max > 0.0) {
            return Err(invalid("hover_thrust and f_max must be > 0"));
        }
        if !(0.0..0.5).contains(&self.reserve_fraction) {
            return Err(invalid("reserve_fraction must lie in [0, 0.5)"));
        }
        if !(self.sigma_threshold > 0.0) {
            return Err(invalid("sigma_threshold must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSolution {
    pub tilt: Tilt,
    pub min_singular_value: f64,
}

/// Objective for tilting `reconfig` by `angle` after `failed` is lost.
pub fn tilt_objective(
    geom: &VehicleGeometry,
    reconfig: RotorIndex,
    failed: RotorIndex,
    angle: f64,
    criteria: &ReconfigCriteria,
) -> f64 {
    if reconfig == failed {
        return 0.0;
    }
    let a = failure_matrix_unchecked(
        geom,
        failed,
        Some(Tilt {
            rotor: reconfig,
            angle,
        }),
    );
    let hover = allocate(
        &a,
        &Wrench::new(Default::default(), -criteria.hover_thrust),
        criteria.f_max,
    );
    let lo = criteria.reserve_fraction * criteria.f_max;
    let hi = (1.0 - criteria.reserve_fraction) * criteria.f_max;
    let active: Vec<usize> = (0..ROTOR_COUNT).filter(|&i| i != failed.slot()).collect();
    if active
        .iter()
        .any(|&i| !(lo..=hi).contains(&hover.unclamped[i]))
    {
        return 0.0;
    }
    a.min_singular_value_of(geom.arm_length, &active)
}

/// Best sideways tilt of `reconfig` for a failure of `failed`: a 1° grid over
/// (-90°, 90°) followed by golden-section refinement around the best cell.
pub fn optimal_tilt(
    geom: &VehicleGeometry,
    reconfig: RotorIndex,
    failed: RotorIndex,
    criteria: &ReconfigCriteria,
) -> Result<TiltSolution> {
    let objective = |angle: f64| tilt_objective(geom, reconfig, failed, angle, criteria);

    let mut best = (0.0_f64, f64::NEG_INFINITY);
    for deg in -GRID_LIMIT_DEG..=GRID_LIMIT_DEG {
        let angle = (deg as f64).to_radians();
        let value = objective(angle);
        if value > best.1 {
            best = (angle, value);
        }
    }

    let step = 1.0_f64.to_radians();
    let limit = (GRID_LIMIT_DEG as f64).to_radians();
    let (mut lo, mut hi) = ((best.0 - step).max(-limit), (best.0 + step).min(limit));
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > best.1 {
            best = (x, f);
        }
    }
    while hi - lo > GOLDEN_TOL_RAD {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }

    if best.1 < criteria.sigma_threshold {
        return Err(Error::UnsupportedFailure { failed });
    }
    Ok(TiltSolution {
        tilt: Tilt {
            rotor: reconfig,
            angle: best.0,
        },
        min_singular_value: best.1,
    })
}

fn best_score(
    geom: &VehicleGeometry,
    reconfig: RotorIndex,
    failed: RotorIndex,
    criteria: &ReconfigCriteria,
) -> f64 {
    optimal_tilt(geom, reconfig, failed, criteria)
        .map(|s| s.min_singular_value)
        .unwrap_or(0.0)
}

/// Failures that `reconfig` is responsible for. A failure counts when the
/// optimal tilt clears the threshold and, if `reconfig` occupies a slot of
/// the two-servo design, it compensates that failure at least as well as its
/// partner slot (the partner's own failure always falls to `reconfig`).
pub fn compensable_set(
    geom: &VehicleGeometry,
    reconfig: RotorIndex,
    criteria: &ReconfigCriteria,
) -> Vec<RotorIndex> {
    let partner = geom.servo_partner(reconfig);
    RotorIndex::all()
        .filter(|&failed| failed != reconfig)
        .filter(|&failed| {
            let own = best_score(geom, reconfig, failed, criteria);
            if own < criteria.sigma_threshold {
                return false;
            }
            match partner {
                Some(p) if p != failed => {
                    let theirs = best_score(geom, p, failed, criteria);
                    own > theirs || (own == theirs && reconfig < p)
                }
                _ => true,
            }
        })
        .collect()
}

/// Failure matrix with a reconfiguration tilt applied. The failure must be
/// covered by some fitted servo.
pub fn build_failure_matrix(
    geom: &VehicleGeometry,
    failed: RotorIndex,
    tilt: Tilt,
    criteria: &ReconfigCriteria,
) -> Result<TorqueForceMatrix> {
    geom.validate()?;
    if !geom.is_reconfigurable(tilt.rotor) {
        return Err(invalid("tilt applied to a rotor without a servo"));
    }
    let covered = geom
        .reconfigurable_set
        .iter()
        .any(|&r| compensable_set(geom, r, criteria).contains(&failed));
    if !covered {
        return Err(Error::UnsupportedFailure { failed });
    }
    Ok(failure_matrix_unchecked(geom, failed, Some(tilt)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconfigEntry {
    pub failed: RotorIndex,
    pub reconfig_rotor: RotorIndex,
    pub tilt_angle: f64,
    pub min_singular_value: f64,
}

impl ReconfigEntry {
    pub fn tilt(&self) -> Tilt {
        Tilt {
            rotor: self.reconfig_rotor,
            angle: self.tilt_angle,
        }
    }

    pub fn matrix(&self, geom: &VehicleGeometry) -> TorqueForceMatrix {
        failure_matrix_unchecked(geom, self.failed, Some(self.tilt()))
    }
}

/// Precomputed reconfiguration for every compensable failure, sorted by
/// failed rotor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconfigTable {
    pub entries: Vec<ReconfigEntry>,
}

impl ReconfigTable {
    /// Table for the fitted servos, or for both design slots when
    /// `include_unfitted_slots` is set.
    pub fn build(
        geom: &VehicleGeometry,
        criteria: &ReconfigCriteria,
        include_unfitted_slots: bool,
    ) -> Result<Self> {
        geom.validate()?;
        criteria.validate()?;
        let rotors: Vec<RotorIndex> = if include_unfitted_slots {
            geom.servo_pair.to_vec()
        } else {
            geom.reconfigurable_set.clone()
        };
        let mut entries = Vec::new();
        for &rotor in &rotors {
            for failed in compensable_set(geom, rotor, criteria) {
                let sol = optimal_tilt(geom, rotor, failed, criteria)?;
                entries.push(ReconfigEntry {
                    failed,
                    reconfig_rotor: rotor,
                    tilt_angle: sol.tilt.angle,
                    min_singular_value: sol.min_singular_value,
                });
            }
        }
        entries.sort_by_key(|e| (e.failed, e.reconfig_rotor));
        Ok(Self { entries })
    }

    pub fn lookup(&self, failed: RotorIndex) -> Option<&ReconfigEntry> {
        self.entries.iter().find(|e| e.failed == failed)
    }
}
