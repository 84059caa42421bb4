//! Fault detection and identification with a bank of angular-rate
//! observers, one per hypothesis: index 0 assumes every rotor works, index
//! `i` assumes rotor `i` has failed. The observer whose model matches the
//! vehicle keeps a small residue.

use serde::{Deserialize, Serialize};

use crate::dynamics::PhysicalParams;
use crate::error::{invalid, Result};
use crate::geometry::{RotorIndex, VehicleGeometry};
use crate::math::{Mat3, Vec3};
use crate::ROTOR_COUNT;

pub const HYPOTHESES: usize = ROTOR_COUNT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdiConfig {
    /// Luenberger correction gain [1/s].
    pub observer_gain: f64,
    /// Residue low-pass time constant [s].
    pub residue_time_constant: f64,
    /// Nominal residue level that counts as abnormal [rad/s].
    pub detection_threshold: f64,
    /// How long the nominal residue must stay abnormal [s].
    pub detection_dwell: f64,
    /// The identified hypothesis must have a residue below this [rad/s].
    pub identification_threshold: f64,
    /// Required gap between the best and second-best failure residue [rad/s].
    pub identification_margin: f64,
    /// Give up on identification this long after detection [s].
    pub max_identification_time: f64,
}

impl Default for FdiConfig {
    fn default() -> Self {
        Self {
            observer_gain: 20.0,
            residue_time_constant: 0.05,
            detection_threshold: 0.12,
            detection_dwell: 0.01,
            identification_threshold: 0.12,
            identification_margin: 0.2,
            max_identification_time: 1.0,
        }
    }
}

impl FdiConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.observer_gain,
            self.residue_time_constant,
            self.detection_threshold,
            self.identification_threshold,
            self.identification_margin,
            self.max_identification_time,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("FDI gains, thresholds and times must be > 0"));
        }
        if !(self.detection_dwell >= 0.0) {
            return Err(invalid("detection_dwell must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverBank {
    config: FdiConfig,
    predicted: [Vec3; HYPOTHESES],
    residues: [f64; HYPOTHESES],
    /// Rotor forces reconstructed from the commands through the rotor lag.
    modeled_forces: [f64; ROTOR_COUNT],
}

impl ObserverBank {
    pub fn new(config: FdiConfig, initial_rate: Vec3, initial_forces: [f64; ROTOR_COUNT]) -> Self {
        Self {
            config,
            predicted: [initial_rate; HYPOTHESES],
            residues: [0.0; HYPOTHESES],
            modeled_forces: initial_forces,
        }
    }

    pub fn residues(&self) -> &[f64; HYPOTHESES] {
        &self.residues
    }

    pub fn predicted_rates(&self) -> &[Vec3; HYPOTHESES] {
        &self.predicted
    }

    pub fn config(&self) -> &FdiConfig {
        &self.config
    }

    /// Re-seeds the failure hypotheses from the measured rate. Before a
    /// fault each of them carries a standing residue from the torque it
    /// wrongly removes; restarting at detection lets the matching one stay
    /// low while the others grow.
    pub fn restart_failure_hypotheses(&mut self, rate_meas: &Vec3) {
        for h in 1..HYPOTHESES {
            self.predicted[h] = *rate_meas;
            self.residues[h] = 0.0;
        }
    }

    /// Compares the measured rate with every observer's prediction, filters
    /// the residues, then propagates every observer over the next `dt` with
    /// `forces_cmd` held.
    pub fn observer_step(
        &mut self,
        rate_meas: &Vec3,
        forces_cmd: &[f64; ROTOR_COUNT],
        geom: &VehicleGeometry,
        params: &PhysicalParams,
        dt: f64,
    ) {
        debug_assert!(dt > 0.0);
        let cfg = self.config;
        let alpha = 1.0 - libm::exp(-dt / cfg.residue_time_constant);
        let mut innovations = [Vec3::zeros(); HYPOTHESES];
        for h in 0..HYPOTHESES {
            innovations[h] = rate_meas - self.predicted[h];
            self.residues[h] += (innovations[h].norm() - self.residues[h]) * alpha;
        }

        // mean force over the coming interval under the first-order lag
        let tau = params.rotor_time_constant;
        let decay = libm::exp(-dt / tau);
        let mean_factor = tau / dt * (1.0 - decay);
        let mut mean_forces = [0.0; ROTOR_COUNT];
        for i in 0..ROTOR_COUNT {
            let target = forces_cmd[i].clamp(0.0, params.f_max);
            let f0 = self.modeled_forces[i];
            mean_forces[i] = target + (f0 - target) * mean_factor;
            self.modeled_forces[i] = target + (f0 - target) * decay;
        }

        let inertia = params.inertia_matrix();
        let inertia_inv = inertia.try_inverse().unwrap_or_else(Mat3::identity);
        let mut full = Vec3::zeros();
        let mut per_rotor = [Vec3::zeros(); ROTOR_COUNT];
        for i in 0..ROTOR_COUNT {
            per_rotor[i] = geom.torque_direction(i) * (mean_forces[i] * geom.effectiveness[i]);
            full += per_rotor[i];
        }
        for h in 0..HYPOTHESES {
            let torque = if h == 0 {
                full
            } else {
                full - per_rotor[h - 1]
            };
            let w = self.predicted[h];
            let accel = inertia_inv * (torque - w.cross(&(inertia * w)));
            self.predicted[h] = w + (accel + innovations[h] * cfg.observer_gain) * dt;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BelievedState {
    Nominal,
    Failed(RotorIndex),
    /// A fault was detected but no hypothesis could be singled out in time.
    Unresolved,
}

impl BelievedState {
    /// Compact code used in logs and on the link: 0 nominal, 1..=6 failed
    /// rotor, -1 unresolved.
    pub fn code(&self) -> i32 {
        match self {
            BelievedState::Nominal => 0,
            BelievedState::Failed(r) => r.number() as i32,
            BelievedState::Unresolved => -1,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(BelievedState::Nominal),
            -1 => Some(BelievedState::Unresolved),
            n if n > 0 => RotorIndex::new(n as usize).ok().map(BelievedState::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultStatus {
    pub believed: BelievedState,
    pub detection_time: Option<f64>,
    pub identification_time: Option<f64>,
}

impl Default for FaultStatus {
    fn default() -> Self {
        Self {
            believed: BelievedState::Nominal,
            detection_time: None,
            identification_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub status: FaultStatus,
    /// Set on the tick the fault is detected.
    pub detected: bool,
    /// Set on the tick the failed rotor is identified; the flight computer
    /// reacts by tilting the servo rotor and switching allocation matrix.
    pub reconfigure: Option<RotorIndex>,
}

/// Detection / identification logic over the residues. Latches once a
/// failure is identified or declared unresolved.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultDetector {
    config: FdiConfig,
    status: FaultStatus,
    abnormal_since: Option<f64>,
}

impl FaultDetector {
    pub fn new(config: FdiConfig) -> Self {
        Self {
            config,
            status: FaultStatus::default(),
            abnormal_since: None,
        }
    }

    pub fn status(&self) -> FaultStatus {
        self.status
    }

    pub fn decide(&mut self, residues: &[f64; HYPOTHESES], t: f64) -> Decision {
        let cfg = self.config;
        let hold = Decision {
            status: self.status,
            detected: false,
            reconfigure: None,
        };
        if self.status.believed != BelievedState::Nominal {
            return hold;
        }

        let detected_at = match self.status.detection_time {
            Some(td) => td,
            None => {
                if residues[0] > cfg.detection_threshold {
                    let since = *self.abnormal_since.get_or_insert(t);
                    if t - since + 1e-12 >= cfg.detection_dwell {
                        self.status.detection_time = Some(t);
                        // failure residues are stale until restarted
                        return Decision {
                            status: self.status,
                            detected: true,
                            reconfigure: None,
                        };
                    } else {
                        return hold;
                    }
                } else {
                    self.abnormal_since = None;
                    return hold;
                }
            }
        };

        let (mut best, mut second) = ((0usize, f64::INFINITY), f64::INFINITY);
        for (i, &r) in residues.iter().enumerate().skip(1) {
            if r < best.1 {
                second = best.1;
                best = (i, r);
            } else if r < second {
                second = r;
            }
        }
        if best.1 < cfg.identification_threshold && second - best.1 > cfg.identification_margin {
            let rotor = RotorIndex::from_slot(best.0 - 1);
            self.status.believed = BelievedState::Failed(rotor);
            self.status.identification_time = Some(t);
            return Decision {
                status: self.status,
                detected: false,
                reconfigure: Some(rotor),
            };
        }
        if t - detected_at > cfg.max_identification_time {
            self.status.believed = BelievedState::Unresolved;
        }
        Decision {
            status: self.status,
            detected: false,
            reconfigure: None,
        }
    }
}
