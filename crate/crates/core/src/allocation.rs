//! Minimum-norm control allocation with saturation reporting.

use nalgebra::{SMatrix, SVector};

use crate::geometry::{TorqueForceMatrix, Wrench};
use crate::ROTOR_COUNT;

/// Wrench mismatch above which a clamped allocation counts as saturated.
pub const SATURATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Rotor forces clamped to `[0, f_max]`.
    pub forces: [f64; ROTOR_COUNT],
    /// Minimum-norm solution before clamping.
    pub unclamped: [f64; ROTOR_COUNT],
    /// Wrench produced by `forces`.
    pub achieved: Wrench,
    /// True when clamping moved the achieved wrench by more than
    /// [`SATURATION_TOLERANCE`] in any component.
    pub saturated: bool,
}

/// Allocator with the pseudoinverse of one matrix cached.
#[derive(Debug, Clone)]
pub struct Allocator {
    matrix: TorqueForceMatrix,
    pinv: SMatrix<f64, ROTOR_COUNT, 4>,
}

impl Allocator {
    pub fn new(matrix: TorqueForceMatrix) -> Self {
        let svd = matrix.0.svd(true, true);
        let sigma_max = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(1e-9 * sigma_max.max(f64::MIN_POSITIVE))
            .expect("SVD computed with both U and V");
        Self { matrix, pinv }
    }

    pub fn matrix(&self) -> &TorqueForceMatrix {
        &self.matrix
    }

    pub fn allocate(&self, wrench: &Wrench, f_max: f64) -> Allocation {
        debug_assert!(f_max > 0.0);
        let target = wrench.to_vector();
        let raw: SVector<f64, ROTOR_COUNT> = self.pinv * target;
        let unclamped: [f64; ROTOR_COUNT] = raw.into();
        let mut forces = unclamped;
        for f in forces.iter_mut() {
            *f = f.clamp(0.0, f_max);
        }
        let achieved = self.matrix.apply(&forces);
        let err = achieved.to_vector() - target;
        let saturated = err.amax() > SATURATION_TOLERANCE;
        Allocation {
            forces,
            unclamped,
            achieved,
            saturated,
        }
    }
}

/// One-shot allocation; use [`Allocator`] when the matrix is reused.
pub fn allocate(matrix: &TorqueForceMatrix, wrench: &Wrench, f_max: f64) -> Allocation {
    Allocator::new(*matrix).allocate(wrench, f_max)
}
