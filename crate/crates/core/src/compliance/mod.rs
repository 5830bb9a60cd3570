//! Directional stiffness construction and the admittance controller.
//!
//! A stiffness profile is low along one direction and uniformly high in the
//! orthogonal complement: `K = S diag(k_low, k_high, k_high) Sᵀ` where the
//! first column of `S` is the low-stiffness direction. When driven from force
//! feedback the low direction is the force direction and `k_low` follows a
//! piecewise-linear schedule in the force magnitude.

mod admittance;

pub use admittance::{admittance_step, run_admittance, AdmittanceInput, AdmittanceParams, AdmittanceState};

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{basis_from_direction, OrthoBasis};

/// Piecewise-linear map from force magnitude to low-direction stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessSchedule {
    pub k_max: f64,
    pub k_min: f64,
    pub f_max: f64,
    pub f_min: f64,
}

impl StiffnessSchedule {
    pub fn new(k_max: f64, k_min: f64, f_max: f64, f_min: f64) -> Result<Self> {
        let s = Self {
            k_max,
            k_min,
            f_max,
            f_min,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k_max, self.k_min, self.f_max, self.f_min]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.k_max >= self.k_min && self.k_min >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule needs k_max >= k_min >= 0, got k_max={} k_min={}",
                self.k_max, self.k_min
            )));
        }
        if !(self.f_max > self.f_min && self.f_min >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule needs f_max > f_min >= 0, got f_max={} f_min={}",
                self.f_max, self.f_min
            )));
        }
        Ok(())
    }
}

impl Default for StiffnessSchedule {
    fn default() -> Self {
        Self {
            k_max: 2000.0,
            k_min: 50.0,
            f_max: 8.0,
            f_min: 1.0,
        }
    }
}

/// Default stiffness in the directions orthogonal to the force, N/m.
pub const DEFAULT_K_HIGH: f64 = 2000.0;

/// Low-direction stiffness for a force magnitude: `k_max` below `f_min`,
/// `k_min` above `f_max`, linear in between.
pub fn k_low_of_force(schedule: &StiffnessSchedule, f_mag: f64) -> f64 {
    let StiffnessSchedule {
        k_max,
        k_min,
        f_max,
        f_min,
    } = *schedule;
    if f_mag < f_min {
        k_max
    } else if f_mag > f_max {
        k_min
    } else {
        k_max - (k_max - k_min) * (f_mag - f_min) / (f_max - f_min)
    }
}

/// A 3x3 stiffness matrix together with its spectral decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessProfile {
    matrix: Matrix3<f64>,
    low_dir: Vector3<f64>,
    k_low: f64,
    k_high: f64,
}

impl StiffnessProfile {
    /// `k` in every direction. The low direction is reported as `+x`.
    pub fn uniform(k: f64) -> Self {
        Self {
            matrix: Matrix3::identity() * k,
            low_dir: Vector3::x(),
            k_low: k,
            k_high: k,
        }
    }

    /// `S diag(k_low, k_high, k_high) Sᵀ` with `S` completed from `dir`.
    pub fn from_direction(dir: &Vector3<f64>, k_low: f64, k_high: f64) -> Result<Self> {
        let basis = basis_from_direction(dir)?;
        Self::from_basis(&basis, k_low, k_high)
    }

    /// Same as [`from_direction`](Self::from_direction) with a caller-supplied
    /// completion of the basis. Only the first column affects the result.
    pub fn from_basis(basis: &OrthoBasis, k_low: f64, k_high: f64) -> Result<Self> {
        if !(k_low >= 0.0 && k_high >= 0.0) || !k_low.is_finite() || !k_high.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stiffness values must be finite and non-negative, got k_low={k_low} k_high={k_high}"
            )));
        }
        let s = basis.matrix();
        let k0 = Matrix3::from_diagonal(&Vector3::new(k_low, k_high, k_high));
        let mut matrix = s * k0 * s.transpose();
        // Symmetrize away the rounding asymmetry of the triple product.
        matrix = (matrix + matrix.transpose()) * 0.5;
        Ok(Self {
            matrix,
            low_dir: basis.direction(),
            k_low,
            k_high,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn low_dir(&self) -> Vector3<f64> {
        self.low_dir
    }

    pub fn k_low(&self) -> f64 {
        self.k_low
    }

    pub fn k_high(&self) -> f64 {
        self.k_high
    }

    pub fn is_uniform(&self) -> bool {
        self.k_low == self.k_high
    }

    /// `K⁻¹ f`, computed from the decomposition. Fails if any eigenvalue is 0.
    pub fn compliance_times(&self, f: &Vector3<f64>) -> Result<Vector3<f64>> {
        if self.k_low <= 0.0 || self.k_high <= 0.0 {
            return Err(Error::DegenerateStiffness(self.k_low.min(self.k_high)));
        }
        let along = self.low_dir * self.low_dir.dot(f);
        Ok(along / self.k_low + (f - along) / self.k_high)
    }
}

/// Force-feedback stiffness: low along `f`, `k_high` elsewhere, uniform
/// `k_high` while `|f| < f_min`.
pub fn stiffness_from_force(f: &Vector3<f64>, schedule: &StiffnessSchedule, k_high: f64) -> StiffnessProfile {
    if k_high < schedule.k_max {
        warn!(
            "k_high ({k_high}) below schedule k_max ({}); low direction may end up stiffer than the rest",
            schedule.k_max
        );
    }
    let mag = f.norm();
    if mag < schedule.f_min || mag == 0.0 {
        return StiffnessProfile::uniform(k_high);
    }
    let k_low = k_low_of_force(schedule, mag);
    // |f| >= f_min >= 0 and |f| > 0 here, and the schedule yields finite
    // non-negative stiffness, so construction cannot fail.
    StiffnessProfile::from_direction(f, k_low, k_high).unwrap_or_else(|_| StiffnessProfile::uniform(k_high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;

    fn sched() -> StiffnessSchedule {
        StiffnessSchedule::new(2000.0, 100.0, 8.0, 1.0).unwrap()
    }

    #[test]
    fn schedule_branches() {
        let s = sched();
        assert_eq!(k_low_of_force(&s, 0.5), 2000.0);
        assert_eq!(k_low_of_force(&s, 4.5), 1050.0);
        assert_eq!(k_low_of_force(&s, 20.0), 100.0);
        assert_eq!(k_low_of_force(&s, 1.0), 2000.0);
        assert_eq!(k_low_of_force(&s, 8.0), 100.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(StiffnessSchedule::new(10.0, 20.0, 8.0, 1.0).is_err());
        assert!(StiffnessSchedule::new(10.0, -1.0, 8.0, 1.0).is_err());
        assert!(StiffnessSchedule::new(10.0, 1.0, 1.0, 1.0).is_err());
        assert!(StiffnessSchedule::new(10.0, 1.0, 2.0, -0.5).is_err());
        assert!(StiffnessSchedule::new(10.0, 10.0, 2.0, 0.0).is_ok());
    }

    #[test]
    fn force_along_x_gives_diagonal() {
        let p = stiffness_from_force(&Vector3::new(10.0, 0.0, 0.0), &sched(), 2000.0);
        assert_eq!(
            *p.matrix(),
            Matrix3::from_diagonal(&Vector3::new(100.0, 2000.0, 2000.0))
        );
    }

    #[test]
    fn small_force_is_uniform() {
        let p = stiffness_from_force(&Vector3::zeros(), &sched(), 2000.0);
        assert_eq!(*p.matrix(), Matrix3::identity() * 2000.0);
        assert_eq!(p.low_dir(), Vector3::x());
        assert_eq!(p.k_low(), 2000.0);
        let p = stiffness_from_force(&Vector3::new(0.0, 0.3, 0.4), &sched(), 2000.0);
        assert!(p.is_uniform());
    }

    #[test]
    fn oblique_force_eigen_structure() {
        let f = Vector3::new(-3.0, 7.0, 5.0);
        let p = stiffness_from_force(&f, &sched(), 2000.0);
        let eig = SymmetricEigen::new(*p.matrix());
        let imin = eig.eigenvalues.imin();
        assert_relative_eq!(eig.eigenvalues[imin], 100.0, max_relative = 1e-9);
        let v = eig.eigenvectors.column(imin);
        assert_relative_eq!(v.dot(&f.normalize()).abs(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn compliance_inverts_matrix() {
        let p = StiffnessProfile::from_direction(&Vector3::new(1.0, 2.0, -0.5), 80.0, 1500.0).unwrap();
        let f = Vector3::new(0.3, -2.0, 4.0);
        let x = p.compliance_times(&f).unwrap();
        assert_relative_eq!(p.matrix() * x, f, epsilon = 1e-10);
        assert!(StiffnessProfile::uniform(0.0).compliance_times(&f).is_err());
    }
}
