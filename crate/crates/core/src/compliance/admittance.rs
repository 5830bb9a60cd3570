//! Discrete admittance controller for `M ẍ + K (x − x_target) + D ẋ = f_ext`.
//!
//! Integrated with semi-implicit Euler: the velocity is advanced with the
//! acceleration at the current state, then the position with the new
//! velocity. For an undamped mode of stiffness `k` and mass `m` this is stable
//! as long as `dt < 2 / sqrt(k / m)`.

use nalgebra::{Cholesky, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{StiffnessProfile, DEFAULT_K_HIGH};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceParams {
    mass: Matrix3<f64>,
    mass_inv: Matrix3<f64>,
    damping: Matrix3<f64>,
    dt: f64,
    force_limit: f64,
}

impl AdmittanceParams {
    pub fn new(mass: Matrix3<f64>, damping: Matrix3<f64>, dt: f64, force_limit: f64) -> Result<Self> {
        if !is_positive_definite(&mass) {
            return Err(Error::InvalidParameter(
                "mass matrix must be symmetric positive definite".into(),
            ));
        }
        if !is_positive_definite(&damping) {
            return Err(Error::InvalidParameter(
                "damping matrix must be symmetric positive definite".into(),
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(force_limit > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "force_limit must be positive, got {force_limit}"
            )));
        }
        let mass_inv = mass
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("mass matrix is singular".into()))?;
        Ok(Self {
            mass,
            mass_inv,
            damping,
            dt,
            force_limit,
        })
    }

    /// Isotropic mass with damping critical for stiffness `k`: `2 sqrt(k m)`.
    pub fn critically_damped(mass: f64, k: f64, dt: f64, force_limit: f64) -> Result<Self> {
        if !(mass > 0.0 && k > 0.0) {
            return Err(Error::InvalidParameter("mass and stiffness must be positive".into()));
        }
        let c = 2.0 * (k * mass).sqrt();
        Self::new(Matrix3::identity() * mass, Matrix3::identity() * c, dt, force_limit)
    }

    pub fn mass(&self) -> &Matrix3<f64> {
        &self.mass
    }

    pub fn damping(&self) -> &Matrix3<f64> {
        &self.damping
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn force_limit(&self) -> f64 {
        self.force_limit
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.mass, self.damping, dt, self.force_limit)
    }

    pub fn with_force_limit(&self, force_limit: f64) -> Result<Self> {
        Self::new(self.mass, self.damping, self.dt, force_limit)
    }

    /// Largest stable step for stiffness up to `k_high`: `2 / ω`,
    /// `ω = sqrt(k_high / m_min)`.
    pub fn stability_bound(&self, k_high: f64) -> f64 {
        let m_min = self.mass.symmetric_eigenvalues().min();
        2.0 / (k_high / m_min).sqrt()
    }

    pub fn check_stability(&self, k_high: f64) -> Result<()> {
        let bound = self.stability_bound(k_high);
        if self.dt >= bound {
            return Err(Error::InvalidParameter(format!(
                "dt = {} s is not below the stability bound {bound:.4e} s for k_high = {k_high} N/m",
                self.dt
            )));
        }
        Ok(())
    }
}

impl Default for AdmittanceParams {
    /// 2 kg isotropic, critically damped at the default `k_high`, 500 Hz,
    /// 40 N force limit.
    fn default() -> Self {
        Self::critically_damped(2.0, DEFAULT_K_HIGH, 0.002, 40.0).expect("default gains are valid")
    }
}

fn is_positive_definite(m: &Matrix3<f64>) -> bool {
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
    sym && m.iter().all(|v| v.is_finite()) && Cholesky::new(*m).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceState {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub t: f64,
}

impl AdmittanceState {
    pub fn at_rest(x: Vector3<f64>) -> Self {
        Self {
            x,
            v: Vector3::zeros(),
            t: 0.0,
        }
    }

    /// `½ vᵀMv + ½ eᵀKe` with `e = x − x_target`.
    pub fn energy(&self, params: &AdmittanceParams, k: &StiffnessProfile, x_target: &Vector3<f64>) -> f64 {
        let e = self.x - x_target;
        0.5 * self.v.dot(&(params.mass * self.v)) + 0.5 * e.dot(&(k.matrix() * e))
    }
}

pub fn admittance_step(
    state: &AdmittanceState,
    params: &AdmittanceParams,
    k: &StiffnessProfile,
    x_target: &Vector3<f64>,
    f_ext: &Vector3<f64>,
) -> Result<AdmittanceState> {
    let magnitude = f_ext.norm();
    if magnitude > params.force_limit {
        return Err(Error::ForceLimitExceeded {
            magnitude,
            limit: params.force_limit,
        });
    }
    let spring = k.matrix() * (state.x - x_target);
    let a = params.mass_inv * (f_ext - spring - params.damping * state.v);
    let v = state.v + a * params.dt;
    let x = state.x + v * params.dt;
    Ok(AdmittanceState {
        x,
        v,
        t: state.t + params.dt,
    })
}

/// Per-tick controller input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceInput {
    pub x_target: Vector3<f64>,
    pub stiffness: StiffnessProfile,
    pub f_ext: Vector3<f64>,
}

/// Folds [`admittance_step`] over `inputs`, returning one state per input.
pub fn run_admittance(
    initial: &AdmittanceState,
    inputs: &[AdmittanceInput],
    params: &AdmittanceParams,
) -> Result<Vec<AdmittanceState>> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("trajectory must not be empty".into()));
    }
    let mut out = Vec::with_capacity(inputs.len());
    let mut state = *initial;
    for (index, input) in inputs.iter().enumerate() {
        state = admittance_step(&state, params, &input.stiffness, &input.x_target, &input.f_ext).map_err(|e| {
            Error::AtStep {
                index,
                source: Box::new(e),
            }
        })?;
        out.push(state);
    }
    Ok(out)
}
