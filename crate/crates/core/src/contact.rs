//! Frictionless point-contact analysis in generalized coordinates.
//!
//! Rows of the contact Jacobian `J` are unit contact normals. Contact forces
//! map to the generalized force `Jᵀλ`, and admissible velocities satisfy
//! `Jv ≥ 0`.
//!
//! The cone spanned by the rows lies inside its dual `{x | Jx ≥ 0}` exactly
//! when every generator does, i.e. `J Jⱼᵀ ≥ 0` for each row `j`; nonnegative
//! combinations preserve the inequality. So the system is *pinching* iff some
//! entry of the Gram matrix `JJᵀ` is negative.
//!
//! Without pinching and with every `λᵢ > 0`, `(JJᵀλ)ᵢ ≥ λᵢ > 0` for each row,
//! and moving along the force direction `v = v₀ + k Jᵀλ` satisfies every
//! constraint once `k ≥ maxᵢ −(Jv₀)ᵢ / (JJᵀλ)ᵢ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance on constraint residuals.
pub const DEFAULT_TOL: f64 = 1e-9;

const UNIT_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactModel {
    jacobian: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl ContactModel {
    pub fn new(jacobian: DMatrix<f64>, lambda: DVector<f64>) -> Result<Self> {
        let (n, dim) = jacobian.shape();
        if n == 0 || dim == 0 {
            return Err(Error::InvalidParameter("contact Jacobian must be at least 1x1".into()));
        }
        if lambda.len() != n {
            return Err(Error::InvalidParameter(format!(
                "lambda has {} entries but the Jacobian has {n} rows",
                lambda.len()
            )));
        }
        for (i, row) in jacobian.row_iter().enumerate() {
            let norm = row.norm();
            if (norm - 1.0).abs() > UNIT_ROW_TOL {
                return Err(Error::InvalidParameter(format!(
                    "Jacobian row {i} has norm {norm}, expected 1"
                )));
            }
        }
        if !lambda.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        Ok(Self { jacobian, lambda })
    }

    pub fn from_rows(rows: &[Vec<f64>], lambda: &[f64]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("Jacobian rows have unequal lengths".into()));
        }
        let jacobian = DMatrix::from_row_iterator(n, dim, rows.iter().flatten().copied());
        Self::new(jacobian, DVector::from_column_slice(lambda))
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn contacts(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn dim(&self) -> usize {
        self.jacobian.ncols()
    }

    pub fn with_lambda(&self, lambda: DVector<f64>) -> Result<Self> {
        Self::new(self.jacobian.clone(), lambda)
    }

    /// `JJᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.jacobian * self.jacobian.transpose()
    }

    /// `Jᵀλ`.
    pub fn generalized_force(&self) -> DVector<f64> {
        self.jacobian.tr_mul(&self.lambda)
    }

    /// Indices `i` with `(Jv)ᵢ < −tol`.
    pub fn violates_constraints(&self, v: &DVector<f64>, tol: f64) -> Vec<usize> {
        let jv = &self.jacobian * v;
        jv.iter()
            .enumerate()
            .filter(|(_, r)| **r < -tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when the row cone is *not* contained in its dual cone.
    pub fn is_pinching(&self, tol: f64) -> bool {
        self.gram().iter().any(|g| *g < -tol)
    }

    /// Smallest `k ≥ 0` such that `v₀ + k Jᵀλ` is contact-feasible.
    ///
    /// Requires a non-pinching model with strictly positive contact forces.
    pub fn escape_velocity(&self, v0: &DVector<f64>, tol: f64) -> Result<EscapeCertificate> {
        self.check_dims(v0)?;
        if self.is_pinching(tol) {
            return Err(Error::AssumptionViolated(
                "pinching contacts: the row cone is not inside its dual cone".into(),
            ));
        }
        if let Some(i) = self.lambda.iter().position(|l| !(*l > 0.0)) {
            return Err(Error::AssumptionViolated(format!(
                "contact {i} has non-positive force {}",
                self.lambda[i]
            )));
        }
        let g = self.gram() * &self.lambda;
        let r = &self.jacobian * v0;
        let mut k = 0.0f64;
        for (ri, gi) in r.iter().zip(g.iter()) {
            if *gi <= 0.0 {
                // Unreachable under the assumptions, see the module docs.
                return Err(Error::AssumptionViolated(
                    "force direction does not strictly enter every constraint".into(),
                ));
            }
            k = k.max(-ri / gi);
        }
        let v = v0 + self.generalized_force() * k;
        Ok(EscapeCertificate { k, v })
    }

    /// Searches the ray `v₀ + k Jᵀλ`, `k ≥ 0`, for a feasible point without
    /// checking the assumptions. Returns the smallest feasible `k`, if any.
    pub fn escape_along_force(&self, v0: &DVector<f64>, tol: f64) -> Option<EscapeCertificate> {
        if self.check_dims(v0).is_err() {
            return None;
        }
        let g = self.gram() * &self.lambda;
        let r = &self.jacobian * v0;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        for (ri, gi) in r.iter().zip(g.iter()) {
            if *gi > 0.0 {
                lo = lo.max((-tol - ri) / gi);
            } else if *gi < 0.0 {
                hi = hi.min((ri + tol) / -gi);
            } else if *ri < -tol {
                return None;
            }
        }
        if lo <= hi {
            Some(EscapeCertificate {
                k: lo,
                v: v0 + self.generalized_force() * lo,
            })
        } else {
            None
        }
    }

    fn check_dims(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "velocity has {} entries, model dimension is {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// A scale `k` and the resulting feasible velocity `v = v₀ + k Jᵀλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeCertificate {
    pub k: f64,
    pub v: DVector<f64>,
}

/// Outcome of a batch of randomized escape-velocity trials.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscapeTrialReport {
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    /// Sampled models discarded because they were pinching.
    pub rejected_samples: usize,
    /// Deliberately pinching models checked as expected negatives.
    pub pinching_cases: usize,
    /// Pinching models for which no feasible point exists on the force ray.
    pub pinching_escape_failures: usize,
}

/// Unit rows scattered around one random center direction.
fn sample_rows<R: Rng>(rng: &mut R, n: usize, dim: usize, spread: f64) -> DMatrix<f64> {
    let center = random_unit(rng, dim);
    let mut j = DMatrix::zeros(n, dim);
    for i in 0..n {
        loop {
            let mut row = center.clone();
            for c in row.iter_mut() {
                *c += spread * rng.sample::<f64, _>(StandardNormal);
            }
            let norm = row.norm();
            if norm > 1e-6 {
                j.set_row(i, &(row / norm).transpose());
                break;
            }
        }
    }
    j
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Samples a non-pinching model with `contacts` rows in `dim` dimensions and
/// strictly positive forces. Returns the model and the number of rejected
/// (pinching) draws.
pub fn sample_non_pinching_model<R: Rng>(rng: &mut R, contacts: usize, dim: usize) -> (ContactModel, usize) {
    let mut rejected = 0;
    loop {
        let spread = rng.random_range(0.2..1.2);
        let j = sample_rows(rng, contacts, dim, spread);
        let lambda = DVector::from_fn(contacts, |_, _| rng.random_range(0.1..2.0));
        let model = ContactModel::new(j, lambda).expect("sampled rows are unit length");
        if !model.is_pinching(0.0) {
            return (model, rejected);
        }
        rejected += 1;
    }
}

/// Samples a model that contains at least one opposing pair of normals.
pub fn sample_pinching_model<R: Rng>(rng: &mut R, contacts: usize, dim: usize) -> ContactModel {
    let contacts = contacts.max(2);
    let mut j = sample_rows(rng, contacts, dim, 1.0);
    let first = j.row(0).into_owned();
    j.set_row(1, &(-first));
    let lambda = DVector::from_fn(contacts, |_, _| rng.random_range(0.1..2.0));
    ContactModel::new(j, lambda).expect("sampled rows are unit length")
}

/// Runs `trials` seeded escape-velocity checks on random non-pinching models
/// with `1..=max_contacts` contacts in `dim` dimensions, plus one pinching
/// expected-negative case per trial (when `max_contacts ≥ 2`).
pub fn randomized_escape_trials(seed: u64, trials: usize, max_contacts: usize, dim: usize) -> EscapeTrialReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EscapeTrialReport {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let n = rng.random_range(1..=max_contacts.max(1));
        let (model, rejected) = sample_non_pinching_model(&mut rng, n, dim);
        report.rejected_samples += rejected;
        let v0 = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ok = match model.escape_velocity(&v0, DEFAULT_TOL) {
            Ok(cert) => model.violates_constraints(&cert.v, DEFAULT_TOL).is_empty(),
            Err(_) => false,
        };
        if ok {
            report.successes += 1;
        } else {
            report.failures += 1;
        }

        if max_contacts >= 2 {
            let m = rng.random_range(2..=max_contacts);
            let pinching = sample_pinching_model(&mut rng, m, dim);
            let v0 = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            report.pinching_cases += 1;
            if pinching.escape_along_force(&v0, DEFAULT_TOL).is_none() {
                report.pinching_escape_failures += 1;
            }
        }
    }
    report
}
