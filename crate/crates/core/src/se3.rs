//! Rigid poses, the 9-D pose encoding and orthonormal basis completion.
//!
//! The 9-D encoding stores the position followed by the first two *rows* of
//! the rotation matrix. Decoding re-orthonormalizes those rows with
//! Gram-Schmidt and recovers the third row as their cross product, so any
//! slightly perturbed encoding maps back to a proper rotation.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality tolerance used when validating rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Rows whose cross product is shorter than this cannot be decoded.
pub const PARALLEL_ROWS_TOL: f64 = 1e-9;

const ZERO_DIRECTION_TOL: f64 = 1e-12;

/// A rigid transform: position in meters plus a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    position: Vector3<f64>,
    rotation: Matrix3<f64>,
}

impl Pose {
    /// Builds a pose, rejecting rotations that are not proper orthonormal.
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self> {
        let residual = orthonormality_residual(&rotation);
        let det_err = (rotation.determinant() - 1.0).abs();
        if residual > ROTATION_TOL || det_err > ROTATION_TOL || !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation {
                residual: residual.max(det_err),
            });
        }
        Ok(Self { position, rotation })
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self {
            position,
            rotation: Matrix3::identity(),
        }
    }

    pub fn from_rotation(position: Vector3<f64>, rotation: &Rotation3<f64>) -> Self {
        Self {
            position,
            rotation: *rotation.matrix(),
        }
    }

    pub fn identity() -> Self {
        Self::from_translation(Vector3::zeros())
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.rotation
    }

    pub fn with_position(&self, position: Vector3<f64>) -> Self {
        Self {
            position,
            rotation: self.rotation,
        }
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Linear interpolation of position and spherical-linear interpolation
    /// of rotation, `s` in `[0, 1]`.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let position = self.position.lerp(&other.position, s);
        let qa = UnitQuaternion::from_matrix(&self.rotation);
        let qb = UnitQuaternion::from_matrix(&other.rotation);
        // Antipodal quaternions have no unique slerp, fall back to the nearer end.
        let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(if s < 0.5 { qa } else { qb });
        Pose {
            position,
            rotation: *q.to_rotation_matrix().matrix(),
        }
    }
}

fn orthonormality_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Position plus the top two rotation rows, 9 numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose9(pub [f64; 9]);

impl Pose9 {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_pose9(p: &Pose) -> Pose9 {
    let r = p.rotation;
    let t = p.position;
    Pose9([
        t.x,
        t.y,
        t.z,
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
    ])
}

pub fn decode_pose9(v: &Pose9) -> Result<Pose> {
    let a = Vector3::new(v.0[3], v.0[4], v.0[5]);
    let b = Vector3::new(v.0[6], v.0[7], v.0[8]);
    if !v.0.iter().all(|x| x.is_finite()) {
        return Err(Error::DegenerateRotation);
    }
    let a_norm = a.norm();
    if a_norm < PARALLEL_ROWS_TOL || a.cross(&b).norm() < PARALLEL_ROWS_TOL * a_norm.max(1.0) {
        return Err(Error::DegenerateRotation);
    }
    let row0 = a / a_norm;
    let b_perp = b - row0 * b.dot(&row0);
    let b_norm = b_perp.norm();
    if b_norm < PARALLEL_ROWS_TOL {
        return Err(Error::DegenerateRotation);
    }
    let row1 = b_perp / b_norm;
    let row2 = row0.cross(&row1);
    let rotation = Matrix3::from_rows(&[row0.transpose(), row1.transpose(), row2.transpose()]);
    Ok(Pose {
        position: v.position(),
        rotation,
    })
}

/// Orthonormal 3x3 basis whose first column is a designated unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoBasis {
    columns: Matrix3<f64>,
}

impl OrthoBasis {
    /// Wraps an arbitrary orthonormal matrix; its first column becomes the
    /// designated direction.
    pub fn from_columns(columns: Matrix3<f64>) -> Result<Self> {
        let residual = orthonormality_residual(&columns);
        if residual > ROTATION_TOL {
            return Err(Error::InvalidRotation { residual });
        }
        Ok(Self { columns })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.columns
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.columns.column(0).into_owned()
    }
}

/// Completes `d / |d|` to a right-handed orthonormal basis using a
/// Householder reflection.
///
/// The reflection is chosen so that its vector `w` never has length below 1,
/// then one column is negated to restore `det = +1`. `(1, 0, 0)` maps to the
/// identity.
pub fn basis_from_direction(d: &Vector3<f64>) -> Result<OrthoBasis> {
    let n = d.norm();
    if !(n >= ZERO_DIRECTION_TOL) || !n.is_finite() {
        return Err(Error::ZeroDirection);
    }
    let u = d / n;
    let e1 = Vector3::x();
    let (w, flip_col) = if u.x > 0.0 { (e1 + u, 0) } else { (e1 - u, 2) };
    let h = Matrix3::identity() - (w * w.transpose()) * (2.0 / w.norm_squared());
    let mut columns = h;
    let mut c = columns.column_mut(flip_col);
    c.neg_mut();
    Ok(OrthoBasis { columns })
}
