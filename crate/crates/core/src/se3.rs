//! Minimal rigid-motion algebra: rotation matrices, the so(3) exponential
//! map, and rigid transforms acting on points.
//!
//! Rotations are stored as 3x3 matrices because the downstream propagation
//! Jacobians consume the matrix directly. Euler input follows the fixed-axis
//! (extrinsic) x-y-z convention: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`, i.e.
//! roll is applied first about the fixed x axis. This is the usual vehicle
//! roll-pitch-yaw convention.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Orthonormality tolerance for [`Rotation::from_matrix`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Angle below which the Rodrigues coefficients switch to their Taylor
/// expansions (avoids 0/0 in sin|phi|/|phi|).
const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric (cross-product) matrix of `v`: `skew(v) * w == v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation-vector (axis times angle, radians) element of so(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AxisAngle(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        AxisAngle(Vector3::zeros())
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

impl From<Vector3<f64>> for AxisAngle {
    fn from(v: Vector3<f64>) -> Self {
        AxisAngle(v)
    }
}

/// Proper rotation matrix (orthonormal, det +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: Matrix3::identity(),
        }
    }

    /// Wraps a matrix after checking orthonormality and det within 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthonormal (max deviation {err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix determinant {det} is not +1"
            )));
        }
        Ok(Rotation { m })
    }

    /// Exponential map so(3) -> SO(3) in Rodrigues closed form.
    pub fn exp(phi: &AxisAngle) -> Self {
        let v = phi.0;
        let theta = v.norm();
        let k = skew(&v);
        // sin(t)/t and (1-cos(t))/t^2 with second-order Taylor fallbacks.
        let (a, b) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        Rotation {
            m: Matrix3::identity() + a * k + b * (k * k),
        }
    }

    /// Logarithm map SO(3) -> so(3); angle returned in [0, pi].
    pub fn log(&self) -> AxisAngle {
        let m = &self.m;
        let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = cos.acos();
        let axis_raw = Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        );
        if theta < SMALL_ANGLE {
            // R ~ I + phi^: off-diagonal differences are 2*phi.
            return AxisAngle(axis_raw * 0.5);
        }
        if (std::f64::consts::PI - theta) < 1e-6 {
            // Near pi the antisymmetric part vanishes; recover the axis from
            // the symmetric part R + I = 2(axis axis^T - cos-ish terms).
            let b = (m + Matrix3::identity()) * 0.5;
            let mut axis = Vector3::new(b[(0, 0)].sqrt(), b[(1, 1)].sqrt(), b[(2, 2)].sqrt());
            // Fix signs using the largest component.
            let imax = if axis.x >= axis.y && axis.x >= axis.z {
                0
            } else if axis.y >= axis.z {
                1
            } else {
                2
            };
            for i in 0..3 {
                if i != imax && b[(imax, i)] < 0.0 {
                    axis[i] = -axis[i];
                }
            }
            return AxisAngle(axis.normalize() * theta);
        }
        AxisAngle(axis_raw * (theta / (2.0 * theta.sin())))
    }

    /// Fixed-axis roll-pitch-yaw: `Rz(yaw) * Ry(pitch) * Rx(roll)`, radians.
    pub fn from_euler_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        Rotation { m: rz * ry * rx }
    }

    /// Pure rotation about the z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_euler_rpy(0.0, 0.0, yaw)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Self {
        Rotation {
            m: self.m.transpose(),
        }
    }

    pub fn rotate(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.m * p
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation { m: self.m * rhs.m }
    }
}

impl std::ops::Mul for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation { m: self.m * rhs.m }
    }
}

/// Rigid transform `p -> R p + t` (extrinsics of one sensor w.r.t. the base
/// frame, among other uses).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Transform built from fixed-axis roll-pitch-yaw (radians) and a
    /// translation.
    pub fn from_euler_rpy(rpy: &Vector3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Rotation::from_euler_rpy(rpy.x, rpy.y, rpy.z),
            translation,
        }
    }

    /// `R p + t`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// `self` after `other`: `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.inverse();
        RigidTransform {
            translation: -rot_inv.rotate(&self.translation),
            rotation: rot_inv,
        }
    }
}
