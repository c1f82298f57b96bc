//! First-order propagation of extrinsic and measurement Gaussian noise
//! through a rigid transform.
//!
//! A noisy transform is modeled as translation `t = t_bar + rho`,
//! rotation `R = exp(phi^) R_bar`, and a noisy point `p = p_bar + zeta`,
//! with `theta = [rho, phi, zeta]` zero-mean Gaussian of 9x9 covariance
//! `Theta = diag(P, Phi, Z)`. Keeping first-order terms, the transformed
//! point is `y ~ h + H theta`, so its covariance is `Xi = H Theta H^T`.
//!
//! The mean uses the exact transform; only the covariance is first-order.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::se3::{skew, RigidTransform};

/// 3x9 propagation Jacobian, column blocks ordered (rho, phi, zeta).
pub type Jacobian3x9 = SMatrix<f64, 3, 9>;

/// Symmetry tolerance for covariance blocks.
const SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalue floor for the positive-semidefinite check.
const PSD_TOL: f64 = -1e-12;

fn check_psd(block: &Matrix3<f64>, name: &'static str) -> Result<()> {
    if (block - block.transpose()).abs().max() > SYMMETRY_TOL {
        return Err(Error::NotPositiveSemidefinite(name));
    }
    let eigen = block.symmetric_eigenvalues();
    if eigen.min() < PSD_TOL {
        return Err(Error::NotPositiveSemidefinite(name));
    }
    Ok(())
}

/// 9x9 block-diagonal Gaussian prior `Theta = diag(P, Phi, Z)` over
/// translation perturbation (m^2), rotation perturbation (rad^2), and
/// measurement noise (m^2).
///
/// Blocks are validated symmetric PSD on construction, so holders of a
/// `PerturbationPrior` never see an invalid one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationPrior {
    p: Matrix3<f64>,
    phi: Matrix3<f64>,
    z: Matrix3<f64>,
}

impl PerturbationPrior {
    pub fn new(p: Matrix3<f64>, phi: Matrix3<f64>, z: Matrix3<f64>) -> Result<Self> {
        check_psd(&p, "P")?;
        check_psd(&phi, "Phi")?;
        check_psd(&z, "Z")?;
        Ok(PerturbationPrior { p, phi, z })
    }

    /// Diagonal blocks from per-axis variances.
    pub fn from_diagonals(p: [f64; 3], phi: [f64; 3], z: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_diagonal(&Vector3::from(p)),
            Matrix3::from_diagonal(&Vector3::from(phi)),
            Matrix3::from_diagonal(&Vector3::from(z)),
        )
    }

    pub fn zero() -> Self {
        PerturbationPrior {
            p: Matrix3::zeros(),
            phi: Matrix3::zeros(),
            z: Matrix3::zeros(),
        }
    }

    /// Scales the extrinsic blocks (P, Phi) by `alpha >= 0`, leaving the
    /// measurement block Z fixed.
    pub fn scale_extrinsic(&self, alpha: f64) -> Self {
        PerturbationPrior {
            p: self.p * alpha,
            phi: self.phi * alpha,
            z: self.z,
        }
    }

    pub fn translation_cov(&self) -> &Matrix3<f64> {
        &self.p
    }

    pub fn rotation_cov(&self) -> &Matrix3<f64> {
        &self.phi
    }

    pub fn measurement_cov(&self) -> &Matrix3<f64> {
        &self.z
    }

    /// Assembles the full 9x9 block-diagonal Theta.
    pub fn theta_matrix(&self) -> SMatrix<f64, 9, 9> {
        let mut theta = SMatrix::<f64, 9, 9>::zeros();
        theta.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.p);
        theta.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.phi);
        theta.fixed_view_mut::<3, 3>(6, 6).copy_from(&self.z);
        theta
    }
}

/// Where the rotational perturbation acts in the linearization.
///
/// The two variants agree on the mean and on the translation/measurement
/// columns; they differ only in the middle (phi) Jacobian block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbationModel {
    /// Rotation and translation perturbed independently:
    /// `t = t_bar + rho`, `R = exp(phi^) R_bar`. The phi block is
    /// `-(R_bar p_bar)^` — rotation noise spins the rotated point only.
    /// This matches the sampling model used for perturbation injection.
    #[default]
    SplitSo3R3,
    /// Left perturbation of the whole pose on SE(3): rotation noise also
    /// swings the translated point, giving the phi block
    /// `-(R_bar p_bar + t_bar)^`.
    LeftSe3,
}

/// Propagated mean and covariance of one transformed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointUncertainty {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// tr(covariance), the scalar uncertainty tag used downstream.
    pub trace: f64,
}

/// Points with per-point scalar uncertainty tags (and optionally the full
/// 3x3 covariances).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaggedPointCloud {
    points: Vec<Vector3<f64>>,
    traces: Vec<f64>,
    covariances: Option<Vec<Matrix3<f64>>>,
}

impl TaggedPointCloud {
    pub fn new(points: Vec<Vector3<f64>>, traces: Vec<f64>) -> Result<Self> {
        if points.len() != traces.len() {
            return Err(Error::InvalidArgument(format!(
                "point/trace length mismatch: {} vs {}",
                points.len(),
                traces.len()
            )));
        }
        if traces.iter().any(|t| *t < 0.0 || !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "traces must be finite and non-negative".into(),
            ));
        }
        Ok(TaggedPointCloud {
            points,
            traces,
            covariances: None,
        })
    }

    /// Untagged points get zero traces.
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        let traces = vec![0.0; points.len()];
        TaggedPointCloud {
            points,
            traces,
            covariances: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn traces(&self) -> &[f64] {
        &self.traces
    }

    pub fn covariances(&self) -> Option<&[Matrix3<f64>]> {
        self.covariances.as_deref()
    }

    pub fn push(&mut self, point: Vector3<f64>, trace: f64) {
        self.points.push(point);
        self.traces.push(trace);
        if let Some(covs) = &mut self.covariances {
            // Keep lengths equal; callers mixing tagged/full clouds lose covariances.
            covs.clear();
            self.covariances = None;
        }
    }

    /// Appends `other`, preserving order. Covariances survive only if both
    /// sides carry them.
    pub fn extend(&mut self, other: TaggedPointCloud) {
        match (&mut self.covariances, other.covariances) {
            (Some(a), Some(b)) => a.extend(b),
            (covs, _) => *covs = None,
        }
        self.points.extend(other.points);
        self.traces.extend(other.traces);
    }
}

/// Mean `h = R p + t` and Jacobian `H` of the transformed point w.r.t.
/// `theta = [rho, phi, zeta]`, in the default split model:
/// `H = [ I | -(R p)^ | R ]`.
pub fn propagation_jacobian(
    transform: &RigidTransform,
    point: &Vector3<f64>,
) -> (Vector3<f64>, Jacobian3x9) {
    propagation_jacobian_with(PerturbationModel::SplitSo3R3, transform, point)
}

/// [`propagation_jacobian`] with an explicit perturbation model.
pub fn propagation_jacobian_with(
    model: PerturbationModel,
    transform: &RigidTransform,
    point: &Vector3<f64>,
) -> (Vector3<f64>, Jacobian3x9) {
    let rotated = transform.rotation.rotate(point);
    let h = rotated + transform.translation;
    let phi_arg = match model {
        PerturbationModel::SplitSo3R3 => rotated,
        PerturbationModel::LeftSe3 => h,
    };
    let mut jac = Jacobian3x9::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    jac.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-skew(&phi_arg)));
    jac.fixed_view_mut::<3, 3>(0, 6)
        .copy_from(transform.rotation.matrix());
    (h, jac)
}

/// Propagates one point: mean `h`, covariance `Xi = H Theta H^T`, and
/// `tr(Xi)`.
pub fn propagate_point(
    transform: &RigidTransform,
    point: &Vector3<f64>,
    prior: &PerturbationPrior,
) -> PointUncertainty {
    propagate_point_with(PerturbationModel::SplitSo3R3, transform, point, prior)
}

/// [`propagate_point`] with an explicit perturbation model.
pub fn propagate_point_with(
    model: PerturbationModel,
    transform: &RigidTransform,
    point: &Vector3<f64>,
    prior: &PerturbationPrior,
) -> PointUncertainty {
    let (mean, jac) = propagation_jacobian_with(model, transform, point);
    let cov = jac * prior.theta_matrix() * jac.transpose();
    // Forced symmetry keeps the PSD invariant exact despite rounding.
    let covariance = (cov + cov.transpose()) * 0.5;
    PointUncertainty {
        mean,
        covariance,
        trace: covariance.trace().max(0.0),
    }
}

/// Elementwise [`propagate_point`] over a cloud, preserving order. Stores
/// means and traces; covariances are dropped in this common path.
pub fn propagate_cloud(
    transform: &RigidTransform,
    points: &[Vector3<f64>],
    prior: &PerturbationPrior,
) -> TaggedPointCloud {
    let mut out = TaggedPointCloud {
        points: Vec::with_capacity(points.len()),
        traces: Vec::with_capacity(points.len()),
        covariances: None,
    };
    for p in points {
        let u = propagate_point(transform, p, prior);
        out.points.push(u.mean);
        out.traces.push(u.trace);
    }
    out
}

/// [`propagate_cloud`] retaining the full per-point covariances.
pub fn propagate_cloud_full(
    transform: &RigidTransform,
    points: &[Vector3<f64>],
    prior: &PerturbationPrior,
) -> TaggedPointCloud {
    let mut covs = Vec::with_capacity(points.len());
    let mut out = TaggedPointCloud {
        points: Vec::with_capacity(points.len()),
        traces: Vec::with_capacity(points.len()),
        covariances: None,
    };
    for p in points {
        let u = propagate_point(transform, p, prior);
        out.points.push(u.mean);
        out.traces.push(u.trace);
        covs.push(u.covariance);
    }
    out.covariances = Some(covs);
    out
}
