//! Bounded extrinsic perturbation sampling and injection.
//!
//! An experiment draws `(rho, phi)` from the alpha-scaled prior, clamps
//! each component to its own 1-sigma bound, and composes the result onto
//! ground-truth extrinsics: `t = t_bar + rho`, `R = exp(phi^) R_bar`.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::propagation::PerturbationPrior;
use crate::se3::{RigidTransform, Rotation};

/// Sweep levels used by the robustness experiments.
pub const DEFAULT_ALPHA_LEVELS: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];

/// A perturbation prior with a dimensionless scale `alpha` on the
/// extrinsic blocks. The effective prior is `(alpha P, alpha Phi, Z)`;
/// measurement noise does not scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPrior {
    base: PerturbationPrior,
    alpha: f64,
}

impl ThetaPrior {
    pub fn new(base: PerturbationPrior, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite and non-negative, got {alpha}"
            )));
        }
        Ok(ThetaPrior { base, alpha })
    }

    pub fn base(&self) -> &PerturbationPrior {
        &self.base
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.base, alpha)
    }

    /// The alpha-scaled prior actually used for sampling and propagation.
    pub fn effective(&self) -> PerturbationPrior {
        self.base.scale_extrinsic(self.alpha)
    }
}

/// Default prior: per-axis std 1/20 m on translation, 1/10 rad on
/// rotation, 1/50 m on point measurement; alpha = 1.
pub fn default_theta() -> ThetaPrior {
    let base = PerturbationPrior::from_diagonals([0.0025; 3], [0.01; 3], [0.0004; 3])
        .expect("diagonal prior with non-negative variances is PSD");
    ThetaPrior { base, alpha: 1.0 }
}

/// Priors sharing the default base across the given alpha levels.
pub fn alpha_sweep(levels: &[f64]) -> Result<Vec<ThetaPrior>> {
    let base = default_theta().base;
    levels
        .iter()
        .map(|&alpha| ThetaPrior::new(base, alpha))
        .collect()
}

pub fn default_alpha_sweep() -> Vec<ThetaPrior> {
    alpha_sweep(&DEFAULT_ALPHA_LEVELS).expect("default levels are non-negative")
}

/// One sampled extrinsic perturbation: translation offset `rho` (m) and
/// rotation vector `phi` (rad). Every component is within its own
/// 1-sigma bound of the effective prior.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampledPerturbation {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl SampledPerturbation {
    pub fn zero() -> Self {
        SampledPerturbation::default()
    }
}

/// Symmetric PSD square root via eigendecomposition; tolerates singular
/// blocks (alpha = 0) that Cholesky would reject.
fn sqrt_factor(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let eigen = cov.symmetric_eigen();
    let sqrt_vals = eigen.eigenvalues.map(|l| l.max(0.0).sqrt());
    eigen.eigenvectors * Matrix3::from_diagonal(&sqrt_vals) * eigen.eigenvectors.transpose()
}

fn draw_clamped<R: Rng>(cov: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let factor = sqrt_factor(cov);
    let z = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let mut x = factor * z;
    for i in 0..3 {
        let sigma = cov[(i, i)].max(0.0).sqrt();
        x[i] = x[i].clamp(-sigma, sigma);
    }
    x
}

/// Draws `(rho, phi)` from the effective prior, clamping each component
/// to +/- 1 sigma. Deterministic for a given seed.
pub fn sample_perturbation(prior: &ThetaPrior, rng_seed: u64) -> SampledPerturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_perturbation_with(prior, &mut rng)
}

/// [`sample_perturbation`] drawing from a caller-owned stream, for
/// sweeps that derive many perturbations from one seed. Consumes six
/// standard-normal draws in (rho, phi) component order.
pub fn sample_perturbation_with<R: Rng>(prior: &ThetaPrior, rng: &mut R) -> SampledPerturbation {
    let effective = prior.effective();
    let rho = draw_clamped(effective.translation_cov(), rng);
    let phi = draw_clamped(effective.rotation_cov(), rng);
    SampledPerturbation { rho, phi }
}

/// Composes a sampled perturbation onto ground-truth extrinsics:
/// `t = t_bar + rho`, `R = exp(phi^) R_bar`.
pub fn inject(extrinsics: &RigidTransform, s: &SampledPerturbation) -> RigidTransform {
    RigidTransform {
        rotation: Rotation::exp(&s.phi.into()) * extrinsics.rotation,
        translation: extrinsics.translation + s.rho,
    }
}
