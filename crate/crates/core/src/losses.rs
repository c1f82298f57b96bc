//! Scalar loss kernels of the two-stage detection objective: focal
//! classification loss, smooth-L1 regression loss, the uncertainty
//! regularizer, and their weighted total. Each kernel returns its value
//! together with an analytic gradient.

use nalgebra::SVector;

use crate::boxes::Residual8;
use crate::error::{Error, Result};

/// Loss value with gradient w.r.t. the N-dimensional input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<const N: usize> {
    pub value: f64,
    pub gradient: SVector<f64, N>,
}

impl<const N: usize> LossValue<N> {
    pub fn zero() -> Self {
        LossValue {
            value: 0.0,
            gradient: SVector::zeros(),
        }
    }
}

/// Weights and shape parameters of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Classification weight (eta).
    pub eta: f64,
    /// Uncertainty-regularizer weight (lambda).
    pub lambda: f64,
    pub focal_gamma: f64,
    /// Focal alpha for positives; negatives use its complement.
    pub focal_alpha: f64,
    /// Trace clamp range feeding the regularizer's exponent.
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eta: 2.0,
            lambda: 0.005,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            clamp_lo: 1e-3,
            clamp_hi: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.clamp_lo.is_finite()
            || !self.clamp_hi.is_finite()
            || self.clamp_lo >= self.clamp_hi
        {
            return Err(Error::InvalidArgument(format!(
                "clamp range must satisfy lo < hi, got [{}, {}]",
                self.clamp_lo, self.clamp_hi
            )));
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) || self.focal_gamma < 0.0 {
            return Err(Error::InvalidArgument(
                "focal parameters out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Focal loss `-alpha_t (1 - p_t)^gamma ln(p_t)` with
/// `p_t = p` for positives and `1 - p` for negatives. The gradient is
/// w.r.t. the raw probability `p`.
pub fn focal_loss(p: f64, is_positive: bool, cfg: &LossConfig) -> Result<LossValue<1>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability must lie strictly inside (0,1), got {p}"
        )));
    }
    let (pt, alpha_t, dpt_dp) = if is_positive {
        (p, cfg.focal_alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - cfg.focal_alpha, -1.0)
    };
    let one_minus = 1.0 - pt;
    let value = -alpha_t * one_minus.powf(cfg.focal_gamma) * pt.ln();
    // d/dpt = alpha_t [gamma (1-pt)^(gamma-1) ln(pt) - (1-pt)^gamma / pt];
    // the gamma = 0 case would otherwise produce 0 * inf as pt -> 1.
    let modulation = if cfg.focal_gamma == 0.0 {
        0.0
    } else {
        cfg.focal_gamma * one_minus.powf(cfg.focal_gamma - 1.0) * pt.ln()
    };
    let d_dpt = alpha_t * (modulation - one_minus.powf(cfg.focal_gamma) / pt);
    Ok(LossValue {
        value,
        gradient: SVector::<f64, 1>::new(d_dpt * dpt_dp),
    })
}

fn huber(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Elementwise Huber loss (transition at 1) summed over the residual
/// vector; gradient w.r.t. `u`.
pub fn smooth_l1(u: &Residual8, u_star: &Residual8) -> LossValue<8> {
    let mut value = 0.0;
    let mut gradient = Residual8::zeros();
    for i in 0..8 {
        let (v, g) = huber(u[i] - u_star[i]);
        value += v;
        gradient[i] = g;
    }
    LossValue { value, gradient }
}

/// The regressed residual without its trailing cosine term.
pub fn u_prime(u: &Residual8) -> SVector<f64, 7> {
    u.fixed_rows::<7>(0).into_owned()
}

/// Uncertainty regularizer `exp(1 - clamp(max_trace)) * |u'|`: large
/// residuals are penalized hardest where the point uncertainty is low.
/// Gradient is w.r.t. `u_prime`, with subgradient 0 at the origin.
pub fn uct_regularizer(
    max_trace: f64,
    u_prime: &SVector<f64, 7>,
    cfg: &LossConfig,
) -> Result<LossValue<7>> {
    if max_trace < 0.0 || !max_trace.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "max_trace must be finite and non-negative, got {max_trace}"
        )));
    }
    cfg.validate()?;
    let multiplier = (1.0 - max_trace.clamp(cfg.clamp_lo, cfg.clamp_hi)).exp();
    let norm = u_prime.norm();
    let gradient = if norm > 0.0 {
        u_prime * (multiplier / norm)
    } else {
        SVector::zeros()
    };
    Ok(LossValue {
        value: multiplier * norm,
        gradient,
    })
}

/// Weighted total `reg + eta * cls + lambda * uct`.
pub fn total_loss(
    reg: &LossValue<8>,
    cls: &LossValue<1>,
    uct: &LossValue<7>,
    cfg: &LossConfig,
) -> f64 {
    reg.value + cfg.eta * cls.value + cfg.lambda * uct.value
}
