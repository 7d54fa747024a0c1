//! Multifidelity expected improvement with a physics-aware bias:
//!
//! `U(x, l) = EI(x) * max(alpha1, 0) * alpha2 * alpha3 * alpha4`
//!
//! where EI uses the top-level posterior, `alpha1` is the posterior
//! correlation between level `l` and the top level, `alpha2` the noise-aware
//! uncertainty reduction, `alpha3` the cost ratio and `alpha4` the bias.

mod bias;
mod expr;

pub use bias::{damage_bias, mach_bias, Bias, BiasSpec, PhysicsBias};
pub use expr::{Expr, ParseError};

use crate::mfgp::{JointPosterior, MfGpModel, MfgpError, ObservationSet};

#[derive(Debug, thiserror::Error)]
pub enum AcquisitionError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("negative standard deviation {0}")]
    NegativeSd(f64),
    #[error("outside the bias domain: {0}")]
    Domain(String),
    #[error("invalid cost ratios: {0}")]
    CostRatios(String),
    #[error("invalid bias configuration: {0}")]
    Config(String),
    #[error("no observations to define the incumbent")]
    NoIncumbent,
    #[error(transparent)]
    Model(#[from] MfgpError),
}

pub type Result<T> = std::result::Result<T, AcquisitionError>;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` of a normal with `mean`, `sd`
/// (minimization). Zero when `sd == 0`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> Result<f64> {
    if !(mean.is_finite() && sd.is_finite() && best.is_finite()) {
        return Err(AcquisitionError::NonFinite("expected improvement argument"));
    }
    if sd < 0.0 {
        return Err(AcquisitionError::NegativeSd(sd));
    }
    if sd == 0.0 {
        return Ok(0.0);
    }
    let z = (best - mean) / sd;
    Ok((sd * (z * normal_cdf(z) + normal_pdf(z))).max(0.0))
}

/// Signed posterior correlation between `level` and the top level.
pub fn alpha1(model: &MfGpModel, x: &[f64], level: usize) -> Result<f64> {
    Ok(model.posterior_correlation(x, level)?)
}

/// `1 - noise_sd / sqrt(sd^2 + noise_sd^2)`; 0 when both are zero.
pub fn alpha2(sd: f64, noise_sd: f64) -> Result<f64> {
    if !(sd.is_finite() && noise_sd.is_finite()) {
        return Err(AcquisitionError::NonFinite("alpha2 argument"));
    }
    if sd < 0.0 || noise_sd < 0.0 {
        return Err(AcquisitionError::NegativeSd(sd.min(noise_sd)));
    }
    let total = (sd * sd + noise_sd * noise_sd).sqrt();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - noise_sd / total).clamp(0.0, 1.0))
}

/// `lambda_L / lambda_level` for 1-based `level`.
pub fn alpha3(cost_ratios: &[f64], level: usize) -> Result<f64> {
    if level == 0 || level > cost_ratios.len() {
        return Err(AcquisitionError::CostRatios(format!(
            "level {level} outside 1..={}",
            cost_ratios.len()
        )));
    }
    let lambda = cost_ratios[level - 1];
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(AcquisitionError::CostRatios(format!(
            "lambda at level {level} must be positive, got {lambda}"
        )));
    }
    Ok(cost_ratios[cost_ratios.len() - 1] / lambda)
}

/// Checks `0 < lambda <= 1` per level with the top level at exactly 1.
pub fn validate_cost_ratios(cost_ratios: &[f64]) -> Result<()> {
    if cost_ratios.is_empty() {
        return Err(AcquisitionError::CostRatios("no levels".into()));
    }
    for (i, l) in cost_ratios.iter().enumerate() {
        if !(*l > 0.0 && *l <= 1.0) {
            return Err(AcquisitionError::CostRatios(format!(
                "lambda at level {} must lie in (0, 1], got {l}",
                i + 1
            )));
        }
    }
    let top = cost_ratios[cost_ratios.len() - 1];
    if top != 1.0 {
        return Err(AcquisitionError::CostRatios(format!(
            "top-level lambda must be 1, got {top}"
        )));
    }
    Ok(())
}

/// Inputs to the acquisition that do not depend on the candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionContext {
    pub best_hf_value: f64,
    /// Set when no top-level observation exists and `best_hf_value` came
    /// from the highest level that has data.
    pub provisional: bool,
    pub cost_ratios: Vec<f64>,
    /// Observation noise standard deviation.
    pub noise_sd: f64,
}

impl AcquisitionContext {
    pub fn new(best_hf_value: f64, cost_ratios: Vec<f64>, noise_sd: f64) -> Result<Self> {
        validate_cost_ratios(&cost_ratios)?;
        if !best_hf_value.is_finite() {
            return Err(AcquisitionError::NonFinite("best high-fidelity value"));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(AcquisitionError::NonFinite("noise standard deviation"));
        }
        Ok(Self {
            best_hf_value,
            provisional: false,
            cost_ratios,
            noise_sd,
        })
    }

    /// Incumbent from `data`: the best top-level value, or the best value at
    /// the highest populated level (flagged provisional).
    pub fn from_data(data: &ObservationSet, cost_ratios: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let level = (1..=data.levels())
            .rev()
            .find(|&l| data.count_at(l) > 0)
            .ok_or(AcquisitionError::NoIncumbent)?;
        let best = data
            .at_level(level)
            .map(|o| o.y)
            .fold(f64::INFINITY, f64::min);
        let mut ctx = Self::new(best, cost_ratios, noise_sd)?;
        ctx.provisional = level < data.levels();
        Ok(ctx)
    }
}

/// The factors of the acquisition at one `(x, level)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpaTerms {
    pub ei: f64,
    /// Signed; the product uses `max(alpha1, 0)`.
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub value: f64,
}

fn terms_from_joint(
    joint: &JointPosterior,
    x: &[f64],
    level: usize,
    ctx: &AcquisitionContext,
    bias: &dyn PhysicsBias,
) -> Result<UpaTerms> {
    let top = joint.levels();
    if ctx.cost_ratios.len() != top {
        return Err(AcquisitionError::CostRatios(format!(
            "{} ratios for a {top}-level model",
            ctx.cost_ratios.len()
        )));
    }
    let hf = joint.stats(top);
    let ei = expected_improvement(hf.mean, hf.sd(), ctx.best_hf_value)?;
    let a1 = joint.correlation(level);
    let a2 = alpha2(joint.stats(level).sd(), ctx.noise_sd)?;
    let a3 = alpha3(&ctx.cost_ratios, level)?;
    let a4 = bias.alpha4(x, level, top)?;
    Ok(UpaTerms {
        ei,
        alpha1: a1,
        alpha2: a2,
        alpha3: a3,
        alpha4: a4,
        value: ei * a1.max(0.0) * a2 * a3 * a4,
    })
}

/// The acquisition value at `(x, level)`.
pub fn u_pa(
    model: &MfGpModel,
    x: &[f64],
    level: usize,
    ctx: &AcquisitionContext,
    bias: &dyn PhysicsBias,
) -> Result<f64> {
    Ok(u_pa_terms(model, x, level, ctx, bias)?.value)
}

pub fn u_pa_terms(
    model: &MfGpModel,
    x: &[f64],
    level: usize,
    ctx: &AcquisitionContext,
    bias: &dyn PhysicsBias,
) -> Result<UpaTerms> {
    if level == 0 || level > model.levels() {
        return Err(MfgpError::LevelOutOfRange {
            level,
            levels: model.levels(),
        }
        .into());
    }
    terms_from_joint(&model.joint(x)?, x, level, ctx, bias)
}

/// Terms at every level for one candidate, sharing one posterior solve.
pub fn u_pa_all_levels(
    model: &MfGpModel,
    x: &[f64],
    ctx: &AcquisitionContext,
    bias: &dyn PhysicsBias,
) -> Result<Vec<UpaTerms>> {
    let joint = model.joint(x)?;
    (1..=model.levels())
        .map(|l| terms_from_joint(&joint, x, l, ctx, bias))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(3.0, 0.0, 1.0).unwrap(), 0.0);
        assert!((expected_improvement(0.0, 1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((expected_improvement(-1.0, 1.0, 0.0).unwrap() - 1.083_315_470_667_4).abs() < 1e-9);
        assert!(expected_improvement(f64::NAN, 1.0, 0.0).is_err());
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn alpha2_cases() {
        assert_eq!(alpha2(0.3, 0.0).unwrap(), 1.0);
        assert_eq!(alpha2(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(alpha2(0.0, 0.0).unwrap(), 0.0);
        assert!((alpha2(1.0, 1.0).unwrap() - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn alpha3_ratios() {
        assert_eq!(alpha3(&[0.125, 0.2, 1.0], 3).unwrap(), 1.0);
        assert_eq!(alpha3(&[0.125, 0.2, 1.0], 1).unwrap(), 8.0);
        assert_eq!(alpha3(&[0.2, 1.0], 1).unwrap(), 5.0);
        assert!(alpha3(&[0.2, 1.0], 3).is_err());
    }

    #[test]
    fn cost_ratio_validation() {
        assert!(validate_cost_ratios(&[0.125, 0.2, 1.0]).is_ok());
        assert!(validate_cost_ratios(&[0.2, 0.9]).is_err());
        assert!(validate_cost_ratios(&[0.0, 1.0]).is_err());
        assert!(AcquisitionContext::new(f64::NAN, vec![1.0], 0.0).is_err());
    }
}
