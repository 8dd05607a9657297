//! First-order (delta-method) intervals for the comparative ratios.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjust::{Coef, CoefficientCovariances};
use crate::error::{CcmError, Result};
use crate::estimators::{
    ccm_point, CiMethod, ConfidenceInterval, Estimand, EstimandId, GateResult, InteractionMode,
};
use crate::ols::FitBundle;

/// Exponent of each coefficient (in [`Coef::ALL`] order) when the simple
/// ratio is written as a monomial.
fn powers(id: EstimandId) -> [i32; 6] {
    let mut p = [-1, 1, 0, 0, 0, 0];
    if id.which == Estimand::RatioOfProportions {
        p[2] = 1;
        p[3] = -1;
    }
    if id.interaction_mode == InteractionMode::Treated {
        p[4] = -1;
        p[5] = 1;
    }
    p
}

fn coefficients(f: &FitBundle, id: EstimandId) -> Result<[f64; 6]> {
    let (w1, w2) = match id.interaction_mode {
        InteractionMode::None => (1.0, 1.0),
        InteractionMode::Treated => {
            let o = f.outcome()?;
            (o.omega1_hat, o.omega2_hat)
        }
    };
    Ok([
        f.mediator.alpha1_hat,
        f.mediator.alpha2_hat,
        f.total.tau1_hat,
        f.total.tau2_hat,
        w1,
        w2,
    ])
}

/// Gradient of the simple ratio with respect to the coefficients in
/// [`Coef::ALL`] order. Entries for coefficients absent from the ratio are 0.
pub fn ratio_gradient(f: &FitBundle, id: EstimandId) -> Result<[f64; 6]> {
    let value = ccm_point(f, id)?.simple_value;
    let x = coefficients(f, id)?;
    let p = powers(id);
    Ok(std::array::from_fn(|k| {
        if p[k] == 0 {
            0.0
        } else {
            p[k] as f64 * value / x[k]
        }
    }))
}

/// Delta-method standard error of the simple ratio.
pub fn delta_se(f: &FitBundle, c: &CoefficientCovariances, id: EstimandId) -> Result<f64> {
    let g = ratio_gradient(f, id)?;
    let mut var = 0.0;
    for (i, a) in Coef::ALL.iter().enumerate() {
        for (j, b) in Coef::ALL.iter().enumerate() {
            var += g[i] * c.get(*a, *b) * g[j];
        }
    }
    Ok(var.max(0.0).sqrt())
}

/// Symmetric normal interval around the simple ratio. Refused unless the
/// denominator gate passed: with a denominator that cannot be distinguished
/// from zero the ratio has no usable normal approximation.
pub fn delta_ci(
    f: &FitBundle,
    c: &CoefficientCovariances,
    id: EstimandId,
    alpha: f64,
    gate: &GateResult,
) -> Result<ConfidenceInterval> {
    if !gate.passed {
        return Err(CcmError::GateFailed(format!(
            "delta-method interval for {id} refused: {}",
            gate.message
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CcmError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let value = ccm_point(f, id)?.simple_value;
    let se = delta_se(f, c, id)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(ConfidenceInterval {
        lower: value - z * se,
        upper: value + z * se,
        alpha,
        method: CiMethod::Delta,
    })
}
