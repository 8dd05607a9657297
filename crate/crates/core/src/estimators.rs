//! Point estimators: treatment effects, product-of-coefficients mediation
//! effects, proportions mediated, and the two comparative ratios.
//!
//! The single-arm mediation effects (`acme_naive`, `proportion_mediated`)
//! inherit the bias of `beta_hat` under mediator-outcome confounding and are
//! labelled confounding-sensitive wherever they are reported. The ratios do
//! not: the bias enters numerator and denominator through the same
//! coefficient.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::TreatmentIndex;
use crate::error::{CcmError, Result};
use crate::ols::FitBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `ACME_2 / ACME_1`.
    RatioOfAcmes,
    /// `(ACME_2 / ATE_2) / (ACME_1 / ATE_1)`.
    RatioOfProportions,
}

/// Which mediation effect the ratio is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// No treatment-mediator interaction: `alpha_j * beta`.
    None,
    /// Mediation effect for the treated: `alpha_j * (beta + gamma_j)`.
    Treated,
}

impl InteractionMode {
    pub fn includes_interactions(self) -> bool {
        self == InteractionMode::Treated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimandId {
    pub which: Estimand,
    pub interaction_mode: InteractionMode,
}

impl EstimandId {
    pub const fn new(which: Estimand, interaction_mode: InteractionMode) -> Self {
        Self {
            which,
            interaction_mode,
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.which, self.interaction_mode) {
            (Estimand::RatioOfAcmes, InteractionMode::None) => "acme2/acme1",
            (Estimand::RatioOfAcmes, InteractionMode::Treated) => "acmet2/acmet1",
            (Estimand::RatioOfProportions, InteractionMode::None) => {
                "(acme2/ate2)/(acme1/ate1)"
            }
            (Estimand::RatioOfProportions, InteractionMode::Treated) => {
                "(acmet2/ate2)/(acmet1/ate1)"
            }
        }
    }
}

impl fmt::Display for EstimandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Percentile,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Outcome of the denominator precondition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub passed: bool,
    pub alpha: f64,
    pub denominator_ci: Option<ConfidenceInterval>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmEstimate {
    pub id: EstimandId,
    pub simple_value: f64,
    pub adjusted_value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub gate: Option<GateResult>,
    pub ci: Option<ConfidenceInterval>,
}

pub fn ate(f: &FitBundle, j: TreatmentIndex) -> f64 {
    f.total.tau(j)
}

fn require_mode(f: &FitBundle, mode: InteractionMode) -> Result<()> {
    let o = f.outcome()?;
    if mode == InteractionMode::Treated && !o.interactions_included {
        return Err(CcmError::Mode(
            "mediation effect for the treated requires an outcome fit with interactions".into(),
        ));
    }
    Ok(())
}

/// Product-of-coefficients mediation effect for treatment `j`.
///
/// Confounding-sensitive: biased whenever the mediator-outcome relationship
/// is confounded.
pub fn acme_naive(f: &FitBundle, j: TreatmentIndex, mode: InteractionMode) -> Result<f64> {
    require_mode(f, mode)?;
    let o = f.outcome()?;
    let slope = match mode {
        InteractionMode::None => o.beta_hat,
        InteractionMode::Treated => o.omega(j),
    };
    Ok(f.mediator.alpha(j) * slope)
}

/// `acme_naive(j) / tau_j`. Confounding-sensitive.
pub fn proportion_mediated(f: &FitBundle, j: TreatmentIndex, mode: InteractionMode) -> Result<f64> {
    let tau = f.total.tau(j);
    if tau == 0.0 {
        return Err(CcmError::DivisionDomain(format!("estimated ATE_{j} is zero")));
    }
    Ok(acme_naive(f, j, mode)? / tau)
}

/// Simple (unadjusted) estimate of a comparative ratio.
///
/// The value is computed from the cancelled form (`alpha2 / alpha1` and
/// `alpha2 tau1 / (alpha1 tau2)` without interactions), so a near-zero
/// `beta_hat` does not destabilize it. `numerator` and `denominator` hold the
/// uncancelled mediation effects (or proportions mediated) for reuse.
pub fn ccm_point(f: &FitBundle, id: EstimandId) -> Result<CcmEstimate> {
    let (numerator, denominator, simple_value) = ratio_parts(f, id)?;
    Ok(CcmEstimate {
        id,
        simple_value,
        adjusted_value: None,
        numerator,
        denominator,
        gate: None,
        ci: None,
    })
}

/// `(numerator, denominator, value)` for `id`.
fn ratio_parts(f: &FitBundle, id: EstimandId) -> Result<(f64, f64, f64)> {
    let a1 = f.mediator.alpha1_hat;
    let a2 = f.mediator.alpha2_hat;
    let t1 = f.total.tau1_hat;
    let t2 = f.total.tau2_hat;
    require_mode(f, id.interaction_mode)?;
    let o = f.outcome()?;
    let (w1, w2) = match id.interaction_mode {
        InteractionMode::None => (o.beta_hat, o.beta_hat),
        InteractionMode::Treated => (o.omega1_hat, o.omega2_hat),
    };
    let degenerate = |what: &str| Err(CcmError::DegenerateEstimand(format!("{what} is zero")));
    if a1 == 0.0 {
        return degenerate("alpha1_hat");
    }
    if id.interaction_mode == InteractionMode::Treated && w1 == 0.0 {
        return degenerate("omega1_hat");
    }
    match id.which {
        Estimand::RatioOfAcmes => {
            let value = match id.interaction_mode {
                InteractionMode::None => a2 / a1,
                InteractionMode::Treated => (a2 * w2) / (a1 * w1),
            };
            Ok((a2 * w2, a1 * w1, value))
        }
        Estimand::RatioOfProportions => {
            if t1 == 0.0 {
                return degenerate("tau1_hat");
            }
            if t2 == 0.0 {
                return degenerate("tau2_hat");
            }
            let value = match id.interaction_mode {
                InteractionMode::None => (a2 * t1) / (a1 * t2),
                InteractionMode::Treated => (a2 * w2 * t1) / (a1 * w1 * t2),
            };
            Ok((a2 * w2 / t2, a1 * w1 / t1, value))
        }
    }
}

/// Ratio value from the mediator and total equations alone. Used where the
/// outcome equation may be unavailable; only valid without interactions,
/// where `beta_hat` cancels.
pub(crate) fn ratio_without_outcome(f: &FitBundle, which: Estimand) -> Option<f64> {
    let (a1, a2) = (f.mediator.alpha1_hat, f.mediator.alpha2_hat);
    let (t1, t2) = (f.total.tau1_hat, f.total.tau2_hat);
    match which {
        Estimand::RatioOfAcmes if a1 != 0.0 => Some(a2 / a1),
        Estimand::RatioOfProportions if a1 != 0.0 && t1 != 0.0 && t2 != 0.0 => {
            Some((a2 * t1) / (a1 * t2))
        }
        _ => None,
    }
}

/// Estimand 1 from reported mediation effects: `acme2 / acme1`.
pub fn ratio_of_acmes(acme1: f64, acme2: f64) -> Result<f64> {
    if acme1 == 0.0 {
        return Err(CcmError::DegenerateEstimand("acme1 is zero".into()));
    }
    Ok(acme2 / acme1)
}

/// Estimand 2 from reported mediation and total effects.
pub fn ratio_of_proportions(acme1: f64, ate1: f64, acme2: f64, ate2: f64) -> Result<f64> {
    if acme1 == 0.0 || ate1 == 0.0 || ate2 == 0.0 {
        return Err(CcmError::DegenerateEstimand(
            "acme1, ate1 and ate2 must be non-zero".into(),
        ));
    }
    Ok((acme2 / ate2) / (acme1 / ate1))
}

/// Result of comparing `ATE_2` against `ATE_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AteComparison {
    /// `ATE_2 > ATE_1` (equality rejected).
    Greater,
    /// Equality not rejected.
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnatomyLabel {
    DisproportionateScalingUp,
    UnrelatednessOfMediator,
    ProportionateScalingUp,
    DistinctCausalAnatomies,
    IndistinguishableCausalAnatomies,
    NotApplicable,
}

impl AnatomyLabel {
    pub fn description(self) -> &'static str {
        match self {
            AnatomyLabel::DisproportionateScalingUp => {
                "channel via M larger for treatment 2 in both absolute and proportional terms"
            }
            AnatomyLabel::UnrelatednessOfMediator => {
                "the larger effect of treatment 2 is not due to M"
            }
            AnatomyLabel::ProportionateScalingUp => {
                "channel via M larger for treatment 2 in absolute but not proportional terms"
            }
            AnatomyLabel::DistinctCausalAnatomies => {
                "equal total effects but M is a larger channel for treatment 2"
            }
            AnatomyLabel::IndistinguishableCausalAnatomies => {
                "any differences between the treatments are unrelated to M"
            }
            AnatomyLabel::NotApplicable => "combination has no defined interpretation",
        }
    }
}

/// Maps the three hypothesis-test outcomes to an anatomy label.
///
/// `e1_reject` / `e2_reject` mean the corresponding ratio was found to
/// exceed one.
pub fn classify_anatomy(ate_cmp: AteComparison, e1_reject: bool, e2_reject: bool) -> AnatomyLabel {
    use AnatomyLabel::*;
    match (ate_cmp, e1_reject, e2_reject) {
        (AteComparison::Greater, true, true) => DisproportionateScalingUp,
        (AteComparison::Greater, false, false) => UnrelatednessOfMediator,
        (AteComparison::Greater, true, false) => ProportionateScalingUp,
        (AteComparison::Equal, true, true) => DistinctCausalAnatomies,
        (AteComparison::Equal, false, false) => IndistinguishableCausalAnatomies,
        _ => NotApplicable,
    }
}
