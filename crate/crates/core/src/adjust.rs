//! Second-order finite-sample adjustments to the comparative ratios.
//!
//! Each adjusted estimator subtracts the estimated leading term of
//! `E[f(theta_hat)] - f(theta)`, i.e. half the covariance-weighted sum of
//! second derivatives, evaluated at the fitted coefficients. Higher-order
//! remainder terms are ignored; [`correction`] exposes the size of the
//! adjustment so callers can judge whether that is reasonable.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CcmError, Result};
use crate::estimators::{Estimand, EstimandId, InteractionMode};
use crate::inference::bootstrap::{replicate_map, Resampling};
use crate::ols::FitBundle;
use crate::rng::tag;

/// Coefficients whose sampling covariances enter the adjustments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coef {
    Alpha1,
    Alpha2,
    Tau1,
    Tau2,
    Omega1,
    Omega2,
}

impl Coef {
    pub const ALL: [Coef; 6] = [
        Coef::Alpha1,
        Coef::Alpha2,
        Coef::Tau1,
        Coef::Tau2,
        Coef::Omega1,
        Coef::Omega2,
    ];

    fn values(f: &FitBundle) -> Option<[f64; 6]> {
        let o = f.outcome.as_ref()?;
        Some([
            f.mediator.alpha1_hat,
            f.mediator.alpha2_hat,
            f.total.tau1_hat,
            f.total.tau2_hat,
            o.omega1_hat,
            o.omega2_hat,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceScheme {
    AnalyticHomoskedastic,
    Bootstrap,
}

impl CovarianceScheme {
    /// Analytic without interactions, bootstrap with them.
    pub fn default_for(mode: InteractionMode) -> Self {
        match mode {
            InteractionMode::None => CovarianceScheme::AnalyticHomoskedastic,
            InteractionMode::Treated => CovarianceScheme::Bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCovariances {
    /// Symmetric, indexed in [`Coef::ALL`] order.
    pub entries: [[f64; 6]; 6],
    pub scheme: CovarianceScheme,
    pub b_reps: Option<usize>,
    pub b_dropped: usize,
    pub warnings: Vec<String>,
}

impl CoefficientCovariances {
    pub fn zero(scheme: CovarianceScheme) -> Self {
        Self {
            entries: [[0.0; 6]; 6],
            scheme,
            b_reps: None,
            b_dropped: 0,
            warnings: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&self, a: Coef, b: Coef) -> f64 {
        self.entries[a as usize][b as usize]
    }

    pub fn set(&mut self, a: Coef, b: Coef, v: f64) {
        self.entries[a as usize][b as usize] = v;
        self.entries[b as usize][a as usize] = v;
    }

    /// Homoskedastic covariances computed from residual variances and arm
    /// sizes. The omega block comes from the outcome fit; omega is treated
    /// as uncorrelated with the arm-mean contrasts.
    pub fn analytic(f: &FitBundle) -> Self {
        let [n0, n1, n2] = f.arms.map(|a| a.n_arm as f64);
        let inv_n = [1.0 / n1, 1.0 / n2];
        let (s_mm, s_yy, s_my) = (
            f.mediator.resid_var_eta,
            f.total.resid_var_rho,
            f.resid_cov_eta_rho,
        );
        let alphas = [Coef::Alpha1, Coef::Alpha2];
        let taus = [Coef::Tau1, Coef::Tau2];
        let mut c = Self::zero(CovarianceScheme::AnalyticHomoskedastic);
        for j in 0..2 {
            for k in 0..2 {
                let shared = 1.0 / n0 + if j == k { inv_n[j] } else { 0.0 };
                c.set(alphas[j], alphas[k], s_mm * shared);
                c.set(taus[j], taus[k], s_yy * shared);
                c.set(alphas[j], taus[k], s_my * shared);
            }
        }
        if let Some(o) = &f.outcome {
            c.set(Coef::Omega1, Coef::Omega1, o.omega_cov[0][0]);
            c.set(Coef::Omega2, Coef::Omega2, o.omega_cov[1][1]);
            c.set(Coef::Omega1, Coef::Omega2, o.omega_cov[0][1]);
        }
        c
    }
}

/// Estimates the coefficient covariance matrix.
///
/// The bootstrap scheme refits every equation on each resample and takes the
/// empirical covariance of the six coefficients jointly; resamples with a
/// singular fit are dropped and counted.
pub fn coefficient_covariances(
    d: &Dataset,
    scheme: CovarianceScheme,
    mode: InteractionMode,
    b_reps: usize,
    seed: u64,
    stratified: bool,
) -> Result<CoefficientCovariances> {
    let include = mode.includes_interactions();
    match scheme {
        CovarianceScheme::AnalyticHomoskedastic => {
            Ok(CoefficientCovariances::analytic(&FitBundle::fit(d, include)?))
        }
        CovarianceScheme::Bootstrap => {
            if b_reps < 200 {
                return Err(CcmError::InvalidArgument(format!(
                    "bootstrap covariances need at least 200 replicates, got {b_reps}"
                )));
            }
            let resampling = Resampling {
                b: b_reps,
                seed,
                stratified,
            };
            let draws = replicate_map(d, &resampling, tag::COVARIANCE, |rows| {
                FitBundle::fit_rows(rows, include, true)
                    .ok()
                    .and_then(|f| Coef::values(&f))
            });
            let valid: Vec<[f64; 6]> = draws.into_iter().flatten().collect();
            let dropped = b_reps - valid.len();
            if valid.len() < 2 {
                return Err(CcmError::UnreliableResampling {
                    valid: valid.len(),
                    requested: b_reps,
                });
            }
            let mut c = CoefficientCovariances::zero(CovarianceScheme::Bootstrap);
            c.b_reps = Some(b_reps);
            c.b_dropped = dropped;
            let k = valid.len() as f64;
            let mean: [f64; 6] =
                std::array::from_fn(|i| valid.iter().map(|v| v[i]).sum::<f64>() / k);
            for i in 0..6 {
                for j in i..6 {
                    let s: f64 = valid
                        .iter()
                        .map(|v| (v[i] - mean[i]) * (v[j] - mean[j]))
                        .sum();
                    c.set(Coef::ALL[i], Coef::ALL[j], s / (k - 1.0));
                }
            }
            if dropped as f64 > 0.01 * b_reps as f64 {
                c.warnings.push(format!(
                    "{dropped} of {b_reps} covariance resamples had singular fits and were dropped"
                ));
            }
            Ok(c)
        }
    }
}

fn degenerate(what: &str) -> CcmError {
    CcmError::DegenerateEstimand(format!("{what} is zero"))
}

/// `a2/a1 + Cov(a1,a2)/a1^2 - Var(a1) a2/a1^3`.
pub fn adjust_estimand1_no_interaction(f: &FitBundle, c: &CoefficientCovariances) -> Result<f64> {
    let (a1, a2) = (f.mediator.alpha1_hat, f.mediator.alpha2_hat);
    if a1 == 0.0 {
        return Err(degenerate("alpha1_hat"));
    }
    Ok(a2 / a1 + c.get(Coef::Alpha1, Coef::Alpha2) / (a1 * a1)
        - c.get(Coef::Alpha1, Coef::Alpha1) * a2 / (a1 * a1 * a1))
}

/// Closed form of [`adjust_estimand1_no_interaction`] for equal arm sizes,
/// using the mediator residual variance directly.
pub fn adjust_estimand1_balanced(f: &FitBundle) -> Result<f64> {
    if !f.is_balanced() {
        return Err(CcmError::Mode(
            "arm sizes differ; use the general covariance form".into(),
        ));
    }
    let (a1, a2) = (f.mediator.alpha1_hat, f.mediator.alpha2_hat);
    if a1 == 0.0 {
        return Err(degenerate("alpha1_hat"));
    }
    let s2 = f.mediator.resid_var_eta;
    let n = f.n as f64;
    Ok(a2 / a1 + 3.0 * s2 / (a1 * a1 * n) - 6.0 * s2 * a2 / (a1 * a1 * a1 * n))
}

pub fn adjust_estimand2_no_interaction(f: &FitBundle, c: &CoefficientCovariances) -> Result<f64> {
    use Coef::*;
    let (a1, a2) = (f.mediator.alpha1_hat, f.mediator.alpha2_hat);
    let (t1, t2) = (f.total.tau1_hat, f.total.tau2_hat);
    if a1 == 0.0 {
        return Err(degenerate("alpha1_hat"));
    }
    if t2 == 0.0 {
        return Err(degenerate("tau2_hat"));
    }
    let v = |x, y| c.get(x, y);
    Ok(a2 * t1 / (a1 * t2)
        - v(Alpha1, Alpha1) * a2 * t1 / (a1.powi(3) * t2)
        - v(Tau2, Tau2) * a2 * t1 / (a1 * t2.powi(3))
        + v(Alpha2, Alpha1) * t1 / (a1 * a1 * t2)
        + v(Alpha2, Tau2) * t1 / (a1 * t2 * t2)
        - v(Alpha2, Tau1) / (a1 * t2)
        - v(Alpha1, Tau2) * a2 * t1 / (a1 * a1 * t2 * t2)
        + v(Alpha1, Tau1) * a2 / (a1 * a1 * t2)
        + v(Tau2, Tau1) * a2 / (a1 * t2 * t2))
}

/// Adjusted ratio of mediation effects for the treated (`id.which` selects
/// the estimand). Requires an outcome fit with interactions.
pub fn adjust_with_interaction(
    f: &FitBundle,
    c: &CoefficientCovariances,
    id: EstimandId,
) -> Result<f64> {
    use Coef::*;
    let o = f.outcome()?;
    if !o.interactions_included {
        return Err(CcmError::Mode(
            "interaction adjustment requires an outcome fit with interactions".into(),
        ));
    }
    let (a1, a2) = (f.mediator.alpha1_hat, f.mediator.alpha2_hat);
    let (w1, w2) = (o.omega1_hat, o.omega2_hat);
    let (t1, t2) = (f.total.tau1_hat, f.total.tau2_hat);
    if a1 == 0.0 {
        return Err(degenerate("alpha1_hat"));
    }
    if w1 == 0.0 {
        return Err(degenerate("omega1_hat"));
    }
    let v = |x, y| c.get(x, y);
    match id.which {
        Estimand::RatioOfAcmes => Ok(a2 * w2 / (a1 * w1)
            - v(Alpha1, Alpha1) * a2 * w2 / (a1.powi(3) * w1)
            - v(Omega1, Omega1) * a2 * w2 / (a1 * w1.powi(3))
            + v(Alpha2, Alpha1) * w2 / (a1 * a1 * w1)
            + v(Alpha2, Omega1) * w2 / (a1 * w1 * w1)
            - v(Alpha2, Omega2) / (a1 * w1)
            - v(Alpha1, Omega1) * a2 * w2 / (a1 * a1 * w1 * w1)
            + v(Alpha1, Omega2) * a2 / (a1 * a1 * w1)
            + v(Omega1, Omega2) * a2 / (a1 * w1 * w1)),
        Estimand::RatioOfProportions => {
            if t2 == 0.0 {
                return Err(degenerate("tau2_hat"));
            }
            let f0 = a2 * w2 * t1 / (a1 * w1 * t2);
            Ok(f0
                - v(Alpha1, Alpha1) * a2 * w2 * t1 / (a1.powi(3) * w1 * t2)
                - v(Omega1, Omega1) * a2 * w2 * t1 / (a1 * w1.powi(3) * t2)
                - v(Tau2, Tau2) * a2 * w2 * t1 / (a1 * w1 * t2.powi(3))
                + v(Alpha2, Alpha1) * w2 * t1 / (a1 * a1 * w1 * t2)
                - v(Alpha2, Omega2) * t1 / (a1 * w1 * t2)
                + v(Alpha2, Omega1) * w2 * t1 / (a1 * w1 * w1 * t2)
                + v(Alpha2, Tau2) * w2 * t1 / (a1 * w1 * t2 * t2)
                - v(Alpha2, Tau1) * w2 / (a1 * w1 * t2)
                + v(Alpha1, Omega2) * a2 * t1 / (a1 * a1 * w1 * t2)
                - v(Alpha1, Omega1) * a2 * w2 * t1 / (a1 * a1 * w1 * w1 * t2)
                - v(Alpha1, Tau2) * a2 * w2 * t1 / (a1 * a1 * w1 * t2 * t2)
                + v(Alpha1, Tau1) * a2 * w2 / (a1 * a1 * w1 * t2)
                + v(Omega2, Omega1) * a2 * t1 / (a1 * w1 * w1 * t2)
                + v(Omega2, Tau2) * a2 * t1 / (a1 * w1 * t2 * t2)
                - v(Omega2, Tau1) * a2 / (a1 * w1 * t2)
                - v(Omega1, Tau2) * a2 * w2 * t1 / (a1 * w1 * w1 * t2 * t2)
                + v(Omega1, Tau1) * a2 * w2 / (a1 * w1 * w1 * t2)
                + v(Tau2, Tau1) * a2 * w2 / (a1 * w1 * t2 * t2))
        }
    }
}

/// Adjusted value of any estimand.
pub fn adjusted_value(f: &FitBundle, c: &CoefficientCovariances, id: EstimandId) -> Result<f64> {
    match (id.which, id.interaction_mode) {
        (Estimand::RatioOfAcmes, InteractionMode::None) => adjust_estimand1_no_interaction(f, c),
        (Estimand::RatioOfProportions, InteractionMode::None) => {
            adjust_estimand2_no_interaction(f, c)
        }
        (_, InteractionMode::Treated) => adjust_with_interaction(f, c, id),
    }
}

/// `adjusted - simple` for `id`.
pub fn correction(f: &FitBundle, c: &CoefficientCovariances, id: EstimandId) -> Result<f64> {
    let simple = crate::estimators::ccm_point(f, id)?.simple_value;
    Ok(adjusted_value(f, c, id)? - simple)
}

/// Adjusted value using analytic covariances, tolerating a missing outcome
/// fit when the estimand does not depend on it.
pub(crate) fn analytic_adjusted_value(f: &FitBundle, id: EstimandId) -> Option<f64> {
    let c = CoefficientCovariances::analytic(f);
    match (id.which, id.interaction_mode) {
        (Estimand::RatioOfAcmes, InteractionMode::None) => adjust_estimand1_no_interaction(f, &c).ok(),
        (Estimand::RatioOfProportions, InteractionMode::None) => {
            if f.total.tau1_hat == 0.0 {
                return None;
            }
            adjust_estimand2_no_interaction(f, &c).ok()
        }
        _ => adjust_with_interaction(f, &c, id).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::f1;
    use crate::data::{Arm, ObservationRow};
    use crate::estimators::ccm_point;
    use proptest::prelude::*;

    const E1: EstimandId = EstimandId::new(Estimand::RatioOfAcmes, InteractionMode::None);
    const E2: EstimandId = EstimandId::new(Estimand::RatioOfProportions, InteractionMode::None);
    const E1T: EstimandId = EstimandId::new(Estimand::RatioOfAcmes, InteractionMode::Treated);
    const E2T: EstimandId = EstimandId::new(Estimand::RatioOfProportions, InteractionMode::Treated);

    /// Second-order correction for a monomial `f = prod x_k^{p_k}`:
    /// `-(1/2) sum_{k,l} C_kl d2f/dx_k dx_l`, with
    /// `d2f/dx_k dx_l = p_k (p_l - [k = l]) f / (x_k x_l)`.
    fn monomial_adjusted(x: &[f64; 6], powers: &[i32; 6], c: &CoefficientCovariances) -> f64 {
        let f: f64 = x.iter().zip(powers).map(|(v, &p)| v.powi(p)).product();
        let mut corr = 0.0;
        for k in 0..6 {
            for l in 0..6 {
                let pk = powers[k] as f64;
                let pl = powers[l] as f64 - if k == l { 1.0 } else { 0.0 };
                corr += c.entries[k][l] * pk * pl * f / (x[k] * x[l]);
            }
        }
        f - 0.5 * corr
    }

    fn bundle_with(a1: f64, a2: f64, t1: f64, t2: f64, w1: f64, w2: f64) -> FitBundle {
        let mut f = FitBundle::fit(&crate::data::fixtures::f2(), true).unwrap();
        f.mediator.alpha1_hat = a1;
        f.mediator.alpha2_hat = a2;
        f.total.tau1_hat = t1;
        f.total.tau2_hat = t2;
        let o = f.outcome.as_mut().unwrap();
        o.beta_hat = w1;
        o.gamma1_hat = 0.0;
        o.gamma2_hat = w2 - w1;
        o.omega1_hat = w1;
        o.omega2_hat = w2;
        f
    }

    fn random_covariances(seed: [f64; 21]) -> CoefficientCovariances {
        let mut c = CoefficientCovariances::zero(CovarianceScheme::Bootstrap);
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                c.set(Coef::ALL[i], Coef::ALL[j], seed[k]);
                k += 1;
            }
        }
        c
    }

    fn nonzero() -> impl Strategy<Value = f64> {
        prop_oneof![0.2f64..5.0, -5.0f64..-0.2]
    }

    proptest! {
        #[test]
        fn printed_forms_match_second_order_rule(
            a1 in nonzero(), a2 in nonzero(), t1 in nonzero(), t2 in nonzero(),
            w1 in nonzero(), w2 in nonzero(),
            cov in prop::array::uniform21(-0.1f64..0.1),
        ) {
            let f = bundle_with(a1, a2, t1, t2, w1, w2);
            let c = random_covariances(cov);
            let x = [a1, a2, t1, t2, w1, w2];
            let tol = |v: f64| 1e-9 * (1.0 + v.abs());

            let e1 = monomial_adjusted(&x, &[-1, 1, 0, 0, 0, 0], &c);
            prop_assert!((adjust_estimand1_no_interaction(&f, &c).unwrap() - e1).abs() < tol(e1));
            let e2 = monomial_adjusted(&x, &[-1, 1, 1, -1, 0, 0], &c);
            prop_assert!((adjust_estimand2_no_interaction(&f, &c).unwrap() - e2).abs() < tol(e2));
            let e1t = monomial_adjusted(&x, &[-1, 1, 0, 0, -1, 1], &c);
            prop_assert!((adjust_with_interaction(&f, &c, E1T).unwrap() - e1t).abs() < tol(e1t));
            let e2t = monomial_adjusted(&x, &[-1, 1, 1, -1, -1, 1], &c);
            prop_assert!((adjust_with_interaction(&f, &c, E2T).unwrap() - e2t).abs() < tol(e2t));
        }

        #[test]
        fn interaction_forms_nest_when_gammas_vanish(
            a1 in nonzero(), a2 in nonzero(), t1 in nonzero(), t2 in nonzero(), beta in nonzero(),
            cov in prop::array::uniform21(-0.1f64..0.1),
        ) {
            let f = bundle_with(a1, a2, t1, t2, beta, beta);
            let mut c = random_covariances(cov);
            // With gamma = 0 both omegas are beta_hat: their rows coincide.
            for k in Coef::ALL {
                if k != Coef::Omega1 && k != Coef::Omega2 {
                    c.set(Coef::Omega2, k, c.get(Coef::Omega1, k));
                }
            }
            let vb = c.get(Coef::Omega1, Coef::Omega1);
            c.set(Coef::Omega2, Coef::Omega2, vb);
            c.set(Coef::Omega1, Coef::Omega2, vb);
            let plain1 = adjust_estimand1_no_interaction(&f, &c).unwrap();
            let plain2 = adjust_estimand2_no_interaction(&f, &c).unwrap();
            prop_assert!((adjust_with_interaction(&f, &c, E1T).unwrap() - plain1).abs() < 1e-10 * (1.0 + plain1.abs()));
            prop_assert!((adjust_with_interaction(&f, &c, E2T).unwrap() - plain2).abs() < 1e-10 * (1.0 + plain2.abs()));
        }
    }

    #[test]
    fn zero_covariances_leave_simple_values() {
        let f = FitBundle::fit(&crate::data::fixtures::generic(), true).unwrap();
        let c = CoefficientCovariances::zero(CovarianceScheme::AnalyticHomoskedastic);
        for id in [E1T, E2T] {
            let simple = ccm_point(&f, id).unwrap().simple_value;
            assert!((adjust_with_interaction(&f, &c, id).unwrap() - simple).abs() < 1e-14);
        }
        let plain = FitBundle::fit(&f1(), false).unwrap();
        for id in [E1, E2] {
            let simple = ccm_point(&plain, id).unwrap().simple_value;
            assert!((adjusted_value(&plain, &c, id).unwrap() - simple).abs() < 1e-14);
        }
    }

    #[test]
    fn balanced_analytic_covariances_closed_form() {
        let f = FitBundle::fit(&f1(), false).unwrap();
        let c = CoefficientCovariances::analytic(&f);
        let s2 = f.mediator.resid_var_eta;
        let n = f.n as f64;
        assert!((c.get(Coef::Alpha1, Coef::Alpha1) - 6.0 * s2 / n).abs() < 1e-14);
        assert!((c.get(Coef::Alpha2, Coef::Alpha2) - 6.0 * s2 / n).abs() < 1e-14);
        assert!((c.get(Coef::Alpha1, Coef::Alpha2) - 3.0 * s2 / n).abs() < 1e-14);
    }

    #[test]
    fn f1_adjusted_estimand1() {
        // F1: alpha1 = 1/3, alpha2 = 2/3, mediator residual SS = 4/3 over
        // n - 3 = 6 degrees of freedom, so sigma^2 = 2/9 and N = 9.
        let f = FitBundle::fit(&f1(), false).unwrap();
        let s2 = 2.0 / 9.0;
        assert!((f.mediator.resid_var_eta - s2).abs() < 1e-14);
        let (a1, a2, n) = (1.0 / 3.0, 2.0 / 3.0, 9.0);
        let expected = a2 / a1 + 3.0 * s2 / (a1 * a1 * n) - 6.0 * s2 * a2 / (a1.powi(3) * n);
        // 2 + 2/3 - 8/3 = 0
        assert!(expected.abs() < 1e-12);
        let c = CoefficientCovariances::analytic(&f);
        assert!((adjust_estimand1_no_interaction(&f, &c).unwrap() - expected).abs() < 1e-12);
        assert!((adjust_estimand1_balanced(&f).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn balanced_shortcut_rejects_unbalanced() {
        let mut rows: Vec<ObservationRow> = crate::data::fixtures::f2().rows().to_vec();
        rows.push(ObservationRow::in_arm(Arm::Arm1, 3.0, 3.0));
        let f = FitBundle::fit(&Dataset::from_rows(rows).unwrap(), false).unwrap();
        assert!(matches!(adjust_estimand1_balanced(&f), Err(CcmError::Mode(_))));
    }

    #[test]
    fn zero_mediator_variance_leaves_balanced_value() {
        let rows = [
            (Arm::Control, 1.0, 0.0),
            (Arm::Control, 1.0, 2.0),
            (Arm::Arm1, 2.0, 0.0),
            (Arm::Arm1, 2.0, 1.0),
            (Arm::Arm2, 4.0, 3.0),
            (Arm::Arm2, 4.0, 4.0),
        ];
        let d = Dataset::from_rows(rows.iter().map(|&(a, m, y)| ObservationRow::in_arm(a, m, y)).collect())
            .unwrap();
        let f = FitBundle::fit_lenient(&d, false).unwrap();
        assert_eq!(f.mediator.resid_var_eta, 0.0);
        assert!((adjust_estimand1_balanced(&f).unwrap() - 3.0).abs() < 1e-14);
        let c = coefficient_covariances(&d, CovarianceScheme::AnalyticHomoskedastic, InteractionMode::None, 0, 0, false);
        // Outcome design is singular here (m constant within arms).
        assert!(c.unwrap_err().is_singular());
        let c = CoefficientCovariances::analytic(&f);
        for a in [Coef::Alpha1, Coef::Alpha2] {
            for b in [Coef::Alpha1, Coef::Alpha2] {
                assert_eq!(c.get(a, b), 0.0);
            }
        }
    }

    #[test]
    fn duplicate_arm_adjusted_estimand2_stays_one() {
        let base = [(0.0, 1.0), (1.0, 3.0), (3.0, 2.0), (2.0, 7.0)];
        let mut rows: Vec<ObservationRow> = [(0.5, 0.0), (0.0, 1.0), (1.0, 0.5)]
            .iter()
            .map(|&(m, y)| ObservationRow::in_arm(Arm::Control, m, y))
            .collect();
        for arm in [Arm::Arm1, Arm::Arm2] {
            rows.extend(base.iter().map(|&(m, y)| ObservationRow::in_arm(arm, m, y)));
        }
        let f = FitBundle::fit(&Dataset::from_rows(rows).unwrap(), false).unwrap();
        // Arm 2 is a copy of arm 1, so each arm-2 coefficient is the same
        // random quantity as its arm-1 counterpart: identical rows and
        // columns, Var equal to Cov.
        let analytic = CoefficientCovariances::analytic(&f);
        let mut c = CoefficientCovariances::zero(CovarianceScheme::AnalyticHomoskedastic);
        let (va, vt, cat) = (
            analytic.get(Coef::Alpha1, Coef::Alpha1),
            analytic.get(Coef::Tau1, Coef::Tau1),
            analytic.get(Coef::Alpha1, Coef::Tau1),
        );
        for a in [Coef::Alpha1, Coef::Alpha2] {
            for b in [Coef::Alpha1, Coef::Alpha2] {
                c.set(a, b, va);
            }
            for t in [Coef::Tau1, Coef::Tau2] {
                c.set(a, t, cat);
            }
        }
        for a in [Coef::Tau1, Coef::Tau2] {
            for b in [Coef::Tau1, Coef::Tau2] {
                c.set(a, b, vt);
            }
        }
        assert!((adjust_estimand2_no_interaction(&f, &c).unwrap() - 1.0).abs() < 1e-10);
        assert!((adjust_estimand1_no_interaction(&f, &c).unwrap() - 1.0).abs() < 1e-10);

        // Independent-arm analytic covariances leave a residual correction of
        // -(1/n1) Var(eta/alpha - rho/tau) <= 0.
        let (a, t) = (f.mediator.alpha1_hat, f.total.tau1_hat);
        let n1 = f.arms[1].n_arm as f64;
        let expected = 1.0
            - (f.mediator.resid_var_eta / (a * a) + f.total.resid_var_rho / (t * t)
                - 2.0 * f.resid_cov_eta_rho / (a * t))
                / n1;
        let got = adjust_estimand2_no_interaction(&f, &analytic).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn bootstrap_scheme_requires_200_reps() {
        let err = coefficient_covariances(
            &crate::data::fixtures::f2(),
            CovarianceScheme::Bootstrap,
            InteractionMode::None,
            100,
            1,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, CcmError::InvalidArgument(_)));
    }
}
