//! Saturated least-squares fits of the mediator, outcome and total-effect
//! equations, plus the within-arm bivariate regressions.
//!
//! Mediator: `m ~ 1 + t1 + t2` giving `(pi, alpha1, alpha2)`.
//! Total:    `y ~ 1 + t1 + t2` giving `(chi, tau1, tau2)`.
//! Outcome:  `y ~ 1 + t1 + t2 + m [+ t1*m + t2*m]` giving
//! `(lambda, delta1, delta2, beta [, gamma1, gamma2])`.

use serde::{Deserialize, Serialize};

use crate::data::{arm_partition_rows, Arm, ArmSummary, Dataset, ObservationRow, TreatmentIndex};
use crate::error::{CcmError, Result};
use crate::qr::Qr;

pub use crate::qr::{solve_least_squares, DesignMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediatorFit {
    pub pi_hat: f64,
    pub alpha1_hat: f64,
    pub alpha2_hat: f64,
    /// Residual variance, divisor `n - 3`.
    pub resid_var_eta: f64,
}

impl MediatorFit {
    pub fn alpha(&self, j: TreatmentIndex) -> f64 {
        match j {
            TreatmentIndex::One => self.alpha1_hat,
            TreatmentIndex::Two => self.alpha2_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalFit {
    pub chi_hat: f64,
    pub tau1_hat: f64,
    pub tau2_hat: f64,
    /// Residual variance, divisor `n - 3`.
    pub resid_var_rho: f64,
}

impl TotalFit {
    pub fn tau(&self, j: TreatmentIndex) -> f64 {
        match j {
            TreatmentIndex::One => self.tau1_hat,
            TreatmentIndex::Two => self.tau2_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub lambda_hat: f64,
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    pub beta_hat: f64,
    /// Zero when interactions are not included.
    pub gamma1_hat: f64,
    /// Zero when interactions are not included.
    pub gamma2_hat: f64,
    /// `beta_hat + gamma1_hat`.
    pub omega1_hat: f64,
    /// `beta_hat + gamma2_hat`.
    pub omega2_hat: f64,
    pub interactions_included: bool,
    /// Residual variance, divisor `n - p`.
    pub resid_var_iota: f64,
    /// Homoskedastic covariance of `(omega1_hat, omega2_hat)`.
    pub omega_cov: [[f64; 2]; 2],
}

impl OutcomeFit {
    pub fn omega(&self, j: TreatmentIndex) -> f64 {
        match j {
            TreatmentIndex::One => self.omega1_hat,
            TreatmentIndex::Two => self.omega2_hat,
        }
    }
}

/// Every coefficient needed by the estimators, fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitBundle {
    pub mediator: MediatorFit,
    /// `None` only for bundles built with [`FitBundle::fit_lenient`] whose
    /// outcome design was singular.
    pub outcome: Option<OutcomeFit>,
    pub total: TotalFit,
    pub arms: [ArmSummary; 3],
    pub n: usize,
    /// Residual cross-covariance of the mediator and total equations,
    /// divisor `n - 3`.
    pub resid_cov_eta_rho: f64,
    #[serde(skip)]
    outcome_error: Option<CcmError>,
}

impl FitBundle {
    /// Fits all three equations; any singular design is an error.
    pub fn fit(d: &Dataset, include_interactions: bool) -> Result<FitBundle> {
        Self::fit_rows(d.rows(), include_interactions, true)
    }

    /// Like [`FitBundle::fit`], but a singular outcome design leaves
    /// `outcome` empty instead of failing. Quantities that need only the
    /// mediator and total equations remain available.
    pub fn fit_lenient(d: &Dataset, include_interactions: bool) -> Result<FitBundle> {
        Self::fit_rows(d.rows(), include_interactions, false)
    }

    pub(crate) fn fit_rows(
        rows: &[ObservationRow],
        include_interactions: bool,
        strict: bool,
    ) -> Result<FitBundle> {
        let arms = arm_partition_rows(rows);
        let (mediator, total, resid_cov_eta_rho) = fit_arm_contrasts(rows, &arms)?;
        let (outcome, outcome_error) = match fit_outcome_rows(rows, &arms, include_interactions) {
            Ok(o) => (Some(o), None),
            Err(e) if !strict => (None, Some(e)),
            Err(e) => return Err(e),
        };
        Ok(FitBundle {
            mediator,
            outcome,
            total,
            arms,
            n: rows.len(),
            resid_cov_eta_rho,
            outcome_error,
        })
    }

    /// The outcome fit, or the error that prevented it.
    pub fn outcome(&self) -> Result<&OutcomeFit> {
        match (&self.outcome, &self.outcome_error) {
            (Some(o), _) => Ok(o),
            (None, Some(e)) => Err(e.clone()),
            (None, None) => Err(CcmError::Singular {
                columns: vec!["m".into()],
                arm: None,
            }),
        }
    }

    pub fn is_balanced(&self) -> bool {
        let n0 = self.arms[0].n_arm;
        self.arms.iter().all(|a| a.n_arm == n0)
    }
}

fn residual_variance(rss: f64, n: usize, p: usize) -> f64 {
    if n > p {
        rss / (n - p) as f64
    } else {
        f64::NAN
    }
}

/// Column labels of the outcome design.
pub const OUTCOME_COLUMNS: [&str; 6] = ["intercept", "t1", "t2", "m", "t1*m", "t2*m"];

/// Design of the outcome equation, with or without the interaction columns.
pub fn outcome_design(rows: &[ObservationRow], include_interactions: bool) -> DesignMatrix {
    let t1: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.t1))).collect();
    let t2: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.t2))).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.m).collect();
    let mut columns = vec![vec![1.0; rows.len()], t1, t2, m];
    if include_interactions {
        columns.push(rows.iter().map(|r| if r.t1 { r.m } else { 0.0 }).collect());
        columns.push(rows.iter().map(|r| if r.t2 { r.m } else { 0.0 }).collect());
        DesignMatrix::from_columns(&OUTCOME_COLUMNS, columns)
    } else {
        DesignMatrix::from_columns(&OUTCOME_COLUMNS[..4], columns)
    }
}

/// Mediator and total equations. Their design is saturated in the arm
/// indicators, so the least-squares coefficients are arm-mean contrasts and
/// are computed as such: identical arms give bit-identical coefficients.
fn fit_arm_contrasts(
    rows: &[ObservationRow],
    arms: &[ArmSummary; 3],
) -> Result<(MediatorFit, TotalFit, f64)> {
    for (s, column) in arms.iter().zip(["intercept", "t1", "t2"]) {
        if s.n_arm == 0 {
            return Err(CcmError::Singular {
                columns: vec![column.into()],
                arm: None,
            });
        }
    }
    let (mut ss_m, mut ss_y, mut cross) = (0.0, 0.0, 0.0);
    for r in rows {
        let a = &arms[r.arm().index()];
        let (em, ey) = (r.m - a.mean_m, r.y - a.mean_y);
        ss_m += em * em;
        ss_y += ey * ey;
        cross += em * ey;
    }
    let n = rows.len();
    let [c, a1, a2] = arms;
    Ok((
        MediatorFit {
            pi_hat: c.mean_m,
            alpha1_hat: a1.mean_m - c.mean_m,
            alpha2_hat: a2.mean_m - c.mean_m,
            resid_var_eta: residual_variance(ss_m, n, 3),
        },
        TotalFit {
            chi_hat: c.mean_y,
            tau1_hat: a1.mean_y - c.mean_y,
            tau2_hat: a2.mean_y - c.mean_y,
            resid_var_rho: residual_variance(ss_y, n, 3),
        },
        residual_variance(cross, n, 3),
    ))
}

/// Regresses `m` on the arm indicators.
pub fn fit_mediator_model(d: &Dataset) -> Result<MediatorFit> {
    Ok(fit_arm_contrasts(d.rows(), &arm_partition_rows(d.rows()))?.0)
}

/// Regresses `y` on the arm indicators.
pub fn fit_total_model(d: &Dataset) -> Result<TotalFit> {
    Ok(fit_arm_contrasts(d.rows(), &arm_partition_rows(d.rows()))?.1)
}

/// Regresses `y` on the arm indicators and `m`, optionally with
/// treatment-by-mediator interactions.
///
/// With interactions, every arm needs a non-constant mediator; otherwise the
/// call fails with a singularity error naming the arm.
pub fn fit_outcome_model(d: &Dataset, include_interactions: bool) -> Result<OutcomeFit> {
    let arms = arm_partition_rows(d.rows());
    fit_outcome_rows(d.rows(), &arms, include_interactions)
}

fn fit_outcome_rows(
    rows: &[ObservationRow],
    arms: &[ArmSummary; 3],
    include_interactions: bool,
) -> Result<OutcomeFit> {
    if include_interactions {
        for s in arms {
            if s.n_arm > 0 && s.var_m == 0.0 {
                let column = match s.arm {
                    Arm::Control => "m",
                    Arm::Arm1 => "t1*m",
                    Arm::Arm2 => "t2*m",
                };
                return Err(CcmError::singular_arm(s.arm, column));
            }
        }
    }
    let design = outcome_design(rows, include_interactions);
    let qr = Qr::factor(&design).map_err(|e| match e {
        CcmError::Singular { columns, .. } if include_interactions => {
            let arm = match columns.first().map(String::as_str) {
                Some("t1*m") => Some(Arm::Arm1),
                Some("t2*m") => Some(Arm::Arm2),
                Some("m") => Some(Arm::Control),
                _ => None,
            };
            CcmError::Singular { columns, arm }
        }
        other => other,
    })?;
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let (b, rss) = qr.solve(&y);
    let p = design.ncols();
    let s2 = residual_variance(rss, rows.len(), p);
    let inv = qr.xtx_inverse();
    let v = |i: usize, j: usize| s2 * inv[i * p + j];
    let (gamma1, gamma2, omega_cov) = if include_interactions {
        let var1 = v(3, 3) + 2.0 * v(3, 4) + v(4, 4);
        let var2 = v(3, 3) + 2.0 * v(3, 5) + v(5, 5);
        let cov = v(3, 3) + v(3, 4) + v(3, 5) + v(4, 5);
        (b[4], b[5], [[var1, cov], [cov, var2]])
    } else {
        let vb = v(3, 3);
        (0.0, 0.0, [[vb, vb], [vb, vb]])
    };
    Ok(OutcomeFit {
        lambda_hat: b[0],
        delta1_hat: b[1],
        delta2_hat: b[2],
        beta_hat: b[3],
        gamma1_hat: gamma1,
        gamma2_hat: gamma2,
        omega1_hat: b[3] + gamma1,
        omega2_hat: b[3] + gamma2,
        interactions_included: include_interactions,
        resid_var_iota: s2,
        omega_cov,
    })
}

/// Within-arm bivariate slopes of `y` on `m` for the two treated arms, with
/// the within-arm mediator variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSlopes {
    pub omega1_hat: f64,
    pub omega2_hat: f64,
    pub var_m_arm1: f64,
    pub var_m_arm2: f64,
}

/// Intercept and slope of `y` on `m` within `arm`.
pub fn within_arm_line(d: &Dataset, arm: Arm) -> Result<(f64, f64)> {
    let (mut n, mut sm, mut sy) = (0usize, 0.0, 0.0);
    for r in d.rows().iter().filter(|r| r.arm() == arm) {
        n += 1;
        sm += r.m;
        sy += r.y;
    }
    if n < 2 {
        return Err(CcmError::singular_arm(arm, "m"));
    }
    let (mm, my) = (sm / n as f64, sy / n as f64);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for r in d.rows().iter().filter(|r| r.arm() == arm) {
        sxx += (r.m - mm) * (r.m - mm);
        sxy += (r.m - mm) * (r.y - my);
    }
    if sxx == 0.0 {
        return Err(CcmError::singular_arm(arm, "m"));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mm, slope))
}

pub fn arm_slopes(d: &Dataset) -> Result<ArmSlopes> {
    let arms = arm_partition_rows(d.rows());
    let (_, omega1) = within_arm_line(d, Arm::Arm1)?;
    let (_, omega2) = within_arm_line(d, Arm::Arm2)?;
    Ok(ArmSlopes {
        omega1_hat: omega1,
        omega2_hat: omega2,
        var_m_arm1: arms[1].var_m,
        var_m_arm2: arms[2].var_m,
    })
}
