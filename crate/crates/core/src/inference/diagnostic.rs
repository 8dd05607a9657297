//! Partial check of the condition under which the treated-effect ratios are
//! attenuated toward one.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::ols::arm_slopes;

pub const CAVEAT: &str = "partial large-sample check: compares omega2_hat var(m | arm2) with \
omega1_hat var(m | arm1); the covariance terms with unobserved confounders cannot be tested";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    /// `omega2_hat * var(m | arm2)`.
    pub lhs: f64,
    /// `omega1_hat * var(m | arm1)`.
    pub rhs: f64,
    pub holds: bool,
    pub caveat: String,
}

/// Fails with a singularity error naming the arm when a treated arm has a
/// constant mediator.
pub fn conservatism_diagnostic(d: &Dataset) -> Result<DiagnosticResult> {
    let s = arm_slopes(d)?;
    let lhs = s.omega2_hat * s.var_m_arm2;
    let rhs = s.omega1_hat * s.var_m_arm1;
    Ok(DiagnosticResult {
        lhs,
        rhs,
        holds: lhs > rhs,
        caveat: CAVEAT.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{f1, f2};
    use crate::data::{Arm, ObservationRow};
    use crate::error::CcmError;
    use proptest::prelude::*;

    #[test]
    fn f2_holds() {
        let r = conservatism_diagnostic(&f2()).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-12);
        assert!((r.rhs - 1.0).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn duplicate_arms_do_not_hold() {
        let mut rows = Vec::new();
        for arm in Arm::ALL {
            for (m, y) in [(0.0, 1.0), (1.0, 0.5), (3.0, 4.0)] {
                rows.push(ObservationRow::in_arm(arm, m, y));
            }
        }
        let r = conservatism_diagnostic(&Dataset::from_rows(rows).unwrap()).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(!r.holds);
    }

    #[test]
    fn constant_mediator_unavailable() {
        let err = conservatism_diagnostic(&f1()).unwrap_err();
        assert!(matches!(err, CcmError::Singular { arm: Some(Arm::Arm2), .. }));
    }

    proptest! {
        #[test]
        fn scale_behaviour(c in 0.1f64..10.0) {
            let base = conservatism_diagnostic(&f2()).unwrap();
            let y = conservatism_diagnostic(&f2().map_outcome(|v| c * v).unwrap()).unwrap();
            prop_assert!((y.lhs - c * base.lhs).abs() < 1e-9 * c);
            prop_assert!((y.rhs - c * base.rhs).abs() < 1e-9 * c);
            prop_assert_eq!(y.holds, base.holds);
            let m = conservatism_diagnostic(&f2().map_mediator(|v| c * v).unwrap()).unwrap();
            prop_assert!((m.lhs - c * base.lhs).abs() < 1e-9 * c);
            prop_assert!((m.rhs - c * base.rhs).abs() < 1e-9 * c);
            prop_assert_eq!(m.holds, base.holds);
        }
    }
}
