//! Uncertainty and assumption checks: percentile bootstrap, delta-method
//! intervals, the denominator gate, the interaction test and the
//! conservatism diagnostic.

pub mod bootstrap;
pub mod delta;
pub mod diagnostic;
pub mod gate;
pub mod interaction;

pub use bootstrap::{
    bootstrap_distribution, bootstrap_many, percentile_ci, BootstrapDistribution, Statistic,
};
pub use delta::{delta_ci, delta_se, ratio_gradient};
pub use diagnostic::{conservatism_diagnostic, DiagnosticResult};
pub use gate::{denominator_gate, gate_from_distribution};
pub use interaction::{interaction_test, InteractionReference, TestResult};

use crate::estimators::{AteComparison, ConfidenceInterval};

/// `Greater` when the interval for `ATE_2 - ATE_1` lies above zero.
pub fn compare_ates(ate_difference_ci: &ConfidenceInterval) -> AteComparison {
    if ate_difference_ci.lower > 0.0 {
        AteComparison::Greater
    } else {
        AteComparison::Equal
    }
}

/// True when the interval for a comparative ratio lies above one.
pub fn ratio_exceeds_one(ci: &ConfidenceInterval) -> bool {
    ci.lower > 1.0
}
