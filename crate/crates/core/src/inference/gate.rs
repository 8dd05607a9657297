//! Denominator gate: the ratio is only estimated once its denominator is
//! statistically distinguishable from zero.

use crate::data::Dataset;
use crate::estimators::{EstimandId, GateResult};
use crate::rng::tag;

use super::bootstrap::{bootstrap_many_tagged, percentile_ci, BootstrapDistribution, Statistic};

/// Gate decision from an existing bootstrap distribution of the denominator.
pub fn gate_from_distribution(bd: &BootstrapDistribution, alpha: f64) -> GateResult {
    match percentile_ci(bd, alpha) {
        Ok(ci) => {
            let passed = ci.excludes_zero();
            let message = if passed {
                format!(
                    "{} is distinguishable from zero: {:.0}% interval [{:.6}, {:.6}]",
                    bd.stat_label,
                    100.0 * (1.0 - alpha),
                    ci.lower,
                    ci.upper
                )
            } else {
                format!(
                    "{} cannot be distinguished from zero: {:.0}% interval [{:.6}, {:.6}] contains 0; \
                     the ratio would be unstable and is not estimated",
                    bd.stat_label,
                    100.0 * (1.0 - alpha),
                    ci.lower,
                    ci.upper
                )
            };
            GateResult {
                passed,
                alpha,
                denominator_ci: Some(ci),
                message,
            }
        }
        Err(e) => failed(alpha, format!("{}: {e}", bd.stat_label)),
    }
}

fn failed(alpha: f64, message: String) -> GateResult {
    GateResult {
        passed: false,
        alpha,
        denominator_ci: None,
        message,
    }
}

/// Bootstraps the denominator of `id` and checks that its percentile
/// interval excludes zero. Failures of any kind are reported in the result.
pub fn denominator_gate(
    d: &Dataset,
    id: EstimandId,
    alpha: f64,
    b: usize,
    seed: u64,
    stratified: bool,
) -> GateResult {
    let stat = Statistic::Denominator(id);
    match bootstrap_many_tagged(d, &[stat], b, seed, stratified, tag::GATE) {
        Ok(mut v) => match v.pop().expect("one statistic requested") {
            Ok(bd) => gate_from_distribution(&bd, alpha),
            Err(e) => failed(alpha, format!("{}: {e}", stat.label())),
        },
        Err(e) => failed(alpha, format!("{}: {e}", stat.label())),
    }
}
