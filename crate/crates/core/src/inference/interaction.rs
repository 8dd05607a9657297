//! Joint test of no treatment-by-mediator interaction.
//!
//! The statistic is a Wald form in `(gamma1_hat, gamma2_hat)` with an HC3
//! sandwich covariance. By default its null distribution is calibrated by
//! bootstrap: each resample contributes the Wald form of its deviation from
//! the full-sample estimate, studentized by the resample's own covariance.

use serde::{Deserialize, Serialize};

use crate::data::{arm_partition_rows, Dataset, ObservationRow};
use crate::error::{CcmError, Result};
use crate::ols::outcome_design;
use crate::qr::Qr;
use crate::rng::tag;

use super::bootstrap::{replicate_map, Resampling, MIN_REPLICATES, MIN_VALID_FRACTION};

/// Residual sum of squares below this fraction of the total sum of squares
/// counts as an exact fit.
const EXACT_FIT: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionReference {
    Bootstrap,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub method: String,
    /// Valid bootstrap replicates (bootstrap reference only).
    pub b_valid: Option<usize>,
}

struct Wald {
    statistic: f64,
    gamma: [f64; 2],
}

/// Wald form of `gamma_hat - center` on `rows`; `None` when the interacted
/// design is singular. With `center = None` the full-sample estimate is
/// tested against zero.
fn wald(rows: &[ObservationRow], center: Option<[f64; 2]>) -> Result<Wald> {
    for s in arm_partition_rows(rows) {
        if s.n_arm < 3 || s.var_m == 0.0 {
            return Err(CcmError::singular_arm(s.arm, "m"));
        }
    }
    let x = outcome_design(rows, true);
    let qr = Qr::factor(&x)?;
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let (b, rss) = qr.solve(&y);
    let gamma = [b[4], b[5]];
    let c = center.unwrap_or([0.0; 2]);
    let dev = [gamma[0] - c[0], gamma[1] - c[1]];

    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if rss <= EXACT_FIT * tss || tss == 0.0 {
        let scale = 1.0 + gamma[0].abs().max(gamma[1].abs());
        let statistic = if dev[0].abs().max(dev[1].abs()) <= 1e-8 * scale {
            0.0
        } else {
            f64::INFINITY
        };
        return Ok(Wald { statistic, gamma });
    }

    let p = x.ncols();
    let a = qr.xtx_inverse();
    let h = qr.leverages(&x);
    let mut meat = vec![0.0; p * p];
    for i in 0..x.nrows() {
        let fitted: f64 = (0..p).map(|k| x.get(i, k) * b[k]).sum();
        let e = y[i] - fitted;
        let w = if 1.0 - h[i] > 1e-12 {
            (e / (1.0 - h[i])).powi(2)
        } else {
            0.0
        };
        for r in 0..p {
            let xr = w * x.get(i, r);
            for s in 0..p {
                meat[r * p + s] += xr * x.get(i, s);
            }
        }
    }
    // Rows 4 and 5 of A M A.
    let rows_of = |r: usize| -> Vec<f64> {
        (0..p)
            .map(|s| (0..p).map(|k| a[r * p + k] * meat[k * p + s]).sum())
            .collect()
    };
    let (am4, am5) = (rows_of(4), rows_of(5));
    let v = |am: &[f64], col: usize| -> f64 { (0..p).map(|k| am[k] * a[k * p + col]).sum() };
    let (v11, v12, v22) = (v(&am4, 4), v(&am4, 5), v(&am5, 5));
    let det = v11 * v22 - v12 * v12;
    if !(det > 0.0) {
        return Err(CcmError::Singular {
            columns: vec!["t1*m".into(), "t2*m".into()],
            arm: None,
        });
    }
    let statistic = (v22 * dev[0] * dev[0] - 2.0 * v12 * dev[0] * dev[1] + v11 * dev[1] * dev[1]) / det;
    Ok(Wald { statistic, gamma })
}

/// Tests `gamma1 = gamma2 = 0`.
pub fn interaction_test(
    d: &Dataset,
    alpha: f64,
    reference: InteractionReference,
    b: usize,
    seed: u64,
    stratified: bool,
) -> Result<TestResult> {
    let full = wald(d.rows(), None)?;
    let w = full.statistic;
    let (p_value, method, b_valid) = match reference {
        InteractionReference::ChiSquare => (
            (-w / 2.0).exp(),
            "HC3 Wald, chi-square(2) reference".to_string(),
            None,
        ),
        InteractionReference::Bootstrap => {
            if b < MIN_REPLICATES {
                return Err(CcmError::InvalidArgument(format!(
                    "bootstrap needs at least {MIN_REPLICATES} replicates, got {b}"
                )));
            }
            let res = Resampling { b, seed, stratified };
            let draws = replicate_map(d, &res, tag::INTERACTION, |rows| {
                wald(rows, Some(full.gamma)).ok().map(|w| w.statistic)
            });
            let valid: Vec<f64> = draws.into_iter().flatten().filter(|v| !v.is_nan()).collect();
            if (valid.len() as f64) < MIN_VALID_FRACTION * b as f64 {
                return Err(CcmError::UnreliableResampling {
                    valid: valid.len(),
                    requested: b,
                });
            }
            let exceed = valid.iter().filter(|&&v| v >= w).count();
            (
                (1 + exceed) as f64 / (1 + valid.len()) as f64,
                "HC3 Wald, bootstrap-calibrated reference".to_string(),
                Some(valid.len()),
            )
        }
    };
    let p_value = p_value.clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: w,
        p_value,
        reject: p_value < alpha,
        alpha,
        method,
        b_valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::f2;
    use crate::data::Arm;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn slopes(s1: f64, s2: f64, n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, &[1]);
        let mut rows = Vec::new();
        for (arm, slope) in [(Arm::Control, 1.0), (Arm::Arm1, s1), (Arm::Arm2, s2)] {
            for _ in 0..n {
                let m: f64 = rng.random_range(0.0..4.0);
                let e: f64 = StandardNormal.sample(&mut rng);
                rows.push(ObservationRow::in_arm(arm, m, slope * m + e));
            }
        }
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn outcome_equal_to_mediator_gives_zero() {
        let d = slopes(1.0, 1.0, 20, 2).map_outcome(|y| y).unwrap();
        let d = Dataset::from_rows(
            d.rows()
                .iter()
                .map(|r| ObservationRow::new(r.t1, r.t2, r.m, r.m).unwrap())
                .collect(),
        )
        .unwrap();
        for reference in [InteractionReference::Bootstrap, InteractionReference::ChiSquare] {
            let t = interaction_test(&d, 0.05, reference, 200, 1, true).unwrap();
            assert_eq!(t.statistic, 0.0);
            assert_eq!(t.p_value, 1.0);
            assert!(!t.reject);
        }
    }

    #[test]
    fn f2_exact_fit_with_interaction_rejects() {
        let t = interaction_test(&f2(), 0.05, InteractionReference::ChiSquare, 0, 1, false).unwrap();
        assert!(t.statistic.is_infinite());
        assert_eq!(t.p_value, 0.0);
        assert!(t.reject);
    }

    #[test]
    fn slope_one_versus_two_rejects_strongly() {
        let d = slopes(1.0, 2.0, 150, 3);
        let t = interaction_test(&d, 0.05, InteractionReference::Bootstrap, 400, 5, false).unwrap();
        assert!(t.p_value < 0.01, "p = {}", t.p_value);
        assert!(t.reject);
    }

    #[test]
    fn hc3_matches_direct_sandwich_on_small_case() {
        // Direct dense computation of (X'X)^-1 X' diag(e^2/(1-h)^2) X (X'X)^-1.
        let d = slopes(1.5, 0.5, 5, 7);
        let rows = d.rows();
        let x = outcome_design(rows, true);
        let (n, p) = (x.nrows(), x.ncols());
        let qr = Qr::factor(&x).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
        let (b, _) = qr.solve(&y);
        let a = qr.xtx_inverse();
        let mut v = vec![0.0; p * p];
        for i in 0..n {
            let hi: f64 = (0..p)
                .map(|r| (0..p).map(|s| x.get(i, r) * a[r * p + s] * x.get(i, s)).sum::<f64>())
                .sum();
            let e = y[i] - (0..p).map(|k| x.get(i, k) * b[k]).sum::<f64>();
            let w = (e / (1.0 - hi)).powi(2);
            let ax: Vec<f64> = (0..p).map(|r| (0..p).map(|k| a[r * p + k] * x.get(i, k)).sum()).collect();
            for r in 0..p {
                for s in 0..p {
                    v[r * p + s] += w * ax[r] * ax[s];
                }
            }
        }
        let (v11, v12, v22) = (v[4 * p + 4], v[4 * p + 5], v[5 * p + 5]);
        let (g1, g2) = (b[4], b[5]);
        let direct = (v22 * g1 * g1 - 2.0 * v12 * g1 * g2 + v11 * g2 * g2) / (v11 * v22 - v12 * v12);
        let w = wald(rows, None).unwrap().statistic;
        assert!((w - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{w} vs {direct}");
    }

    #[test]
    fn constant_arm_mediator_is_unavailable() {
        let err = interaction_test(&crate::data::fixtures::f1(), 0.05, InteractionReference::ChiSquare, 0, 1, false)
            .unwrap_err();
        assert!(err.is_singular());
    }
}
