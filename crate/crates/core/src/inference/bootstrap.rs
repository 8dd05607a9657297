//! Nonparametric bootstrap over rows.
//!
//! Replicate `r` draws its resample from the stream `[tag, r]` under the
//! master seed, so the replicate values do not depend on scheduling. Results
//! are collected in replicate order before any reduction.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::analytic_adjusted_value;
use crate::data::{Dataset, ObservationRow, TreatmentIndex};
use crate::error::{CcmError, Result};
use crate::estimators::{
    acme_naive, ccm_point, proportion_mediated, ratio_without_outcome, CiMethod,
    ConfidenceInterval, EstimandId, InteractionMode,
};
use crate::ols::FitBundle;
use crate::rng::{stream, tag};

/// Minimum replicate count accepted by the bootstrap entry points.
pub const MIN_REPLICATES: usize = 200;
/// Minimum valid replicates for a percentile interval.
pub const MIN_VALID_FOR_CI: usize = 100;
/// Fraction of replicates that must be valid.
pub const MIN_VALID_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resampling {
    pub b: usize,
    pub seed: u64,
    /// Resample within arms (arm sizes fixed) instead of from the whole
    /// sample.
    pub stratified: bool,
}

struct Sampler<'a> {
    rows: &'a [ObservationRow],
    by_arm: Option<[Vec<usize>; 3]>,
}

impl<'a> Sampler<'a> {
    fn new(rows: &'a [ObservationRow], stratified: bool) -> Self {
        let by_arm = stratified.then(|| {
            let mut idx: [Vec<usize>; 3] = Default::default();
            for (i, r) in rows.iter().enumerate() {
                idx[r.arm().index()].push(i);
            }
            idx
        });
        Self { rows, by_arm }
    }

    fn draw(&self, rng: &mut impl Rng, out: &mut Vec<ObservationRow>) {
        out.clear();
        match &self.by_arm {
            None => {
                let n = self.rows.len();
                out.extend((0..n).map(|_| self.rows[rng.random_range(0..n)]));
            }
            Some(idx) => {
                for arm in idx.iter().filter(|a| !a.is_empty()) {
                    out.extend((0..arm.len()).map(|_| self.rows[arm[rng.random_range(0..arm.len())]]));
                }
            }
        }
    }
}

/// Evaluates `f` on `b` resamples of `d`, in replicate order.
pub(crate) fn replicate_map<T, F>(d: &Dataset, res: &Resampling, domain: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[ObservationRow]) -> T + Sync,
{
    let sampler = Sampler::new(d.rows(), res.stratified);
    (0..res.b as u64)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(d.n()),
            |buf, r| {
                let mut rng = stream(res.seed, &[domain, r]);
                sampler.draw(&mut rng, buf);
                f(buf)
            },
        )
        .collect()
}

/// A quantity recomputed on every resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum Statistic {
    Alpha(TreatmentIndex),
    Tau(TreatmentIndex),
    Beta,
    Omega(TreatmentIndex),
    AcmeNaive(TreatmentIndex, InteractionMode),
    ProportionMediated(TreatmentIndex, InteractionMode),
    /// Simple comparative ratio.
    Ccm(EstimandId),
    /// Adjusted comparative ratio, using analytic covariances within each
    /// resample.
    CcmAdjusted(EstimandId),
    /// Denominator of the ratio (ACME_1 or ACME_1 / ATE_1).
    Denominator(EstimandId),
    /// `tau2_hat - tau1_hat`.
    AteDifference,
}

impl Statistic {
    pub fn label(&self) -> String {
        match self {
            Statistic::Alpha(j) => format!("alpha{j}"),
            Statistic::Tau(j) => format!("tau{j}"),
            Statistic::Beta => "beta".into(),
            Statistic::Omega(j) => format!("omega{j}"),
            Statistic::AcmeNaive(j, InteractionMode::None) => format!("acme{j}"),
            Statistic::AcmeNaive(j, InteractionMode::Treated) => format!("acmet{j}"),
            Statistic::ProportionMediated(j, InteractionMode::None) => format!("acme{j}/ate{j}"),
            Statistic::ProportionMediated(j, InteractionMode::Treated) => {
                format!("acmet{j}/ate{j}")
            }
            Statistic::Ccm(id) => id.label().into(),
            Statistic::CcmAdjusted(id) => format!("adjusted {}", id.label()),
            Statistic::Denominator(id) => format!("denominator of {}", id.label()),
            Statistic::AteDifference => "ate2-ate1".into(),
        }
    }

    fn interactions(&self) -> bool {
        match self {
            Statistic::Omega(_) => true,
            Statistic::AcmeNaive(_, m) | Statistic::ProportionMediated(_, m) => {
                m.includes_interactions()
            }
            Statistic::Ccm(id) | Statistic::CcmAdjusted(id) | Statistic::Denominator(id) => {
                id.interaction_mode.includes_interactions()
            }
            _ => false,
        }
    }

    /// Value on a fitted bundle; `None` when undefined or not finite.
    pub fn evaluate(&self, f: &FitBundle) -> Option<f64> {
        let v = match *self {
            Statistic::Alpha(j) => Some(f.mediator.alpha(j)),
            Statistic::Tau(j) => Some(f.total.tau(j)),
            Statistic::Beta => f.outcome.as_ref().map(|o| o.beta_hat),
            Statistic::Omega(j) => f.outcome.as_ref().map(|o| o.omega(j)),
            Statistic::AcmeNaive(j, m) => acme_naive(f, j, m).ok(),
            Statistic::ProportionMediated(j, m) => proportion_mediated(f, j, m).ok(),
            Statistic::Ccm(id) => match id.interaction_mode {
                InteractionMode::None => ratio_without_outcome(f, id.which),
                InteractionMode::Treated => ccm_point(f, id).ok().map(|e| e.simple_value),
            },
            Statistic::CcmAdjusted(id) => analytic_adjusted_value(f, id),
            Statistic::Denominator(id) => ccm_point(f, id).ok().map(|e| e.denominator),
            Statistic::AteDifference => Some(f.total.tau2_hat - f.total.tau1_hat),
        };
        v.filter(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub stat_label: String,
    /// Valid replicate values, ascending.
    pub values: Vec<f64>,
    pub b_requested: usize,
    pub b_valid: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl BootstrapDistribution {
    fn from_values(
        stat_label: String,
        mut values: Vec<f64>,
        res: &Resampling,
    ) -> Result<Self> {
        let b_valid = values.len();
        if (b_valid as f64) < MIN_VALID_FRACTION * res.b as f64 {
            return Err(CcmError::UnreliableResampling {
                valid: b_valid,
                requested: res.b,
            });
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            stat_label,
            values,
            b_requested: res.b,
            b_valid,
            seed: res.seed,
            stratified: res.stratified,
        })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let k = self.values.len() as f64;
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    }
}

fn check_b(b: usize) -> Result<()> {
    if b < MIN_REPLICATES {
        return Err(CcmError::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {b}"
        )));
    }
    Ok(())
}

/// Resamples once per replicate and evaluates every statistic on the same
/// resample. Each statistic succeeds or fails on its own drop rate.
pub fn bootstrap_many(
    d: &Dataset,
    stats: &[Statistic],
    b: usize,
    seed: u64,
    stratified: bool,
) -> Result<Vec<Result<BootstrapDistribution>>> {
    bootstrap_many_tagged(d, stats, b, seed, stratified, tag::BOOTSTRAP)
}

pub(crate) fn bootstrap_many_tagged(
    d: &Dataset,
    stats: &[Statistic],
    b: usize,
    seed: u64,
    stratified: bool,
    domain: u64,
) -> Result<Vec<Result<BootstrapDistribution>>> {
    check_b(b)?;
    let res = Resampling { b, seed, stratified };
    let need_plain = stats.iter().any(|s| !s.interactions());
    let need_int = stats.iter().any(|s| s.interactions());
    let draws: Vec<Vec<Option<f64>>> = replicate_map(d, &res, domain, |rows| {
        let plain = need_plain
            .then(|| FitBundle::fit_rows(rows, false, false).ok())
            .flatten();
        let int = need_int
            .then(|| FitBundle::fit_rows(rows, true, false).ok())
            .flatten();
        stats
            .iter()
            .map(|s| {
                let f = if s.interactions() { &int } else { &plain };
                f.as_ref().and_then(|f| s.evaluate(f))
            })
            .collect()
    });
    Ok(stats
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let values = draws.iter().filter_map(|r| r[k]).collect();
            BootstrapDistribution::from_values(s.label(), values, &res)
        })
        .collect())
}

/// Bootstrap distribution of one statistic.
pub fn bootstrap_distribution(
    d: &Dataset,
    stat: Statistic,
    b: usize,
    seed: u64,
    stratified: bool,
) -> Result<BootstrapDistribution> {
    bootstrap_many(d, &[stat], b, seed, stratified)?
        .pop()
        .expect("one statistic requested")
}

/// Type-7 quantile of ascending `sorted`: linear interpolation at rank
/// `1 + (n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed percentile interval at level `1 - alpha`.
pub fn percentile_ci(bd: &BootstrapDistribution, alpha: f64) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CcmError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if bd.b_valid < MIN_VALID_FOR_CI {
        return Err(CcmError::UnreliableResampling {
            valid: bd.b_valid,
            requested: bd.b_requested,
        });
    }
    Ok(ConfidenceInterval {
        lower: quantile(&bd.values, alpha / 2.0),
        upper: quantile(&bd.values, 1.0 - alpha / 2.0),
        alpha,
        method: CiMethod::Percentile,
    })
}
