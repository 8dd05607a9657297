//! Data-generating processes with an omitted confounder, and Monte Carlo
//! studies of the estimators under them.
//!
//! Units draw their own coefficients independently:
//!
//! ```text
//! M = pi + alpha1 T1 + alpha2 T2 + psi X
//! Y = lambda + delta1 T1 + delta2 T2 + beta M [+ gamma1 T1 M + gamma2 T2 M] + phi X
//! ```
//!
//! `X` enters both equations and is withheld from the emitted dataset, so
//! the outcome regression overstates `beta` while the comparative ratios are
//! unaffected (without interactions) or attenuated toward one (with them).
//!
//! Normal specs carry a mean and a **variance**. With that reading the
//! default configuration biases the naive mediation effects upward by about
//! 2.55 and 6.37; reading the second parameter as a standard deviation would
//! give about 1.9 and 4.7.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, ObservationRow, TreatmentIndex};
use crate::error::{CcmError, Result};
use crate::estimators::{Estimand, EstimandId, InteractionMode};
use crate::inference::bootstrap::{bootstrap_many, percentile_ci, Statistic};
use crate::inference::conservatism_diagnostic;
use crate::ols::{solve_least_squares, DesignMatrix, FitBundle};
use crate::rng::{derive_seed, stream, tag, StreamRng, GENERATOR_VERSION};

/// Units drawn by the brute-force truth computation.
pub const TRUTH_UNITS: usize = 1 << 20;
const TRUTH_CHUNK: usize = 1 << 14;
/// Share of failed replicates above which a study aborts.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: f64,
    pub variance: f64,
}

impl NormalSpec {
    pub const fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.variance.sqrt() * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformSpec {
    pub low: f64,
    pub high: f64,
}

impl UniformSpec {
    #[inline]
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        let u: f64 = rng.random();
        self.low + (self.high - self.low) * u
    }

    fn mean(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpParams {
    pub pi: NormalSpec,
    pub lambda: NormalSpec,
    pub alpha1: NormalSpec,
    pub alpha2: NormalSpec,
    pub beta: NormalSpec,
    pub delta1: NormalSpec,
    pub delta2: NormalSpec,
    pub psi: NormalSpec,
    pub phi: NormalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionParams {
    pub gamma1: NormalSpec,
    pub gamma2: NormalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_per_arm: usize,
    pub params: DgpParams,
    pub x_dist: UniformSpec,
    #[serde(default)]
    pub interactions: Option<InteractionParams>,
    pub seed: u64,
}

impl SimulationConfig {
    /// Simulation without interactions: 100 units per arm.
    pub fn paper_fig1() -> Self {
        let n = NormalSpec::new;
        Self {
            n_per_arm: 100,
            params: DgpParams {
                pi: n(0.0, 1.0),
                lambda: n(0.0, 1.0),
                alpha1: n(4.0, 2.0),
                alpha2: n(10.0, 2.0),
                beta: n(3.0, 2.0),
                delta1: n(5.0, 2.0),
                delta2: n(5.0, 2.0),
                psi: n(4.0, 2.0),
                phi: n(4.0, 2.0),
            },
            x_dist: UniformSpec {
                low: 0.0,
                high: 5.0,
            },
            interactions: None,
            seed: 1,
        }
    }

    /// Simulation with interactions: 1000 units per arm. The interaction
    /// distributions are not published; these make the mediation effect for
    /// the treated larger under treatment 2, give treatment 2 the larger
    /// interaction, and satisfy the attenuation condition.
    pub fn paper_fig_d1() -> Self {
        Self {
            n_per_arm: 1000,
            interactions: Some(InteractionParams {
                gamma1: NormalSpec::new(1.0, 1.0),
                gamma2: NormalSpec::new(4.0, 1.0),
            }),
            ..Self::paper_fig1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_arm < 2 {
            return Err(CcmError::InvalidArgument(format!(
                "n_per_arm must be at least 2, got {}",
                self.n_per_arm
            )));
        }
        let p = &self.params;
        let mut specs = vec![
            ("pi", p.pi),
            ("lambda", p.lambda),
            ("alpha1", p.alpha1),
            ("alpha2", p.alpha2),
            ("beta", p.beta),
            ("delta1", p.delta1),
            ("delta2", p.delta2),
            ("psi", p.psi),
            ("phi", p.phi),
        ];
        if let Some(i) = &self.interactions {
            specs.push(("gamma1", i.gamma1));
            specs.push(("gamma2", i.gamma2));
        }
        for (name, s) in specs {
            if !s.mean.is_finite() || !s.variance.is_finite() || s.variance < 0.0 {
                return Err(CcmError::InvalidArgument(format!(
                    "{name}: mean must be finite and variance finite and non-negative"
                )));
            }
        }
        let x = self.x_dist;
        if !x.low.is_finite() || !x.high.is_finite() || x.low > x.high {
            return Err(CcmError::InvalidArgument(
                "x_dist: need finite low <= high".into(),
            ));
        }
        Ok(())
    }

    pub fn interaction_mode(&self) -> InteractionMode {
        if self.interactions.is_some() {
            InteractionMode::Treated
        } else {
            InteractionMode::None
        }
    }
}

/// One unit's coefficients.
struct Unit {
    x: f64,
    pi: f64,
    alpha: [f64; 2],
    psi: f64,
    lambda: f64,
    delta: [f64; 2],
    beta: f64,
    phi: f64,
    gamma: [f64; 2],
}

impl Unit {
    /// Draw order is fixed; the interaction stream is separate so that
    /// degenerate interactions leave every other draw unchanged.
    fn draw(cfg: &SimulationConfig, main: &mut StreamRng, inter: &mut StreamRng) -> Unit {
        let p = &cfg.params;
        let x = cfg.x_dist.draw(main);
        let pi = p.pi.draw(main);
        let alpha = [p.alpha1.draw(main), p.alpha2.draw(main)];
        let psi = p.psi.draw(main);
        let lambda = p.lambda.draw(main);
        let delta = [p.delta1.draw(main), p.delta2.draw(main)];
        let beta = p.beta.draw(main);
        let phi = p.phi.draw(main);
        let gamma = match &cfg.interactions {
            Some(i) => [i.gamma1.draw(inter), i.gamma2.draw(inter)],
            None => [0.0, 0.0],
        };
        Unit {
            x,
            pi,
            alpha,
            psi,
            lambda,
            delta,
            beta,
            phi,
            gamma,
        }
    }

    fn mediator(&self, arm: Arm) -> f64 {
        let shift = match arm {
            Arm::Control => 0.0,
            Arm::Arm1 => self.alpha[0],
            Arm::Arm2 => self.alpha[1],
        };
        self.pi + shift + self.psi * self.x
    }

    fn outcome(&self, arm: Arm, m: f64) -> f64 {
        let (shift, gamma) = match arm {
            Arm::Control => (0.0, 0.0),
            Arm::Arm1 => (self.delta[0], self.gamma[0]),
            Arm::Arm2 => (self.delta[1], self.gamma[1]),
        };
        let y = self.lambda + shift + self.beta * m + self.phi * self.x;
        y + gamma * m
    }
}

/// Generates one dataset and the withheld confounder, row-aligned.
pub fn generate_retaining_confounder(
    cfg: &SimulationConfig,
    replicate_seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    cfg.validate()?;
    let mut main = stream(replicate_seed, &[tag::UNITS]);
    let mut inter = stream(replicate_seed, &[tag::INTERACTION_UNITS]);
    let n = 3 * cfg.n_per_arm;
    let mut rows = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for arm in Arm::ALL {
        for _ in 0..cfg.n_per_arm {
            let u = Unit::draw(cfg, &mut main, &mut inter);
            let m = u.mediator(arm);
            rows.push(ObservationRow::in_arm(arm, m, u.outcome(arm, m)));
            xs.push(u.x);
        }
    }
    Ok((Dataset::from_rows(rows)?, xs))
}

/// Draws a dataset from a configuration without interactions.
pub fn generate_no_interaction(cfg: &SimulationConfig, replicate_seed: u64) -> Result<Dataset> {
    if cfg.interactions.is_some() {
        return Err(CcmError::Mode(
            "configuration has interactions; use generate_with_interaction".into(),
        ));
    }
    Ok(generate_retaining_confounder(cfg, replicate_seed)?.0)
}

/// Draws a dataset with unit-level treatment-by-mediator interactions.
pub fn generate_with_interaction(cfg: &SimulationConfig, replicate_seed: u64) -> Result<Dataset> {
    if cfg.interactions.is_none() {
        return Err(CcmError::Mode(
            "configuration has no interactions; use generate_no_interaction".into(),
        ));
    }
    Ok(generate_retaining_confounder(cfg, replicate_seed)?.0)
}

pub fn generate(cfg: &SimulationConfig, replicate_seed: u64) -> Result<Dataset> {
    Ok(generate_retaining_confounder(cfg, replicate_seed)?.0)
}

/// Naive mediation effects from regressions that include the withheld
/// confounder. Test path for the bias mechanism: with `X` controlled the
/// outcome slope on `m` is consistent.
pub fn acmes_controlling_confounder(d: &Dataset, x: &[f64]) -> Result<[f64; 2]> {
    if x.len() != d.n() {
        return Err(CcmError::InvalidArgument("confounder length differs from rows".into()));
    }
    let rows = d.rows();
    let ind = |f: fn(&ObservationRow) -> bool| rows.iter().map(|r| f64::from(u8::from(f(r)))).collect();
    let design = DesignMatrix::from_columns(
        &["intercept", "t1", "t2", "m", "x"],
        vec![
            vec![1.0; rows.len()],
            ind(|r| r.t1),
            ind(|r| r.t2),
            rows.iter().map(|r| r.m).collect(),
            x.to_vec(),
        ],
    );
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let beta = solve_least_squares(&design, &y)?[3];
    let f = FitBundle::fit_lenient(d, false)?;
    Ok([f.mediator.alpha1_hat * beta, f.mediator.alpha2_hat * beta])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TruthMethod {
    /// Products of parameter means, valid under independent unit parameters.
    Analytic,
    /// Averages of unit-level potential-outcome contrasts.
    BruteForce { units: usize, seed: u64 },
}

/// Population values of the estimands. With interactions the mediation
/// effects are those for the treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueValues {
    pub acme1: f64,
    pub acme2: f64,
    pub ate1: f64,
    pub ate2: f64,
    pub estimand1: f64,
    pub estimand2: f64,
    pub method: TruthMethod,
}

impl TrueValues {
    fn from_components(acme: [f64; 2], ate: [f64; 2], method: TruthMethod) -> Self {
        Self {
            acme1: acme[0],
            acme2: acme[1],
            ate1: ate[0],
            ate2: ate[1],
            estimand1: acme[1] / acme[0],
            estimand2: (acme[1] / ate[1]) / (acme[0] / ate[0]),
            method,
        }
    }

    pub fn proportion(&self, j: TreatmentIndex) -> f64 {
        match j {
            TreatmentIndex::One => self.acme1 / self.ate1,
            TreatmentIndex::Two => self.acme2 / self.ate2,
        }
    }
}

/// True estimand values: analytic without interactions, brute force over
/// [`TRUTH_UNITS`] simulated units with them.
pub fn true_estimands(cfg: &SimulationConfig) -> Result<TrueValues> {
    cfg.validate()?;
    match cfg.interactions {
        None => {
            let p = &cfg.params;
            let acme = [p.alpha1.mean * p.beta.mean, p.alpha2.mean * p.beta.mean];
            let ate = [p.delta1.mean + acme[0], p.delta2.mean + acme[1]];
            Ok(TrueValues::from_components(acme, ate, TruthMethod::Analytic))
        }
        Some(_) => Ok(brute_force_truth(cfg, TRUTH_UNITS, cfg.seed)),
    }
}

/// Averages unit-level contrasts `Y(t_j, M(t_j)) - Y(t_j, M(0))` and
/// `Y(t_j, M(t_j)) - Y(0, M(0))` over `units` draws.
pub fn brute_force_truth(cfg: &SimulationConfig, units: usize, seed: u64) -> TrueValues {
    let chunks = units.div_ceil(TRUTH_CHUNK);
    let sums: Vec<[f64; 4]> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut main = stream(seed, &[tag::TRUTH, c]);
            let mut inter = stream(seed, &[tag::TRUTH, tag::INTERACTION_UNITS, c]);
            let len = TRUTH_CHUNK.min(units - c as usize * TRUTH_CHUNK);
            let mut s = [0.0; 4];
            for _ in 0..len {
                let u = Unit::draw(cfg, &mut main, &mut inter);
                let m0 = u.mediator(Arm::Control);
                let y00 = u.outcome(Arm::Control, m0);
                for (j, arm) in [Arm::Arm1, Arm::Arm2].into_iter().enumerate() {
                    let mj = u.mediator(arm);
                    let y_jj = u.outcome(arm, mj);
                    s[j] += y_jj - u.outcome(arm, m0);
                    s[2 + j] += y_jj - y00;
                }
            }
            s
        })
        .collect();
    let mut total = [0.0; 4];
    for s in &sums {
        for k in 0..4 {
            total[k] += s[k];
        }
    }
    let n = units as f64;
    TrueValues::from_components(
        [total[0] / n, total[1] / n],
        [total[2] / n, total[3] / n],
        TruthMethod::BruteForce { units, seed },
    )
}

/// Analytic population values under independent unit parameters, including
/// the interaction terms. Used to check the brute-force path.
pub fn analytic_truth_with_interactions(cfg: &SimulationConfig) -> TrueValues {
    let p = &cfg.params;
    let g = cfg
        .interactions
        .map(|i| [i.gamma1.mean, i.gamma2.mean])
        .unwrap_or([0.0, 0.0]);
    let a = [p.alpha1.mean, p.alpha2.mean];
    let d = [p.delta1.mean, p.delta2.mean];
    let m0 = p.pi.mean + p.psi.mean * cfg.x_dist.mean();
    let acme: [f64; 2] = std::array::from_fn(|j| a[j] * (p.beta.mean + g[j]));
    let ate: [f64; 2] = std::array::from_fn(|j| d[j] + p.beta.mean * a[j] + g[j] * (m0 + a[j]));
    TrueValues::from_components(acme, ate, TruthMethod::Analytic)
}

/// A quantity tracked across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Acme1,
    Acme2,
    Proportion1,
    Proportion2,
    Estimand1,
    Estimand1Adjusted,
    Estimand2,
    Estimand2Adjusted,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Acme1,
        Quantity::Acme2,
        Quantity::Proportion1,
        Quantity::Proportion2,
        Quantity::Estimand1,
        Quantity::Estimand1Adjusted,
        Quantity::Estimand2,
        Quantity::Estimand2Adjusted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Acme1 => "acme1",
            Quantity::Acme2 => "acme2",
            Quantity::Proportion1 => "proportion1",
            Quantity::Proportion2 => "proportion2",
            Quantity::Estimand1 => "estimand1",
            Quantity::Estimand1Adjusted => "estimand1_adjusted",
            Quantity::Estimand2 => "estimand2",
            Quantity::Estimand2Adjusted => "estimand2_adjusted",
        }
    }

    /// Naive quantities depend on the confounded outcome slope.
    pub fn confounding_sensitive(self) -> bool {
        matches!(
            self,
            Quantity::Acme1 | Quantity::Acme2 | Quantity::Proportion1 | Quantity::Proportion2
        )
    }

    fn statistic(self, mode: InteractionMode) -> Option<Statistic> {
        use TreatmentIndex::{One, Two};
        let e1 = EstimandId::new(Estimand::RatioOfAcmes, mode);
        let e2 = EstimandId::new(Estimand::RatioOfProportions, mode);
        Some(match self {
            Quantity::Acme1 => Statistic::AcmeNaive(One, mode),
            Quantity::Acme2 => Statistic::AcmeNaive(Two, mode),
            Quantity::Proportion1 => Statistic::ProportionMediated(One, mode),
            Quantity::Proportion2 => Statistic::ProportionMediated(Two, mode),
            Quantity::Estimand1 => Statistic::Ccm(e1),
            Quantity::Estimand2 => Statistic::Ccm(e2),
            // The interacted adjustment needs bootstrap covariances inside
            // every resample; it is not part of the study.
            Quantity::Estimand1Adjusted if mode == InteractionMode::None => Statistic::CcmAdjusted(e1),
            Quantity::Estimand2Adjusted if mode == InteractionMode::None => Statistic::CcmAdjusted(e2),
            _ => return None,
        })
    }

    fn truth(self, t: &TrueValues) -> f64 {
        match self {
            Quantity::Acme1 => t.acme1,
            Quantity::Acme2 => t.acme2,
            Quantity::Proportion1 => t.proportion(TreatmentIndex::One),
            Quantity::Proportion2 => t.proportion(TreatmentIndex::Two),
            Quantity::Estimand1 | Quantity::Estimand1Adjusted => t.estimand1,
            Quantity::Estimand2 | Quantity::Estimand2Adjusted => t.estimand2,
        }
    }
}

/// Whether `[lo, hi]` covers `truth`, with a tolerance of
/// `1e-9 max(1, |truth|)` so zero-width intervals at the truth count.
pub fn covers(lo: f64, hi: f64, truth: f64) -> bool {
    let tol = 1e-9 * truth.abs().max(1.0);
    lo - tol <= truth && truth <= hi + tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub quantity: Quantity,
    pub estimate: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityRecord {
    pub quantity: Quantity,
    pub confounding_sensitive: bool,
    pub true_value: f64,
    /// Replicates where the estimate was defined.
    pub n_estimates: usize,
    pub mean_estimate: Option<f64>,
    pub mean_bias: Option<f64>,
    pub mean_abs_error: Option<f64>,
    /// Replicates where the bootstrap interval was available.
    pub n_intervals: usize,
    pub coverage_95: Option<f64>,
    pub mean_ci_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveSummary {
    pub mean_bias_acme1: Option<f64>,
    pub mean_bias_acme2: Option<f64>,
    pub coverage_acme1: Option<f64>,
    pub coverage_acme2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub config: SimulationConfig,
    pub r_requested: usize,
    /// Completed replicates.
    pub r_reps: usize,
    pub r_failed: usize,
    pub b_boot: usize,
    pub seed: u64,
    pub generator: String,
    pub interaction_mode: InteractionMode,
    pub truth: TrueValues,
    pub records: Vec<QuantityRecord>,
    pub naive: NaiveSummary,
    /// Share of replicates where the conservatism diagnostic held
    /// (interacted configurations only).
    pub diagnostic_holds_rate: Option<f64>,
    #[serde(skip)]
    pub replicate_table: Vec<ReplicateRow>,
}

impl McSummary {
    pub fn record(&self, q: Quantity) -> Option<&QuantityRecord> {
        self.records.iter().find(|r| r.quantity == q)
    }

    /// Writes the replicate table as delimited text with a header row.
    pub fn write_replicate_table<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CcmError::Input(e.to_string());
        out.write_record(["replicate", "quantity", "estimate", "ci_lo", "ci_hi", "covered"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.replicate_table {
            out.write_record([
                r.replicate.to_string(),
                r.quantity.name().to_string(),
                format!("{:?}", r.estimate),
                opt(r.ci_lo),
                opt(r.ci_hi),
                r.covered.map(|c| u8::from(c).to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| CcmError::Input(e.to_string()))
    }
}

struct ReplicateOutcome {
    rows: Vec<ReplicateRow>,
    diagnostic_holds: Option<bool>,
}

fn run_replicate(
    cfg: &SimulationConfig,
    truth: &TrueValues,
    r: usize,
    b_boot: usize,
    seed: u64,
) -> Option<ReplicateOutcome> {
    let mode = cfg.interaction_mode();
    let rseed = derive_seed(seed, &[tag::REPLICATE, r as u64]);
    let d = generate(cfg, rseed).ok()?;
    let fit = FitBundle::fit_lenient(&d, mode.includes_interactions()).ok()?;
    let tracked: Vec<(Quantity, Statistic)> = Quantity::ALL
        .iter()
        .filter_map(|&q| q.statistic(mode).map(|s| (q, s)))
        .collect();
    let stats: Vec<Statistic> = tracked.iter().map(|&(_, s)| s).collect();
    let dists = bootstrap_many(&d, &stats, b_boot, rseed, false).ok()?;
    let mut rows = Vec::with_capacity(tracked.len());
    for (&(q, s), dist) in tracked.iter().zip(dists) {
        let Some(estimate) = s.evaluate(&fit) else {
            continue;
        };
        let ci = dist.ok().and_then(|bd| percentile_ci(&bd, 0.05).ok());
        rows.push(ReplicateRow {
            replicate: r,
            quantity: q,
            estimate,
            ci_lo: ci.map(|c| c.lower),
            ci_hi: ci.map(|c| c.upper),
            covered: ci.map(|c| covers(c.lower, c.upper, q.truth(truth))),
        });
    }
    // Estimand 1 with its interval is the minimum for a usable replicate.
    rows.iter()
        .find(|row| row.quantity == Quantity::Estimand1 && row.covered.is_some())?;
    let diagnostic_holds = match mode {
        InteractionMode::Treated => conservatism_diagnostic(&d).ok().map(|d| d.holds),
        InteractionMode::None => None,
    };
    Some(ReplicateOutcome {
        rows,
        diagnostic_holds,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

/// Runs `r_reps` replicates of generate, fit, bootstrap and compare.
///
/// Replicate `r` uses the seed derived from `(seed, r)`, so the summary does
/// not depend on scheduling. Failed replicates are excluded; more than
/// [`MAX_FAILURE_RATE`] of them aborts the study.
pub fn monte_carlo(
    cfg: &SimulationConfig,
    r_reps: usize,
    b_boot: usize,
    seed: u64,
) -> Result<McSummary> {
    cfg.validate()?;
    if r_reps < 2 {
        return Err(CcmError::InvalidArgument(format!(
            "need at least 2 replicates, got {r_reps}"
        )));
    }
    let truth = true_estimands(cfg)?;
    let outcomes: Vec<Option<ReplicateOutcome>> = (0..r_reps)
        .into_par_iter()
        .map(|r| run_replicate(cfg, &truth, r, b_boot, seed))
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    if failed as f64 > MAX_FAILURE_RATE * r_reps as f64 {
        return Err(CcmError::SimulationAborted {
            failed,
            requested: r_reps,
        });
    }
    let done: Vec<ReplicateOutcome> = outcomes.into_iter().flatten().collect();
    let table: Vec<ReplicateRow> = done.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let mode = cfg.interaction_mode();

    let records: Vec<QuantityRecord> = Quantity::ALL
        .iter()
        .filter(|q| q.statistic(mode).is_some())
        .map(|&q| {
            let t = q.truth(&truth);
            let rows: Vec<&ReplicateRow> = table.iter().filter(|r| r.quantity == q).collect();
            let with_ci: Vec<&&ReplicateRow> = rows.iter().filter(|r| r.covered.is_some()).collect();
            QuantityRecord {
                quantity: q,
                confounding_sensitive: q.confounding_sensitive(),
                true_value: t,
                n_estimates: rows.len(),
                mean_estimate: mean(rows.iter().map(|r| r.estimate)),
                mean_bias: mean(rows.iter().map(|r| r.estimate - t)),
                mean_abs_error: mean(rows.iter().map(|r| (r.estimate - t).abs())),
                n_intervals: with_ci.len(),
                coverage_95: mean(with_ci.iter().map(|r| f64::from(u8::from(r.covered.unwrap())))),
                mean_ci_width: mean(with_ci.iter().map(|r| r.ci_hi.unwrap() - r.ci_lo.unwrap())),
            }
        })
        .collect();
    let rec = |q: Quantity| records.iter().find(|r| r.quantity == q);
    let naive = NaiveSummary {
        mean_bias_acme1: rec(Quantity::Acme1).and_then(|r| r.mean_bias),
        mean_bias_acme2: rec(Quantity::Acme2).and_then(|r| r.mean_bias),
        coverage_acme1: rec(Quantity::Acme1).and_then(|r| r.coverage_95),
        coverage_acme2: rec(Quantity::Acme2).and_then(|r| r.coverage_95),
    };
    let diagnostic_holds_rate = match mode {
        InteractionMode::Treated => mean(
            done.iter()
                .map(|o| f64::from(u8::from(o.diagnostic_holds.unwrap_or(false)))),
        ),
        InteractionMode::None => None,
    };
    Ok(McSummary {
        config: cfg.clone(),
        r_requested: r_reps,
        r_reps: done.len(),
        r_failed: failed,
        b_boot,
        seed,
        generator: GENERATOR_VERSION.to_string(),
        interaction_mode: mode,
        truth,
        records,
        naive,
        diagnostic_holds_rate,
        replicate_table: table,
    })
}
