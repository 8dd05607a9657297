use ccm::adjust::{adjusted_value, coefficient_covariances, CovarianceScheme};
use ccm::data::{validate, TreatmentIndex, ValidationReport};
use ccm::estimators::{
    ccm_point, classify_anatomy, AnatomyLabel, AteComparison, ConfidenceInterval, Estimand,
    EstimandId, GateResult, InteractionMode,
};
use ccm::inference::bootstrap::{bootstrap_many, percentile_ci, Statistic};
use ccm::inference::{
    compare_ates, conservatism_diagnostic, delta_ci, denominator_gate, interaction_test,
    ratio_exceeds_one, DiagnosticResult, InteractionReference, TestResult,
};
use ccm::ols::FitBundle;
use ccm::CcmError;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::output::Format;
use crate::{emit, resolve_seed, DataArgs, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionChoice {
    /// Include interactions when the interaction test rejects at --alpha.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiChoice {
    Percentile,
    Delta,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates for every resampling step.
    #[arg(long = "boot", default_value_t = 2000)]
    pub boot: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = InteractionChoice::Auto)]
    pub interaction: InteractionChoice,
    /// Resample within arms, holding arm sizes fixed.
    #[arg(long)]
    pub stratified: bool,
    #[arg(long, value_enum, default_value_t = CiChoice::Percentile)]
    pub ci: CiChoice,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Report estimates even when a denominator gate fails.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
pub struct Inputs {
    #[serde(flatten)]
    pub args: EstimateArgs,
    /// Seed actually used (drawn from entropy when not given).
    pub seed_used: u64,
}

#[derive(Debug, Serialize)]
pub struct InteractionForm {
    pub mode: InteractionMode,
    pub chosen_by: String,
}

/// A coefficient-based quantity with its bootstrap interval.
#[derive(Debug, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    /// Depends on the outcome slope, which an unmeasured mediator-outcome
    /// confounder biases.
    pub confounding_sensitive: bool,
}

#[derive(Debug, Serialize)]
pub struct EstimateEntry {
    pub estimand: String,
    pub id: EstimandId,
    pub simple_value: f64,
    pub adjusted_value: Option<f64>,
    pub covariance_scheme: Option<CovarianceScheme>,
    pub ci: Option<ConfidenceInterval>,
    pub gate: GateResult,
    /// Numerator and denominator are mediation effects (or proportions).
    pub numerator: f64,
    pub denominator: f64,
    pub confounding_sensitive: bool,
    pub components_confounding_sensitive: bool,
}

#[derive(Debug, Serialize)]
pub struct AteComparisonReport {
    pub difference: Quantity,
    pub comparison: Option<AteComparison>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub inputs: Inputs,
    pub validation: ValidationReport,
    pub interaction_test: Option<TestResult>,
    pub interaction_form: InteractionForm,
    pub fits: FitBundle,
    pub quantities: Vec<Quantity>,
    pub ate_comparison: AteComparisonReport,
    pub gates: Vec<GateResult>,
    pub estimates: Vec<EstimateEntry>,
    pub anatomy: Option<AnatomyLabel>,
    pub anatomy_description: Option<String>,
    pub diagnostic: Option<DiagnosticResult>,
    pub warnings: Vec<String>,
}

pub fn run(a: &EstimateArgs) -> Result<(), Failure> {
    let report = build(a)?;
    emit(&report, a.format)
}

pub fn build(a: &EstimateArgs) -> Result<RunReport, Failure> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::input(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    if a.boot < 200 {
        return Err(Failure::input(format!("--boot must be at least 200, got {}", a.boot)));
    }
    let seed = resolve_seed(a.seed);
    let d = a.data.load()?;
    let validation = validate(&d);
    let mut warnings: Vec<String> = validation.flags.iter().map(|f| f.to_string()).collect();

    // Interaction test first: it decides which form is estimated.
    let mut test = None;
    let (mode, chosen_by) = match a.interaction {
        InteractionChoice::On => (InteractionMode::Treated, "flag --interaction on".to_string()),
        InteractionChoice::Off => (InteractionMode::None, "flag --interaction off".to_string()),
        InteractionChoice::Auto => {
            match interaction_test(&d, a.alpha, InteractionReference::Bootstrap, a.boot, seed, a.stratified) {
                Ok(t) => {
                    let m = if t.reject {
                        InteractionMode::Treated
                    } else {
                        InteractionMode::None
                    };
                    let why = if t.reject {
                        format!("interaction test rejected at alpha {} (p = {})", a.alpha, t.p_value)
                    } else {
                        format!(
                            "interaction test did not reject at alpha {} (p = {}); no-interaction form maintained",
                            a.alpha, t.p_value
                        )
                    };
                    test = Some(t);
                    (m, why)
                }
                Err(e) => {
                    warnings.push(format!("interaction test unavailable: {e}"));
                    (
                        InteractionMode::None,
                        "interaction test unavailable; no-interaction form maintained".to_string(),
                    )
                }
            }
        }
    };

    let fits = FitBundle::fit(&d, mode.includes_interactions())?;
    let ids = [
        EstimandId::new(Estimand::RatioOfAcmes, mode),
        EstimandId::new(Estimand::RatioOfProportions, mode),
    ];

    let gates: Vec<GateResult> = ids
        .iter()
        .map(|&id| denominator_gate(&d, id, a.alpha, a.boot, seed, a.stratified))
        .collect();
    for (id, g) in ids.iter().zip(&gates) {
        if !g.passed {
            if !a.force {
                return Err(CcmError::GateFailed(format!("{id}: {}", g.message)).into());
            }
            warnings.push(format!(
                "WARNING: denominator gate failed for {id}; the estimate below is shown only \
                 because --force was given and should not be interpreted: {}",
                g.message
            ));
        }
    }

    let scheme = CovarianceScheme::default_for(mode);
    let covariances = match coefficient_covariances(&d, scheme, mode, a.boot, seed, a.stratified) {
        Ok(c) => {
            warnings.extend(c.warnings.iter().cloned());
            Some(c)
        }
        Err(e) => {
            warnings.push(format!("coefficient covariances unavailable, no adjustment: {e}"));
            None
        }
    };

    use TreatmentIndex::{One, Two};
    let quantity_stats = [
        ("ate1", Statistic::Tau(One), false),
        ("ate2", Statistic::Tau(Two), false),
        ("acme1", Statistic::AcmeNaive(One, mode), true),
        ("acme2", Statistic::AcmeNaive(Two, mode), true),
        ("proportion_mediated1", Statistic::ProportionMediated(One, mode), true),
        ("proportion_mediated2", Statistic::ProportionMediated(Two, mode), true),
    ];
    let mut stats: Vec<Statistic> = ids.iter().map(|&id| Statistic::Ccm(id)).collect();
    stats.push(Statistic::AteDifference);
    stats.extend(quantity_stats.iter().map(|q| q.1));
    let dists = bootstrap_many(&d, &stats, a.boot, seed, a.stratified)?;
    let mut cis: Vec<Option<ConfidenceInterval>> = Vec::with_capacity(dists.len());
    for (s, dist) in stats.iter().zip(dists) {
        match dist.and_then(|bd| percentile_ci(&bd, a.alpha)) {
            Ok(ci) => cis.push(Some(ci)),
            Err(e) => {
                warnings.push(format!("no interval for {}: {e}", s.label()));
                cis.push(None);
            }
        }
    }

    let mut estimates = Vec::with_capacity(2);
    for (k, (&id, gate)) in ids.iter().zip(&gates).enumerate() {
        let point = ccm_point(&fits, id)?;
        let adjusted = covariances
            .as_ref()
            .and_then(|c| match adjusted_value(&fits, c, id) {
                Ok(v) => Some(v),
                Err(e) => {
                    warnings.push(format!("no adjusted value for {id}: {e}"));
                    None
                }
            });
        let ci = match a.ci {
            CiChoice::Percentile => cis[k],
            CiChoice::Delta => match covariances.as_ref().map(|c| delta_ci(&fits, c, id, a.alpha, gate)) {
                Some(Ok(ci)) => Some(ci),
                Some(Err(e)) => {
                    warnings.push(format!("no delta-method interval for {id}: {e}"));
                    None
                }
                None => None,
            },
        };
        estimates.push(EstimateEntry {
            estimand: id.label().to_string(),
            id,
            simple_value: point.simple_value,
            adjusted_value: adjusted,
            covariance_scheme: covariances.as_ref().map(|c| c.scheme),
            ci,
            gate: gate.clone(),
            numerator: point.numerator,
            denominator: point.denominator,
            confounding_sensitive: false,
            components_confounding_sensitive: true,
        });
    }

    let ate_ci = cis[2];
    let comparison = ate_ci.as_ref().map(compare_ates);
    let anatomy = match (comparison, estimates[0].ci, estimates[1].ci) {
        (Some(c), Some(e1), Some(e2)) => {
            Some(classify_anatomy(c, ratio_exceeds_one(&e1), ratio_exceeds_one(&e2)))
        }
        _ => None,
    };

    let quantities = quantity_stats
        .iter()
        .zip(&cis[3..])
        .map(|(&(name, stat, sensitive), ci)| Quantity {
            name: name.to_string(),
            value: stat.evaluate(&fits),
            ci: *ci,
            confounding_sensitive: sensitive,
        })
        .collect();

    let diagnostic = match mode {
        InteractionMode::Treated => match conservatism_diagnostic(&d) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("conservatism diagnostic unavailable: {e}"));
                None
            }
        },
        InteractionMode::None => None,
    };

    Ok(RunReport {
        inputs: Inputs {
            args: a.clone(),
            seed_used: seed,
        },
        validation,
        interaction_test: test,
        interaction_form: InteractionForm { mode, chosen_by },
        ate_comparison: AteComparisonReport {
            difference: Quantity {
                name: "ate2-ate1".into(),
                value: Statistic::AteDifference.evaluate(&fits),
                ci: ate_ci,
                confounding_sensitive: false,
            },
            comparison,
        },
        fits,
        quantities,
        gates,
        estimates,
        anatomy,
        anatomy_description: anatomy.map(|l| l.description().to_string()),
        diagnostic,
        warnings,
    })
}
