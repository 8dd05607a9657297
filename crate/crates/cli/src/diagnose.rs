use ccm::data::{validate, ValidationReport};
use ccm::estimators::{Estimand, EstimandId, GateResult, InteractionMode};
use ccm::inference::{
    conservatism_diagnostic, denominator_gate, interaction_test, DiagnosticResult,
    InteractionReference, TestResult,
};
use clap::Args;
use serde::Serialize;

use crate::output::Format;
use crate::{emit, resolve_seed, DataArgs, Failure};

#[derive(Args, Debug, Clone, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "boot", default_value_t = 2000)]
    pub boot: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stratified: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Serialize)]
pub struct NamedGate {
    pub estimand: String,
    #[serde(flatten)]
    pub result: GateResult,
}

#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub inputs: DiagnoseArgs,
    pub seed_used: u64,
    pub validation: ValidationReport,
    pub gates: Vec<NamedGate>,
    pub interaction_test: Option<TestResult>,
    pub interaction_test_unavailable: Option<String>,
    pub diagnostic: Option<DiagnosticResult>,
    pub diagnostic_unavailable: Option<String>,
}

pub fn run(a: &DiagnoseArgs) -> Result<(), Failure> {
    let report = build(a)?;
    emit(&report, a.format)
}

pub fn build(a: &DiagnoseArgs) -> Result<DiagnoseReport, Failure> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::input(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    if a.boot < 200 {
        return Err(Failure::input(format!("--boot must be at least 200, got {}", a.boot)));
    }
    let seed = resolve_seed(a.seed);
    let d = a.data.load()?;
    let gates = [Estimand::RatioOfAcmes, Estimand::RatioOfProportions]
        .map(|w| EstimandId::new(w, InteractionMode::None))
        .iter()
        .map(|&id| NamedGate {
            estimand: id.label().to_string(),
            result: denominator_gate(&d, id, a.alpha, a.boot, seed, a.stratified),
        })
        .collect();
    let (interaction_test, interaction_test_unavailable) =
        match interaction_test(&d, a.alpha, InteractionReference::Bootstrap, a.boot, seed, a.stratified) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let (diagnostic, diagnostic_unavailable) = match conservatism_diagnostic(&d) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(DiagnoseReport {
        inputs: a.clone(),
        seed_used: seed,
        validation: validate(&d),
        gates,
        interaction_test,
        interaction_test_unavailable,
        diagnostic,
        diagnostic_unavailable,
    })
}
