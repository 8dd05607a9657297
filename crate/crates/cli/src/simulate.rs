use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ccm::simulate::{monte_carlo, SimulationConfig};
use clap::{Args, ValueEnum};

use crate::output::{sig6, Format};
use crate::{emit, resolve_seed, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "paper-fig1")]
    PaperFig1,
    #[value(name = "paper-figD1")]
    PaperFigD1,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// JSON simulation configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long = "boot", default_value_t = 1000)]
    pub boot: usize,
    /// Overrides any seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Format of the summary echoed to standard output.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "replicate_table.csv";

/// Parses a configuration, reporting the path of the offending field.
pub fn parse_config(text: &str) -> Result<SimulationConfig, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: SimulationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Failure::input(format!("invalid configuration at `{path}`: {}", e.inner()))
    })?;
    cfg.validate().map_err(|e| Failure::input(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

fn load_config(path: &Path) -> Result<SimulationConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn run(a: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => load_config(p)?,
        (None, Some(Preset::PaperFig1)) => SimulationConfig::paper_fig1(),
        (None, Some(Preset::PaperFigD1)) => SimulationConfig::paper_fig_d1(),
        (None, None) => return Err(Failure::input("give --config or --preset")),
    };
    if a.boot < 200 {
        return Err(Failure::input(format!("--boot must be at least 200, got {}", a.boot)));
    }
    // One seed drives the study and the truth computation.
    let seed = resolve_seed(a.seed);
    cfg.seed = seed;
    let summary = monte_carlo(&cfg, a.reps, a.boot, seed)?;

    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let io = |p: &Path, e: std::io::Error| Failure::input(format!("cannot write {}: {e}", p.display()));
    let summary_path = a.out_dir.join(SUMMARY_FILE);
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    json.push('\n');
    fs::write(&summary_path, json).map_err(|e| io(&summary_path, e))?;
    let table_path = a.out_dir.join(TABLE_FILE);
    let file = File::create(&table_path).map_err(|e| io(&table_path, e))?;
    summary.write_replicate_table(BufWriter::new(file))?;

    match a.format {
        Format::Json => emit(&summary, Format::Json),
        Format::Text => {
            let opt = |v: Option<f64>| v.map(sig6).unwrap_or_else(|| "null".into());
            println!(
                "{} of {} replicates completed (seed {seed}, B = {})",
                summary.r_reps, summary.r_requested, summary.b_boot
            );
            for r in &summary.records {
                println!(
                    "{:<20} truth {:<10} mean {:<10} bias {:<10} coverage {:<8} width {}",
                    r.quantity.name(),
                    sig6(r.true_value),
                    opt(r.mean_estimate),
                    opt(r.mean_bias),
                    opt(r.coverage_95),
                    opt(r.mean_ci_width)
                );
            }
            if let Some(rate) = summary.diagnostic_holds_rate {
                println!("conservatism diagnostic holds in {} of replicates", sig6(rate));
            }
            println!("wrote {} and {}", summary_path.display(), table_path.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = SimulationConfig::paper_fig_d1();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn config_error_names_field() {
        let mut v = serde_json::to_value(SimulationConfig::paper_fig1()).unwrap();
        v["params"]["beta"]["variance"] = serde_json::json!("two");
        let err = parse_config(&v.to_string()).unwrap_err();
        assert_eq!(err.code, crate::EXIT_INPUT);
        assert!(err.message.contains("params.beta.variance"), "{}", err.message);
    }

    #[test]
    fn config_semantic_error() {
        let mut v = serde_json::to_value(SimulationConfig::paper_fig1()).unwrap();
        v["params"]["psi"]["variance"] = serde_json::json!(-1.0);
        let err = parse_config(&v.to_string()).unwrap_err();
        assert!(err.message.contains("psi"), "{}", err.message);
    }
}
