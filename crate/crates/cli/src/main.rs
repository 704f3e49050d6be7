//! Command-line front end for the estimation pipeline.
//!
//! Subcommands: `generate` (synthesize scenario data), `estimate` (run
//! estimators over a batch, with RMSE summary and localization reports),
//! `localize` (re-score an existing batch at a threshold), `validate-theory`
//! (numeric property battery) and `report` (estimator comparison).
//!
//! Configuration precedence, highest first: config file, then command-line
//! flags, then built-in defaults. `HYDROSTATE_OUTPUT_DIR` supplies the
//! default output directory.
//!
//! Exit codes: 0 success; 1 scenario or validation failures; 2 bad
//! configuration or unparsable input.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use hydrostate::error::Error;
use hydrostate::filters::EstimatorConfig;
use hydrostate::io;
use hydrostate::pipeline::{
    compare_estimators, generate_batch, relocalize_batch, run_batch, EstimatorKind, RunConfig,
};
use hydrostate::validators::run_battery;

const OUTPUT_DIR_ENV: &str = "HYDROSTATE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "hydrostate", version, about = "Water-network state estimation and leak localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize truth, reference and measurement files for a scenario batch
    Generate(GenerateArgs),
    /// Run estimators over a batch and write summaries and reports
    Estimate(EstimateArgs),
    /// Re-score localization of an existing batch at a threshold
    Localize(LocalizeArgs),
    /// Run the numeric validation battery
    ValidateTheory(ValidateArgs),
    /// Compare two estimators from a batch summary
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Scenario batch file (generated measurements)
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Measurement CSV file or directory (externally produced data)
    #[arg(long)]
    ingest: Option<PathBuf>,
    /// Estimator to run; repeat the flag or pass "all"
    #[arg(long = "estimator")]
    estimators: Vec<String>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count; 0 uses the machine default
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// JSON config file; its values override the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    scenarios: PathBuf,
    /// Output directory of a previous estimate run
    #[arg(long, env = OUTPUT_DIR_ENV)]
    batch_dir: PathBuf,
    #[arg(long, default_value_t = hydrostate::localization::DEFAULT_CANDIDATE_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machine-readable results file
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.json of an estimate run
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    baseline: String,
    #[arg(long)]
    candidate: String,
    /// Where to write the comparison JSON (printed otherwise)
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Partial run configuration, as read from --config files. Any present
/// field overrides the corresponding flag or default.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfigPatch {
    network_path: Option<PathBuf>,
    layout_path: Option<PathBuf>,
    estimators: Option<Vec<String>>,
    estimator_config: Option<EstimatorConfigPatch>,
    zeta: Option<f64>,
    candidate_threshold: Option<f64>,
    scenario_batch_path: Option<PathBuf>,
    measurement_ingest_path: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    rng_seed: Option<u64>,
    parallelism: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimatorConfigPatch {
    alpha: Option<f64>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    q_h: Option<f64>,
    r_h: Option<f64>,
    r_h_virtual: Option<f64>,
    p0_h: Option<f64>,
    q_q: Option<f64>,
    r_q: Option<f64>,
    p0_q: Option<f64>,
    flow_sensor_confidence_scale: Option<f64>,
    refresh_period: Option<usize>,
    max_iters: Option<usize>,
    conv_tol_h: Option<f64>,
    conv_tol_q: Option<f64>,
    patience: Option<usize>,
}

impl EstimatorConfigPatch {
    fn apply(&self, config: &mut EstimatorConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(alpha, beta, q_h, r_h, r_h_virtual, p0_h, q_q, r_q, p0_q,
             flow_sensor_confidence_scale, refresh_period, max_iters,
             conv_tol_h, conv_tol_q, patience);
        if let Some(eps) = self.epsilon {
            config.epsilon = Some(eps);
        }
    }
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>, Error> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(EstimatorKind::all().to_vec());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn build_run_config(args: &EstimateArgs) -> Result<RunConfig, Error> {
    let mut config = RunConfig::default();

    // flags over defaults
    if let Some(p) = &args.network {
        config.network_path = p.clone();
    }
    if let Some(p) = &args.layout {
        config.layout_path = p.clone();
    }
    config.estimators = parse_estimators(&args.estimators)?;
    config.scenario_batch_path = args.scenarios.clone();
    config.measurement_ingest_path = args.ingest.clone();
    if let Some(p) = &args.output_dir {
        config.output_dir = p.clone();
    }
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    if let Some(par) = args.parallelism {
        config.parallelism = par;
    }
    if let Some(zeta) = args.zeta {
        config.zeta = zeta;
    }
    if let Some(threshold) = args.threshold {
        config.candidate_threshold = threshold;
    }

    // config file over flags
    if let Some(path) = &args.config {
        let patch: RunConfigPatch = io::read_json(path)?;
        if let Some(p) = patch.network_path {
            config.network_path = p;
        }
        if let Some(p) = patch.layout_path {
            config.layout_path = p;
        }
        if let Some(names) = patch.estimators {
            config.estimators = parse_estimators(&names)?;
        }
        if let Some(ec) = &patch.estimator_config {
            ec.apply(&mut config.estimator_config);
        }
        if let Some(z) = patch.zeta {
            config.zeta = z;
        }
        if let Some(t) = patch.candidate_threshold {
            config.candidate_threshold = t;
        }
        if let Some(p) = patch.scenario_batch_path {
            config.scenario_batch_path = Some(p);
        }
        if let Some(p) = patch.measurement_ingest_path {
            config.measurement_ingest_path = Some(p);
        }
        if let Some(p) = patch.output_dir {
            config.output_dir = p;
        }
        if let Some(s) = patch.rng_seed {
            config.rng_seed = s;
        }
        if let Some(p) = patch.parallelism {
            config.parallelism = p;
        }
    }
    Ok(config)
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Validation(_) | Error::Format(_) | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            match generate_batch(&args.network, &args.layout, &args.scenarios, &args.output_dir, args.seed)
            {
                Ok((count, failures)) => {
                    println!(
                        "generated {count} scenario(s) under {} ({failures} failure(s))",
                        args.output_dir.display()
                    );
                    if failures > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Estimate(args) => {
            let config = match build_run_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_batch(&config) {
                Ok(output) => {
                    print!(
                        "{}",
                        io::report::render_summary_table(&output.summary)
                    );
                    println!("outputs written to {}", config.output_dir.display());
                    if output.summary.failed_scenarios > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Localize(args) => {
            match relocalize_batch(
                &args.network,
                &args.layout,
                &args.scenarios,
                &args.batch_dir,
                args.threshold,
            ) {
                Ok(localization) => {
                    for (name, reports) in &localization {
                        print!("{}", io::report::render_localization_table(name, reports));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::ValidateTheory(args) => {
            let families = run_battery(args.seed);
            let mut all_ok = true;
            println!(
                "{:<24}{:>10}{:>8}{:>8}{:>14}",
                "check", "instances", "pass", "fail", "worst margin"
            );
            for family in &families {
                let pass = family.outcomes.iter().filter(|o| o.pass).count();
                let fail = family.outcomes.len() - pass;
                let worst = family
                    .outcomes
                    .iter()
                    .map(|o| o.margin)
                    .fold(f64::INFINITY, f64::min);
                let verdict_ok = family.acceptable();
                all_ok &= verdict_ok;
                println!(
                    "{:<24}{:>10}{:>8}{:>8}{:>14.3e}{}",
                    family.family,
                    family.outcomes.len(),
                    pass,
                    fail,
                    worst,
                    if family.gating {
                        if verdict_ok { "" } else { "  FAIL" }
                    } else {
                        "  (recorded)"
                    }
                );
            }
            if let Some(path) = &args.output {
                if let Err(e) = io::write_json(path, &families) {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Report(args) => {
            let summary = match io::read_json::<hydrostate::pipeline::BatchSummary>(&args.summary)
            {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match compare_estimators(&summary, &args.baseline, &args.candidate) {
                Ok(report) => {
                    println!(
                        "{} vs {}: head RMSE improvement {:.2}%, flow RMSE improvement {:.2}%",
                        report.candidate,
                        report.baseline,
                        report.head_improvement_percent,
                        report.flow_improvement_percent
                    );
                    let mut deltas: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
                    for row in &report.rows {
                        deltas.insert(&row.label, (row.head_delta_cm, row.flow_delta_lps));
                    }
                    for (label, (dh, dq)) in deltas {
                        println!("  {label}: head {dh:+.3} cm, flow {dq:+.3} l/s");
                    }
                    if let Some(path) = &args.output {
                        if let Err(e) = io::write_json(path, &report) {
                            eprintln!("error: {e}");
                            return ExitCode::from(2);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
    }
}
