//! Command-line front end: simulate recordings, preprocess them, run the
//! estimators and render reports.

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coop_payload::inertia_est::PsdPolicy;
use coop_payload::pipeline::config::experiment_scenario;
use coop_payload::pipeline::run::trial_seeds;
use coop_payload::pipeline::{
    preprocess, run_datasets, run_scenario, DatasetFile, DerivativeSource, EstimationReport, Experiment, NoiseProfile,
    RunConfig, Stages, TrialInputs,
};
use coop_payload::sim::{presets, synthesize_dataset, ScenarioConfig};

/// Stage failure: the run completed but at least one estimator failed.
const EXIT_STAGE_FAILURE: u8 = 1;
/// Bad arguments, unreadable or malformed input.
const EXIT_INVALID_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "coop-payload", version, about = "Cooperative rigid-payload estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one recording of a scenario.
    Simulate(SimulateArgs),
    /// Filter and differentiate a raw recording.
    Preprocess(PreprocessArgs),
    /// Run estimators on recorded datasets.
    Estimate(EstimateArgs),
    /// Simulate and estimate whole scenarios over several trials.
    Pipeline(PipelineArgs),
    /// Re-render a JSON report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Json,
}

/// Flags that override fields of the run configuration.
#[derive(Args)]
struct RunArgs {
    /// TOML file with run configuration fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    filter_cutoff_hz: Option<f64>,
    #[arg(long)]
    filter_order: Option<usize>,
    #[arg(long)]
    trim_seconds: Option<f64>,
    #[arg(long)]
    static_tolerance: Option<f64>,
    #[arg(long)]
    static_duration: Option<f64>,
    #[arg(long)]
    static_margin: Option<f64>,
    /// Skip the loop-closure refinement of the grasp transforms.
    #[arg(long)]
    no_loop_refinement: bool,
    /// project or discard
    #[arg(long)]
    psd_policy: Option<PsdPolicy>,
    /// differentiate or dataset
    #[arg(long)]
    derivative_source: Option<DerivativeSource>,
    #[arg(long)]
    reference_robot: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            filter_cutoff_hz,
            filter_order,
            trim_seconds,
            static_tolerance,
            static_duration,
            static_margin,
            psd_policy,
            derivative_source,
            reference_robot
        );
        if self.no_loop_refinement {
            c.loop_refinement = false;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset a, b, c, d or a scenario file.
    #[arg(long, default_value = "a")]
    scenario: String,
    #[arg(long, default_value = "kinematics")]
    experiment: Experiment,
    /// Trial index, selects the seed stream and the inertia trajectory.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// none, calibrated or a profile file; defaults to the scenario's own noise.
    #[arg(long)]
    noise_profile: Option<NoiseProfile>,
    /// Store noise-free analytic twists and rates alongside the samples.
    #[arg(long)]
    analytic_derivatives: bool,
    /// Output file, stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Recording with motion for the grasp kinematics.
    #[arg(long)]
    kinematics: PathBuf,
    /// Recording with static holds; defaults to the kinematics recording.
    #[arg(long)]
    statics: Option<PathBuf>,
    /// Recording with excitation for the inertia; defaults to the kinematics recording.
    #[arg(long)]
    inertia: Option<PathBuf>,
    /// Comma-separated subset of kin, statics, inertia.
    #[arg(long, default_value = "kin,statics,inertia")]
    stages: Stages,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct PipelineArgs {
    /// Preset a, b, c, d or a scenario file; repeatable, all presets if omitted.
    #[arg(long)]
    scenario: Vec<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// none, calibrated or a profile file; defaults to each scenario's own noise.
    #[arg(long)]
    noise_profile: Option<NoiseProfile>,
    #[arg(long, default_value = "kin,statics,inertia")]
    stages: Stages,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report, stdin if omitted.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn render(report: &EstimationReport, format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Human => report.to_human().into_bytes(),
        Format::Json => {
            let mut s = report.to_json()?;
            s.push('\n');
            s.into_bytes()
        }
    })
}

fn load_scenario(name: &str) -> Result<ScenarioConfig> {
    presets::resolve(name).with_context(|| format!("scenario {name}"))
}

fn read_dataset(p: &Path) -> Result<Arc<DatasetFile>> {
    Ok(Arc::new(DatasetFile::read(p).with_context(|| format!("dataset {}", p.display()))?))
}

fn simulate(a: SimulateArgs) -> Result<u8> {
    let mut base = load_scenario(&a.scenario)?;
    if let Some(profile) = &a.noise_profile {
        base.noise = profile.resolve()?;
    }
    // Same seeds and recordings as the pipeline; even trials reuse the
    // kinematics recording for the inertia stage.
    let seeds = trial_seeds(a.seed, a.trial);
    let seed = match a.experiment {
        Experiment::Kinematics => seeds[0],
        Experiment::Statics => seeds[1],
        Experiment::Inertia if a.trial.is_multiple_of(2) => seeds[0],
        Experiment::Inertia => seeds[2],
    };
    let scenario = experiment_scenario(&base, a.experiment, a.trial, seed);
    let data = synthesize_dataset(&scenario)?;
    let file = DatasetFile::from_ground_truth(&data, a.experiment.name(), a.analytic_derivatives);
    let mut buf = Vec::new();
    file.write_to(&mut buf)?;
    write_output(a.output.as_deref(), &buf)?;
    Ok(0)
}

fn preprocess_cmd(a: PreprocessArgs) -> Result<u8> {
    let cfg = a.run.resolve()?;
    cfg.validate()?;
    let raw = DatasetFile::read(&a.input).with_context(|| format!("dataset {}", a.input.display()))?;
    let out = preprocess(&raw, &cfg)?;
    let mut buf = Vec::new();
    out.write_to(&mut buf)?;
    write_output(a.output.as_deref(), &buf)?;
    Ok(0)
}

fn finish(report: &EstimationReport, format: Format, output: Option<&Path>) -> Result<u8> {
    write_output(output, &render(report, format)?)?;
    if report.has_failures() {
        for s in &report.scenarios {
            for t in &s.trials {
                for f in &t.failures {
                    eprintln!("{} trial {}: {} failed: {}", s.name, t.trial, f.stage, f.message);
                }
            }
        }
        return Ok(EXIT_STAGE_FAILURE);
    }
    Ok(0)
}

fn estimate(a: EstimateArgs) -> Result<u8> {
    let cfg = a.run.resolve()?;
    let kinematics = read_dataset(&a.kinematics)?;
    let statics = match &a.statics {
        Some(p) => read_dataset(p)?,
        None => kinematics.clone(),
    };
    let inertia = match &a.inertia {
        Some(p) => read_dataset(p)?,
        None => kinematics.clone(),
    };
    let inputs = TrialInputs { kinematics, statics, inertia, seeds: None };
    let report = run_datasets(&inputs, &cfg, a.stages)?;
    finish(&report, a.format, a.output.as_deref())
}

fn pipeline(a: PipelineArgs) -> Result<u8> {
    let mut cfg = a.run.resolve()?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let names: Vec<String> =
        if a.scenario.is_empty() { presets::names().map(String::from).collect() } else { a.scenario.clone() };
    let scenarios = names.iter().map(|n| load_scenario(n)).collect::<Result<Vec<_>>>()?;
    let noise = a.noise_profile.as_ref().map(|p| p.resolve()).transpose()?;
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let n = noise.unwrap_or(s.noise);
        reports.push(run_scenario(s, &n, &cfg, a.stages)?);
    }
    let report = EstimationReport::new(cfg, noise, reports);
    finish(&report, a.format, a.output.as_deref())
}

fn report(a: ReportArgs) -> Result<u8> {
    let text = match &a.input {
        Some(p) => fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        None => {
            let mut s = String::new();
            BufReader::new(io::stdin()).read_to_string(&mut s)?;
            s
        }
    };
    let r = EstimationReport::from_json(&text)?;
    if r.schema != coop_payload::pipeline::report::REPORT_SCHEMA {
        bail!("unsupported report schema {}", r.schema);
    }
    write_output(a.output.as_deref(), &render(&r, a.format)?)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID_INPUT)
        }
    }
}
