//! Command-line front end: scenario generation, parameter fits, model
//! selection, single localization runs, Monte Carlo experiments, benchmarks.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use orispawn::eval::{
    agent_errors, agent_truth, benchmark_complexity, run_experiment, write_estimates_csv, BenchConfig, BenchPoint,
    ExperimentConfig, ScenarioSpec,
};
use orispawn::inference::{run_spawn_with_dump, InferenceConfig, InferenceMode};
use orispawn::measurement::{
    read_measurements, read_params, synthesize_measurements, write_measurements, write_params, AntennaModel, ModelParams,
    ParamsDoc,
};
use orispawn::model_selection::{
    estimate_parameters, estimate_parameters_subregion, select_model, Assignment, FitOptions, LocalVariant,
};
use orispawn::scenario::{read_scenario, write_scenario, SupportBox};
use orispawn::{Error, Result};

#[derive(Parser)]
#[command(name = "orispawn", version, about = "RSS cooperative localization with orientation estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON configuration of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scenario and synthetic measurements.
    Generate,
    /// ML parameter estimate with known node states.
    Fit {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// BIC comparison of antenna models.
    Select {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// One inference run.
    Localize {
        #[command(flatten)]
        inputs: Inputs,
        /// Model parameters JSON used by the inference.
        #[arg(long)]
        params: PathBuf,
        /// Also write per-iteration particle clouds as JSON lines.
        #[arg(long)]
        dump: bool,
    },
    /// Monte Carlo comparison of inference methods.
    Experiment,
    /// Per-iteration timing grid.
    Bench,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    scenario: ScenarioSpec,
    model: ParamsDoc,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scenario: serde_json::from_str(r#"{"kind":"random","n_agents":100,"n_anchors":10}"#).expect("static json"),
            model: ParamsDoc::new(&AntennaModel::model1(), &ModelParams::model1_default(1.0)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct FitConfig {
    model_k: usize,
    #[serde(flatten)]
    options: FitOptions,
    /// Optional per-region fits.
    regions: Vec<SupportBox>,
    assignment: Assignment,
    variant: LocalVariant,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model_k: 1,
            options: FitOptions::default(),
            regions: Vec::new(),
            assignment: Assignment::default(),
            variant: LocalVariant::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SelectConfig {
    models: Vec<usize>,
    #[serde(flatten)]
    options: FitOptions,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { models: vec![0, 1, 2], options: FitOptions::default() }
    }
}

fn load<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn default_bench() -> BenchConfig {
    let p = |mode, n_particles, n_agents, n_orient| BenchPoint { mode, n_particles, n_agents, n_orient };
    BenchConfig {
        points: vec![
            p(InferenceMode::Continuous, 1000, 25, 8),
            p(InferenceMode::Continuous, 2000, 25, 8),
            p(InferenceMode::Continuous, 1000, 50, 8),
            p(InferenceMode::Discrete, 500, 25, 4),
            p(InferenceMode::Discrete, 500, 25, 8),
        ],
        ..BenchConfig::default()
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&c.out)?;
    let seed = c.seed.unwrap_or(0);
    match &cli.cmd {
        Cmd::Generate => {
            let g: GenerateConfig = load(&c.config)?;
            let (model, params) = g.model.clone().into_parts()?;
            let scenario = g.scenario.build(seed)?;
            let meas = synthesize_measurements(&scenario, &model, &params, seed)?;
            write_scenario(&scenario, c.out.join("scenario.json"))?;
            write_measurements(&meas, c.out.join("measurements.csv"))?;
            write_params(&model, &params, c.out.join("params.json"))?;
            println!("{} nodes, {} links", scenario.nodes().len(), meas.len());
        }
        Cmd::Fit { inputs } => {
            let f: FitConfig = load(&c.config)?;
            let scenario = read_scenario(&inputs.scenario)?;
            let meas = read_measurements(&inputs.measurements)?;
            let model = AntennaModel::from_index(f.model_k);
            let fit = estimate_parameters(&meas, &scenario, &model, &f.options)?;
            fs::write(c.out.join("fit.json"), fit.to_json())?;
            write_params(&model, &fit.params, c.out.join("params.json"))?;
            if !f.regions.is_empty() {
                let local = estimate_parameters_subregion(&meas, &scenario, &model, &f.regions, f.assignment, f.variant, &f.options)?;
                let doc: Vec<serde_json::Value> = local
                    .iter()
                    .map(|r| match &r.fit {
                        Ok(fit) => serde_json::json!({"region": r.region, "n_links": r.n_links, "fit": fit}),
                        Err(e) => serde_json::json!({"region": r.region, "n_links": r.n_links, "error": e.to_string()}),
                    })
                    .collect();
                write_json(&c.out.join("subregions.json"), &doc)?;
            }
            println!("{}", fit.to_json());
        }
        Cmd::Select { inputs } => {
            let s: SelectConfig = load(&c.config)?;
            let scenario = read_scenario(&inputs.scenario)?;
            let meas = read_measurements(&inputs.measurements)?;
            let models: Vec<AntennaModel> = s.models.iter().map(|&k| AntennaModel::from_index(k)).collect();
            let sel = select_model(&meas, &scenario, &models, &s.options)?;
            fs::write(c.out.join("selection.csv"), sel.to_csv())?;
            write_json(&c.out.join("fits.json"), &sel.fits)?;
            print!("{}", sel.to_csv());
        }
        Cmd::Localize { inputs, params, dump } => {
            let mut ic: InferenceConfig = load(&c.config)?;
            if let Some(s) = c.seed {
                ic.seed = s;
            }
            let scenario = read_scenario(&inputs.scenario)?;
            let meas = read_measurements(&inputs.measurements)?;
            let (model, p) = read_params(params)?;
            let mut dump_file = if *dump { Some(BufWriter::new(File::create(c.out.join("dump.jsonl"))?)) } else { None };
            let out = run_spawn_with_dump(
                &scenario,
                &meas,
                &model,
                &p,
                &ic,
                dump_file.as_mut().map(|w| w as &mut dyn std::io::Write),
            )?;
            let errs = agent_errors(&out.estimates, &agent_truth(&scenario))?;
            write_estimates_csv(&errs, scenario.dim().count(), File::create(c.out.join("estimates.csv"))?)?;
            let rmse = orispawn::eval::rms(&errs.iter().map(|e| e.pos_err_m).collect::<Vec<_>>());
            println!("{} agents, {} iterations, position RMSE {rmse:.4} m", errs.len(), out.iterations_run);
        }
        Cmd::Experiment => {
            let path = c.config.as_ref().ok_or_else(|| Error::InvalidArgument("experiment needs --config".into()))?;
            let mut e = ExperimentConfig::from_json(&fs::read_to_string(path)?)?;
            if let Some(s) = c.seed {
                e.base_seed = s;
            }
            let report = run_experiment(&e)?;
            report.write(&c.out)?;
            for m in &report.methods {
                let ori = m.rmse_orientation_deg.map(|d| format!("{d:.2} deg")).unwrap_or_else(|| "-".into());
                println!("{:<24} RMSE_p {:.4} m  RMSE_o {ori}", m.label, m.rmse_position_m);
            }
        }
        Cmd::Bench => {
            let mut b = match &c.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => default_bench(),
            };
            if let Some(s) = c.seed {
                b.seed = s;
            }
            let rows = benchmark_complexity(&b)?;
            let mut w = csv::Writer::from_path(c.out.join("bench.csv"))?;
            w.write_record(["mode", "n_particles", "n_agents", "n_orient", "per_iteration_s"])?;
            for r in &rows {
                let p = &r.point;
                w.write_record([
                    p.mode.name().to_string(),
                    p.n_particles.to_string(),
                    p.n_agents.to_string(),
                    p.n_orient.to_string(),
                    r.per_iteration_s.to_string(),
                ])?;
                println!("{:<10} N_P={:<5} |C|={:<3} |O|={:<2} {:.6} s", p.mode.name(), p.n_particles, p.n_agents, p.n_orient, r.per_iteration_s);
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
