use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{agent_errors, agent_truth, cumulative_frequency, error_header, rms, write_cf_csv, write_error_rows, AgentError};
use crate::error::{invalid, Error, Result};
use crate::inference::{run_spawn, InferenceConfig, InferenceMode};
use crate::measurement::{synthesize_measurements, AntennaModel, MeasurementSet, ModelParams, ParamsDoc};
use crate::model_selection::{estimate_parameters, FitOptions};
use crate::scenario::{
    generate_library_scenario, generate_random_scenario, AnchorPattern, LibraryConfig, OrientationMode, Scenario,
    SupportBox,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Fresh uniform geometry per run on a `side_m × side_m` square.
    Random {
        n_agents: usize,
        n_anchors: usize,
        #[serde(default = "default_side")]
        side_m: f64,
        #[serde(default = "default_orientations")]
        orientations: OrientationMode,
        #[serde(default)]
        anchor_pattern: AnchorPattern,
    },
    /// Fixed shelf geometry; only the noise changes between runs.
    Library {
        #[serde(default)]
        geometry: LibraryConfig,
        #[serde(default = "default_scale")]
        length_scale: f64,
    },
}

fn default_side() -> f64 {
    5.0
}

fn default_orientations() -> OrientationMode {
    OrientationMode::Continuous
}

fn default_scale() -> f64 {
    1.0
}

impl ScenarioSpec {
    /// Scenario of run `seed`; library geometries ignore the seed.
    pub fn build(&self, seed: u64) -> Result<Scenario> {
        match self {
            Self::Random { n_agents, n_anchors, side_m, orientations, anchor_pattern } => {
                let support = SupportBox::square(*side_m)?;
                Ok(generate_random_scenario(*n_agents, *n_anchors, &support, orientations, seed)?
                    .with_anchor_pattern(*anchor_pattern))
            }
            Self::Library { geometry, length_scale } => {
                generate_library_scenario(&geometry.clone().scaled_length(*length_scale))
            }
        }
    }

    fn is_fixed(&self) -> bool {
        matches!(self, Self::Library { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Defaults to `<mode>_<N_P>`.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub config: InferenceConfig,
}

impl MethodSpec {
    pub fn new(config: InferenceConfig) -> Self {
        Self { label: None, config }
    }

    pub fn labelled(label: impl Into<String>, config: InferenceConfig) -> Self {
        Self { label: Some(label.into()), config }
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("{}_{}", self.config.mode.name(), self.config.n_particles))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnError {
    #[default]
    Abort,
    /// Log the failure and drop the whole run for every method.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    /// Generating model and its parameters.
    pub model: ParamsDoc,
    pub methods: Vec<MethodSpec>,
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub on_error: OnError,
    /// Neglect mode gets `P, n, σ` from an ML fit of the uniform model to the
    /// run's measurements instead of the generating parameters.
    #[serde(default = "yes")]
    pub refit_neglect: bool,
    #[serde(default = "yes")]
    pub parallel_runs: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no inference methods configured"));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            m.config.validate()?;
            if !names.insert(m.name()) {
                return Err(invalid(format!("duplicate method label {}", m.name())));
            }
        }
        self.model.clone().into_parts()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// Seed for stream `stream` of run `run`.
pub fn derive_seed(base: u64, run: usize, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(base ^ mix((run as u64).wrapping_mul(4).wrapping_add(stream)))
}

const STREAM_SCENARIO: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_INFERENCE: u64 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct MethodRun {
    pub errors: Vec<AgentError>,
    pub seconds: f64,
    pub iterations_run: usize,
    /// Fingerprint of the measurement set this method consumed.
    pub fingerprint: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub run: usize,
    /// One entry per configured method, in method order.
    pub methods: Vec<MethodRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub mode: InferenceMode,
    pub n_particles: usize,
    pub runs_ok: usize,
    pub rmse_position_m: f64,
    pub rmse_orientation_rad: Option<f64>,
    pub rmse_orientation_deg: Option<f64>,
    pub per_run_rmse_position_m: Vec<f64>,
    pub per_run_rmse_orientation_rad: Vec<Option<f64>>,
    pub wall_clock_s: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub dim: usize,
    pub runs: Vec<RunResult>,
    pub methods: Vec<MethodSummary>,
    pub skipped: Vec<(usize, String)>,
}

fn localize_once(
    scenario: &Scenario,
    meas: &MeasurementSet,
    model: &AntennaModel,
    params: &ModelParams,
    method: &MethodSpec,
    seed: u64,
    refit_neglect: bool,
) -> Result<MethodRun> {
    let mut cfg = method.config.clone();
    cfg.seed = seed;
    let fitted;
    let params = if cfg.mode == InferenceMode::NeglectOrientation && refit_neglect {
        let opts = FitOptions { d0_m: params.d0_m, ..Default::default() };
        fitted = estimate_parameters(meas, scenario, &AntennaModel::uniform(), &opts)?.params;
        &fitted
    } else {
        params
    };
    let t0 = Instant::now();
    let out = run_spawn(scenario, meas, model, params, &cfg)?;
    let seconds = t0.elapsed().as_secs_f64();
    Ok(MethodRun {
        errors: agent_errors(&out.estimates, &agent_truth(scenario))?,
        seconds,
        iterations_run: out.iterations_run,
        fingerprint: meas.fingerprint(),
    })
}

fn one_run(cfg: &ExperimentConfig, fixed: Option<&Scenario>, model: &AntennaModel, params: &ModelParams, run: usize) -> Result<RunResult> {
    let owned;
    let scenario = match fixed {
        Some(s) => s,
        None => {
            owned = cfg.scenario.build(derive_seed(cfg.base_seed, run, STREAM_SCENARIO))?;
            &owned
        }
    };
    let meas = synthesize_measurements(scenario, model, params, derive_seed(cfg.base_seed, run, STREAM_NOISE))?;
    let seed = derive_seed(cfg.base_seed, run, STREAM_INFERENCE);
    let methods = cfg
        .methods
        .iter()
        .map(|m| localize_once(scenario, &meas, model, params, m, seed, cfg.refit_neglect))
        .collect::<Result<Vec<_>>>()?;
    let fp = meas.fingerprint();
    if methods.iter().any(|m| m.fingerprint != fp) {
        return Err(invalid("methods consumed different measurement sets"));
    }
    Ok(RunResult { run, methods })
}

#[cfg(feature = "parallel")]
fn map_runs<R: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_runs<R>(n: usize, _parallel: bool, f: impl Fn(usize) -> R) -> Vec<R> {
    (0..n).map(f).collect()
}

/// Monte Carlo comparison of every configured method on shared measurements.
/// Deterministic given `base_seed`, independent of thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (model, params) = cfg.model.clone().into_parts()?;
    let fixed = if cfg.scenario.is_fixed() { Some(cfg.scenario.build(0)?) } else { None };
    let results = map_runs(cfg.runs, cfg.parallel_runs, |r| one_run(cfg, fixed.as_ref(), &model, &params, r));
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(x) => runs.push(x),
            Err(e) if cfg.on_error == OnError::Skip => {
                log::warn!("run {r} skipped: {e}");
                skipped.push((r, e.to_string()));
            }
            Err(e) => return Err(Error::Run { run: r, source: Box::new(e) }),
        }
    }
    let dim = match &fixed {
        Some(s) => s.dim().count(),
        None => 2,
    };
    let methods = cfg.methods.iter().enumerate().map(|(k, m)| summarize(m, k, &runs)).collect();
    Ok(ExperimentReport { dim, runs, methods, skipped })
}

fn ori_rms(errors: &[&AgentError]) -> Option<f64> {
    let o: Option<Vec<f64>> = errors.iter().map(|e| e.ori_err_rad).collect();
    o.filter(|v| !v.is_empty()).map(|v| rms(&v))
}

fn summarize(m: &MethodSpec, k: usize, runs: &[RunResult]) -> MethodSummary {
    let all: Vec<&AgentError> = runs.iter().flat_map(|r| r.methods[k].errors.iter()).collect();
    let pos: Vec<f64> = all.iter().map(|e| e.pos_err_m).collect();
    let ori = ori_rms(&all);
    let n = runs.len().max(1) as f64;
    MethodSummary {
        label: m.name(),
        mode: m.config.mode,
        n_particles: m.config.n_particles,
        runs_ok: runs.len(),
        rmse_position_m: rms(&pos),
        rmse_orientation_rad: ori,
        rmse_orientation_deg: ori.map(f64::to_degrees),
        per_run_rmse_position_m: runs
            .iter()
            .map(|r| rms(&r.methods[k].errors.iter().map(|e| e.pos_err_m).collect::<Vec<_>>()))
            .collect(),
        per_run_rmse_orientation_rad: runs.iter().map(|r| ori_rms(&r.methods[k].errors.iter().collect::<Vec<_>>())).collect(),
        wall_clock_s: runs.iter().map(|r| r.methods[k].seconds).sum(),
        mean_iterations: runs.iter().map(|r| r.methods[k].iterations_run as f64).sum::<f64>() / n,
    }
}

impl ExperimentReport {
    pub fn summary(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }

    /// Pooled errors of one method over all runs.
    pub fn errors(&self, k: usize) -> impl Iterator<Item = &AgentError> {
        self.runs.iter().flat_map(move |r| r.methods[k].errors.iter())
    }

    /// Writes `errors.csv`, `cf_position_<label>.csv`, `cf_orientation_<label>.csv`
    /// (when orientation is estimated), `summary.json` and `timing.json`.
    /// Everything except `timing.json` is a pure function of the configuration.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("errors.csv"))?));
        w.write_record(error_header(self.dim, &["run", "method"]))?;
        for r in &self.runs {
            for (k, m) in r.methods.iter().enumerate() {
                write_error_rows(&mut w, self.dim, &[r.run.to_string(), self.methods[k].label.clone()], &m.errors)?;
            }
        }
        w.flush()?;
        for (k, m) in self.methods.iter().enumerate() {
            let pos: Vec<f64> = self.errors(k).map(|e| e.pos_err_m).collect();
            if pos.is_empty() {
                continue;
            }
            write_cf_csv(&cumulative_frequency(&pos)?, File::create(dir.join(format!("cf_position_{}.csv", m.label)))?)?;
            let ori: Option<Vec<f64>> = self.errors(k).map(|e| e.ori_err_rad).collect();
            if let Some(ori) = ori {
                write_cf_csv(&cumulative_frequency(&ori)?, File::create(dir.join(format!("cf_orientation_{}.csv", m.label)))?)?;
            }
        }
        let methods: Vec<serde_json::Value> = self
            .methods
            .iter()
            .map(|m| {
                let mut v = serde_json::to_value(m)?;
                v.as_object_mut().map(|o| o.remove("wall_clock_s"));
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let timing: serde_json::Map<String, serde_json::Value> =
            self.methods.iter().map(|m| (m.label.clone(), m.wall_clock_s.into())).collect();
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&serde_json::json!({ "wall_clock_s": timing }))?)?;
        let summary = serde_json::json!({
            "methods": methods,
            "runs": self.runs.len(),
            "skipped": self.skipped,
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}
