use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::{uniform_orientation_set, InferenceConfig, InferenceMode, Spawn};
use crate::measurement::{synthesize_measurements, AntennaModel, ModelParams};
use crate::scenario::{generate_random_scenario, OrientationMode, SupportBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub mode: InferenceMode,
    pub n_particles: usize,
    pub n_agents: usize,
    /// `|O|` of the discrete mode; ignored otherwise.
    #[serde(default = "default_orient")]
    pub n_orient: usize,
}

fn default_orient() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub points: Vec<BenchPoint>,
    pub n_anchors: usize,
    pub side_m: f64,
    pub sigma_db: f64,
    pub warmup: usize,
    /// Timed iterations per point; the median is reported.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { points: Vec::new(), n_anchors: 5, side_m: 5.0, sigma_db: 1.0, warmup: 1, repetitions: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub point: BenchPoint,
    /// Median wall-clock of one message-passing iteration.
    pub per_iteration_s: f64,
    pub samples_s: Vec<f64>,
}

fn time_point(cfg: &BenchConfig, p: &BenchPoint) -> Result<BenchRow> {
    let support = SupportBox::square(cfg.side_m)?;
    let scenario = generate_random_scenario(p.n_agents, cfg.n_anchors, &support, &OrientationMode::Continuous, cfg.seed)?;
    let model = AntennaModel::model1();
    let params = ModelParams::model1_default(cfg.sigma_db);
    let meas = synthesize_measurements(&scenario, &model, &params, cfg.seed)?;
    let ic = InferenceConfig {
        n_particles: p.n_particles,
        n_iterations: cfg.warmup + cfg.repetitions,
        orientation_set: uniform_orientation_set(p.n_orient),
        early_stop_m: None,
        seed: cfg.seed,
        ..InferenceConfig::new(p.mode)
    };
    let mut spawn = Spawn::init_beliefs(&scenario, &meas, &model, &params, &ic)?;
    spawn.incorporate_anchors()?;
    for _ in 0..cfg.warmup {
        spawn.iterate()?;
    }
    let mut samples = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let t0 = Instant::now();
        spawn.iterate()?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    Ok(BenchRow { point: *p, per_iteration_s: median, samples_s: samples })
}

/// Per-iteration timings over the grid, on a single worker thread.
pub fn benchmark_complexity(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.points.is_empty() {
        return Err(invalid("benchmark grid is empty"));
    }
    if cfg.repetitions < 5 {
        return Err(invalid("at least 5 repetitions are required"));
    }
    let run = || cfg.points.iter().map(|p| time_point(cfg, p)).collect::<Result<Vec<_>>>();
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
        pool.install(run)
    }
    #[cfg(not(feature = "parallel"))]
    run()
}
