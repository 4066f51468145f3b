//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every call returns a JSON string; the page parses it. Errors surface as
//! JS exceptions carrying the error kind and message.

use orispawn::eval::{agent_errors, agent_truth};
use orispawn::inference::{run_spawn, InferenceConfig, InferenceMode};
use orispawn::measurement::{antenna_gain, synthesize_measurements, AntennaModel, MeasurementSet, ModelParams};
use orispawn::model_selection::{select_model, FitOptions};
use orispawn::scenario::{generate_random_scenario, OrientationMode, Scenario, SupportBox};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: orispawn::Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.kind()))
}

fn default_params(model_k: usize, sigma_db: f64) -> Result<(AntennaModel, ModelParams), JsError> {
    match model_k {
        0 => Ok((AntennaModel::uniform(), ModelParams::new(-11.0, 1.0, vec![], sigma_db, 0.1).map_err(js)?)),
        1 => Ok((AntennaModel::model1(), ModelParams::model1_default(sigma_db))),
        2 => Ok((AntennaModel::model2(), ModelParams::model2_default().with_sigma(sigma_db))),
        k => Err(JsError::new(&format!("invalid_argument: no antenna model {k}"))),
    }
}

/// A random square deployment with synthetic RSS, kept between calls.
#[wasm_bindgen]
pub struct Demo {
    scenario: Scenario,
    meas: MeasurementSet,
    model: AntennaModel,
    params: ModelParams,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n_agents: usize, n_anchors: usize, model_k: usize, sigma_db: f64, seed: u64) -> Result<Demo, JsError> {
        let (model, params) = default_params(model_k, sigma_db)?;
        let support = SupportBox::square(5.0).map_err(js)?;
        let scenario =
            generate_random_scenario(n_agents, n_anchors, &support, &OrientationMode::Continuous, seed).map_err(js)?;
        let meas = synthesize_measurements(&scenario, &model, &params, seed.wrapping_add(1)).map_err(js)?;
        Ok(Demo { scenario, meas, model, params })
    }

    /// Node positions, orientations and roles.
    pub fn nodes(&self) -> String {
        let nodes: Vec<_> = self
            .scenario
            .nodes()
            .iter()
            .map(|n| json!({"id": n.id, "x": n.position.x, "y": n.position.y, "phi": n.orientation(), "anchor": n.is_anchor()}))
            .collect();
        json!({"nodes": nodes, "links": self.meas.len()}).to_string()
    }

    /// Runs one inference and returns per-agent estimates with their errors.
    pub fn localize(&self, mode: &str, n_particles: usize, n_iterations: usize, seed: u64) -> Result<String, JsError> {
        let mode: InferenceMode = serde_json::from_value(json!(mode)).map_err(|e| JsError::new(&format!("json: {e}")))?;
        let ic = InferenceConfig { n_particles, n_iterations, seed, ..InferenceConfig::new(mode) };
        let (model, params) = if mode == InferenceMode::NeglectOrientation {
            (AntennaModel::uniform(), ModelParams::new(self.params.p_db, self.params.n, vec![], self.params.sigma_db, self.params.d0_m).map_err(js)?)
        } else {
            (self.model.clone(), self.params.clone())
        };
        let out = run_spawn(&self.scenario, &self.meas, &model, &params, &ic).map_err(js)?;
        let errs = agent_errors(&out.estimates, &agent_truth(&self.scenario)).map_err(js)?;
        let rows: Vec<_> = errs
            .iter()
            .map(|e| json!({"id": e.agent_id, "x": e.est[0], "y": e.est[1], "phi": e.phi_est, "err_m": e.pos_err_m, "err_rad": e.ori_err_rad}))
            .collect();
        let rmse = orispawn::eval::rms(&errs.iter().map(|e| e.pos_err_m).collect::<Vec<_>>());
        Ok(json!({"estimates": rows, "rmse_m": rmse, "iterations": out.iterations_run}).to_string())
    }

    /// BIC comparison of the three antenna models on the current data.
    pub fn select(&self) -> Result<String, JsError> {
        let models = [AntennaModel::uniform(), AntennaModel::model1(), AntennaModel::model2()];
        let sel = select_model(&self.meas, &self.scenario, &models, &FitOptions::default()).map_err(js)?;
        let best = sel.ranking[0];
        let fits: Vec<_> = sel
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| json!({"model_k": f.model_k, "bic": f.bic_log_evidence, "log_odds_vs_best": sel.log_odds(i, best), "params": f.params}))
            .collect();
        Ok(json!({"best": sel.best().model_k, "fits": fits}).to_string())
    }
}

/// Gain in dB of a default antenna model sampled at `n` azimuths over a turn.
#[wasm_bindgen]
pub fn antenna_pattern(model_k: usize, n: usize) -> Result<Vec<f64>, JsError> {
    let (model, params) = default_params(model_k, 1.0)?;
    (0..n)
        .map(|i| antenna_gain(&model, &params.xi, 2.0 * std::f64::consts::PI * i as f64 / n as f64).map_err(js))
        .collect()
}
