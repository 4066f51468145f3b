//! RSS measurement model: log-distance path loss plus a harmonic azimuth
//! pattern on both link ends, with Gaussian shadowing in dB.

mod io;
pub mod kernel;

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scenario::{angle_between, distance, AnchorPattern, NodeState, Scenario, HORIZONTAL_EPS};

pub use io::{
    measurements_from_csv, measurements_to_csv, params_from_json, params_to_json, read_measurements,
    read_params, write_measurements, write_params, ParamsDoc,
};
pub use kernel::{Harmonics, LinkKernel};

/// Antenna pattern family `Σ_m a_m cos(k_m φ + b_m)` over odd orders `k_m`.
/// An empty order list is the uniform 0 dB pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AntennaModel {
    pub index: usize,
    orders: Vec<u32>,
}

impl AntennaModel {
    pub fn new(index: usize, orders: Vec<u32>) -> Result<Self> {
        if orders.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(invalid(format!("harmonic orders must be positive odd integers: {orders:?}")));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("harmonic orders must be strictly increasing: {orders:?}")));
        }
        Ok(Self { index, orders })
    }

    pub fn uniform() -> Self {
        Self { index: 0, orders: Vec::new() }
    }

    /// `ξ₁ cos(φ + ξ₂)`
    pub fn model1() -> Self {
        Self { index: 1, orders: vec![1] }
    }

    /// `ξ₁ cos(φ + ξ₂) + ξ₃ cos(3φ + ξ₄)`
    pub fn model2() -> Self {
        Self { index: 2, orders: vec![1, 3] }
    }

    /// Model `k` uses the first `k` odd harmonics; `k = 0` is uniform.
    pub fn from_index(k: usize) -> Self {
        Self { index: k, orders: (0..k as u32).map(|m| 2 * m + 1).collect() }
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn is_uniform(&self) -> bool {
        self.orders.is_empty()
    }

    /// Number of pattern parameters `N_k`.
    pub fn n_pattern_params(&self) -> usize {
        2 * self.orders.len()
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.n_pattern_params() {
            return Err(invalid(format!(
                "model {} expects {} pattern parameters, got {}",
                self.index,
                self.n_pattern_params(),
                xi.len()
            )));
        }
        Ok(())
    }
}

/// `[P, n, ξ, σ]` plus the reference distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p_db: f64,
    pub n: f64,
    pub xi: Vec<f64>,
    pub sigma_db: f64,
    pub d0_m: f64,
}

impl ModelParams {
    pub fn new(p_db: f64, n: f64, xi: Vec<f64>, sigma_db: f64, d0_m: f64) -> Result<Self> {
        let p = Self { p_db, n, xi, sigma_db, d0_m };
        p.check_scalars()?;
        Ok(p)
    }

    fn check_scalars(&self) -> Result<()> {
        if !(self.sigma_db > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma_db)));
        }
        if !(self.d0_m > 0.0) {
            return Err(invalid(format!("d0 must be positive, got {}", self.d0_m)));
        }
        Ok(())
    }

    pub fn validate(&self, model: &AntennaModel) -> Result<()> {
        self.check_scalars()?;
        model.check(&self.xi)
    }

    /// Model 1 as used for the random-network simulations.
    pub fn model1_default(sigma_db: f64) -> Self {
        Self { p_db: -11.0, n: 1.0, xi: vec![3.36, 0.11], sigma_db, d0_m: 0.1 }
    }

    /// Model 2 as fitted to the shelf measurements.
    pub fn model2_default() -> Self {
        Self { p_db: -9.18, n: 1.09, xi: vec![3.76, 0.13, -1.47, 0.28], sigma_db: 5.77, d0_m: 0.1 }
    }

    pub fn with_sigma(mut self, sigma_db: f64) -> Self {
        self.sigma_db = sigma_db;
        self
    }
}

/// `P − 10·n·log₁₀(d/d₀)`
pub fn path_loss(params: &ModelParams, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid(format!("distance must be positive, got {d}")));
    }
    Ok(params.p_db - 10.0 * params.n * (d / params.d0_m).log10())
}

pub fn antenna_gain(model: &AntennaModel, xi: &[f64], phi: f64) -> Result<f64> {
    model.check(xi)?;
    Ok(model
        .orders
        .iter()
        .zip(xi.chunks_exact(2))
        .map(|(&k, ab)| ab[0] * (k as f64 * phi + ab[1]).cos())
        .sum())
}

pub fn pair_gain(model: &AntennaModel, xi: &[f64], phi_ij: f64, phi_ji: f64) -> Result<f64> {
    Ok(antenna_gain(model, xi, phi_ij)? + antenna_gain(model, xi, phi_ji)?)
}

fn side_gain(
    model: &AntennaModel,
    xi: &[f64],
    from: &NodeState,
    to: &NodeState,
    anchor_pattern: AnchorPattern,
) -> Result<f64> {
    if model.is_uniform() || (from.is_anchor() && anchor_pattern == AnchorPattern::Uniform) {
        return Ok(0.0);
    }
    antenna_gain(model, xi, angle_between(from, to)?)
}

/// Noise-free RSS between two nodes, anchors carrying the uniform pattern.
pub fn predict_rss(model: &AntennaModel, params: &ModelParams, i: &NodeState, j: &NodeState) -> Result<f64> {
    predict_rss_with(model, params, i, j, AnchorPattern::Uniform)
}

/// Noise-free RSS with an explicit anchor pattern choice.
///
/// Nodes stacked exactly above each other have no defined azimuth; their
/// pattern contribution is the azimuthal mean of the odd harmonics, i.e. zero.
pub fn predict_rss_with(
    model: &AntennaModel,
    params: &ModelParams,
    i: &NodeState,
    j: &NodeState,
    anchor_pattern: AnchorPattern,
) -> Result<f64> {
    model.check(&params.xi)?;
    let d = distance(i, j)?;
    if d <= 0.0 {
        return Err(Error::DegenerateGeometry(format!("nodes {} and {} coincide", i.id, j.id)));
    }
    let loss = path_loss(params, d)?;
    let dh = (j.position.xy() - i.position.xy()).norm();
    if dh <= HORIZONTAL_EPS {
        return Ok(loss);
    }
    Ok(loss
        + side_gain(model, &params.xi, i, j, anchor_pattern)?
        + side_gain(model, &params.xi, j, i, anchor_pattern)?)
}

/// Gaussian log-density of an observed RSS value.
pub fn log_likelihood(
    z: f64,
    i: &NodeState,
    j: &NodeState,
    model: &AntennaModel,
    params: &ModelParams,
) -> Result<f64> {
    log_likelihood_with(z, i, j, model, params, AnchorPattern::Uniform)
}

pub fn log_likelihood_with(
    z: f64,
    i: &NodeState,
    j: &NodeState,
    model: &AntennaModel,
    params: &ModelParams,
    anchor_pattern: AnchorPattern,
) -> Result<f64> {
    if !(params.sigma_db > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {}", params.sigma_db)));
    }
    let zt = predict_rss_with(model, params, i, j, anchor_pattern)?;
    Ok(gaussian_log_density(z - zt, params.sigma_db))
}

#[inline]
pub(crate) fn gaussian_log_density(residual: f64, sigma: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma * sigma).ln() - residual * residual / (2.0 * sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorLink {
    pub anchor: usize,
    pub agent: usize,
    pub z_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentLink {
    pub i: usize,
    pub j: usize,
    pub z_db: f64,
}

/// Anchor–agent and agent–agent RSS observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub anchor_links: Vec<AnchorLink>,
    pub agent_links: Vec<AgentLink>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.anchor_links.len() + self.agent_links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks ids and roles against the scenario and rejects repeated agent pairs.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let n = scenario.nodes().len();
        for l in &self.anchor_links {
            if l.anchor >= n || l.agent >= n {
                return Err(invalid(format!("anchor link ({}, {}) references unknown node", l.anchor, l.agent)));
            }
            if !scenario.node(l.anchor).is_anchor() || scenario.node(l.agent).is_anchor() {
                return Err(invalid(format!("anchor link ({}, {}) has wrong roles", l.anchor, l.agent)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.agent_links {
            if l.i >= n || l.j >= n || l.i == l.j {
                return Err(invalid(format!("agent link ({}, {}) is invalid", l.i, l.j)));
            }
            if scenario.node(l.i).is_anchor() || scenario.node(l.j).is_anchor() {
                return Err(invalid(format!("agent link ({}, {}) touches an anchor", l.i, l.j)));
            }
            if !seen.insert((l.i.min(l.j), l.i.max(l.j))) {
                return Err(invalid(format!("agent pair ({}, {}) measured twice", l.i, l.j)));
            }
        }
        Ok(())
    }

    /// Order-sensitive content hash over the exact bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for l in &self.anchor_links {
            (0u8, l.anchor, l.agent, l.z_db.to_bits()).hash(&mut h);
        }
        for l in &self.agent_links {
            (1u8, l.i, l.j, l.z_db.to_bits()).hash(&mut h);
        }
        h.finish()
    }

    /// Anchor links grouped per agent id.
    pub fn anchor_links_by_agent(&self, n_nodes: usize) -> Vec<Vec<AnchorLink>> {
        let mut out = vec![Vec::new(); n_nodes];
        for l in &self.anchor_links {
            out[l.agent].push(*l);
        }
        out
    }
}

/// Link key for the noise stream: unordered node pair.
fn link_stream(a: usize, b: usize) -> u64 {
    let (lo, hi) = (a.min(b) as u64, a.max(b) as u64);
    (lo << 32) | hi
}

/// Draws one noisy RSS value per anchor–agent link and per cooperating pair.
/// Each link's noise comes from its own keyed stream, so the result does not
/// depend on evaluation order.
pub fn synthesize_measurements(
    scenario: &Scenario,
    model: &AntennaModel,
    params: &ModelParams,
    seed: u64,
) -> Result<MeasurementSet> {
    params.validate(model)?;
    let pattern = scenario.anchor_pattern();
    let noise = |a: usize, b: usize| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(link_stream(a, b));
        let e: f64 = StandardNormal.sample(&mut rng);
        params.sigma_db * e
    };
    let mut set = MeasurementSet::default();
    for &a in scenario.anchor_ids() {
        for &i in scenario.agent_ids() {
            let zt = predict_rss_with(model, params, scenario.node(a), scenario.node(i), pattern)?;
            set.anchor_links.push(AnchorLink { anchor: a, agent: i, z_db: zt + noise(a, i) });
        }
    }
    for (i, j) in scenario.agent_pairs() {
        let zt = predict_rss_with(model, params, scenario.node(i), scenario.node(j), pattern)?;
        set.agent_links.push(AgentLink { i, j, z_db: zt + noise(i, j) });
    }
    Ok(set)
}
