//! Particle-based belief propagation over agent positions and orientations.
//!
//! Every agent keeps the particle sample of its anchor-stage belief
//! `b̃⁰` for the whole run. An iteration reweights that sample by the product
//! of Monte Carlo messages computed against the neighbors' beliefs from the
//! previous iteration, then resamples and jitters a copy which is what the
//! neighbors consume next. Orientation is either carried by the particles
//! (continuous mode) or summed over a finite set with a PMF per agent
//! (discrete mode, and the known / neglected orientation baselines which use
//! a singleton set).

mod anchor;
pub mod belief;
pub mod message;

use std::io::Write;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measurement::kernel::LinkKernel;
use crate::measurement::{AntennaModel, MeasurementSet, ModelParams};
use crate::scenario::{AnchorPattern, Scenario};
use anchor::{AnchorObs, AnchorTarget, Cloud, OrientTarget, SmcOptions};
pub use belief::{
    check_support, circular_mean, mmse_orientation, mmse_orientation_pmf, mmse_position, resample, resample_indexed,
    systematic_indices, uniform_orientation_set, Bandwidths, OrientationPMF, ParticleBelief,
};
use belief::{log_sum_exp, normalize_log};
pub use message::Pairing;
use message::{accumulate_carried, accumulate_summed, CarriedCloud, OrientWeights, SummedAcc, SummedCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Continuous,
    Discrete,
    #[serde(alias = "known")]
    KnownOrientation,
    #[serde(alias = "neglect")]
    NeglectOrientation,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Continuous => "continuous",
            Self::Discrete => "discrete",
            Self::KnownOrientation => "known",
            Self::NeglectOrientation => "neglect",
        }
    }

    fn carries_orientation(self) -> bool {
        self == Self::Continuous
    }
}

/// Orientation proposal of the continuous mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationProposal {
    /// Uniform on `[-π, π)`.
    #[default]
    Uniform,
    /// Uniform on the configured orientation set.
    DiscreteUniform,
}

/// Weight of each own orientation hypothesis in the discrete position update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationCoupling {
    /// Orientation PMF of the previous iteration.
    #[default]
    PreviousBelief,
    /// Unweighted sum; the orientation only enters through `b̃⁰`.
    AnchorOnly,
    /// Per-particle anchor-stage responsibilities; neighbors also see the
    /// per-particle orientation posterior instead of the marginal PMF.
    Joint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStage {
    /// Likelihood tempering with Metropolis–Hastings rejuvenation.
    #[default]
    Tempered,
    /// One importance step and one resampling.
    SingleShot,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfUnderflow {
    #[default]
    ResetUniform,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// Scaled weighted spread of the belief being resampled.
    #[default]
    PlugIn,
    Fixed { position_m: f64, orientation_rad: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub n_particles: usize,
    pub n_iterations: usize,
    /// Hypotheses of the discrete mode, and the proposal support of the
    /// continuous mode under `DiscreteUniform`.
    pub orientation_set: Vec<f64>,
    /// Prior PMF over `orientation_set`; uniform when absent.
    pub orientation_prior: Option<Vec<f64>>,
    pub proposal: OrientationProposal,
    pub pairing: Pairing,
    pub coupling: OrientationCoupling,
    pub bandwidth: BandwidthRule,
    pub anchor_stage: AnchorStage,
    pub mcmc_steps: usize,
    pub ess_fraction: f64,
    /// Stop when no agent's MMSE position moves more than this (meters).
    pub early_stop_m: Option<f64>,
    pub pmf_underflow: PmfUnderflow,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: InferenceMode::Discrete,
            n_particles: 1000,
            n_iterations: 20,
            orientation_set: uniform_orientation_set(8),
            orientation_prior: None,
            proposal: OrientationProposal::Uniform,
            pairing: Pairing::OneToOne,
            coupling: OrientationCoupling::PreviousBelief,
            bandwidth: BandwidthRule::PlugIn,
            anchor_stage: AnchorStage::Tempered,
            mcmc_steps: 3,
            ess_fraction: 0.5,
            early_stop_m: Some(1e-3),
            pmf_underflow: PmfUnderflow::ResetUniform,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn new(mode: InferenceMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("n_particles must be at least 1"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction < 1.0) {
            return Err(invalid("ess_fraction must lie in (0, 1)"));
        }
        let needs_set = self.mode == InferenceMode::Discrete
            || (self.mode == InferenceMode::Continuous && self.proposal == OrientationProposal::DiscreteUniform);
        if needs_set {
            if self.orientation_set.is_empty() {
                return Err(invalid("orientation_set must not be empty"));
            }
            check_support(&self.orientation_set)?;
        }
        if let Some(p) = &self.orientation_prior {
            if self.mode == InferenceMode::Discrete {
                OrientationPMF::new(self.orientation_set.clone(), p.clone())?;
            }
        }
        if let BandwidthRule::Fixed { position_m, orientation_rad } = self.bandwidth {
            if !(position_m >= 0.0 && orientation_rad >= 0.0) {
                return Err(invalid("bandwidths must be non-negative"));
            }
        }
        if let Some(t) = self.early_stop_m {
            if !(t >= 0.0) {
                return Err(invalid("early_stop_m must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Belief of one agent.
#[derive(Debug, Clone)]
pub struct AgentBelief {
    pub id: usize,
    /// Anchor-stage sample carrying the current weights.
    pub particles: ParticleBelief,
    /// Current orientation PMF (summed modes).
    pub pmf: Option<OrientationPMF>,
    /// Anchor-stage orientation PMF (summed modes).
    pub anchor_pmf: Option<OrientationPMF>,
    /// Per-particle log anchor-stage responsibilities, `N × |O|`.
    log_resp: Vec<f64>,
    /// Carried mode: coefficient block per particle.
    coef: Vec<f64>,
    /// Summed modes: coefficient block per hypothesis.
    support_coef: Vec<f64>,
    support: Vec<f64>,
}

impl AgentBelief {
    fn n_orient(&self) -> usize {
        self.support.len()
    }
}

/// What the neighbors of an agent read during the next iteration.
#[derive(Debug, Clone, Default)]
struct Outgoing {
    positions: Vec<Vector3<f64>>,
    coef: Vec<f64>,
    /// Joint coupling only: per-particle log orientation posterior.
    log_resp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentEstimate {
    pub id: usize,
    pub position: Vector3<f64>,
    /// Absent when orientation is neglected.
    pub orientation: Option<f64>,
    #[serde(skip)]
    pub belief: Option<ParticleBelief>,
    #[serde(skip)]
    pub pmf: Option<OrientationPMF>,
}

#[derive(Debug, Clone)]
pub struct SpawnOutput {
    pub estimates: Vec<AgentEstimate>,
    pub iterations_run: usize,
}

const STAGE_INIT: u64 = 0;
const STAGE_ANCHOR: u64 = 1;

/// Deterministic substream for one agent and one stage.
fn substream(seed: u64, agent: usize, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(agent as u64);
    rng
}

#[cfg(feature = "parallel")]
fn map_slots<T, F>(slots: &[usize], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    slots.par_iter().map(|&s| f(s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_slots<T, F>(slots: &[usize], f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    slots.iter().map(|&s| f(s)).collect()
}

struct Update {
    weights: Vec<f64>,
    pmf: Option<Vec<f64>>,
    outgoing: Outgoing,
}

/// Inference state over all agents of a scenario.
pub struct Spawn<'a> {
    scenario: &'a Scenario,
    config: InferenceConfig,
    kernel: LinkKernel,
    anchor_obs: Vec<Vec<AnchorObs>>,
    /// Per agent slot: `(neighbor slot, z)`.
    links: Vec<Vec<(usize, f64)>>,
    agents: Vec<AgentBelief>,
    outgoing: Vec<Outgoing>,
    iteration: usize,
    anchors_done: bool,
}

impl<'a> Spawn<'a> {
    /// Samples the prior beliefs of every agent.
    pub fn init_beliefs(
        scenario: &'a Scenario,
        measurements: &MeasurementSet,
        model: &AntennaModel,
        params: &ModelParams,
        config: &InferenceConfig,
    ) -> Result<Self> {
        config.validate()?;
        measurements.validate(scenario)?;
        let mode = config.mode;
        let (model, params) = if mode == InferenceMode::NeglectOrientation {
            let mut p = params.clone();
            p.xi.clear();
            (AntennaModel::uniform(), p)
        } else {
            (model.clone(), params.clone())
        };
        let kernel = LinkKernel::new(&model, &params)?;
        let cl = kernel.coef_len();

        let agent_ids = scenario.agent_ids();
        let mut slot_of = vec![None; scenario.nodes().len()];
        for (s, &id) in agent_ids.iter().enumerate() {
            slot_of[id] = Some(s);
        }
        let directive = scenario.anchor_pattern() == AnchorPattern::Directive && cl > 0;
        let mut anchor_obs: Vec<Vec<AnchorObs>> = (0..agent_ids.len()).map(|_| Vec::new()).collect();
        for l in &measurements.anchor_links {
            let a = scenario.node(l.anchor);
            let coef = directive.then(|| kernel.coefficients(a.orientation()));
            anchor_obs[slot_of[l.agent].expect("validated")].push(AnchorObs { pos: a.position, coef, z: l.z_db });
        }
        let mut links = vec![Vec::new(); agent_ids.len()];
        for l in &measurements.agent_links {
            let (si, sj) = (slot_of[l.i].expect("validated"), slot_of[l.j].expect("validated"));
            links[si].push((sj, l.z_db));
            links[sj].push((si, l.z_db));
        }

        let set = check_support(&config.orientation_set).unwrap_or_default();
        let prior = match (&config.orientation_prior, mode) {
            (Some(p), InferenceMode::Discrete) => p.clone(),
            _ => vec![1.0 / set.len().max(1) as f64; set.len()],
        };
        let support = scenario.support();
        let dp = scenario.dim().count();
        let n = config.n_particles;
        let mut agents = Vec::with_capacity(agent_ids.len());
        for &id in agent_ids {
            let mut rng = substream(config.seed, id, STAGE_INIT);
            let positions: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    let mut p = Vector3::zeros();
                    for k in 0..dp {
                        p[k] = rng.gen_range(support.min[k]..support.max[k]);
                    }
                    p
                })
                .collect();
            let orientations = mode.carries_orientation().then(|| {
                (0..n)
                    .map(|_| match config.proposal {
                        OrientationProposal::Uniform => {
                            crate::scenario::wrap(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                        }
                        OrientationProposal::DiscreteUniform => set[rng.gen_range(0..set.len())],
                    })
                    .collect::<Vec<f64>>()
            });
            let (hyp, probs) = match mode {
                InferenceMode::Continuous => (Vec::new(), Vec::new()),
                InferenceMode::Discrete => (set.clone(), prior.clone()),
                InferenceMode::KnownOrientation => (vec![scenario.node(id).orientation()], vec![1.0]),
                InferenceMode::NeglectOrientation => (vec![0.0], vec![1.0]),
            };
            let support_coef = if cl > 0 { hyp.iter().flat_map(|&p| kernel.coefficients(p)).collect() } else { Vec::new() };
            let coef = match (&orientations, cl) {
                (Some(o), c) if c > 0 => o.iter().flat_map(|&p| kernel.coefficients(p)).collect(),
                _ => Vec::new(),
            };
            let pmf = (!hyp.is_empty()).then(|| OrientationPMF::from_parts_unchecked(hyp.clone(), probs));
            agents.push(AgentBelief {
                id,
                particles: ParticleBelief::uniform(positions, orientations),
                anchor_pmf: pmf.clone(),
                pmf,
                log_resp: Vec::new(),
                coef,
                support_coef,
                support: hyp,
            });
        }
        let outgoing = agents
            .iter()
            .map(|a| Outgoing { positions: a.particles.positions.clone(), coef: a.coef.clone(), log_resp: Vec::new() })
            .collect();
        Ok(Self {
            scenario,
            config: config.clone(),
            kernel,
            anchor_obs,
            links,
            agents,
            outgoing,
            iteration: 0,
            anchors_done: false,
        })
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentBelief] {
        &self.agents
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn all_slots(&self) -> Vec<usize> {
        (0..self.agents.len()).collect()
    }

    /// Condenses every agent's particles onto `prior × anchor likelihoods`.
    pub fn incorporate_anchors(&mut self) -> Result<()> {
        if self.anchors_done {
            return Err(invalid("anchor measurements were already incorporated"));
        }
        let slots = self.all_slots();
        let results = map_slots(&slots, |s| self.anchor_update(s));
        for (s, r) in results.into_iter().enumerate() {
            let (agent, out) = r?;
            self.agents[s] = agent;
            self.outgoing[s] = out;
        }
        self.anchors_done = true;
        Ok(())
    }

    fn anchor_update(&self, s: usize) -> Result<(AgentBelief, Outgoing)> {
        let cfg = &self.config;
        let mut ag = self.agents[s].clone();
        let mut rng = substream(cfg.seed, ag.id, STAGE_ANCHOR);
        let set;
        let log_prior: Vec<f64>;
        let orient = if cfg.mode.carries_orientation() {
            set = check_support(&cfg.orientation_set).unwrap_or_default();
            OrientTarget::Carried {
                set: (cfg.proposal == OrientationProposal::DiscreteUniform).then_some(&set[..]),
            }
        } else {
            log_prior = ag.pmf.as_ref().expect("summed mode").probs().iter().map(|p| p.ln()).collect();
            OrientTarget::Summed { support_coef: &ag.support_coef, log_prior: &log_prior }
        };
        let target = AnchorTarget { kernel: &self.kernel, obs: &self.anchor_obs[s], orient };
        let cloud = Cloud { positions: ag.particles.positions.clone(), orientations: ag.particles.orientations.clone() };
        let result = match cfg.anchor_stage {
            AnchorStage::Tempered => anchor::tempered_smc(
                &target,
                cloud,
                self.scenario.support(),
                self.scenario.dim(),
                SmcOptions { ess_fraction: cfg.ess_fraction, mcmc_steps: cfg.mcmc_steps, max_stages: 500 },
                &mut rng,
            ),
            AnchorStage::SingleShot => anchor::single_shot(&target, cloud, &mut rng),
        };
        let cloud = result.map_err(|reason| Error::DegenerateBelief { agent: ag.id, reason })?;
        let n = cloud.positions.len();
        ag.particles = ParticleBelief::uniform(cloud.positions, cloud.orientations);
        if let Some(o) = &ag.particles.orientations {
            if self.kernel.coef_len() > 0 {
                ag.coef = o.iter().flat_map(|&p| self.kernel.coefficients(p)).collect();
            }
        }
        if let OrientTarget::Summed { log_prior, .. } = &target.orient {
            let no = ag.n_orient();
            let mut resp = vec![0.0; n * no];
            let mut mean = vec![0.0; no];
            let mut terms = vec![0.0; no];
            for (m, x) in ag.particles.positions.iter().enumerate() {
                target.terms(x, &mut terms);
                for (t, lp) in terms.iter_mut().zip(log_prior.iter()) {
                    *t += lp;
                }
                let z = log_sum_exp(&terms);
                for a in 0..no {
                    resp[m * no + a] = terms[a] - z;
                    mean[a] += (terms[a] - z).exp() / n as f64;
                }
            }
            let total: f64 = mean.iter().sum();
            mean.iter_mut().for_each(|p| *p /= total);
            ag.log_resp = resp;
            let pmf = OrientationPMF::from_parts_unchecked(ag.support.clone(), mean);
            ag.anchor_pmf = Some(pmf.clone());
            ag.pmf = Some(pmf);
        }
        let out = Outgoing {
            positions: ag.particles.positions.clone(),
            coef: ag.coef.clone(),
            log_resp: if cfg.coupling == OrientationCoupling::Joint { ag.log_resp.clone() } else { Vec::new() },
        };
        Ok((ag, out))
    }

    /// One message passing iteration in the configured mode.
    pub fn iterate(&mut self) -> Result<()> {
        let order = self.all_slots();
        self.iterate_in_order(&order)
    }

    /// Runs the agent updates in the given order. All updates read the same
    /// snapshot, so the order has no effect on the result.
    pub fn iterate_in_order(&mut self, order: &[usize]) -> Result<()> {
        if !self.anchors_done {
            self.incorporate_anchors()?;
        }
        if order.len() != self.agents.len() {
            return Err(invalid("update order must list every agent once"));
        }
        let u = self.iteration + 1;
        let updates = if self.config.mode.carries_orientation() {
            map_slots(order, |s| self.bp_iteration_continuous(s, u))
        } else {
            let log_pmfs: Vec<Vec<f64>> = self
                .agents
                .iter()
                .map(|a| a.pmf.as_ref().expect("summed mode").probs().iter().map(|p| p.ln()).collect())
                .collect();
            map_slots(order, |s| self.bp_iteration_discrete(s, u, &log_pmfs))
        };
        let mut staged: Vec<Option<Update>> = (0..self.agents.len()).map(|_| None).collect();
        for (&s, up) in order.iter().zip(updates) {
            staged[s] = Some(up?);
        }
        for (s, up) in staged.into_iter().enumerate() {
            let up = up.ok_or_else(|| invalid("update order must list every agent once"))?;
            let ag = &mut self.agents[s];
            ag.particles.weights = up.weights;
            if let Some(p) = up.pmf {
                ag.pmf = Some(OrientationPMF::from_parts_unchecked(ag.support.clone(), p));
            }
            self.outgoing[s] = up.outgoing;
        }
        self.iteration = u;
        Ok(())
    }

    fn degenerate(&self, s: usize, reason: &str) -> Error {
        Error::DegenerateBelief { agent: self.agents[s].id, reason: reason.to_string() }
    }

    /// Continuous-mode update of one agent from the previous snapshot.
    fn bp_iteration_continuous(&self, s: usize, u: usize) -> Result<Update> {
        let ag = &self.agents[s];
        let mut acc = vec![0.0; ag.particles.len()];
        let own = CarriedCloud { positions: &ag.particles.positions, coef: &ag.coef };
        for &(nb, z) in &self.links[s] {
            let o = &self.outgoing[nb];
            let other = CarriedCloud { positions: &o.positions, coef: &o.coef };
            accumulate_carried(&self.kernel, z, &own, &other, self.config.pairing, &mut acc);
        }
        normalize_log(&mut acc).ok_or_else(|| self.degenerate(s, "all particle weights underflow"))?;
        let outgoing = self.outgoing_for(s, &acc, None, u);
        Ok(Update { weights: acc, pmf: None, outgoing })
    }

    /// Discrete-mode update (also used by the known and neglect baselines).
    fn bp_iteration_discrete(&self, s: usize, u: usize, log_pmfs: &[Vec<f64>]) -> Result<Update> {
        let ag = &self.agents[s];
        let n = ag.particles.len();
        let no = ag.n_orient();
        let mut acc = SummedAcc::new(n * no);
        let own = SummedCloud { positions: &ag.particles.positions, support_coef: &ag.support_coef, n_orient: no };
        let joint = self.config.coupling == OrientationCoupling::Joint;
        for &(nb, z) in &self.links[s] {
            let o = &self.outgoing[nb];
            let other = SummedCloud {
                positions: &o.positions,
                support_coef: &self.agents[nb].support_coef,
                n_orient: self.agents[nb].n_orient(),
            };
            let w = if joint { OrientWeights::PerParticle(&o.log_resp) } else { OrientWeights::Shared(&log_pmfs[nb]) };
            accumulate_summed(&self.kernel, z, &own, &other, &w, self.config.pairing, &mut acc);
        }
        let acc = acc.finish();

        let prev = &log_pmfs[s];
        let mut logw = vec![0.0; n];
        let mut row = vec![0.0; no];
        for m in 0..n {
            for a in 0..no {
                let c = match self.config.coupling {
                    OrientationCoupling::PreviousBelief => prev[a],
                    OrientationCoupling::AnchorOnly => 0.0,
                    OrientationCoupling::Joint => ag.log_resp[m * no + a],
                };
                row[a] = c + acc[m * no + a];
            }
            logw[m] = log_sum_exp(&row);
        }
        normalize_log(&mut logw).ok_or_else(|| self.degenerate(s, "all particle weights underflow"))?;

        let mut lp = vec![0.0; no];
        let mut col = vec![0.0; n];
        let anchor = ag.anchor_pmf.as_ref().expect("summed mode").probs();
        for a in 0..no {
            for m in 0..n {
                col[m] = acc[m * no + a] + if joint { ag.log_resp[m * no + a] } else { 0.0 };
            }
            lp[a] = log_sum_exp(&col) + if joint { 0.0 } else { anchor[a].ln() };
        }
        if normalize_log(&mut lp).is_none() {
            match self.config.pmf_underflow {
                PmfUnderflow::Error => return Err(self.degenerate(s, "orientation PMF underflows")),
                PmfUnderflow::ResetUniform => {
                    log::warn!("orientation PMF of agent {} underflowed at iteration {u}; reset to uniform", ag.id);
                    lp = vec![1.0 / no as f64; no];
                }
            }
        }
        let joint_rows = joint.then_some(&acc[..]);
        let outgoing = self.outgoing_for(s, &logw, joint_rows, u);
        Ok(Update { weights: logw, pmf: Some(lp), outgoing })
    }

    /// Resampled, jittered and shuffled copy of the reweighted sample.
    fn outgoing_for(&self, s: usize, weights: &[f64], joint_acc: Option<&[f64]>, u: usize) -> Outgoing {
        let ag = &self.agents[s];
        let mut rng = substream(self.config.seed, ag.id, STAGE_ANCHOR + u as u64);
        let belief = ParticleBelief {
            positions: ag.particles.positions.clone(),
            orientations: ag.particles.orientations.clone(),
            weights: weights.to_vec(),
        };
        let jitter_phi =
            self.config.mode.carries_orientation() && self.config.proposal == OrientationProposal::Uniform;
        let dim = self.scenario.dim();
        let bw = match self.config.bandwidth {
            BandwidthRule::PlugIn => Bandwidths::plug_in(&belief, dim, jitter_phi),
            BandwidthRule::Fixed { position_m, orientation_rad } => {
                Bandwidths::fixed(position_m, if jitter_phi { orientation_rad } else { 0.0 }, dim)
            }
        };
        let (mut r, mut idx) = resample_indexed(&belief, &bw, self.scenario.support(), &mut rng);
        let mut perm: Vec<usize> = (0..r.len()).collect();
        perm.shuffle(&mut rng);
        r.positions = perm.iter().map(|&k| r.positions[k]).collect();
        if let Some(o) = r.orientations.as_mut() {
            *o = perm.iter().map(|&k| o[k]).collect();
        }
        idx = perm.iter().map(|&k| idx[k]).collect();
        let coef = match (&r.orientations, self.kernel.coef_len()) {
            (Some(o), c) if c > 0 => o.iter().flat_map(|&p| self.kernel.coefficients(p)).collect(),
            _ => Vec::new(),
        };
        let log_resp = match joint_acc {
            Some(acc) => {
                let no = ag.n_orient();
                let mut out = Vec::with_capacity(idx.len() * no);
                let mut row = vec![0.0; no];
                for &k in &idx {
                    for a in 0..no {
                        row[a] = ag.log_resp[k * no + a] + acc[k * no + a];
                    }
                    let z = log_sum_exp(&row);
                    out.extend(row.iter().map(|v| v - z));
                }
                out
            }
            None => Vec::new(),
        };
        Outgoing { positions: r.positions, coef, log_resp }
    }

    /// MMSE position per agent.
    pub fn mmse_positions(&self) -> Vec<Vector3<f64>> {
        self.agents.iter().map(|a| mmse_position(&a.particles)).collect()
    }

    pub fn estimates(&self, with_beliefs: bool) -> Result<Vec<AgentEstimate>> {
        self.agents
            .iter()
            .map(|a| {
                let orientation = match self.config.mode {
                    InferenceMode::Continuous => Some(mmse_orientation(&a.particles)?),
                    InferenceMode::Discrete => Some(mmse_orientation_pmf(a.pmf.as_ref().expect("summed mode"))?),
                    InferenceMode::KnownOrientation => Some(self.scenario.node(a.id).orientation()),
                    InferenceMode::NeglectOrientation => None,
                };
                Ok(AgentEstimate {
                    id: a.id,
                    position: mmse_position(&a.particles),
                    orientation,
                    belief: with_beliefs.then(|| a.particles.clone()),
                    pmf: if with_beliefs { a.pmf.clone() } else { None },
                })
            })
            .collect()
    }

    /// One JSON object per agent and line: `iteration`, `agent`,
    /// `positions` (`[x, y]` or `[x, y, z]`), `orientations` (or null),
    /// `weights`, `pmf` (`{support, probs}` or null).
    pub fn write_dump(&self, w: &mut dyn Write) -> Result<()> {
        let dp = self.scenario.dim().count();
        for a in &self.agents {
            let positions: Vec<Vec<f64>> = a.particles.positions.iter().map(|p| p.as_slice()[..dp].to_vec()).collect();
            let line = serde_json::json!({
                "iteration": self.iteration,
                "agent": a.id,
                "positions": positions,
                "orientations": a.particles.orientations,
                "weights": a.particles.weights,
                "pmf": a.pmf,
            });
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Initialization, anchor stage, up to `n_iterations` iterations and MMSE
/// extraction.
pub fn run_spawn(
    scenario: &Scenario,
    measurements: &MeasurementSet,
    model: &AntennaModel,
    params: &ModelParams,
    config: &InferenceConfig,
) -> Result<SpawnOutput> {
    run_spawn_with_dump(scenario, measurements, model, params, config, None)
}

pub fn run_spawn_with_dump(
    scenario: &Scenario,
    measurements: &MeasurementSet,
    model: &AntennaModel,
    params: &ModelParams,
    config: &InferenceConfig,
    mut dump: Option<&mut dyn Write>,
) -> Result<SpawnOutput> {
    let mut spawn = Spawn::init_beliefs(scenario, measurements, model, params, config)?;
    spawn.incorporate_anchors()?;
    if let Some(w) = dump.as_deref_mut() {
        spawn.write_dump(w)?;
    }
    let mut last = spawn.mmse_positions();
    for _ in 0..config.n_iterations {
        spawn.iterate()?;
        if let Some(w) = dump.as_deref_mut() {
            spawn.write_dump(w)?;
        }
        let now = spawn.mmse_positions();
        let moved = last.iter().zip(&now).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        last = now;
        if config.early_stop_m.is_some_and(|t| moved < t) {
            log::debug!("stopping after iteration {}: max displacement {moved:.2e} m", spawn.iteration());
            break;
        }
    }
    Ok(SpawnOutput { estimates: spawn.estimates(false)?, iterations_run: spawn.iteration() })
}
