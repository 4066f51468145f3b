//! Maximum-likelihood fits of the RSS model from links with known node states,
//! BIC evidence and model comparison, and per-region fits.
//!
//! Every harmonic term `a·cos(kφ + b)` is written as `α·cos(kφ) + β·sin(kφ)`,
//! which makes the predictor linear in `[P, n, α₁, β₁, …]`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measurement::{AntennaModel, MeasurementSet, ModelParams};
use crate::scenario::{angle_between, distance, AnchorPattern, NodeState, Scenario, SupportBox, HORIZONTAL_EPS};

/// Relative singular value below which a design direction counts as unidentified.
const RANK_TOL: f64 = 1e-10;
/// Smallest σ̂ reported; an exact fit would otherwise give σ̂ = 0.
pub const SIGMA_FLOOR: f64 = 1e-12;
const COORD_TOL: f64 = 1e-8;
const COORD_STEP_TOL: f64 = 1e-10;
const COORD_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// One linear least-squares solve over all parameters.
    #[default]
    LinearLs,
    /// Alternating path-loss / pattern / σ updates.
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub d0_m: f64,
    pub method: FitMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { d0_m: 0.1, method: FitMethod::LinearLs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_k: usize,
    pub params: ModelParams,
    #[serde(rename = "log_lik")]
    pub max_log_likelihood: f64,
    #[serde(rename = "n_z")]
    pub n_measurements: usize,
    pub n_params: usize,
    #[serde(rename = "bic")]
    pub bic_log_evidence: f64,
    pub iterations_used: usize,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `ln f(z | θ̂) − (N_θ / 2) ln N_z`
pub fn bic_log_evidence(max_log_lik: f64, n_params: usize, n_meas: usize) -> Result<f64> {
    if n_meas == 0 {
        return Err(invalid("BIC needs at least one measurement"));
    }
    Ok(max_log_lik - 0.5 * n_params as f64 * (n_meas as f64).ln())
}

/// One observed link with both endpoint states known.
#[derive(Debug, Clone)]
struct LinkRow {
    z: f64,
    ends: [Vector3<f64>; 2],
    /// `−10·log₁₀(d/d₀)`
    log_term: f64,
    /// `Σ_sides cos(kφ), Σ_sides sin(kφ)` per harmonic order.
    pattern: Vec<f64>,
}

impl LinkRow {
    fn column(&self, c: usize) -> f64 {
        match c {
            0 => 1.0,
            1 => self.log_term,
            _ => self.pattern[c - 2],
        }
    }
}

fn column_names(model: &AntennaModel) -> Vec<String> {
    let mut names = vec!["P".to_string(), "n".to_string()];
    for k in model.orders() {
        names.push(format!("alpha{k}"));
        names.push(format!("beta{k}"));
    }
    names
}

fn directive(node: &NodeState, pattern: AnchorPattern) -> bool {
    !node.is_anchor() || pattern == AnchorPattern::Directive
}

fn build_rows(meas: &MeasurementSet, scenario: &Scenario, model: &AntennaModel, d0: f64) -> Result<Vec<LinkRow>> {
    if !(d0 > 0.0) {
        return Err(invalid(format!("d0 must be positive, got {d0}")));
    }
    meas.validate(scenario)?;
    let pattern = scenario.anchor_pattern();
    let pairs = meas
        .anchor_links
        .iter()
        .map(|l| (l.anchor, l.agent, l.z_db))
        .chain(meas.agent_links.iter().map(|l| (l.i, l.j, l.z_db)));
    let mut rows = Vec::with_capacity(meas.len());
    for (a, b, z) in pairs {
        if !z.is_finite() {
            return Err(invalid(format!("link ({a}, {b}) has non-finite value {z}")));
        }
        let (na, nb) = (scenario.node(a), scenario.node(b));
        let d = distance(na, nb)?;
        if d <= 0.0 {
            return Err(Error::DegenerateGeometry(format!("nodes {a} and {b} coincide")));
        }
        let mut pat = vec![0.0; model.n_pattern_params()];
        let dh = (nb.position.xy() - na.position.xy()).norm();
        if dh > HORIZONTAL_EPS {
            for (from, to) in [(na, nb), (nb, na)] {
                if !directive(from, pattern) {
                    continue;
                }
                let phi = angle_between(from, to)?;
                for (m, &k) in model.orders().iter().enumerate() {
                    let (s, c) = (k as f64 * phi).sin_cos();
                    pat[2 * m] += c;
                    pat[2 * m + 1] += s;
                }
            }
        }
        rows.push(LinkRow { z, ends: [na.position, nb.position], log_term: -10.0 * (d / d0).log10(), pattern: pat });
    }
    Ok(rows)
}

/// Least squares over the columns in `free`, the others held at `theta`.
/// Returns the full parameter vector.
fn solve_subset(rows: &[LinkRow], free: &[usize], theta: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let n = rows.len();
    let p = free.len();
    let mut out = theta.to_vec();
    if p == 0 {
        return Ok(out);
    }
    if n < p {
        return Err(Error::IllPosedFit(vec![format!("{n} links for {p} free parameters")]));
    }
    let fixed: Vec<usize> = (0..theta.len()).filter(|c| !free.contains(c)).collect();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (r, row) in rows.iter().enumerate() {
        for (j, &c) in free.iter().enumerate() {
            x[(r, j)] = row.column(c);
        }
        y[r] = row.z - fixed.iter().map(|&c| row.column(c) * theta[c]).sum::<f64>();
    }
    // unit-norm columns so the rank test is scale-free
    let mut scale = vec![1.0; p];
    let mut deficient = Vec::new();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 {
            deficient.push(names[free[j]].clone());
        } else {
            scale[j] = norm;
            x.column_mut(j).unscale_mut(norm);
        }
    }
    if !deficient.is_empty() {
        return Err(Error::IllPosedFit(deficient));
    }
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let v_t = svd.v_t.as_ref().expect("svd computed with V");
    for (s, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= RANK_TOL * smax {
            let mut dir = String::new();
            for j in 0..p {
                let w = v_t[(s, j)];
                if w.abs() > 1e-3 {
                    let _ = write!(dir, "{}{:.3}*{}", if dir.is_empty() { "" } else { " " }, w, names[free[j]]);
                }
            }
            deficient.push(dir);
        }
    }
    if !deficient.is_empty() {
        return Err(Error::IllPosedFit(deficient));
    }
    let beta = svd.solve(&y, 0.0).map_err(|e| invalid(format!("least squares failed: {e}")))?;
    for (j, &c) in free.iter().enumerate() {
        out[c] = beta[j] / scale[j];
    }
    Ok(out)
}

fn ssr(rows: &[LinkRow], theta: &[f64]) -> f64 {
    rows.iter()
        .map(|row| {
            let pred: f64 = (0..theta.len()).map(|c| row.column(c) * theta[c]).sum();
            (row.z - pred).powi(2)
        })
        .sum()
}

fn gaussian_ll(ssr: f64, n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - ssr / (2.0 * sigma * sigma)
}

/// `(α, β) → (a, b)` with `a ≥ 0` and `b ∈ [−π, π)`.
pub fn harmonic_to_polar(alpha: f64, beta: f64) -> (f64, f64) {
    let a = alpha.hypot(beta);
    let mut b = (-beta).atan2(alpha);
    if b >= std::f64::consts::PI {
        b -= 2.0 * std::f64::consts::PI;
    }
    (a, b)
}

/// `(a, b) → (α, β)`, the inverse of [`harmonic_to_polar`].
pub fn polar_to_harmonic(a: f64, b: f64) -> (f64, f64) {
    (a * b.cos(), -a * b.sin())
}

fn theta_from_params(p: &ModelParams) -> Vec<f64> {
    let mut t = vec![p.p_db, p.n];
    for ab in p.xi.chunks_exact(2) {
        let (al, be) = polar_to_harmonic(ab[0], ab[1]);
        t.push(al);
        t.push(be);
    }
    t
}

fn finish(model: &AntennaModel, rows: &[LinkRow], theta: &[f64], d0: f64, n_free: usize, iterations: usize) -> Result<FitResult> {
    let n = rows.len();
    let s = ssr(rows, theta);
    let sigma = (s / n as f64).sqrt().max(SIGMA_FLOOR);
    let mut xi = Vec::with_capacity(theta.len() - 2);
    for ab in theta[2..].chunks_exact(2) {
        let (a, b) = harmonic_to_polar(ab[0], ab[1]);
        xi.push(a);
        xi.push(b);
    }
    let params = ModelParams::new(theta[0], theta[1], xi, sigma, d0)?;
    let ll = gaussian_ll(s, n, sigma);
    Ok(FitResult {
        model_k: model.index,
        params,
        max_log_likelihood: ll,
        n_measurements: n,
        n_params: n_free,
        bic_log_evidence: bic_log_evidence(ll, n_free, n)?,
        iterations_used: iterations,
    })
}

fn fit_rows(model: &AntennaModel, rows: &[LinkRow], free: &[usize], start: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let names = column_names(model);
    if rows.is_empty() {
        return Err(Error::IllPosedFit(vec!["no links".into()]));
    }
    match opts.method {
        FitMethod::LinearLs => {
            let theta = solve_subset(rows, free, start, &names)?;
            finish(model, rows, &theta, opts.d0_m, free.len(), 1)
        }
        FitMethod::Coordinate => {
            let loss: Vec<usize> = free.iter().copied().filter(|&c| c < 2).collect();
            let pat: Vec<usize> = free.iter().copied().filter(|&c| c >= 2).collect();
            let mut theta = start.to_vec();
            for c in &pat {
                theta[*c] = 0.0;
            }
            let n = rows.len();
            let mut prev = f64::NEG_INFINITY;
            let mut it = 0;
            while it < COORD_MAX_ITER {
                it += 1;
                let before = theta.clone();
                theta = solve_subset(rows, &loss, &theta, &names)?;
                theta = solve_subset(rows, &pat, &theta, &names)?;
                let step = before.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let s = ssr(rows, &theta);
                let sigma = (s / n as f64).sqrt().max(SIGMA_FLOOR);
                let ll = gaussian_ll(s, n, sigma);
                if ((ll - prev).abs() < COORD_TOL && step < COORD_STEP_TOL) || loss.is_empty() || pat.is_empty() {
                    break;
                }
                prev = ll;
            }
            finish(model, rows, &theta, opts.d0_m, free.len(), it)
        }
    }
}

/// ML parameters of `model` from links whose endpoint states are taken from
/// `scenario` as known truth.
pub fn estimate_parameters(
    meas: &MeasurementSet,
    scenario: &Scenario,
    model: &AntennaModel,
    opts: &FitOptions,
) -> Result<FitResult> {
    let rows = build_rows(meas, scenario, model, opts.d0_m)?;
    let p = 2 + model.n_pattern_params();
    let free: Vec<usize> = (0..p).collect();
    fit_rows(model, &rows, &free, &vec![0.0; p], opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    /// One fit per candidate, in candidate order.
    pub fits: Vec<FitResult>,
    /// Candidate indices by decreasing evidence; ties keep candidate order.
    pub ranking: Vec<usize>,
}

impl Selection {
    pub fn best(&self) -> &FitResult {
        &self.fits[self.ranking[0]]
    }

    /// `ln O_{k,j}` with equal model priors.
    pub fn log_odds(&self, k: usize, j: usize) -> f64 {
        self.fits[k].bic_log_evidence - self.fits[j].bic_log_evidence
    }

    /// `model_k,bic,log_odds_vs_best`, one row per candidate in ranking order.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_k", "bic", "log_odds_vs_best"]).expect("in-memory write");
        let best = self.ranking[0];
        for &k in &self.ranking {
            let f = &self.fits[k];
            w.write_record([f.model_k.to_string(), f.bic_log_evidence.to_string(), self.log_odds(k, best).to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }
}

#[cfg(feature = "parallel")]
fn map_all<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_all<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Fits every candidate and ranks them by BIC evidence.
pub fn select_model(
    meas: &MeasurementSet,
    scenario: &Scenario,
    candidates: &[AntennaModel],
    opts: &FitOptions,
) -> Result<Selection> {
    if candidates.len() < 2 {
        return Err(invalid("model selection needs at least two candidates"));
    }
    let fits = map_all(candidates, |m| estimate_parameters(meas, scenario, m, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut ranking: Vec<usize> = (0..fits.len()).collect();
    ranking.sort_by(|&a, &b| fits[b].bic_log_evidence.total_cmp(&fits[a].bic_log_evidence));
    Ok(Selection { fits, ranking })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Both link endpoints inside the region.
    #[default]
    BothEndpoints,
    /// Link midpoint inside the region.
    Midpoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalVariant {
    /// Every parameter fitted per region.
    #[default]
    FullyLocal,
    /// `P, n, σ` per region, pattern from the global fit.
    LocalPathLoss,
    /// Pattern and `σ` per region, `P, n` from the global fit.
    LocalPattern,
}

#[derive(Debug)]
pub struct SubregionFit {
    pub region: SupportBox,
    pub n_links: usize,
    pub fit: Result<FitResult>,
}

fn assigned(row: &LinkRow, region: &SupportBox, rule: Assignment) -> bool {
    match rule {
        Assignment::BothEndpoints => row.ends.iter().all(|e| region.contains(e)),
        Assignment::Midpoint => region.contains(&(0.5 * (row.ends[0] + row.ends[1]))),
    }
}

/// Independent fits on the links assigned to each region. A failing region
/// reports its own error and does not affect the others.
pub fn estimate_parameters_subregion(
    meas: &MeasurementSet,
    scenario: &Scenario,
    model: &AntennaModel,
    regions: &[SupportBox],
    rule: Assignment,
    variant: LocalVariant,
    opts: &FitOptions,
) -> Result<Vec<SubregionFit>> {
    let rows = build_rows(meas, scenario, model, opts.d0_m)?;
    let p = 2 + model.n_pattern_params();
    let (free, start): (Vec<usize>, Vec<f64>) = match variant {
        LocalVariant::FullyLocal => ((0..p).collect(), vec![0.0; p]),
        LocalVariant::LocalPathLoss | LocalVariant::LocalPattern => {
            let all: Vec<usize> = (0..p).collect();
            let global = fit_rows(model, &rows, &all, &vec![0.0; p], opts)?;
            let free = if variant == LocalVariant::LocalPathLoss { vec![0, 1] } else { (2..p).collect() };
            (free, theta_from_params(&global.params))
        }
    };
    Ok(map_all(regions, |region| {
        let local: Vec<LinkRow> = rows.iter().filter(|r| assigned(r, region, rule)).cloned().collect();
        SubregionFit { region: *region, n_links: local.len(), fit: fit_rows(model, &local, &free, &start, opts) }
    }))
}
