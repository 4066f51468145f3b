//! Weighted particle clouds, orientation PMFs and the operations on them.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scenario::{wrap, Dimensionality, SupportBox};

/// Resultant length below which a circular mean is undefined.
pub const MIN_RESULTANT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief {
    pub positions: Vec<Vector3<f64>>,
    /// Present only when orientation is carried by the particles.
    pub orientations: Option<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleBelief {
    pub fn uniform(positions: Vec<Vector3<f64>>, orientations: Option<Vec<f64>>) -> Self {
        let n = positions.len();
        Self { positions, orientations, weights: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationPMF {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl OrientationPMF {
    /// Support angles are wrapped; duplicates (after wrapping) are rejected
    /// and the probabilities must sum to 1.
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(invalid("orientation support and probabilities must be non-empty and of equal length"));
        }
        let support = check_support(&support)?;
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("orientation probabilities must be finite and non-negative"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("orientation probabilities sum to {s}")));
        }
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n.max(1) as f64; n])
    }

    pub(crate) fn from_parts_unchecked(support: Vec<f64>, probs: Vec<f64>) -> Self {
        Self { support, probs }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Wraps and checks an orientation set for duplicates.
pub fn check_support(set: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    for &phi in set {
        let w = crate::scenario::wrap_angle(phi)?;
        if out.iter().any(|&o: &f64| (o - w).abs() < 1e-12) {
            return Err(invalid(format!("orientation set contains {phi} twice")));
        }
        out.push(w);
    }
    Ok(out)
}

/// `N` equally spaced angles starting at `-π`.
pub fn uniform_orientation_set(n: usize) -> Vec<f64> {
    (0..n).map(|k| wrap(-PI + 2.0 * PI * k as f64 / n as f64)).collect()
}

pub fn mmse_position(belief: &ParticleBelief) -> Vector3<f64> {
    let mut m = Vector3::zeros();
    for (p, w) in belief.positions.iter().zip(&belief.weights) {
        m += p * *w;
    }
    m
}

/// Argument of the weighted resultant `Σ w e^{iφ}`.
pub fn circular_mean(angles: &[f64], weights: &[f64]) -> Result<f64> {
    let (mut c, mut s) = (0.0, 0.0);
    for (a, w) in angles.iter().zip(weights) {
        c += w * a.cos();
        s += w * a.sin();
    }
    let r = c.hypot(s);
    if !(r >= MIN_RESULTANT) {
        return Err(Error::UndefinedOrientation(r));
    }
    Ok(wrap(s.atan2(c)))
}

/// Circular MMSE of a particle belief that carries orientations.
pub fn mmse_orientation(belief: &ParticleBelief) -> Result<f64> {
    let o = belief
        .orientations
        .as_ref()
        .ok_or_else(|| invalid("belief carries no orientations"))?;
    circular_mean(o, &belief.weights)
}

pub fn mmse_orientation_pmf(pmf: &OrientationPMF) -> Result<f64> {
    circular_mean(&pmf.support, &pmf.probs)
}

/// Normalizes log-weights in place into probabilities. Returns `None` when
/// nothing survives.
pub(crate) fn normalize_log(logw: &mut [f64]) -> Option<()> {
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return None;
    }
    let mut s = 0.0;
    for l in logw.iter_mut() {
        *l = (*l - mx).exp();
        s += *l;
    }
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    let inv = 1.0 / s;
    for l in logw.iter_mut() {
        *l *= inv;
    }
    Some(())
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Systematic resampling: `n` indices drawn with one uniform offset.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let step = 1.0 / n as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut c = weights[0];
    let mut k = 0;
    let last = weights.len() - 1;
    for _ in 0..n {
        while u > c && k < last {
            k += 1;
            c += weights[k];
        }
        out.push(k);
        u += step;
    }
    out
}

/// Jitter standard deviations for a resampling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub position: [f64; 3],
    /// Ignored for beliefs without orientations.
    pub orientation: f64,
}

impl Bandwidths {
    pub fn zero() -> Self {
        Self { position: [0.0; 3], orientation: 0.0 }
    }

    pub fn fixed(position: f64, orientation: f64, dim: Dimensionality) -> Self {
        let mut p = [position; 3];
        if dim == Dimensionality::Two {
            p[2] = 0.0;
        }
        Self { position: p, orientation }
    }

    /// Plug-in rule on the weighted spread of the belief:
    /// `(4/(d+2))^(1/(d+4)) · std · N^(-1/(d+4))` per coordinate, with `d`
    /// the number of jittered coordinates.
    pub fn plug_in(belief: &ParticleBelief, dim: Dimensionality, with_orientation: bool) -> Self {
        let dp = dim.count();
        let d = (dp + usize::from(with_orientation)) as f64;
        let n = belief.len() as f64;
        let factor = (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * n.powf(-1.0 / (d + 4.0));
        let mean = mmse_position(belief);
        let mut var = [0.0f64; 3];
        for (p, w) in belief.positions.iter().zip(&belief.weights) {
            for k in 0..dp {
                var[k] += w * (p[k] - mean[k]).powi(2);
            }
        }
        let mut position = [0.0; 3];
        for k in 0..dp {
            position[k] = factor * var[k].max(0.0).sqrt();
        }
        let mut orientation = 0.0;
        if with_orientation {
            if let Some(o) = &belief.orientations {
                let (mut c, mut s) = (0.0, 0.0);
                for (a, w) in o.iter().zip(&belief.weights) {
                    c += w * a.cos();
                    s += w * a.sin();
                }
                let r = c.hypot(s).clamp(1e-300, 1.0);
                orientation = factor * (-2.0 * r.ln()).sqrt().min(PI);
            }
        }
        Self { position, orientation }
    }
}

/// Systematic resampling followed by Gaussian jitter; positions are clipped
/// to `support`, orientations wrapped. Output weights are uniform.
pub fn resample<R: Rng + ?Sized>(
    belief: &ParticleBelief,
    bandwidths: &Bandwidths,
    support: &SupportBox,
    rng: &mut R,
) -> ParticleBelief {
    resample_indexed(belief, bandwidths, support, rng).0
}

/// As [`resample`], also returning the source index of every output particle.
pub fn resample_indexed<R: Rng + ?Sized>(
    belief: &ParticleBelief,
    bandwidths: &Bandwidths,
    support: &SupportBox,
    rng: &mut R,
) -> (ParticleBelief, Vec<usize>) {
    let n = belief.len();
    let idx = systematic_indices(&belief.weights, n, rng);
    let mut positions = Vec::with_capacity(n);
    let mut orientations = belief.orientations.as_ref().map(|_| Vec::with_capacity(n));
    for &k in &idx {
        let mut p = belief.positions[k];
        for (a, &h) in bandwidths.position.iter().enumerate() {
            if h > 0.0 {
                let e: f64 = StandardNormal.sample(rng);
                p[a] += h * e;
            }
        }
        support.clamp(&mut p);
        positions.push(p);
        if let (Some(out), Some(src)) = (orientations.as_mut(), belief.orientations.as_ref()) {
            let mut phi = src[k];
            if bandwidths.orientation > 0.0 {
                let e: f64 = StandardNormal.sample(rng);
                phi = wrap(phi + bandwidths.orientation * e);
            }
            out.push(phi);
        }
    }
    (ParticleBelief::uniform(positions, orientations), idx)
}
