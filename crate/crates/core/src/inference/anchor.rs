//! Anchor stage: condenses the prior particle cloud onto
//! `prior × Π_a f(z_a | state)`.
//!
//! The default sampler tempers the anchor likelihood from 0 to 1, choosing
//! each increment so that the effective sample size stays at a fixed
//! fraction of `N`, resamples, and rejuvenates with random-walk
//! Metropolis–Hastings moves targeting the current tempered density.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::belief::{log_sum_exp, normalize_log, systematic_indices};
use crate::measurement::kernel::LinkKernel;
use crate::scenario::{wrap, Dimensionality, SupportBox};

pub(crate) struct AnchorObs {
    pub pos: Vector3<f64>,
    pub coef: Option<Vec<f64>>,
    pub z: f64,
}

/// How orientation enters the anchor target.
pub(crate) enum OrientTarget<'a> {
    /// Particles carry their own orientation, on the circle or on a set.
    Carried { set: Option<&'a [f64]> },
    /// Orientation is summed out over a finite support with prior weights.
    Summed { support_coef: &'a [f64], log_prior: &'a [f64] },
}

pub(crate) struct AnchorTarget<'a> {
    pub kernel: &'a LinkKernel,
    pub obs: &'a [AnchorObs],
    pub orient: OrientTarget<'a>,
}

pub(crate) struct Scratch {
    coef: Vec<f64>,
    terms: Vec<f64>,
}

impl<'a> AnchorTarget<'a> {
    pub fn scratch(&self) -> Scratch {
        let n_o = match &self.orient {
            OrientTarget::Summed { log_prior, .. } => log_prior.len(),
            OrientTarget::Carried { .. } => 0,
        };
        Scratch { coef: vec![0.0; self.kernel.coef_len()], terms: vec![0.0; n_o] }
    }

    /// Per-hypothesis anchor log-likelihoods for the summed form.
    pub fn terms(&self, x: &Vector3<f64>, out: &mut [f64]) {
        let OrientTarget::Summed { support_coef, .. } = &self.orient else {
            unreachable!("terms() needs a summed target")
        };
        let cl = self.kernel.coef_len();
        out.iter_mut().for_each(|t| *t = 0.0);
        for o in self.obs {
            let d = o.pos - x;
            let mut base = o.z - self.kernel.path_loss_sq(d.norm_squared());
            if cl == 0 {
                let ld = self.kernel.log_density(base);
                out.iter_mut().for_each(|t| *t += ld);
                continue;
            }
            let h = self.kernel.harmonics(d.x, d.y);
            if let Some(c) = &o.coef {
                base -= self.kernel.gain_reverse(c, &h);
            }
            for (a, t) in out.iter_mut().enumerate() {
                let g = self.kernel.gain_forward(&support_coef[a * cl..(a + 1) * cl], &h);
                *t += self.kernel.log_density(base - g);
            }
        }
    }

    pub fn eval(&self, x: &Vector3<f64>, phi: Option<f64>, s: &mut Scratch) -> f64 {
        match &self.orient {
            OrientTarget::Carried { .. } => {
                let coef = if self.kernel.coef_len() > 0 {
                    self.kernel.coefficients_into(phi.unwrap_or(0.0), &mut s.coef);
                    Some(&s.coef[..])
                } else {
                    None
                };
                self.obs
                    .iter()
                    .map(|o| self.kernel.log_lik(o.z, x, coef, &o.pos, o.coef.as_deref()))
                    .sum()
            }
            OrientTarget::Summed { log_prior, .. } => {
                let mut t = std::mem::take(&mut s.terms);
                self.terms(x, &mut t);
                for (v, lp) in t.iter_mut().zip(log_prior.iter()) {
                    *v += lp;
                }
                let r = log_sum_exp(&t);
                s.terms = t;
                r
            }
        }
    }
}

pub(crate) struct Cloud {
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SmcOptions {
    pub ess_fraction: f64,
    pub mcmc_steps: usize,
    pub max_stages: usize,
}

/// Returns the condensed cloud (uniform weights) or a reason for failure.
pub(crate) fn tempered_smc<R: Rng + ?Sized>(
    target: &AnchorTarget<'_>,
    mut cloud: Cloud,
    support: &SupportBox,
    dim: Dimensionality,
    opts: SmcOptions,
    rng: &mut R,
) -> std::result::Result<Cloud, String> {
    if target.obs.is_empty() {
        return Ok(cloud);
    }
    let n = cloud.positions.len();
    let mut s = target.scratch();
    let phi_of = |c: &Cloud, m: usize| c.orientations.as_ref().map(|o| o[m]);
    let mut ll: Vec<f64> = (0..n).map(|m| target.eval(&cloud.positions[m], phi_of(&cloud, m), &mut s)).collect();
    if ll.iter().all(|l| !l.is_finite()) {
        return Err("anchor likelihood vanishes on every particle".into());
    }
    let dp = dim.count();
    let mut beta = 0.0;
    let mut lam_pos = 2.38 / (dp as f64).sqrt();
    let mut lam_phi = 1.0;
    for _ in 0..opts.max_stages {
        let delta = next_increment(&ll, 1.0 - beta, opts.ess_fraction * n as f64);
        let mut w: Vec<f64> = ll.iter().map(|l| delta * l).collect();
        normalize_log(&mut w).ok_or("anchor weights underflow")?;
        let idx = systematic_indices(&w, n, rng);
        cloud.positions = idx.iter().map(|&k| cloud.positions[k]).collect();
        if let Some(o) = cloud.orientations.as_mut() {
            *o = idx.iter().map(|&k| o[k]).collect();
        }
        ll = idx.iter().map(|&k| ll[k]).collect();
        beta = if delta >= 1.0 - beta { 1.0 } else { beta + delta };

        let (scale, phi_scale) = spread(&cloud, dp);
        let mut acc_pos = 0usize;
        let mut acc_phi = 0usize;
        let mut tried_phi = 0usize;
        for _ in 0..opts.mcmc_steps {
            for m in 0..n {
                let mut x = cloud.positions[m];
                for k in 0..dp {
                    let e: f64 = StandardNormal.sample(rng);
                    x[k] += lam_pos * scale[k] * e;
                }
                if support.contains(&x) {
                    let l = target.eval(&x, phi_of(&cloud, m), &mut s);
                    if rng.gen::<f64>().ln() < beta * (l - ll[m]) {
                        cloud.positions[m] = x;
                        ll[m] = l;
                        acc_pos += 1;
                    }
                }
                if let (OrientTarget::Carried { set }, Some(o)) = (&target.orient, cloud.orientations.as_mut()) {
                    let phi = match set {
                        Some(set) => set[rng.gen_range(0..set.len())],
                        None => {
                            let e: f64 = StandardNormal.sample(rng);
                            wrap(o[m] + lam_phi * phi_scale * e)
                        }
                    };
                    let l = target.eval(&cloud.positions[m], Some(phi), &mut s);
                    tried_phi += 1;
                    if rng.gen::<f64>().ln() < beta * (l - ll[m]) {
                        o[m] = phi;
                        ll[m] = l;
                        acc_phi += 1;
                    }
                }
            }
        }
        let tried = (opts.mcmc_steps * n).max(1) as f64;
        lam_pos = adapt(lam_pos, acc_pos as f64 / tried);
        if tried_phi > 0 {
            lam_phi = adapt(lam_phi, acc_phi as f64 / tried_phi as f64);
        }
        if beta >= 1.0 {
            return Ok(cloud);
        }
    }
    Err(format!("tempering did not reach the full likelihood within {} stages", opts.max_stages))
}

/// Single importance step with the full anchor likelihood and one resampling.
pub(crate) fn single_shot<R: Rng + ?Sized>(
    target: &AnchorTarget<'_>,
    cloud: Cloud,
    rng: &mut R,
) -> std::result::Result<Cloud, String> {
    if target.obs.is_empty() {
        return Ok(cloud);
    }
    let n = cloud.positions.len();
    let mut s = target.scratch();
    let mut w: Vec<f64> = (0..n)
        .map(|m| target.eval(&cloud.positions[m], cloud.orientations.as_ref().map(|o| o[m]), &mut s))
        .collect();
    normalize_log(&mut w).ok_or("anchor weights underflow")?;
    let idx = systematic_indices(&w, n, rng);
    Ok(Cloud {
        positions: idx.iter().map(|&k| cloud.positions[k]).collect(),
        orientations: cloud.orientations.map(|o| idx.iter().map(|&k| o[k]).collect()),
    })
}

fn ess_of(ll: &[f64], delta: f64) -> f64 {
    let mx = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for l in ll {
        let w = (delta * (l - mx)).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

fn next_increment(ll: &[f64], remaining: f64, target_ess: f64) -> f64 {
    if ess_of(ll, remaining) >= target_ess {
        return remaining;
    }
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ess_of(ll, mid) >= target_ess {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.max(remaining * 1e-9)
}

fn adapt(lam: f64, rate: f64) -> f64 {
    if rate < 0.15 {
        lam * 0.6
    } else if rate > 0.45 {
        lam * 1.5
    } else {
        lam
    }
}

/// Per-axis standard deviation and circular spread of an unweighted cloud.
fn spread(c: &Cloud, dp: usize) -> ([f64; 3], f64) {
    let n = c.positions.len() as f64;
    let mut mean = Vector3::zeros();
    for p in &c.positions {
        mean += p;
    }
    mean /= n;
    let mut var = [0.0; 3];
    for p in &c.positions {
        for k in 0..dp {
            var[k] += (p[k] - mean[k]).powi(2) / n;
        }
    }
    let mut sd = [0.0; 3];
    for k in 0..dp {
        sd[k] = var[k].sqrt().max(1e-3);
    }
    let phi = c.orientations.as_ref().map_or(0.0, |o| {
        let (cs, sn) = o.iter().fold((0.0, 0.0), |(a, b), x| (a + x.cos(), b + x.sin()));
        let r = (cs.hypot(sn) / n).clamp(1e-300, 1.0);
        (-2.0 * r.ln()).sqrt().clamp(1e-3, std::f64::consts::PI)
    });
    (sd, phi)
}
