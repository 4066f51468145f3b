//! Monte Carlo estimates of `log ∫ f(z | θ_i, θ_j) b(θ_j) dθ_j`, accumulated
//! into per-particle (and per-orientation) log-weights of agent `i`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::belief::log_sum_exp;
use crate::measurement::kernel::LinkKernel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Particle `m` of `i` against particle `m` of `j`.
    #[default]
    OneToOne,
    /// Every particle of `i` against all particles of `j`.
    FullCross,
}

/// Particles of one end of a link. `coef` holds one coefficient block per
/// particle, or is empty for a uniform pattern.
pub struct CarriedCloud<'a> {
    pub positions: &'a [Vector3<f64>],
    pub coef: &'a [f64],
}

/// Orientation carried by the particles.
pub fn accumulate_carried(
    k: &LinkKernel,
    z: f64,
    own: &CarriedCloud<'_>,
    other: &CarriedCloud<'_>,
    pairing: Pairing,
    acc: &mut [f64],
) {
    let cl = k.coef_len();
    fn block(c: &[f64], cl: usize, m: usize) -> Option<&[f64]> {
        if cl == 0 || c.is_empty() {
            None
        } else {
            Some(&c[m * cl..(m + 1) * cl])
        }
    }
    match pairing {
        Pairing::OneToOne => {
            let n_other = other.positions.len();
            for (m, a) in acc.iter_mut().enumerate() {
                let mj = m % n_other;
                *a += k.log_lik(z, &own.positions[m], block(own.coef, cl, m), &other.positions[mj], block(other.coef, cl, mj));
            }
        }
        Pairing::FullCross => {
            let n_other = other.positions.len();
            let ln_n = (n_other as f64).ln();
            let mut buf = vec![0.0; n_other];
            for (m, a) in acc.iter_mut().enumerate() {
                for (mj, b) in buf.iter_mut().enumerate() {
                    *b = k.log_lik(z, &own.positions[m], block(own.coef, cl, m), &other.positions[mj], block(other.coef, cl, mj));
                }
                *a += log_sum_exp(&buf) - ln_n;
            }
        }
    }
}

/// Orientation summed over a finite support on both ends.
pub struct SummedCloud<'a> {
    pub positions: &'a [Vector3<f64>],
    /// One coefficient block per orientation hypothesis (empty when uniform).
    pub support_coef: &'a [f64],
    pub n_orient: usize,
}

/// Log-weights of the far end's orientation hypotheses: shared by all
/// particles or given per particle (`n_particles × n_orient`).
pub enum OrientWeights<'a> {
    Shared(&'a [f64]),
    PerParticle(&'a [f64]),
}

/// Log-domain accumulator of `n_particles × n_orient` message products,
/// row-major. One-to-one factors are multiplied into `lin` and only folded
/// into `log` by [`SummedAcc::finish`], which saves a logarithm per factor.
pub struct SummedAcc {
    log: Vec<f64>,
    lin: Vec<f64>,
}

impl SummedAcc {
    pub fn new(len: usize) -> Self {
        Self { log: vec![0.0; len], lin: vec![1.0; len] }
    }

    /// `factor` lies in `[1, n_orient]`, so the product cannot underflow.
    #[inline]
    fn push(&mut self, k: usize, shift: f64, factor: f64) {
        self.log[k] += shift;
        let l = self.lin[k] * factor;
        if l > 1e280 {
            self.log[k] += l.ln();
            self.lin[k] = 1.0;
        } else {
            self.lin[k] = l;
        }
    }

    pub fn finish(self) -> Vec<f64> {
        self.log.into_iter().zip(self.lin).map(|(g, l)| g + l.ln()).collect()
    }
}

pub fn accumulate_summed(
    k: &LinkKernel,
    z: f64,
    own: &SummedCloud<'_>,
    other: &SummedCloud<'_>,
    other_log_w: &OrientWeights<'_>,
    pairing: Pairing,
    acc: &mut SummedAcc,
) {
    let cl = k.coef_len();
    let (ni, nj) = (own.n_orient, other.n_orient);
    let mut gi = vec![0.0; ni];
    let mut gj = vec![0.0; nj];
    let mut terms = vec![0.0; nj];
    let n_other = other.positions.len();
    let shared_lse = match other_log_w {
        OrientWeights::Shared(w) => log_sum_exp(w),
        OrientWeights::PerParticle(_) => 0.0,
    };

    // Σ_b w_b f(z | x_i, a, x_j, b) = exp(shift[a]) · factor[a] for every a
    let mut pair = |xi: &Vector3<f64>, mj: usize, shift: &mut [f64], factor: &mut [f64]| {
        let d = other.positions[mj] - xi;
        let base = z - k.path_loss_sq(d.norm_squared());
        let lw = match other_log_w {
            OrientWeights::Shared(w) => &w[..],
            OrientWeights::PerParticle(w) => &w[mj * nj..(mj + 1) * nj],
        };
        if cl == 0 {
            let wsum = match (nj, other_log_w) {
                (1, _) => lw[0],
                (_, OrientWeights::Shared(_)) => shared_lse,
                _ => log_sum_exp(lw),
            };
            shift.iter_mut().for_each(|o| *o = k.log_density(base) + wsum);
            factor.iter_mut().for_each(|f| *f = 1.0);
            return;
        }
        let h = k.harmonics(d.x, d.y);
        for (a, g) in gi.iter_mut().enumerate() {
            *g = k.gain_forward(&own.support_coef[a * cl..(a + 1) * cl], &h);
        }
        for (b, g) in gj.iter_mut().enumerate() {
            *g = k.gain_reverse(&other.support_coef[b * cl..(b + 1) * cl], &h);
        }
        for a in 0..ni {
            let r = base - gi[a];
            if nj == 1 {
                shift[a] = lw[0] + k.log_density(r - gj[0]);
                factor[a] = 1.0;
                continue;
            }
            let mut mx = f64::NEG_INFINITY;
            for b in 0..nj {
                terms[b] = lw[b] + k.log_density(r - gj[b]);
                mx = mx.max(terms[b]);
            }
            shift[a] = mx;
            factor[a] = if mx.is_finite() { terms.iter().map(|t| (t - mx).exp()).sum() } else { 1.0 };
        }
    };

    let mut shift = vec![0.0; ni];
    let mut factor = vec![0.0; ni];
    match pairing {
        Pairing::OneToOne => {
            for (m, xi) in own.positions.iter().enumerate() {
                pair(xi, m % n_other, &mut shift, &mut factor);
                for a in 0..ni {
                    acc.push(m * ni + a, shift[a], factor[a]);
                }
            }
        }
        Pairing::FullCross => {
            let ln_n = (n_other as f64).ln();
            let mut cols = vec![vec![0.0; n_other]; ni];
            for (m, xi) in own.positions.iter().enumerate() {
                for mj in 0..n_other {
                    pair(xi, mj, &mut shift, &mut factor);
                    for a in 0..ni {
                        cols[a][mj] = shift[a] + factor[a].ln();
                    }
                }
                for a in 0..ni {
                    acc.log[m * ni + a] += log_sum_exp(&cols[a]) - ln_n;
                }
            }
        }
    }
}
