//! Allocation-free evaluation of the link likelihood for the particle loops.
//!
//! The pattern of a node with orientation `φ` is rewritten as
//! `Σ_h A_h cos(k_h β) + B_h sin(k_h β)` in the absolute bearing `β`, with
//! `A_h = a_h cos(b_h − k_h φ)` and `B_h = −a_h sin(b_h − k_h φ)`. The
//! per-orientation coefficients are computed once, and each pair evaluation
//! only needs the harmonics of one bearing, obtained without trigonometry
//! from the unit direction vector.

use std::f64::consts::{LN_10, PI};

use nalgebra::Vector3;

use super::{AntennaModel, ModelParams};
use crate::error::{invalid, Result};
use crate::scenario::HORIZONTAL_EPS;

pub const MAX_HARMONICS: usize = 8;

/// `cos(k β)`, `sin(k β)` for every harmonic order of a model.
#[derive(Debug, Clone, Copy)]
pub struct Harmonics {
    pub cos: [f64; MAX_HARMONICS],
    pub sin: [f64; MAX_HARMONICS],
    /// False for horizontally coincident endpoints.
    pub defined: bool,
}

#[derive(Debug, Clone)]
pub struct LinkKernel {
    orders: Vec<u32>,
    /// `(-1)^k`, for evaluating the opposite link direction.
    parity: Vec<f64>,
    amp_phase: Vec<(f64, f64)>,
    c0: f64,
    half_slope: f64,
    inv_two_var: f64,
    log_norm: f64,
}

impl LinkKernel {
    pub fn new(model: &AntennaModel, params: &ModelParams) -> Result<Self> {
        params.validate(model)?;
        if model.orders().len() > MAX_HARMONICS {
            return Err(invalid(format!("at most {MAX_HARMONICS} harmonics are supported")));
        }
        let slope = 10.0 * params.n / LN_10;
        let var = params.sigma_db * params.sigma_db;
        Ok(Self {
            orders: model.orders().to_vec(),
            parity: model.orders().iter().map(|k| if k % 2 == 1 { -1.0 } else { 1.0 }).collect(),
            amp_phase: params.xi.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
            c0: params.p_db + slope * params.d0_m.ln(),
            half_slope: 0.5 * slope,
            inv_two_var: 0.5 / var,
            log_norm: -0.5 * (2.0 * PI * var).ln(),
        })
    }

    pub fn n_harmonics(&self) -> usize {
        self.orders.len()
    }

    /// Length of one coefficient block.
    pub fn coef_len(&self) -> usize {
        2 * self.orders.len()
    }

    pub fn coefficients_into(&self, phi: f64, out: &mut [f64]) {
        for (h, (&k, &(a, b))) in self.orders.iter().zip(&self.amp_phase).enumerate() {
            let arg = b - k as f64 * phi;
            out[2 * h] = a * arg.cos();
            out[2 * h + 1] = -a * arg.sin();
        }
    }

    pub fn coefficients(&self, phi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.coef_len()];
        self.coefficients_into(phi, &mut out);
        out
    }

    /// Path loss from a squared distance.
    #[inline]
    pub fn path_loss_sq(&self, d2: f64) -> f64 {
        self.c0 - self.half_slope * d2.max(1e-24).ln()
    }

    /// Harmonics of the bearing of `(dx, dy)`.
    #[inline]
    pub fn harmonics(&self, dx: f64, dy: f64) -> Harmonics {
        let mut h = Harmonics { cos: [0.0; MAX_HARMONICS], sin: [0.0; MAX_HARMONICS], defined: false };
        let r2 = dx * dx + dy * dy;
        if self.orders.is_empty() || r2 <= HORIZONTAL_EPS * HORIZONTAL_EPS {
            return h;
        }
        h.defined = true;
        let r = r2.sqrt();
        let (c1, s1) = (dx / r, dy / r);
        let (mut c, mut s) = (c1, s1);
        let mut k = 1u32;
        for (slot, &order) in self.orders.iter().enumerate() {
            while k < order {
                let nc = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = nc;
                k += 1;
            }
            h.cos[slot] = c;
            h.sin[slot] = s;
        }
        h
    }

    /// Pattern of the node at the link's origin.
    #[inline]
    pub fn gain_forward(&self, coef: &[f64], h: &Harmonics) -> f64 {
        if !h.defined {
            return 0.0;
        }
        let mut g = 0.0;
        for m in 0..self.orders.len() {
            g += coef[2 * m] * h.cos[m] + coef[2 * m + 1] * h.sin[m];
        }
        g
    }

    /// Pattern of the node at the link's far end (bearing rotated by π).
    #[inline]
    pub fn gain_reverse(&self, coef: &[f64], h: &Harmonics) -> f64 {
        if !h.defined {
            return 0.0;
        }
        let mut g = 0.0;
        for m in 0..self.orders.len() {
            g += self.parity[m] * (coef[2 * m] * h.cos[m] + coef[2 * m + 1] * h.sin[m]);
        }
        g
    }

    #[inline]
    pub fn log_density(&self, residual: f64) -> f64 {
        self.log_norm - residual * residual * self.inv_two_var
    }

    /// Log-likelihood of `z` for two states; `None` coefficients mean a
    /// uniform pattern on that end.
    #[inline]
    pub fn log_lik(
        &self,
        z: f64,
        pi: &Vector3<f64>,
        coef_i: Option<&[f64]>,
        pj: &Vector3<f64>,
        coef_j: Option<&[f64]>,
    ) -> f64 {
        let d = pj - pi;
        let mut pred = self.path_loss_sq(d.norm_squared());
        if coef_i.is_some() || coef_j.is_some() {
            let h = self.harmonics(d.x, d.y);
            if let Some(c) = coef_i {
                pred += self.gain_forward(c, &h);
            }
            if let Some(c) = coef_j {
                pred += self.gain_reverse(c, &h);
            }
        }
        self.log_density(z - pred)
    }
}
