//! Brute-force grid posteriors for small 2D networks, written directly from
//! the measurement model without using the library's likelihood code.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Log-distance path loss plus a sum of cosine harmonics per node.
#[derive(Clone, Debug)]
pub struct RssModel {
    pub p_db: f64,
    pub n: f64,
    pub d0: f64,
    /// `(order, amplitude, phase)`.
    pub harmonics: Vec<(f64, f64, f64)>,
    pub sigma: f64,
}

impl RssModel {
    pub fn model1(sigma: f64) -> Self {
        Self { p_db: -11.0, n: 1.0, d0: 0.1, harmonics: vec![(1.0, 3.36, 0.11)], sigma }
    }

    pub fn pattern(&self, rel: f64) -> f64 {
        self.harmonics.iter().map(|&(k, a, b)| a * (k * rel + b).cos()).sum()
    }

    pub fn path_loss(&self, d: f64) -> f64 {
        self.p_db - 10.0 * self.n * (d / self.d0).log10()
    }

    pub fn log_density(&self, r: f64) -> f64 {
        -0.5 * (2.0 * PI * self.sigma * self.sigma).ln() - r * r / (2.0 * self.sigma * self.sigma)
    }

    /// Anchor (uniform pattern) at `a`, agent at `x` with orientation `phi`.
    pub fn anchor_ll(&self, z: f64, a: (f64, f64), x: (f64, f64), phi: f64) -> f64 {
        let (dx, dy) = (a.0 - x.0, a.1 - x.1);
        let d = dx.hypot(dy);
        let pred = self.path_loss(d) + self.pattern(dy.atan2(dx) - phi);
        self.log_density(z - pred)
    }
}

/// Regular grid of cell centers over a 2D box, with `n_phi` orientations.
#[derive(Clone, Debug)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub phis: Vec<f64>,
}

impl Grid {
    pub fn new(min: (f64, f64), max: (f64, f64), h: f64, n_phi: usize) -> Self {
        let nx = ((max.0 - min.0) / h).round() as usize;
        let ny = ((max.1 - min.1) / h).round() as usize;
        let phis = (0..n_phi).map(|k| -PI + (k as f64 + 0.5) * 2.0 * PI / n_phi as f64).collect();
        Self { x0: min.0, y0: min.1, h, nx, ny, phis }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.h
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + (j as f64 + 0.5) * self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.phis.len()
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.phis.len() + k
    }
}

/// Summary of a grid posterior over one agent's `(x, y, φ)`.
#[derive(Clone, Debug)]
pub struct Marginal {
    pub mean: (f64, f64),
    pub phi: f64,
    pub resultant: f64,
    /// Differential entropy of the position marginal (nats).
    pub position_entropy: f64,
}

/// Log-posterior (unnormalized) over a grid from anchor links `(anchor xy, z)`.
pub fn anchor_log_post(model: &RssModel, anchors: &[((f64, f64), f64)], g: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let x = (g.x(i), g.y(j));
            for (k, &phi) in g.phis.iter().enumerate() {
                out[g.idx(i, j, k)] = anchors.iter().map(|&(a, z)| model.anchor_ll(z, a, x, phi)).sum();
            }
        }
    }
    out
}

pub fn summarize(g: &Grid, logp: &[f64]) -> Marginal {
    let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - mx).exp()).collect();
    let total: f64 = w.iter().sum();
    let (mut ex, mut ey, mut c, mut s) = (0.0, 0.0, 0.0, 0.0);
    let mut pos = vec![0.0; g.nx * g.ny];
    for i in 0..g.nx {
        for j in 0..g.ny {
            for (k, &phi) in g.phis.iter().enumerate() {
                let p = w[g.idx(i, j, k)] / total;
                ex += p * g.x(i);
                ey += p * g.y(j);
                c += p * phi.cos();
                s += p * phi.sin();
                pos[i * g.ny + j] += p;
            }
        }
    }
    let cell = g.h * g.h;
    let position_entropy = -pos.iter().filter(|p| **p > 0.0).map(|p| p * (p / cell).ln()).sum::<f64>();
    Marginal { mean: (ex, ey), phi: s.atan2(c), resultant: c.hypot(s), position_entropy }
}

pub fn one_agent(model: &RssModel, anchors: &[((f64, f64), f64)], g: &Grid) -> Marginal {
    summarize(g, &anchor_log_post(model, anchors, g))
}

/// `exp(x)` for `x ≤ 0`, branch-free so that loops over it vectorize.
/// Relative error below `2e-6`.
#[inline(always)]
fn exp_neg(x: f32) -> f32 {
    let t = x.max(-87.0) * std::f32::consts::LOG2_E;
    // t lies in [-126, 0], so the cast is in range
    let i = unsafe { t.to_int_unchecked::<i32>() };
    let f = (t - i as f32) * std::f32::consts::LN_2;
    let p = 1.0
        + f * (1.0
            + f * (0.5
                + f * (1.0 / 6.0 + f * (1.0 / 24.0 + f * (1.0 / 120.0 + f * (1.0 / 720.0 + f * (1.0 / 5040.0)))))));
    f32::from_bits((p.to_bits() as i32).wrapping_add(i << 23) as u32)
}

/// `Σ_k w_k exp(-c (u - g_k)²)` over 8-lane chunks.
fn gauss_sum(u: f32, g: &[f32], w: &[f32], c: f32) -> f32 {
    let mut lanes = [0.0f32; 8];
    for (gc, wc) in g.chunks_exact(8).zip(w.chunks_exact(8)) {
        for l in 0..8 {
            let r = u - gc[l];
            lanes[l] += wc[l] * exp_neg(-c * r * r);
        }
    }
    lanes.iter().sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Cells holding all but `tail` of the posterior mass.
fn significant(logp: &[f64], tail: f64) -> Vec<usize> {
    let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..logp.len()).collect();
    order.sort_by(|&a, &b| logp[b].total_cmp(&logp[a]));
    let total: f64 = logp.iter().map(|l| (l - mx).exp()).sum();
    let mut acc = 0.0;
    let mut keep = Vec::new();
    for k in order {
        if acc >= (1.0 - tail) * total {
            break;
        }
        acc += (logp[k] - mx).exp();
        keep.push(k);
    }
    keep
}

/// Exact marginal of agent 1 in a two-agent network:
/// `p(θ1) ∝ A1(θ1) Σ_θ2 A2(θ2) f(z12 | θ1, θ2)`.
///
/// `A1` is evaluated on the fine grid. The sum over `θ2` runs over the
/// coarse cells holding all but `1e-5` of `A2`'s mass; the resulting log
/// message is computed on coarse cells around the support of `A1` and
/// bilinearly interpolated onto the fine grid (same orientation set).
pub fn two_agent_marginal(
    model: &RssModel,
    a1: &[((f64, f64), f64)],
    a2: &[((f64, f64), f64)],
    z12: f64,
    fine: &Grid,
    coarse: &Grid,
) -> Marginal {
    assert_eq!(fine.phis, coarse.phis);
    let n_phi = coarse.phis.len();
    let post2 = anchor_log_post(model, a2, coarse);
    let keep2 = significant(&post2, 1e-5);
    let post1c = anchor_log_post(model, a1, coarse);
    let keep1 = significant(&post1c, 1e-5);
    // coarse positions of agent 1 whose message is needed, dilated by one cell
    let mut need = vec![false; coarse.nx * coarse.ny];
    for &c in &keep1 {
        let pos = c / n_phi;
        let (i, j) = ((pos / coarse.ny) as i64, (pos % coarse.ny) as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && (a as usize) < coarse.nx && (b as usize) < coarse.ny {
                    need[a as usize * coarse.ny + b as usize] = true;
                }
            }
        }
    }
    // θ2 cells grouped by position
    let mut by_pos: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
    {
        let mut sorted = keep2.clone();
        sorted.sort();
        for c in sorted {
            let pos = c / n_phi;
            match by_pos.last_mut() {
                Some((p, v)) if *p == pos => v.push((c % n_phi, post2[c])),
                _ => by_pos.push((pos, vec![(c % n_phi, post2[c])])),
            }
        }
    }
    // pattern(β - φ) = Σ_h a_h cos(k_h(β - φ) + b_h) = Σ_h C_h cos k_hβ - S_h sin k_hβ
    let nh = model.harmonics.len();
    let coef = |phi: f64| -> Vec<(f64, f64)> {
        model.harmonics.iter().map(|&(k, a, b)| (a * (b - k * phi).cos(), a * (b - k * phi).sin())).collect()
    };
    let c1: Vec<Vec<(f64, f64)>> = coarse.phis.iter().map(|&p| coef(p)).collect();
    let lp2max = keep2.iter().map(|&c| post2[c]).fold(f64::NEG_INFINITY, f64::max);
    // per θ2 position: padded lanes of weights and coefficients (far end: odd orders flip)
    struct Lanes {
        x: (f64, f64),
        w: Vec<f32>,
        c: Vec<Vec<f32>>,
        s: Vec<Vec<f32>>,
    }
    let lanes: Vec<Lanes> = by_pos
        .iter()
        .map(|(p2, cells)| {
            let len = cells.len().div_ceil(8) * 8;
            let mut l = Lanes {
                x: (coarse.x(p2 / coarse.ny), coarse.y(p2 % coarse.ny)),
                w: vec![0.0; len],
                c: vec![vec![0.0; len]; nh],
                s: vec![vec![0.0; len]; nh],
            };
            for (q, &(k2, lp2)) in cells.iter().enumerate() {
                l.w[q] = (lp2 - lp2max).exp() as f32;
                for h in 0..nh {
                    let sign = if (model.harmonics[h].0 as i64) % 2 == 1 { -1.0 } else { 1.0 };
                    l.c[h][q] = (sign * c1[k2][h].0) as f32;
                    l.s[h][q] = (sign * c1[k2][h].1) as f32;
                }
            }
            l
        })
        .collect();
    let inv2s2 = 0.5 / (model.sigma * model.sigma);
    let lnorm = -0.5 * (2.0 * PI * model.sigma * model.sigma).ln();
    let mut msg = vec![f64::NEG_INFINITY; coarse.len()];
    let mut acc = vec![0.0f64; n_phi];
    let mut g2: Vec<f32> = Vec::new();
    let mut harm = vec![(0.0f64, 0.0f64); nh];
    let c = inv2s2 as f32;
    for p1 in 0..coarse.nx * coarse.ny {
        if !need[p1] {
            continue;
        }
        let x1 = (coarse.x(p1 / coarse.ny), coarse.y(p1 % coarse.ny));
        acc.iter_mut().for_each(|a| *a = 0.0);
        for l in &lanes {
            let (dx, dy) = (l.x.0 - x1.0, l.x.1 - x1.1);
            let d = dx.hypot(dy).max(1e-6);
            let beta = dy.atan2(dx);
            let base = z12 - model.path_loss(d);
            for (h, hv) in harm.iter_mut().enumerate() {
                let k = model.harmonics[h].0;
                *hv = ((k * beta).cos(), (k * beta).sin());
            }
            g2.clear();
            g2.resize(l.w.len(), 0.0);
            for h in 0..nh {
                let (cb, sb) = (harm[h].0 as f32, harm[h].1 as f32);
                for ((g, cc), ss) in g2.iter_mut().zip(&l.c[h]).zip(&l.s[h]) {
                    *g += cb * cc - sb * ss;
                }
            }
            for k1 in 0..n_phi {
                let g1: f64 = (0..nh).map(|h| harm[h].0 * c1[k1][h].0 - harm[h].1 * c1[k1][h].1).sum();
                acc[k1] += gauss_sum((base - g1) as f32, &g2, &l.w, c) as f64;
            }
        }
        for k1 in 0..n_phi {
            msg[p1 * n_phi + k1] = if acc[k1] > 0.0 { acc[k1].ln() + lp2max + lnorm } else { f64::NEG_INFINITY };
        }
    }
    // fine posterior = A1 × interpolated message
    let mut post = anchor_log_post(model, a1, fine);
    for i in 0..fine.nx {
        for j in 0..fine.ny {
            // coarse cell coordinates of the fine center
            let u = (fine.x(i) - coarse.x0) / coarse.h - 0.5;
            let v = (fine.y(j) - coarse.y0) / coarse.h - 0.5;
            let (i0, j0) = (u.floor().clamp(0.0, (coarse.nx - 2) as f64) as usize, v.floor().clamp(0.0, (coarse.ny - 2) as f64) as usize);
            let (tu, tv) = ((u - i0 as f64).clamp(0.0, 1.0), (v - j0 as f64).clamp(0.0, 1.0));
            for k in 0..n_phi {
                let m = |a: usize, b: usize| msg[(a * coarse.ny + b) * n_phi + k];
                let corners = [m(i0, j0), m(i0 + 1, j0), m(i0, j0 + 1), m(i0 + 1, j0 + 1)];
                let f = fine.idx(i, j, k);
                if corners.iter().any(|c| !c.is_finite()) {
                    post[f] = f64::NEG_INFINITY;
                    continue;
                }
                let l = (1.0 - tu) * (1.0 - tv) * corners[0]
                    + tu * (1.0 - tv) * corners[1]
                    + (1.0 - tu) * tv * corners[2]
                    + tu * tv * corners[3];
                post[f] += l;
            }
        }
    }
    summarize(fine, &post)
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}
