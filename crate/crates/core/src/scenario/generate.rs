use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{wrap, AnchorPattern, Dimensionality, NodeState, Role, Scenario, SupportBox};
use crate::error::{invalid, Result};

/// How agent orientations are drawn for synthetic scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "set")]
pub enum OrientationMode {
    /// Uniform over `[0, 2π)`.
    Continuous,
    /// Uniform over a finite set of angles.
    FiniteSet(Vec<f64>),
}

/// Uniform random scenario: agents and anchors i.i.d. in `support`, complete
/// cooperation graph. Anchors take ids `0..n_anchors`, agents follow.
pub fn generate_random_scenario(
    n_agents: usize,
    n_anchors: usize,
    support: &SupportBox,
    orientation_mode: &OrientationMode,
    seed: u64,
) -> Result<Scenario> {
    if n_agents == 0 || n_anchors == 0 {
        return Err(invalid("need at least one agent and one anchor"));
    }
    let dim = if support.max[2] > support.min[2] {
        Dimensionality::Three
    } else {
        Dimensionality::Two
    };
    // re-validate in case the box was built by hand
    match dim {
        Dimensionality::Two => {
            SupportBox::new_2d([support.min[0], support.min[1]], [support.max[0], support.max[1]])?
        }
        Dimensionality::Three => SupportBox::new_3d(support.min, support.max)?,
    };
    if let OrientationMode::FiniteSet(set) = orientation_mode {
        if set.is_empty() {
            return Err(invalid("finite orientation set is empty"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n_agents + n_anchors);
    for id in 0..n_agents + n_anchors {
        let coords: Vec<f64> = (0..dim.count())
            .map(|k| rng.gen_range(support.min[k]..support.max[k]))
            .collect();
        let role = if id < n_anchors { Role::Anchor } else { Role::Agent };
        let phi = match orientation_mode {
            OrientationMode::Continuous => rng.gen_range(0.0..2.0 * PI),
            OrientationMode::FiniteSet(set) => set[rng.gen_range(0..set.len())],
        };
        nodes.push(NodeState::new(id, &coords, phi, role)?);
    }
    let s = Scenario::assemble(nodes, Vec::new(), *support, dim, AnchorPattern::Uniform)
        .with_full_cooperation(None);
    s.validate().map_err(|(_, e)| e)?;
    Ok(s)
}

/// Geometry of the shelf scenario. Shelves run along y; nodes sit on both
/// long faces and look out into the corridors (`0` towards +x, `π` towards -x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub shelves: usize,
    pub positions_per_side: usize,
    pub heights: usize,
    pub y_spacing: f64,
    pub shelf_width: f64,
    pub corridor_width: f64,
    pub height_range: [f64; 2],
    /// One anchor at both the lowest and highest level at every shelf corner.
    pub double_anchors: bool,
    pub support_min: [f64; 3],
    pub support_max: [f64; 3],
    pub anchor_pattern: AnchorPattern,
    pub max_range: Option<f64>,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            shelves: 6,
            positions_per_side: 20,
            heights: 4,
            y_spacing: 0.2,
            shelf_width: 0.6,
            corridor_width: 1.1,
            height_range: [0.8, 1.8],
            double_anchors: false,
            support_min: [0.7, -2.0, 0.8],
            support_max: [14.3, 6.0, 1.8],
            anchor_pattern: AnchorPattern::Uniform,
            max_range: None,
        }
    }
}

impl LibraryConfig {
    /// Shortens every shelf by `scale` (rounding the node count per side).
    pub fn scaled_length(mut self, scale: f64) -> Self {
        self.positions_per_side = ((self.positions_per_side as f64) * scale).round().max(2.0) as usize;
        self
    }

    fn pitch(&self) -> f64 {
        self.shelf_width + self.corridor_width
    }

    /// x of the first shelf's left face; the block of shelves is centered in
    /// the support region.
    fn x_origin(&self) -> f64 {
        let span = (self.shelves as f64 - 1.0) * self.pitch() + self.shelf_width;
        0.5 * (self.support_min[0] + self.support_max[0]) - 0.5 * span
    }

    fn height(&self, h: usize) -> f64 {
        if self.heights == 1 {
            return self.height_range[0];
        }
        let [lo, hi] = self.height_range;
        lo + (hi - lo) * h as f64 / (self.heights - 1) as f64
    }

    /// x-coordinates of corridor centers between neighboring shelves.
    pub fn corridor_centers(&self) -> Vec<f64> {
        let x0 = self.x_origin();
        (0..self.shelves.saturating_sub(1))
            .map(|s| x0 + s as f64 * self.pitch() + self.shelf_width + 0.5 * self.corridor_width)
            .collect()
    }

    pub fn shelf_length(&self) -> f64 {
        (self.positions_per_side.saturating_sub(1)) as f64 * self.y_spacing
    }
}

/// Structured 3D shelf scenario with full cooperation between agents.
pub fn generate_library_scenario(cfg: &LibraryConfig) -> Result<Scenario> {
    if cfg.shelves == 0 || cfg.positions_per_side < 2 || cfg.heights == 0 {
        return Err(invalid("library needs shelves, at least 2 positions per side and 1 height"));
    }
    let support = SupportBox::new_3d(cfg.support_min, cfg.support_max)?;
    let x0 = cfg.x_origin();
    let last = cfg.positions_per_side - 1;
    let top = cfg.heights - 1;
    let mut nodes = Vec::new();
    for shelf in 0..cfg.shelves {
        for side in 0..2usize {
            let (x, phi) = if side == 0 {
                (x0 + shelf as f64 * cfg.pitch(), PI)
            } else {
                (x0 + shelf as f64 * cfg.pitch() + cfg.shelf_width, 0.0)
            };
            for pos in 0..cfg.positions_per_side {
                let y = pos as f64 * cfg.y_spacing;
                for h in 0..cfg.heights {
                    let corner = pos == 0 || pos == last;
                    let is_anchor = corner
                        && if cfg.double_anchors {
                            h == 0 || h == top
                        } else {
                            // alternate low/high around the four corners of a shelf
                            let low = (side + usize::from(pos == last)) % 2 == 0;
                            h == if low { 0 } else { top }
                        };
                    let role = if is_anchor { Role::Anchor } else { Role::Agent };
                    let id = nodes.len();
                    nodes.push(NodeState::new(id, &[x, y, cfg.height(h)], wrap(phi), role)?);
                }
            }
        }
    }
    let s = Scenario::assemble(nodes, Vec::new(), support, Dimensionality::Three, cfg.anchor_pattern)
        .with_full_cooperation(cfg.max_range);
    s.validate().map_err(|(_, e)| e)?;
    Ok(s)
}

/// Fifteen equally spaced fitting areas: one per corridor and per third of
/// the shelf length, each `3.5 m × 1 m` centered on the corridor axis and
/// spanning the full height range.
pub fn library_subregions(cfg: &LibraryConfig) -> Vec<SupportBox> {
    let len = cfg.shelf_length();
    let mut out = Vec::new();
    for xc in cfg.corridor_centers() {
        for k in 0..3 {
            let yc = len * (2 * k + 1) as f64 / 6.0;
            out.push(SupportBox {
                min: [xc - 1.75, yc - 0.5, cfg.support_min[2]],
                max: [xc + 1.75, yc + 0.5, cfg.support_max[2]],
            });
        }
    }
    out
}
