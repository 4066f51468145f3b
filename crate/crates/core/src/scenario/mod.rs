//! Node geometry, scenario containers and the geometric primitives shared by
//! the measurement model and the inference engine.

mod generate;
mod io;

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use generate::{
    generate_library_scenario, generate_random_scenario, library_subregions, LibraryConfig,
    OrientationMode,
};
pub use io::{read_scenario, scenario_from_json, scenario_to_json, write_scenario};

/// Horizontal separations below this are treated as coincident in azimuth.
pub const HORIZONTAL_EPS: f64 = 1e-12;

/// Wraps an angle to `[-π, π)`.
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid(format!("cannot wrap non-finite angle {x}")));
    }
    Ok(wrap(x))
}

/// Infallible wrap for internal use on values known to be finite.
#[inline]
pub(crate) fn wrap(x: f64) -> f64 {
    let mut r = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

/// Wrapped difference `a - b` mapped to `(-π, π]`, used for orientation errors.
pub fn angle_error(a: f64, b: f64) -> f64 {
    let w = wrap(a - b);
    if w == -PI {
        PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Anchor,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl Dimensionality {
    pub fn count(self) -> usize {
        match self {
            Dimensionality::Two => 2,
            Dimensionality::Three => 3,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Dimensionality::Two),
            3 => Ok(Dimensionality::Three),
            _ => Err(invalid(format!("dimensionality must be 2 or 3, got {n}"))),
        }
    }
}

/// Position and azimuth of one node. 2D nodes carry `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub position: Vector3<f64>,
    orientation: f64,
    dim: Dimensionality,
    role: Role,
}

impl NodeState {
    pub fn new(id: usize, coords: &[f64], orientation: f64, role: Role) -> Result<Self> {
        let dim = Dimensionality::from_count(coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!("node {id}: non-finite coordinate")));
        }
        let z = if coords.len() == 3 { coords[2] } else { 0.0 };
        Ok(Self {
            id,
            position: Vector3::new(coords[0], coords[1], z),
            orientation: wrap_angle(orientation)?,
            dim,
            role,
        })
    }

    pub fn agent(id: usize, coords: &[f64], orientation: f64) -> Result<Self> {
        Self::new(id, coords, orientation, Role::Agent)
    }

    pub fn anchor(id: usize, coords: &[f64], orientation: f64) -> Result<Self> {
        Self::new(id, coords, orientation, Role::Anchor)
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn set_orientation(&mut self, phi: f64) -> Result<()> {
        self.orientation = wrap_angle(phi)?;
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> Dimensionality {
        self.dim
    }

    pub fn is_anchor(&self) -> bool {
        self.role == Role::Anchor
    }

    /// Coordinates truncated to the node's dimensionality.
    pub fn coords(&self) -> Vec<f64> {
        self.position.as_slice()[..self.dim.count()].to_vec()
    }
}

/// Euclidean distance between two nodes of equal dimensionality.
pub fn distance(a: &NodeState, b: &NodeState) -> Result<f64> {
    if a.dim != b.dim {
        return Err(invalid(format!(
            "dimensionality mismatch between nodes {} and {}",
            a.id, b.id
        )));
    }
    Ok((b.position - a.position).norm())
}

/// Azimuth of `j` as seen from `i`, relative to `i`'s orientation.
///
/// Only the horizontal projection enters, so 3D nodes stacked vertically are
/// degenerate.
pub fn angle_between(i: &NodeState, j: &NodeState) -> Result<f64> {
    let dx = j.position.x - i.position.x;
    let dy = j.position.y - i.position.y;
    if dx * dx + dy * dy <= HORIZONTAL_EPS * HORIZONTAL_EPS {
        return Err(Error::DegenerateGeometry(format!(
            "nodes {} and {} coincide in the horizontal plane",
            i.id, j.id
        )));
    }
    Ok(wrap(dy.atan2(dx) - i.orientation))
}

/// Axis-aligned prior region. For 2D scenarios the z-interval is `[0, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SupportBox {
    pub fn new_2d(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        Self::new([min[0], min[1], 0.0], [max[0], max[1], 0.0], Dimensionality::Two)
    }

    pub fn new_3d(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        Self::new(min, max, Dimensionality::Three)
    }

    fn new(min: [f64; 3], max: [f64; 3], dim: Dimensionality) -> Result<Self> {
        for k in 0..dim.count() {
            if !(min[k].is_finite() && max[k].is_finite()) || max[k] <= min[k] {
                return Err(invalid(format!(
                    "support box is empty along axis {k}: [{}, {}]",
                    min[k], max[k]
                )));
            }
        }
        if dim == Dimensionality::Two && (min[2] != 0.0 || max[2] != 0.0) {
            return Err(invalid("2D support box must have a zero z-interval"));
        }
        Ok(Self { min, max })
    }

    /// Square box `[0, side]²`.
    pub fn square(side: f64) -> Result<Self> {
        Self::new_2d([0.0, 0.0], [side, side])
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - 1e-9 && p[k] <= self.max[k] + 1e-9)
    }

    pub fn clamp(&self, p: &mut Vector3<f64>) {
        for k in 0..3 {
            p[k] = p[k].clamp(self.min[k], self.max[k]);
        }
    }

    pub fn volume(&self, dim: Dimensionality) -> f64 {
        let e = self.extent();
        (0..dim.count()).map(|k| e[k]).product()
    }
}

/// Pattern carried by anchor nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPattern {
    /// 0 dB in every direction.
    #[default]
    Uniform,
    /// Same directive pattern as the agents.
    Directive,
}

/// Immutable node set with anchor/agent partition and cooperation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    nodes: Vec<NodeState>,
    anchors: Vec<usize>,
    agents: Vec<usize>,
    /// Neighbor lists indexed by node id; empty for anchors.
    cooperation: Vec<Vec<usize>>,
    support: SupportBox,
    dim: Dimensionality,
    anchor_pattern: AnchorPattern,
}

impl Scenario {
    /// Builds a scenario and checks every structural invariant. Node ids must
    /// equal their index in `nodes`.
    pub fn new(
        nodes: Vec<NodeState>,
        cooperation: Vec<Vec<usize>>,
        support: SupportBox,
        dim: Dimensionality,
        anchor_pattern: AnchorPattern,
    ) -> Result<Self> {
        let s = Self::assemble(nodes, cooperation, support, dim, anchor_pattern);
        s.validate().map_err(|(_, e)| e)?;
        Ok(s)
    }

    pub(crate) fn assemble(
        nodes: Vec<NodeState>,
        mut cooperation: Vec<Vec<usize>>,
        support: SupportBox,
        dim: Dimensionality,
        anchor_pattern: AnchorPattern,
    ) -> Self {
        let anchors = nodes.iter().filter(|n| n.is_anchor()).map(|n| n.id).collect();
        let agents = nodes.iter().filter(|n| !n.is_anchor()).map(|n| n.id).collect();
        cooperation.resize(nodes.len(), Vec::new());
        for list in &mut cooperation {
            list.sort_unstable();
        }
        Self {
            nodes,
            anchors,
            agents,
            cooperation,
            support,
            dim,
            anchor_pattern,
        }
    }

    /// Returns the offending node index alongside the error so loaders can
    /// point at the source line.
    pub(crate) fn validate(&self) -> std::result::Result<(), (Option<usize>, Error)> {
        let err = |idx: Option<usize>, msg: String| (idx, Error::InvalidArgument(msg));
        for (k, n) in self.nodes.iter().enumerate() {
            if n.id != k {
                return Err(err(Some(k), format!("node at index {k} has id {}", n.id)));
            }
            if n.dim != self.dim {
                return Err(err(Some(k), format!("node {k} has wrong dimensionality")));
            }
            if !self.support.contains(&n.position) {
                return Err(err(Some(k), format!("node {k} lies outside the support region")));
            }
        }
        if self.anchors.is_empty() {
            return Err(err(None, "scenario needs at least one anchor".into()));
        }
        for (i, list) in self.cooperation.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            if self.nodes[i].is_anchor() {
                return Err(err(Some(i), format!("anchor {i} has a cooperation list")));
            }
            for w in list.windows(2) {
                if w[0] == w[1] {
                    return Err(err(Some(i), format!("agent {i} lists neighbor {} twice", w[0])));
                }
            }
            for &j in list {
                if j >= self.nodes.len() || self.nodes[j].is_anchor() {
                    return Err(err(Some(i), format!("agent {i} cooperates with non-agent {j}")));
                }
                if j == i {
                    return Err(err(Some(i), format!("agent {i} cooperates with itself")));
                }
                if self.cooperation[j].binary_search(&i).is_err() {
                    return Err(err(
                        Some(i),
                        format!("cooperation is not symmetric: {i} -> {j} without {j} -> {i}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &NodeState {
        &self.nodes[id]
    }

    pub fn anchor_ids(&self) -> &[usize] {
        &self.anchors
    }

    pub fn agent_ids(&self) -> &[usize] {
        &self.agents
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.cooperation[id]
    }

    pub fn cooperation(&self) -> &[Vec<usize>] {
        &self.cooperation
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn dim(&self) -> Dimensionality {
        self.dim
    }

    pub fn anchor_pattern(&self) -> AnchorPattern {
        self.anchor_pattern
    }

    pub fn with_anchor_pattern(mut self, pattern: AnchorPattern) -> Self {
        self.anchor_pattern = pattern;
        self
    }

    /// Unordered cooperating agent pairs `(i, j)` with `i < j`.
    pub fn agent_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &i in &self.agents {
            for &j in &self.cooperation[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Replaces the cooperation graph by the complete graph over agents,
    /// optionally dropping pairs farther apart than `max_range`.
    pub fn with_full_cooperation(mut self, max_range: Option<f64>) -> Self {
        let agents = self.agents.clone();
        let mut coop = vec![Vec::new(); self.nodes.len()];
        for (a, &i) in agents.iter().enumerate() {
            for &j in &agents[a + 1..] {
                let d = (self.nodes[i].position - self.nodes[j].position).norm();
                if max_range.map_or(true, |r| d <= r) {
                    coop[i].push(j);
                    coop[j].push(i);
                }
            }
        }
        for l in &mut coop {
            l.sort_unstable();
        }
        self.cooperation = coop;
        self
    }
}
