//! Scenario JSON documents. The writer emits one node per line so loader
//! errors can point at the offending node.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnchorPattern, Dimensionality, NodeState, Role, Scenario, SupportBox};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SupportDoc {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    pos: Vec<f64>,
    phi: f64,
    role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoopDoc {
    id: usize,
    neighbors: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    dimensionality: usize,
    support: SupportDoc,
    #[serde(default)]
    anchor_pattern: AnchorPattern,
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    cooperation: Vec<CoopDoc>,
}

pub fn scenario_to_json(s: &Scenario) -> String {
    let d = s.dim().count();
    let sup = s.support();
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"dimensionality\": {d},");
    let _ = writeln!(
        out,
        "  \"support\": {{\"min\": {}, \"max\": {}}},",
        json_floats(&sup.min[..d]),
        json_floats(&sup.max[..d])
    );
    let _ = writeln!(
        out,
        "  \"anchor_pattern\": {},",
        serde_json::to_string(&s.anchor_pattern()).expect("enum serializes")
    );
    out.push_str("  \"nodes\": [\n");
    for (k, n) in s.nodes().iter().enumerate() {
        let sep = if k + 1 == s.nodes().len() { "" } else { "," };
        let role = if n.is_anchor() { "anchor" } else { "agent" };
        let _ = writeln!(
            out,
            "    {{\"id\": {}, \"pos\": {}, \"phi\": {}, \"role\": \"{role}\"}}{sep}",
            n.id,
            json_floats(&n.coords()),
            fmt_f64(n.orientation())
        );
    }
    out.push_str("  ],\n  \"cooperation\": [\n");
    let agents = s.agent_ids();
    for (k, &i) in agents.iter().enumerate() {
        let sep = if k + 1 == agents.len() { "" } else { "," };
        let list: Vec<String> = s.neighbors(i).iter().map(|j| j.to_string()).collect();
        let _ = writeln!(out, "    {{\"id\": {i}, \"neighbors\": [{}]}}{sep}", list.join(", "));
    }
    out.push_str("  ]\n}\n");
    out
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip representation
    let s = format!("{x:?}");
    s
}

fn json_floats(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scenario_to_json(s))?;
    Ok(())
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

/// Parses and validates a scenario document.
pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Invalid {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let top = |msg: String| Error::Invalid { line: line_of_key(text, "dimensionality"), msg };
    let dim = Dimensionality::from_count(doc.dimensionality).map_err(|e| top(e.to_string()))?;
    let d = dim.count();
    if doc.support.min.len() != d || doc.support.max.len() != d {
        return Err(Error::Invalid {
            line: line_of_key(text, "support"),
            msg: format!("support needs {d} coordinates per bound"),
        });
    }
    let support = match dim {
        Dimensionality::Two => SupportBox::new_2d(
            [doc.support.min[0], doc.support.min[1]],
            [doc.support.max[0], doc.support.max[1]],
        ),
        Dimensionality::Three => SupportBox::new_3d(
            [doc.support.min[0], doc.support.min[1], doc.support.min[2]],
            [doc.support.max[0], doc.support.max[1], doc.support.max[2]],
        ),
    }
    .map_err(|e| Error::Invalid { line: line_of_key(text, "support"), msg: e.to_string() })?;

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (k, n) in doc.nodes.iter().enumerate() {
        let node_err = |msg: String| Error::Invalid { line: element_line(text, "nodes", k), msg };
        if n.pos.len() != d {
            return Err(node_err(format!("node {} has {} coordinates, expected {d}", n.id, n.pos.len())));
        }
        nodes.push(NodeState::new(n.id, &n.pos, n.phi, n.role).map_err(|e| node_err(e.to_string()))?);
    }

    let mut coop = vec![Vec::new(); nodes.len()];
    for (k, c) in doc.cooperation.iter().enumerate() {
        if c.id >= nodes.len() {
            return Err(Error::Invalid {
                line: element_line(text, "cooperation", k),
                msg: format!("cooperation entry for unknown node {}", c.id),
            });
        }
        coop[c.id] = c.neighbors.clone();
    }

    let s = Scenario::assemble(nodes, coop, support, dim, doc.anchor_pattern);
    if let Err((idx, e)) = s.validate() {
        let line = match idx {
            Some(i) => {
                // point at the cooperation entry if that is where the problem lives
                let coop_idx = doc.cooperation.iter().position(|c| c.id == i);
                let in_coop = e.to_string().contains("cooper") || e.to_string().contains("neighbor");
                match (in_coop, coop_idx) {
                    (true, Some(ci)) => element_line(text, "cooperation", ci),
                    _ => element_line(text, "nodes", i.min(doc.nodes.len().saturating_sub(1))),
                }
            }
            None => line_of_key(text, "nodes"),
        };
        return Err(Error::Invalid { line, msg: e.to_string() });
    }
    Ok(s)
}

fn line_at(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> usize {
    text.find(&format!("\"{key}\"")).map_or(1, |p| line_at(text, p))
}

/// Line of the `index`-th object inside the top-level array `key`.
fn element_line(text: &str, key: &str, index: usize) -> usize {
    let Some(start) = text.find(&format!("\"{key}\"")) else { return 1 };
    let bytes = text.as_bytes();
    let Some(open) = text[start..].find('[').map(|o| start + o) else { return line_at(text, start) };
    let mut depth = 0usize;
    let mut in_str = false;
    let mut seen = 0usize;
    let mut k = open + 1;
    while k < bytes.len() {
        let b = bytes[k];
        if in_str {
            if b == b'\\' {
                k += 1;
            } else if b == b'"' {
                in_str = false;
            }
        } else {
            match b {
                b'"' => in_str = true,
                b'{' | b'[' => {
                    if depth == 0 && b == b'{' {
                        if seen == index {
                            return line_at(text, k);
                        }
                        seen += 1;
                    }
                    depth += 1;
                }
                b'}' | b']' => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                }
                _ => {}
            }
        }
        k += 1;
    }
    line_at(text, start)
}
