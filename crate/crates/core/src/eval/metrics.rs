use std::collections::HashMap;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::AgentEstimate;
use crate::scenario::{angle_error, NodeState, Scenario};

/// Error of one agent estimate against the true state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentError {
    pub agent_id: usize,
    pub est: Vector3<f64>,
    pub phi_est: Option<f64>,
    pub truth: Vector3<f64>,
    pub phi_true: f64,
    pub pos_err_m: f64,
    pub ori_err_rad: Option<f64>,
}

fn matched<'a>(estimates: &'a [AgentEstimate], truth: &'a [NodeState]) -> Result<Vec<(&'a AgentEstimate, &'a NodeState)>> {
    let by_id: HashMap<usize, &NodeState> = truth.iter().map(|n| (n.id, n)).collect();
    if by_id.len() != truth.len() || estimates.len() != truth.len() {
        return Err(invalid(format!("{} estimates for {} true states", estimates.len(), truth.len())));
    }
    let mut seen = std::collections::HashSet::new();
    estimates
        .iter()
        .map(|e| {
            if !seen.insert(e.id) {
                return Err(invalid(format!("agent {} estimated twice", e.id)));
            }
            by_id.get(&e.id).map(|t| (e, *t)).ok_or_else(|| invalid(format!("agent {} has no true state", e.id)))
        })
        .collect()
}

/// Per-agent errors; `truth` must hold exactly the estimated ids.
pub fn agent_errors(estimates: &[AgentEstimate], truth: &[NodeState]) -> Result<Vec<AgentError>> {
    Ok(matched(estimates, truth)?
        .into_iter()
        .map(|(e, t)| AgentError {
            agent_id: e.id,
            est: e.position,
            phi_est: e.orientation,
            truth: t.position,
            phi_true: t.orientation(),
            pos_err_m: (e.position - t.position).norm(),
            ori_err_rad: e.orientation.map(|p| angle_error(p, t.orientation()).abs()),
        })
        .collect())
}

/// True states of the scenario's agents.
pub fn agent_truth(scenario: &Scenario) -> Vec<NodeState> {
    scenario.agent_ids().iter().map(|&i| scenario.node(i).clone()).collect()
}

/// `√(mean e²)`; zero for an empty list.
pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn rmse_position(estimates: &[AgentEstimate], truth: &[NodeState]) -> Result<f64> {
    let e: Vec<f64> = matched(estimates, truth)?.iter().map(|(e, t)| (e.position - t.position).norm()).collect();
    Ok(rms(&e))
}

/// Wrapped orientation RMSE in radians. Fails if an estimate has no orientation.
pub fn rmse_orientation(estimates: &[AgentEstimate], truth: &[NodeState]) -> Result<f64> {
    let e = matched(estimates, truth)?
        .iter()
        .map(|(e, t)| {
            e.orientation
                .map(|p| angle_error(p, t.orientation()))
                .ok_or_else(|| invalid(format!("agent {} has no orientation estimate", e.id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rms(&e))
}

/// Empirical CDF at every distinct error value.
pub fn cumulative_frequency(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(invalid("cumulative frequency of an empty error list"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(invalid("errors must be finite"));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &e) in s.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => out.push((e, frac)),
        }
    }
    Ok(out)
}

/// Fraction of errors at or below `threshold`.
pub fn cf_at(curve: &[(f64, f64)], threshold: f64) -> f64 {
    match curve.partition_point(|&(e, _)| e <= threshold) {
        0 => 0.0,
        k => curve[k - 1].1,
    }
}

pub fn write_cf_csv<W: Write>(curve: &[(f64, f64)], w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["threshold", "fraction"])?;
    for (t, f) in curve {
        c.write_record([t.to_string(), f.to_string()])?;
    }
    c.flush()?;
    Ok(())
}

fn coord_header(prefix: &str, suffix: &str, dim: usize) -> Vec<String> {
    ["x", "y", "z"][..dim].iter().map(|a| format!("{prefix}{a}{suffix}")).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Estimates CSV; `lead` prepends fixed columns (e.g. run and method) to each row.
pub(crate) fn write_error_rows<W: Write>(
    w: &mut csv::Writer<W>,
    dim: usize,
    lead: &[String],
    rows: &[AgentError],
) -> Result<()> {
    for r in rows {
        let mut rec: Vec<String> = lead.to_vec();
        rec.push(r.agent_id.to_string());
        rec.extend(r.est.iter().take(dim).map(|x| x.to_string()));
        rec.push(opt(r.phi_est));
        rec.extend(r.truth.iter().take(dim).map(|x| x.to_string()));
        rec.push(r.phi_true.to_string());
        rec.push(r.pos_err_m.to_string());
        rec.push(opt(r.ori_err_rad));
        w.write_record(&rec)?;
    }
    Ok(())
}

pub(crate) fn error_header(dim: usize, lead: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    h.push("agent_id".into());
    h.extend(coord_header("", "_est", dim));
    h.push("phi_est".into());
    h.extend(coord_header("", "_true", dim));
    h.extend(["phi_true", "pos_err_m", "ori_err_rad"].map(String::from));
    h
}

/// `agent_id, x_est, y_est[, z_est], phi_est, x_true, y_true[, z_true], phi_true, pos_err_m, ori_err_rad`.
/// Orientation cells are empty when the method does not estimate it.
pub fn write_estimates_csv<W: Write>(errors: &[AgentError], dim: usize, w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(error_header(dim, &[]))?;
    write_error_rows(&mut c, dim, &[], errors)?;
    c.flush()?;
    Ok(())
}
