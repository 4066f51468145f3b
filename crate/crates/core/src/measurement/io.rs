//! Measurement CSV (`type,i,j,z_db`) and model-parameter JSON.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentLink, AnchorLink, AntennaModel, MeasurementSet, ModelParams};
use crate::error::{Error, Result};

pub fn measurements_to_csv<W: Write>(set: &MeasurementSet, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["type", "i", "j", "z_db"])?;
    for l in &set.anchor_links {
        wr.write_record(["anchor", &l.anchor.to_string(), &l.agent.to_string(), &format!("{:.16e}", l.z_db)])?;
    }
    for l in &set.agent_links {
        wr.write_record(["agent", &l.i.to_string(), &l.j.to_string(), &format!("{:.16e}", l.z_db)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn measurements_from_csv<R: Read>(r: R) -> Result<MeasurementSet> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["type", "i", "j", "z_db"] {
        return Err(Error::Invalid { line: 1, msg: "expected header type,i,j,z_db".into() });
    }
    let mut set = MeasurementSet::default();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Invalid { line, msg };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let i: usize = rec[1].parse().map_err(|_| bad(format!("bad id {:?}", &rec[1])))?;
        let j: usize = rec[2].parse().map_err(|_| bad(format!("bad id {:?}", &rec[2])))?;
        let z: f64 = rec[3].parse().map_err(|_| bad(format!("bad value {:?}", &rec[3])))?;
        match &rec[0] {
            "anchor" => set.anchor_links.push(AnchorLink { anchor: i, agent: j, z_db: z }),
            "agent" => set.agent_links.push(AgentLink { i, j, z_db: z }),
            other => return Err(bad(format!("unknown link type {other:?}"))),
        }
    }
    Ok(set)
}

pub fn write_measurements(set: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    measurements_to_csv(set, std::fs::File::create(path)?)
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    measurements_from_csv(std::fs::File::open(path)?)
}

/// On-disk form of a measurement model and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub model_k: usize,
    #[serde(rename = "P_db")]
    pub p_db: f64,
    pub n: f64,
    pub xi: Vec<f64>,
    pub sigma_db: f64,
    pub d0_m: f64,
}

impl ParamsDoc {
    pub fn new(model: &AntennaModel, p: &ModelParams) -> Self {
        Self { model_k: model.index, p_db: p.p_db, n: p.n, xi: p.xi.clone(), sigma_db: p.sigma_db, d0_m: p.d0_m }
    }

    /// Resolves `model_k` to the harmonic family and validates the parameters.
    pub fn into_parts(self) -> Result<(AntennaModel, ModelParams)> {
        let model = AntennaModel::from_index(self.model_k);
        let params = ModelParams { p_db: self.p_db, n: self.n, xi: self.xi, sigma_db: self.sigma_db, d0_m: self.d0_m };
        params.validate(&model)?;
        Ok((model, params))
    }
}

pub fn params_to_json(model: &AntennaModel, p: &ModelParams) -> String {
    serde_json::to_string_pretty(&ParamsDoc::new(model, p)).expect("params serialize")
}

pub fn params_from_json(text: &str) -> Result<(AntennaModel, ModelParams)> {
    let doc: ParamsDoc = serde_json::from_str(text)?;
    doc.into_parts()
}

pub fn write_params(model: &AntennaModel, p: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, params_to_json(model, p))?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<(AntennaModel, ModelParams)> {
    params_from_json(&std::fs::read_to_string(path)?)
}
