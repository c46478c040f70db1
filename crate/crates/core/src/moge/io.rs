//! JSON model files with the weights as one base64 blob of little-endian
//! `f64` values in declaration order.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Architecture, Model, MogeError, Net, PhaseCurve, TrainConfig};
use crate::dataset::Normalization;
use crate::nn::Params;

pub const MAGIC: &str = "COPFMODEL01";

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    arch: Architecture,
    l_tilde: usize,
    m_tilde: usize,
    n_buses: usize,
    norm: Normalization,
    bind_threshold: f64,
    seed: u64,
    cfg: TrainConfig,
    curve: Vec<PhaseCurve>,
    /// One list per parameter set.
    tensors: Vec<Vec<Tensor>>,
    weights: String,
}

pub fn to_json(m: &Model) -> String {
    let sets = m.net.param_sets();
    let mut bytes = Vec::new();
    for p in &sets {
        for v in p.flat() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tensors = sets
        .iter()
        .map(|p| {
            p.names
                .iter()
                .zip(p.shapes())
                .map(|(name, (rows, cols))| Tensor {
                    name: name.clone(),
                    rows,
                    cols,
                })
                .collect()
        })
        .collect();
    let file = ModelFile {
        magic: MAGIC.into(),
        arch: m.net.architecture(),
        l_tilde: m.l_tilde,
        m_tilde: m.m_tilde,
        n_buses: m.n_buses,
        norm: m.norm.clone(),
        bind_threshold: m.bind_threshold,
        seed: m.seed,
        cfg: m.cfg.clone(),
        curve: m.curve.clone(),
        tensors,
        weights: STANDARD.encode(bytes),
    };
    serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
}

pub fn from_json(text: &str) -> Result<Model, MogeError> {
    let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| MogeError::Format(e.to_string()))?;
    match probe.get("magic").and_then(|v| v.as_str()) {
        Some(MAGIC) => {}
        Some(other) => return Err(MogeError::Format(format!("unknown version {other:?}"))),
        None => return Err(MogeError::Format("missing magic".into())),
    }
    let file: ModelFile = serde_json::from_value(probe).map_err(|e| MogeError::Format(e.to_string()))?;
    let bytes = STANDARD
        .decode(file.weights.as_bytes())
        .map_err(|e| MogeError::Format(format!("weights: {e}")))?;
    let total: usize = file.tensors.iter().flatten().map(|t| t.rows * t.cols).sum();
    if bytes.len() != 8 * total {
        return Err(MogeError::Format(format!(
            "weight blob has {} bytes, tensors need {}",
            bytes.len(),
            8 * total
        )));
    }
    let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let sets = file
        .tensors
        .iter()
        .map(|set| {
            let mut p = Params::new();
            for t in set {
                let v: Vec<f64> = vals.by_ref().take(t.rows * t.cols).collect();
                p.push(t.name.clone(), Array2::from_shape_vec((t.rows, t.cols), v).expect("sized"));
            }
            p
        })
        .collect();
    let net = Net::from_parts(file.arch, sets)?;
    let d = file.l_tilde + file.m_tilde;
    if file.norm.shift.len() != d || file.norm.scale.len() != d {
        return Err(MogeError::Format("normalization does not match dimensions".into()));
    }
    Ok(Model {
        net,
        norm: file.norm,
        l_tilde: file.l_tilde,
        m_tilde: file.m_tilde,
        n_buses: file.n_buses,
        bind_threshold: file.bind_threshold,
        seed: file.seed,
        cfg: file.cfg,
        curve: file.curve,
    })
}

pub fn save(m: &Model, path: &Path) -> Result<(), MogeError> {
    fs::write(path, to_json(m))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, MogeError> {
    from_json(&fs::read_to_string(path)?)
}
