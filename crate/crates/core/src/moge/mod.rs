//! Dual predictors: the mixture of gradient experts, its two experts on
//! their own, and two classification baselines.

mod io;
mod nets;
mod train;

pub use io::{from_json, load, save, to_json, MAGIC};
pub use nets::{Icnn, IcnnArch, Mgn, MgnArch, Mlp, MlpArch, Ridge, RidgeArch};
pub use train::{fit_classifier, fit_regressor, train, Trainable};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Normalization;
use crate::nn::{Activation, AdamConfig, Params};
use crate::problem::ParamPoint;

#[derive(Debug, Error)]
pub enum MogeError {
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ridge normal equations are singular; raise alpha")]
    SingularNormalEquations,
    #[error("{0} models do not predict duals")]
    NotARegressor(PredictorKind),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Moge,
    Icnn,
    Mgn,
    Deep,
    Ridge,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::Moge,
        PredictorKind::Icnn,
        PredictorKind::Mgn,
        PredictorKind::Deep,
        PredictorKind::Ridge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Moge => "moge",
            PredictorKind::Icnn => "icnn",
            PredictorKind::Mgn => "mgn",
            PredictorKind::Deep => "deep",
            PredictorKind::Ridge => "ridge",
        }
    }

    pub fn is_regressor(self) -> bool {
        matches!(self, PredictorKind::Moge | PredictorKind::Icnn | PredictorKind::Mgn)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    /// Learning rate at the last step relative to `adam.lr`, reached by
    /// geometric decay; 1 keeps it constant.
    pub lr_decay: f64,
    /// ICNN hidden widths; empty means `(d/2, 300, 150, d)`.
    pub icnn_widths: Vec<usize>,
    pub mgn_rank: usize,
    pub mgn_hidden: usize,
    pub gate_hidden: usize,
    /// Loss weight on binding rows is `bind_weight * n_buses`.
    pub bind_weight: f64,
    /// Also weight equality outputs in the gate loss.
    pub weight_mu: bool,
    /// Predicted-binding threshold relative to the largest training dual.
    pub bind_rel: f64,
    pub ridge_alpha: f64,
    /// Deep classifier hidden widths; empty means the ICNN's first three.
    pub deep_widths: Vec<usize>,
    /// Batch losses are logged every `log_every` steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 64,
            adam: AdamConfig::default(),
            lr_decay: 1.0,
            icnn_widths: Vec::new(),
            mgn_rank: 200,
            mgn_hidden: 128,
            gate_hidden: 100,
            bind_weight: 100.0,
            weight_mu: false,
            bind_rel: 1e-4,
            ridge_alpha: 1e-2,
            deep_widths: Vec::new(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn icnn_arch(&self, dim: usize) -> IcnnArch {
        let widths = if self.icnn_widths.is_empty() {
            vec![(dim / 2).max(1), 300, 150, dim]
        } else {
            self.icnn_widths.clone()
        };
        IcnnArch {
            dim,
            widths,
            activation: Activation::Elu,
        }
    }

    pub fn mgn_arch(&self, dim: usize) -> MgnArch {
        MgnArch {
            dim,
            rank: self.mgn_rank.min(dim),
            hidden: self.mgn_hidden,
            activations: vec![Activation::EluPlusOne, Activation::Softplus],
        }
    }

    pub fn gate_arch(&self, dim: usize) -> MlpArch {
        MlpArch {
            sizes: vec![dim, self.gate_hidden, dim],
            activation: Activation::LeakyRelu,
        }
    }

    pub fn deep_arch(&self, dim: usize, outputs: usize) -> MlpArch {
        let mut sizes = vec![dim];
        if self.deep_widths.is_empty() {
            sizes.extend(self.icnn_arch(dim).widths.iter().take(3));
        } else {
            sizes.extend(&self.deep_widths);
        }
        sizes.push(outputs);
        MlpArch {
            sizes,
            activation: Activation::Elu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub phase: String,
    /// Loss over the whole training split before the first step.
    pub initial_loss: f64,
    /// Loss over the whole training split after the last step.
    pub final_loss: f64,
    /// `(step, batch loss)` pairs.
    pub batch_losses: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    Moge { icnn: Icnn, mgn: Mgn, gate: Mlp },
    Icnn(Icnn),
    Mgn(Mgn),
    Deep(Mlp),
    Ridge(Ridge),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Moge { icnn: IcnnArch, mgn: MgnArch, gate: MlpArch },
    Icnn { icnn: IcnnArch },
    Mgn { mgn: MgnArch },
    Deep { mlp: MlpArch },
    Ridge { ridge: RidgeArch },
}

impl Net {
    pub fn kind(&self) -> PredictorKind {
        match self {
            Net::Moge { .. } => PredictorKind::Moge,
            Net::Icnn(_) => PredictorKind::Icnn,
            Net::Mgn(_) => PredictorKind::Mgn,
            Net::Deep(_) => PredictorKind::Deep,
            Net::Ridge(_) => PredictorKind::Ridge,
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Net::Moge { icnn, mgn, gate } => Architecture::Moge {
                icnn: icnn.arch.clone(),
                mgn: mgn.arch.clone(),
                gate: gate.arch.clone(),
            },
            Net::Icnn(n) => Architecture::Icnn { icnn: n.arch.clone() },
            Net::Mgn(n) => Architecture::Mgn { mgn: n.arch.clone() },
            Net::Deep(n) => Architecture::Deep { mlp: n.arch.clone() },
            Net::Ridge(n) => Architecture::Ridge { ridge: n.arch.clone() },
        }
    }

    /// Parameter sets in declaration order.
    pub fn param_sets(&self) -> Vec<&Params> {
        match self {
            Net::Moge { icnn, mgn, gate } => vec![&icnn.params, &mgn.params, &gate.params],
            Net::Icnn(n) => vec![&n.params],
            Net::Mgn(n) => vec![&n.params],
            Net::Deep(n) => vec![&n.params],
            Net::Ridge(n) => vec![&n.params],
        }
    }

    pub fn from_parts(arch: Architecture, mut sets: Vec<Params>) -> Result<Net, MogeError> {
        let want = match &arch {
            Architecture::Moge { .. } => 3,
            _ => 1,
        };
        if sets.len() != want {
            return Err(MogeError::Format(format!("expected {want} parameter sets, found {}", sets.len())));
        }
        let mut next = || sets.remove(0);
        Ok(match arch {
            Architecture::Moge { icnn, mgn, gate } => Net::Moge {
                icnn: Icnn::from_parts(icnn, next())?,
                mgn: Mgn::from_parts(mgn, next())?,
                gate: Mlp::from_parts(gate, next())?,
            },
            Architecture::Icnn { icnn } => Net::Icnn(Icnn::from_parts(icnn, next())?),
            Architecture::Mgn { mgn } => Net::Mgn(Mgn::from_parts(mgn, next())?),
            Architecture::Deep { mlp } => Net::Deep(Mlp::from_parts(mlp, next())?),
            Architecture::Ridge { ridge } => Net::Ridge(Ridge::from_parts(ridge, next())?),
        })
    }
}

/// Mixture `w * a + (1 - w) * b` with `w = sigmoid(logits)`.
pub fn mix(logits: &Array2<f64>, a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let w = logits.mapv(|v| Activation::Sigmoid.f(v));
    b + &(&w * &(a - b))
}

/// A trained predictor together with the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Net,
    pub norm: Normalization,
    pub l_tilde: usize,
    pub m_tilde: usize,
    pub n_buses: usize,
    /// Predicted `lam~` above this value counts as binding.
    pub bind_threshold: f64,
    pub seed: u64,
    pub cfg: TrainConfig,
    pub curve: Vec<PhaseCurve>,
}

impl Model {
    pub fn kind(&self) -> PredictorKind {
        self.net.kind()
    }

    pub fn dim(&self) -> usize {
        self.l_tilde + self.m_tilde
    }

    /// Normalized inputs, one row per point.
    pub fn inputs(&self, pts: &[&ParamPoint]) -> Result<Array2<f64>, MogeError> {
        let d = self.dim();
        let mut u = Array2::zeros((pts.len(), d));
        for (r, pt) in pts.iter().enumerate() {
            let got = pt.gamma.len() + pt.xi.len();
            if got != d || pt.gamma.len() != self.l_tilde {
                return Err(MogeError::DimensionMismatch { expected: d, got });
            }
            for (j, v) in self.norm.input(pt).into_iter().enumerate() {
                u[(r, j)] = v;
            }
        }
        Ok(u)
    }

    /// Regression output in model units.
    pub fn forward_normalized(&self, u: &Array2<f64>) -> Result<Array2<f64>, MogeError> {
        match &self.net {
            Net::Moge { icnn, mgn, gate } => Ok(mix(&gate.forward(u), &icnn.grad(u), &mgn.forward(u))),
            Net::Icnn(n) => Ok(n.grad(u)),
            Net::Mgn(n) => Ok(n.forward(u)),
            _ => Err(MogeError::NotARegressor(self.kind())),
        }
    }

    /// Predicted `(-lam~, -mu~)` in original units.
    pub fn predict_duals(&self, pt: &ParamPoint) -> Result<Vec<f64>, MogeError> {
        Ok(self.predict_duals_batch(&[pt])?.remove(0))
    }

    pub fn predict_duals_batch(&self, pts: &[&ParamPoint]) -> Result<Vec<Vec<f64>>, MogeError> {
        let y = self.forward_normalized(&self.inputs(pts)?)?;
        Ok(y.rows().into_iter().map(|r| self.norm.output(&r.to_vec())).collect())
    }

    pub fn predict_binding(&self, pt: &ParamPoint) -> Result<Vec<usize>, MogeError> {
        Ok(self.predict_binding_batch(&[pt])?.remove(0))
    }

    pub fn predict_binding_batch(&self, pts: &[&ParamPoint]) -> Result<Vec<Vec<usize>>, MogeError> {
        let u = self.inputs(pts)?;
        let l = self.l_tilde;
        match &self.net {
            Net::Deep(n) => {
                let z = n.forward(&u);
                Ok(z.rows().into_iter().map(|r| (0..l).filter(|&i| r[i] > 0.0).collect()).collect())
            }
            Net::Ridge(n) => {
                let s = n.scores(&u);
                Ok(s.rows().into_iter().map(|r| (0..l).filter(|&i| r[i] > 0.0).collect()).collect())
            }
            _ => {
                let y = self.forward_normalized(&u)?;
                Ok(y.rows()
                    .into_iter()
                    .map(|r| binding_from_duals(&self.norm.output(&r.to_vec())[..l], self.bind_threshold))
                    .collect())
            }
        }
    }

    /// Mixture weights for the mixture model.
    pub fn gate_weights(&self, pt: &ParamPoint) -> Result<Vec<f64>, MogeError> {
        let Net::Moge { gate, .. } = &self.net else {
            return Err(MogeError::NotARegressor(self.kind()));
        };
        let u = self.inputs(&[pt])?;
        Ok(gate.forward(&u).row(0).iter().map(|&v| Activation::Sigmoid.f(v)).collect())
    }
}

/// Indices whose dual `-neg_dual`, clipped at zero, exceeds `threshold`.
pub fn binding_from_duals(neg_dual: &[f64], threshold: f64) -> Vec<usize> {
    (0..neg_dual.len()).filter(|&i| (-neg_dual[i]).max(0.0) > threshold).collect()
}

/// The scalar ICNN value for normalized inputs.
pub fn icnn_value(icnn: &Icnn, u: &[f64]) -> f64 {
    let x = Array2::from_shape_vec((1, u.len()), u.to_vec()).expect("row");
    icnn.value(&x)[(0, 0)]
}

pub fn icnn_grad(icnn: &Icnn, u: &[f64]) -> Vec<f64> {
    let x = Array2::from_shape_vec((1, u.len()), u.to_vec()).expect("row");
    icnn.grad(&x).row(0).to_vec()
}

pub fn mgn_forward(mgn: &Mgn, u: &[f64]) -> Vec<f64> {
    let x = Array2::from_shape_vec((1, u.len()), u.to_vec()).expect("row");
    mgn.forward(&x).row(0).to_vec()
}
