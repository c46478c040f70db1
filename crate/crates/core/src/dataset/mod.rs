//! Training data for the dual predictors: uniform sampling of the parameter
//! box with infeasibility rejection, convex-hull augmentation, and
//! normalization statistics.

mod io;

pub use io::{load, save, MAGIC};

use log::{info, warn};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{GammaKind, ModelKind, ParamPoint, ParametricCopf, ProblemError};
use crate::solver::{solve, SolveOptions, SolveStatus};


/// Load range relative to nominal.
pub const LOAD_RANGE: (f64, f64) = (0.25, 1.75);
/// Half-width of the range used for parameters whose nominal value is zero.
pub const ZERO_BAND: f64 = 1e-3;
/// Largest number of support points mixed by one hull draw.
pub const HULL_SUPPORT: usize = 50;
const HULL_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty sampling interval for parameter {0}")]
    EmptyInterval(usize),
    #[error("only {0} feasible draws in phase 1, need at least 2")]
    TooFewFeasible(usize),
    #[error("hull point {0} stayed unsolvable after retries")]
    HullInfeasible(usize),
    #[error("dataset file: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBounds {
    pub gamma_lo: Vec<f64>,
    pub gamma_hi: Vec<f64>,
    pub xi_lo: Vec<f64>,
    pub xi_hi: Vec<f64>,
}

impl SamplingBounds {
    /// Rejects any interval that is empty or degenerate.
    pub fn new(gamma_lo: Vec<f64>, gamma_hi: Vec<f64>, xi_lo: Vec<f64>, xi_hi: Vec<f64>) -> Result<Self, DatasetError> {
        let b = SamplingBounds {
            gamma_lo,
            gamma_hi,
            xi_lo,
            xi_hi,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let lo = self.gamma_lo.iter().chain(&self.xi_lo);
        let hi = self.gamma_hi.iter().chain(&self.xi_hi);
        for (k, (l, h)) in lo.zip(hi).enumerate() {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(DatasetError::EmptyInterval(k));
            }
        }
        if self.gamma_lo.len() != self.gamma_hi.len() || self.xi_lo.len() != self.xi_hi.len() {
            return Err(DatasetError::SchemaMismatch("bound lengths differ".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.gamma_lo.len() + self.xi_lo.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ParamPoint {
        let draw = |lo: &[f64], hi: &[f64], rng: &mut dyn rand::RngCore| -> Vec<f64> {
            lo.iter().zip(hi).map(|(&l, &h)| rng.random_range(l..h)).collect()
        };
        let gamma = draw(&self.gamma_lo, &self.gamma_hi, rng);
        let xi = draw(&self.xi_lo, &self.xi_hi, rng);
        ParamPoint { gamma, xi }
    }
}

fn relative_band(v: f64, eps: f64) -> (f64, f64) {
    if v == 0.0 {
        (-ZERO_BAND, ZERO_BAND)
    } else {
        (v - eps * v.abs(), v + eps * v.abs())
    }
}

/// Loads in `[0.25, 1.75]` times nominal, thermal ratings `(1 -+ eps)` times
/// nominal before squaring, other `gamma` entries `+-eps` relative.
pub fn default_bounds(p: &ParametricCopf, eps: f64) -> Result<SamplingBounds, DatasetError> {
    let mut gamma_lo = Vec::with_capacity(p.l_tilde());
    let mut gamma_hi = Vec::with_capacity(p.l_tilde());
    for (kind, &g) in p.gamma_kind.iter().zip(&p.gamma_nominal) {
        let (l, h) = match *kind {
            GammaKind::Thermal { smax } => (((1.0 - eps) * smax).powi(2), ((1.0 + eps) * smax).powi(2)),
            GammaKind::SlackLower | GammaKind::SlackUpper | GammaKind::Other => relative_band(g, eps),
        };
        gamma_lo.push(l);
        gamma_hi.push(h);
    }
    let (mut xi_lo, mut xi_hi) = (Vec::new(), Vec::new());
    for &v in &p.xi_nominal {
        let (l, h) = if v == 0.0 {
            (-ZERO_BAND, ZERO_BAND)
        } else {
            let (a, b) = (LOAD_RANGE.0 * v, LOAD_RANGE.1 * v);
            (a.min(b), a.max(b))
        };
        xi_lo.push(l);
        xi_hi.push(h);
    }
    SamplingBounds::new(gamma_lo, gamma_hi, xi_lo, xi_hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub point: ParamPoint,
    /// Optimal `g~` duals in original indexing.
    pub lam_tilde: Vec<f64>,
    pub mu_tilde: Vec<f64>,
}

impl Sample {
    /// Regression target `(-lam~, -mu~)`, the value-function gradient.
    pub fn target(&self) -> Vec<f64> {
        self.lam_tilde.iter().chain(&self.mu_tilde).map(|v| -v).collect()
    }

    /// Rows of `g~` whose multiplier exceeds the scaled dual threshold.
    pub fn binding(&self) -> Vec<usize> {
        let big = self
            .lam_tilde
            .iter()
            .chain(&self.mu_tilde)
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let tau = crate::analysis::TAU_BIND * big;
        (0..self.lam_tilde.len()).filter(|&i| self.lam_tilde[i] > tau).collect()
    }
}

/// Input standardization `u = (v - shift) / scale` and a global output
/// factor: predicted duals are `out_scale * model(u) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub out_scale: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Normalization {
        Normalization {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
            out_scale: 1.0,
        }
    }

    /// Mean and standard deviation per input, and the largest target
    /// magnitude after the input rescaling.
    pub fn fit(samples: &[Sample], idx: &[usize]) -> Normalization {
        let dim = samples[idx[0]].point.gamma.len() + samples[idx[0]].point.xi.len();
        let n = idx.len() as f64;
        let mut shift = vec![0.0; dim];
        for &i in idx {
            for (s, v) in shift.iter_mut().zip(samples[i].point.to_vec()) {
                *s += v;
            }
        }
        shift.iter_mut().for_each(|s| *s /= n);
        let mut var = vec![0.0; dim];
        for &i in idx {
            for ((s, v), m) in var.iter_mut().zip(samples[i].point.to_vec()).zip(&shift) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let mut out_scale: f64 = 0.0;
        for &i in idx {
            for (t, d) in samples[i].target().iter().zip(&scale) {
                out_scale = out_scale.max((t * d).abs());
            }
        }
        if out_scale == 0.0 {
            out_scale = 1.0;
        }
        Normalization {
            shift,
            scale,
            out_scale,
        }
    }

    pub fn input(&self, pt: &ParamPoint) -> Vec<f64> {
        pt.to_vec()
            .iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, m), d)| (v - m) / d)
            .collect()
    }

    /// Target in model units: `t * scale / out_scale`.
    pub fn target(&self, t: &[f64]) -> Vec<f64> {
        t.iter().zip(&self.scale).map(|(v, d)| v * d / self.out_scale).collect()
    }

    /// Inverse of [`Normalization::target`].
    pub fn output(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(v, d)| v * self.out_scale / d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub case: String,
    pub model: ModelKind,
    pub n_buses: usize,
    pub l_tilde: usize,
    pub m_tilde: usize,
    pub seed: u64,
    pub eps: f64,
    /// Phase-1 draws attempted and accepted.
    pub k1: usize,
    pub accepted1: usize,
    /// Phase-2 samples stored.
    pub k2: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub bounds: SamplingBounds,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub norm: Normalization,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// First `train_fraction` of the samples train, the rest test.
    pub fn split_sequential(&mut self, train_fraction: f64) {
        let n = self.samples.len();
        let k = ((n as f64) * train_fraction).round() as usize;
        self.train = (0..k.min(n)).collect();
        self.test = (k.min(n)..n).collect();
        if !self.train.is_empty() {
            self.norm = Normalization::fit(&self.samples, &self.train);
        }
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().map(|&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &Sample> {
        self.test.iter().map(|&i| &self.samples[i])
    }

    pub fn dim(&self) -> usize {
        self.meta.l_tilde + self.meta.m_tilde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub k1: usize,
    pub k2: usize,
    /// When set, phase 2 draws `total - accepted1` points instead of `k2`.
    pub total: Option<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            k1: 300,
            k2: 700,
            total: Some(1000),
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

/// Independent stream per draw so parallel solves cannot change the data.
fn stream_rng(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 40) | index);
    rng
}

/// Convex combination with the given weights.
pub fn hull_combine(points: &[&ParamPoint], weights: &[f64]) -> ParamPoint {
    let mut out = ParamPoint {
        gamma: vec![0.0; points[0].gamma.len()],
        xi: vec![0.0; points[0].xi.len()],
    };
    for (p, &w) in points.iter().zip(weights) {
        for (o, v) in out.gamma.iter_mut().zip(&p.gamma) {
            *o += w * v;
        }
        for (o, v) in out.xi.iter_mut().zip(&p.xi) {
            *o += w * v;
        }
    }
    out
}

/// Random point of the convex hull: flat Dirichlet weights over at most
/// [`HULL_SUPPORT`] randomly chosen points.
pub fn hull_sample(points: &[ParamPoint], rng: &mut impl Rng) -> ParamPoint {
    assert!(points.len() >= 2, "hull needs two points");
    let k = points.len().min(HULL_SUPPORT);
    let chosen = sample_indices(rng, points.len(), k).into_vec();
    let mut w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let support: Vec<&ParamPoint> = chosen.iter().map(|&i| &points[i]).collect();
    hull_combine(&support, &w)
}

fn solve_sample(p: &ParametricCopf, pt: ParamPoint, opts: &SolveOptions) -> Result<Option<Sample>, DatasetError> {
    let sol = solve(p, &pt, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(Sample {
        lam_tilde: sol.lam_tilde_full(p),
        mu_tilde: sol.mu_tilde,
        point: pt,
    }))
}

/// Two-phase generation: `k1` uniform draws with infeasible ones skipped,
/// then hull draws over the accepted points.
pub fn generate(
    p: &ParametricCopf,
    bounds: &SamplingBounds,
    eps: f64,
    cfg: &GenerateConfig,
    opts: &SolveOptions,
) -> Result<Dataset, DatasetError> {
    bounds.validate()?;
    let phase1: Vec<Option<Sample>> = (0..cfg.k1)
        .into_par_iter()
        .map(|i| {
            let pt = bounds.sample(&mut stream_rng(cfg.seed, 1, i as u64));
            solve_sample(p, pt, opts)
        })
        .collect::<Result<_, _>>()?;
    let mut samples: Vec<Sample> = phase1.into_iter().flatten().collect();
    let accepted1 = samples.len();
    let rejected = cfg.k1 - accepted1;
    info!("phase 1: {accepted1} of {} draws feasible, {rejected} rejected", cfg.k1);
    if accepted1 < 2 {
        return Err(DatasetError::TooFewFeasible(accepted1));
    }
    coverage_check(bounds, &samples);

    let k2 = match cfg.total {
        Some(t) => t.saturating_sub(accepted1),
        None => cfg.k2,
    };
    let support: Vec<ParamPoint> = samples.iter().map(|s| s.point.clone()).collect();
    let phase2: Vec<Sample> = (0..k2)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, 2, i as u64);
            for attempt in 0..=HULL_RETRIES {
                let pt = hull_sample(&support, &mut rng);
                if let Some(s) = solve_sample(p, pt, opts)? {
                    return Ok(s);
                }
                warn!("hull point {i} not solved to optimality (attempt {attempt})");
            }
            Err(DatasetError::HullInfeasible(i))
        })
        .collect::<Result<_, _>>()?;
    samples.extend(phase2);

    let mut ds = Dataset {
        samples,
        bounds: bounds.clone(),
        train: Vec::new(),
        test: Vec::new(),
        norm: Normalization::identity(bounds.dim()),
        meta: DatasetMeta {
            case: p.name.clone(),
            model: p.kind,
            n_buses: p.n_buses,
            l_tilde: p.l_tilde(),
            m_tilde: p.m_tilde(),
            seed: cfg.seed,
            eps,
            k1: cfg.k1,
            accepted1,
            k2,
            rejected,
        },
    };
    ds.split_sequential(cfg.train_fraction);
    Ok(ds)
}

/// Warns for every coordinate whose accepted draws span less than half of
/// the sampling interval.
fn coverage_check(bounds: &SamplingBounds, samples: &[Sample]) {
    let lo: Vec<f64> = bounds.gamma_lo.iter().chain(&bounds.xi_lo).copied().collect();
    let hi: Vec<f64> = bounds.gamma_hi.iter().chain(&bounds.xi_hi).copied().collect();
    let mut min = vec![f64::INFINITY; lo.len()];
    let mut max = vec![f64::NEG_INFINITY; lo.len()];
    for s in samples {
        for (k, v) in s.point.to_vec().into_iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    let narrow = (0..lo.len()).filter(|&k| max[k] - min[k] < 0.5 * (hi[k] - lo[k])).count();
    if narrow > 0 {
        warn!("{narrow} parameters cover less than half of their sampling interval");
    }
}
