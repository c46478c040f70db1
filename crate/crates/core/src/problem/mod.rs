//! The parametric convex problem
//!
//! ```text
//! min f(x)  s.t.  g(x) <= 0,  h(x) = 0,  g~(x) <= gamma,  h~(x) = xi,  lo <= x <= hi
//! ```
//!
//! with every row a sparse quadratic. Coefficients are compiled once into
//! templates so the Jacobian is an affine function of `x` and the Hessian of
//! the Lagrangian is a linear function of the multipliers.

mod cdf;
mod qc;
mod template;

pub use cdf::{build_cdfopf, build_cdfopf_with, CdfOptions};
pub use qc::build_qcopf;
pub use template::Templates;

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Csr;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("the CDF model requires a radial network")]
    NotRadial,
    #[error("unsupported network: {0}")]
    Unsupported(String),
}

/// `x -> 1/2 x^T A x + b^T x + c`.
///
/// `quad` stores the upper triangle of the symmetric `A` as `(i, j, A_ij)`
/// with `i <= j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadRow {
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
    /// Rotated second-order cone row with an indefinite `A`.
    pub cone: bool,
}

impl QuadRow {
    pub fn linear(lin: Vec<(usize, f64)>, constant: f64) -> QuadRow {
        QuadRow {
            lin,
            constant,
            ..QuadRow::default()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.quad.iter().all(|e| e.2 == 0.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(j, b) in &self.lin {
            v += b * x[j];
        }
        for &(i, j, a) in &self.quad {
            if i == j {
                v += 0.5 * a * x[i] * x[i];
            } else {
                v += a * x[i] * x[j];
            }
        }
        v
    }

    /// Dense gradient accumulated into `out`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for &(j, b) in &self.lin {
            out[j] += scale * b;
        }
        for &(i, j, a) in &self.quad {
            if i == j {
                out[i] += scale * a * x[i];
            } else {
                out[i] += scale * a * x[j];
                out[j] += scale * a * x[i];
            }
        }
    }

    /// Variables touched by the row, sorted and deduplicated.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .lin
            .iter()
            .map(|e| e.0)
            .chain(self.quad.iter().flat_map(|e| [e.0, e.1]))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Dense `A` restricted to the row support, with the support.
    pub fn local_matrix(&self) -> (Vec<usize>, nalgebra::DMatrix<f64>) {
        let sup = self.support();
        let pos = |v: usize| sup.binary_search(&v).unwrap();
        let mut a = nalgebra::DMatrix::zeros(sup.len(), sup.len());
        for &(i, j, v) in &self.quad {
            let (p, q) = (pos(i), pos(j));
            a[(p, q)] += v;
            if p != q {
                a[(q, p)] += v;
            }
        }
        (sup, a)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (_, a) = self.local_matrix();
        if a.nrows() == 0 {
            return 0.0;
        }
        a.symmetric_eigenvalues().min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qc,
    Cdf,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qc" => Ok(ModelKind::Qc),
            "cdf" => Ok(ModelKind::Cdf),
            other => Err(format!("unknown model `{other}` (expected qc or cdf)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Qc => "qc",
            ModelKind::Cdf => "cdf",
        })
    }
}

/// What a `gamma` entry bounds; drives the sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaKind {
    /// Squared thermal limit of a branch with rating `smax`.
    Thermal { smax: f64 },
    /// Negated lower bound on a root injection.
    SlackLower,
    SlackUpper,
    /// Right-hand side of a hand-built row.
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ParamPoint {
    pub fn is_finite(&self) -> bool {
        self.gamma.iter().chain(&self.xi).all(|v| v.is_finite())
    }

    /// `a * self + (1 - a) * other`
    pub fn lerp(&self, other: &ParamPoint, a: f64) -> ParamPoint {
        let mix = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter().zip(v).map(|(p, q)| a * p + (1.0 - a) * q).collect()
        };
        ParamPoint {
            gamma: mix(&self.gamma, &other.gamma),
            xi: mix(&self.xi, &other.xi),
        }
    }

    /// Concatenated `[gamma; xi]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.xi).copied().collect()
    }

    pub fn from_slice(v: &[f64], l_tilde: usize) -> ParamPoint {
        ParamPoint {
            gamma: v[..l_tilde].to_vec(),
            xi: v[l_tilde..].to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParametricCopf {
    pub kind: ModelKind,
    pub name: String,
    pub n: usize,
    /// Number of buses of the source case.
    pub n_buses: usize,
    pub objective: QuadRow,
    pub g: Vec<QuadRow>,
    pub h: Vec<QuadRow>,
    pub g_tilde: Vec<QuadRow>,
    pub h_tilde: Vec<QuadRow>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub var_names: Vec<String>,
    /// Output positions of the `g~` and `h~` duals in the stacked
    /// `[lambda~; mu~]` vector.
    pub idx_lambda_tilde: Vec<usize>,
    pub idx_mu_tilde: Vec<usize>,
    /// Kind of every original `gamma` entry.
    pub gamma_kind: Vec<GammaKind>,
    pub gamma_nominal: Vec<f64>,
    pub xi_nominal: Vec<f64>,
    /// Original `gamma` index of each retained `g~` row.
    pub kept: Vec<usize>,
    templates: OnceLock<Templates>,
}

/// Values of all constraint blocks at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// `g~(x) - gamma` for retained rows.
    pub g_tilde: Vec<f64>,
    /// `h~(x) - xi`
    pub h_tilde: Vec<f64>,
}

/// A problem with its right-hand sides fixed. Coefficients are shared.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub problem: &'a ParametricCopf,
    pub point: &'a ParamPoint,
}

impl<'a> Instance<'a> {
    /// Right-hand side of every row in Jacobian order (g, h, g~, h~).
    pub fn rhs(&self) -> Vec<f64> {
        let p = self.problem;
        let mut r = vec![0.0; p.g.len() + p.h.len()];
        r.extend(p.kept.iter().map(|&k| self.point.gamma[k]));
        r.extend_from_slice(&self.point.xi);
        r
    }

    pub fn eval(&self, x: &[f64]) -> Evaluation {
        self.problem.eval(self.point, x)
    }
}

impl ParametricCopf {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        kind: ModelKind,
        name: String,
        n_buses: usize,
        objective: QuadRow,
        g: Vec<QuadRow>,
        h: Vec<QuadRow>,
        g_tilde: Vec<QuadRow>,
        h_tilde: Vec<QuadRow>,
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        var_names: Vec<String>,
        gamma_kind: Vec<GammaKind>,
        gamma_nominal: Vec<f64>,
        xi_nominal: Vec<f64>,
    ) -> ParametricCopf {
        let l = g_tilde.len();
        let m = h_tilde.len();
        ParametricCopf {
            kind,
            name,
            n: x_lo.len(),
            n_buses,
            objective,
            g,
            h,
            g_tilde,
            h_tilde,
            x_lo,
            x_hi,
            var_names,
            idx_lambda_tilde: (0..l).collect(),
            idx_mu_tilde: (l..l + m).collect(),
            gamma_kind,
            gamma_nominal,
            xi_nominal,
            kept: (0..l).collect(),
            templates: OnceLock::new(),
        }
    }

    /// A generic problem from explicit rows, e.g. for testing. `gamma` and
    /// `xi` are the nominal right-hand sides of `g_tilde` and `h_tilde`.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        objective: QuadRow,
        g: Vec<QuadRow>,
        h: Vec<QuadRow>,
        g_tilde: Vec<QuadRow>,
        h_tilde: Vec<QuadRow>,
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        gamma: Vec<f64>,
        xi: Vec<f64>,
    ) -> ParametricCopf {
        assert_eq!(gamma.len(), g_tilde.len());
        assert_eq!(xi.len(), h_tilde.len());
        assert_eq!(x_lo.len(), x_hi.len());
        let names = (0..x_lo.len()).map(|j| format!("x{j}")).collect();
        ParametricCopf::assemble(
            ModelKind::Qc,
            "custom".into(),
            0,
            objective,
            g,
            h,
            g_tilde,
            h_tilde,
            x_lo,
            x_hi,
            names,
            vec![GammaKind::Other; gamma.len()],
            gamma,
            xi,
        )
    }

    /// Dimension of `gamma` in the original (unreduced) problem.
    pub fn l_tilde(&self) -> usize {
        self.gamma_kind.len()
    }

    /// Dimension of `xi`.
    pub fn m_tilde(&self) -> usize {
        self.h_tilde.len()
    }

    /// Total number of constraint rows.
    pub fn m(&self) -> usize {
        self.g.len() + self.h.len() + self.g_tilde.len() + self.h_tilde.len()
    }

    pub fn is_reduced(&self) -> bool {
        self.g_tilde.len() != self.l_tilde()
    }

    pub fn nominal_point(&self) -> ParamPoint {
        ParamPoint {
            gamma: self.gamma_nominal.clone(),
            xi: self.xi_nominal.clone(),
        }
    }

    /// All rows in Jacobian order.
    pub fn rows(&self) -> impl Iterator<Item = &QuadRow> {
        self.g
            .iter()
            .chain(&self.h)
            .chain(&self.g_tilde)
            .chain(&self.h_tilde)
    }

    /// Offsets of the g, h, g~, h~ blocks in the stacked row vector.
    pub fn block_offsets(&self) -> [usize; 4] {
        let a = self.g.len();
        let b = a + self.h.len();
        let c = b + self.g_tilde.len();
        [0, a, b, c]
    }

    pub fn templates(&self) -> &Templates {
        self.templates.get_or_init(|| Templates::compile(self))
    }

    pub fn check_point(&self, pt: &ParamPoint) -> Result<(), ProblemError> {
        if pt.gamma.len() != self.l_tilde() {
            return Err(ProblemError::DimensionMismatch {
                what: "gamma",
                expected: self.l_tilde(),
                found: pt.gamma.len(),
            });
        }
        if pt.xi.len() != self.m_tilde() {
            return Err(ProblemError::DimensionMismatch {
                what: "xi",
                expected: self.m_tilde(),
                found: pt.xi.len(),
            });
        }
        Ok(())
    }

    pub fn instantiate<'a>(&'a self, pt: &'a ParamPoint) -> Result<Instance<'a>, ProblemError> {
        self.check_point(pt)?;
        Ok(Instance {
            problem: self,
            point: pt,
        })
    }

    pub fn eval(&self, pt: &ParamPoint, x: &[f64]) -> Evaluation {
        Evaluation {
            objective: self.objective.value(x),
            g: self.g.iter().map(|r| r.value(x)).collect(),
            h: self.h.iter().map(|r| r.value(x)).collect(),
            g_tilde: self
                .g_tilde
                .iter()
                .zip(&self.kept)
                .map(|(r, &k)| r.value(x) - pt.gamma[k])
                .collect(),
            h_tilde: self
                .h_tilde
                .iter()
                .zip(&pt.xi)
                .map(|(r, xi)| r.value(x) - xi)
                .collect(),
        }
    }

    /// Raw `g~(x)` for every original row, including rows removed by
    /// [`reduce`](Self::reduce) when `full` is the unreduced problem.
    pub fn g_tilde_values(&self, x: &[f64]) -> Vec<f64> {
        self.g_tilde.iter().map(|r| r.value(x)).collect()
    }

    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        self.objective.add_gradient(x, 1.0, &mut g);
        g
    }

    /// Constraint Jacobian with rows ordered g, h, g~, h~.
    pub fn jacobian(&self, x: &[f64]) -> Csr {
        let t = self.templates();
        let mut j = t.jacobian_pattern().clone();
        t.jacobian_values(x, &mut j.values);
        j
    }

    /// Upper triangle of `beta * A_obj + sum_j alpha_j * A_j` as CSR.
    pub fn lagrangian_hessian(&self, beta: f64, alpha: &[f64]) -> Csr {
        let t = self.templates();
        let mut h = t.hessian_pattern().clone();
        t.hessian_values(beta, alpha, &mut h.values);
        h
    }

    /// Restricts `g~` to the rows whose original indices are in `keep`.
    pub fn reduce(&self, keep: &[usize]) -> Result<ParametricCopf, ProblemError> {
        let l = self.l_tilde();
        let mut sel = vec![None; l];
        for (r, &k) in self.kept.iter().enumerate() {
            sel[k] = Some(r);
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        let mut rows = Vec::with_capacity(keep_sorted.len());
        for &k in &keep_sorted {
            if k >= l {
                return Err(ProblemError::IndexOutOfRange(k));
            }
            match sel[k] {
                Some(r) => rows.push(self.g_tilde[r].clone()),
                None => return Err(ProblemError::IndexOutOfRange(k)),
            }
        }
        let mut out = self.clone();
        out.g_tilde = rows;
        out.kept = keep_sorted;
        out.templates = OnceLock::new();
        Ok(out)
    }

    /// Minimum eigenvalue over all non-cone inequality rows and the objective.
    pub fn convexity_margin(&self) -> f64 {
        self.g
            .iter()
            .chain(&self.g_tilde)
            .chain(std::iter::once(&self.objective))
            .filter(|r| !r.cone && !r.is_linear())
            .map(|r| r.min_eigenvalue())
            .fold(0.0, f64::min)
    }

    /// Plain-text listing of the problem, one row per line.
    pub fn dump(&self, pt: Option<&ParamPoint>) -> String {
        let mut s = String::new();
        let term = |s: &mut String, row: &QuadRow, names: &[String]| {
            for &(j, b) in &row.lin {
                let _ = write!(s, " {b:+} {}", names[j]);
            }
            for &(i, j, a) in &row.quad {
                if i == j {
                    let _ = write!(s, " {:+} {}^2", 0.5 * a, names[i]);
                } else {
                    let _ = write!(s, " {a:+} {}*{}", names[i], names[j]);
                }
            }
            if row.constant != 0.0 {
                let _ = write!(s, " {:+}", row.constant);
            }
        };
        let _ = writeln!(
            s,
            "\\ {} model={} n={} m={} gamma={} xi={}",
            self.name,
            self.kind,
            self.n,
            self.m(),
            self.l_tilde(),
            self.m_tilde()
        );
        s.push_str("minimize\n obj:");
        term(&mut s, &self.objective, &self.var_names);
        s.push_str("\nsubject to\n");
        for (k, r) in self.g.iter().enumerate() {
            let _ = write!(s, " g{k}{}:", if r.cone { "[cone]" } else { "" });
            term(&mut s, r, &self.var_names);
            s.push_str(" <= 0\n");
        }
        for (k, r) in self.h.iter().enumerate() {
            let _ = write!(s, " h{k}:");
            term(&mut s, r, &self.var_names);
            s.push_str(" = 0\n");
        }
        for (r, &k) in self.g_tilde.iter().zip(&self.kept) {
            let _ = write!(s, " gt{k}:");
            term(&mut s, r, &self.var_names);
            match pt {
                Some(p) => {
                    let _ = writeln!(s, " <= {}", p.gamma[k]);
                }
                None => {
                    let _ = writeln!(s, " <= gamma{k}");
                }
            }
        }
        for (k, r) in self.h_tilde.iter().enumerate() {
            let _ = write!(s, " ht{k}:");
            term(&mut s, r, &self.var_names);
            match pt {
                Some(p) => {
                    let _ = writeln!(s, " = {}", p.xi[k]);
                }
                None => {
                    let _ = writeln!(s, " = xi{k}");
                }
            }
        }
        s.push_str("bounds\n");
        for j in 0..self.n {
            let _ = writeln!(s, " {} <= {} <= {}", self.x_lo[j], self.var_names[j], self.x_hi[j]);
        }
        s.push_str("end\n");
        s
    }
}

#[cfg(test)]
pub(crate) mod tests;
