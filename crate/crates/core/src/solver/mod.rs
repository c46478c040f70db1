//! Primal-dual interior-point solver for instances of [`ParametricCopf`].

mod ipm;
mod scaling;

pub use ipm::solve;
pub use scaling::Scaling;

use serde::{Deserialize, Serialize};

use crate::linalg::inf_norm;
use crate::problem::{ParamPoint, ParametricCopf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor.
    pub ftb: f64,
    /// Smallest primal regularization tried during inertia correction.
    pub reg: f64,
    pub infeasibility_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 200,
            ftb: 0.995,
            reg: 1e-8,
            infeasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterLimit,
    NumericalFailure,
}

/// Scaled residual norms; see [`kkt_residual`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_feas: f64,
    pub dual_feas: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feas)
            .max(self.dual_feas)
            .max(self.complementarity)
    }
}

/// Optimal point with every multiplier block, in the sign convention of the
/// Lagrangian `f + lam'g + mu'h + lam~'(g~ - gamma) + mu~'(h~ - xi)
/// - nu_lo'(x - lo) + nu_hi'(x - hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualSolution {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    /// One entry per retained `g~` row.
    pub lam_tilde: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub nu_lo: Vec<f64>,
    pub nu_hi: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

impl PrimalDualSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `lam_tilde` scattered to the original `gamma` indexing, zero for
    /// rows the problem does not contain.
    pub fn lam_tilde_full(&self, p: &ParametricCopf) -> Vec<f64> {
        let mut out = vec![0.0; p.l_tilde()];
        for (&k, &v) in p.kept.iter().zip(&self.lam_tilde) {
            out[k] = v;
        }
        out
    }
}

/// Recomputes the residuals of `sol` from the problem data.
///
/// Every quantity is measured in the solver's scaled space: the objective is
/// multiplied by [`Scaling::omega`], and row `r` by `Scaling::row[r]`.
/// Stationarity and complementarity do not depend on the row scaling.
pub fn kkt_residual(p: &ParametricCopf, pt: &ParamPoint, sol: &PrimalDualSolution) -> KktResiduals {
    let sc = Scaling::new(p, pt);
    let x = &sol.x;
    let rhs = p.instantiate(pt).expect("point matches problem").rhs();
    let [_, oh, ogt, oht] = p.block_offsets();
    let duals: Vec<f64> = sol
        .lam
        .iter()
        .chain(&sol.mu)
        .chain(&sol.lam_tilde)
        .chain(&sol.mu_tilde)
        .copied()
        .collect();

    let mut grad = p.objective_gradient(x);
    let jac = p.jacobian(x);
    jac.mul_t_vec_add(&duals, &mut grad);
    for j in 0..p.n {
        grad[j] += sol.nu_hi[j] - sol.nu_lo[j];
    }
    let stationarity = sc.omega * inf_norm(&grad);

    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut dual_feas: f64 = 0.0;
    for (r, row) in p.rows().enumerate() {
        let c = row.value(x) - rhs[r];
        let ineq = r < oh || (ogt..oht).contains(&r);
        if ineq {
            primal = primal.max(sc.row[r] * c.max(0.0));
            comp = comp.max(sc.omega * (duals[r] * c).abs());
            dual_feas = dual_feas.max(sc.omega * (-duals[r]).max(0.0));
        } else {
            primal = primal.max(sc.row[r] * c.abs());
        }
    }
    for j in 0..p.n {
        primal = primal.max((p.x_lo[j] - x[j]).max(x[j] - p.x_hi[j]).max(0.0));
        dual_feas = dual_feas.max(sc.omega * (-sol.nu_lo[j]).max(-sol.nu_hi[j]).max(0.0));
        if p.x_lo[j] == p.x_hi[j] {
            continue;
        }
        if p.x_lo[j].is_finite() {
            comp = comp.max(sc.omega * (sol.nu_lo[j] * (x[j] - p.x_lo[j])).abs());
        }
        if p.x_hi[j].is_finite() {
            comp = comp.max(sc.omega * (sol.nu_hi[j] * (p.x_hi[j] - x[j])).abs());
        }
    }
    KktResiduals {
        stationarity,
        primal_feas: primal,
        dual_feas,
        complementarity: comp,
    }
}
