//! Numerical checks of the structural properties the screening pipeline
//! relies on: constraint qualification of the fixed rows, strong duality,
//! duals as value-function gradients, strict complementarity and the
//! equivalence of problems reduced to their binding rows.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{ParamPoint, ParametricCopf, ProblemError};
use crate::solver::{solve, PrimalDualSolution, SolveOptions, SolveStatus};


#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("point violates the fixed constraints by {0:e}")]
    NotFeasible(f64),
    #[error("perturbing {0:?} made the problem unsolvable")]
    PerturbationInfeasible(ParamIndex),
    #[error("solve ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Binding tolerance for a row with right-hand side `rhs`.
pub fn bind_tol(rel: f64, rhs: f64) -> f64 {
    rel * (1.0 + rhs.abs())
}

/// Default relative binding tolerance.
pub const TAU_BIND: f64 = 1e-6;
/// Default singular-value threshold after row normalization.
pub const TAU_RANK: f64 = 1e-8;

/// Multiplier size above which a `g~` row counts as binding: `1e-6` relative
/// to the largest parameter dual of the solve, and at least `1e-6`.
pub fn dual_threshold(sol: &PrimalDualSolution) -> f64 {
    let big = sol
        .lam_tilde
        .iter()
        .chain(&sol.mu_tilde)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    TAU_BIND * big
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Indices into `g` of the rows treated as binding.
    pub binding_set: Vec<usize>,
    pub jacobian_rows: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub full_rank: bool,
}

/// Rank of the Jacobian of `h` and the binding rows of `g` at `x`, each row
/// normalized to unit length first.
pub fn fixed_licq_rank(
    p: &ParametricCopf,
    x: &[f64],
    tol_bind: f64,
    tol_rank: f64,
) -> Result<RankReport, AnalysisError> {
    let [_, oh, ogt, _] = p.block_offsets();
    let mut worst: f64 = 0.0;
    let mut binding = Vec::new();
    for (i, row) in p.g.iter().enumerate() {
        let v = row.value(x);
        worst = worst.max(v);
        if v.abs() <= tol_bind {
            binding.push(i);
        }
    }
    for row in &p.h {
        worst = worst.max(row.value(x).abs());
    }
    if worst > tol_bind {
        return Err(AnalysisError::NotFeasible(worst));
    }

    let jac = p.jacobian(x);
    let rows: Vec<usize> = binding.iter().copied().chain(oh..ogt).collect();
    let mut a = DMatrix::<f64>::zeros(rows.len(), p.n);
    for (k, &r) in rows.iter().enumerate() {
        let mut norm = 0.0;
        for (j, v) in jac.row(r) {
            a[(k, j)] = v;
            norm += v * v;
        }
        let norm = norm.sqrt();
        if norm > 0.0 {
            a.row_mut(k).scale_mut(1.0 / norm);
        }
    }
    let (rank, sigma_min) = if rows.is_empty() {
        (0, f64::INFINITY)
    } else {
        let sv = if a.nrows() > a.ncols() {
            a.transpose().singular_values()
        } else {
            a.singular_values()
        };
        let rank = sv.iter().filter(|&&s| s > tol_rank).count();
        let smin = if a.nrows() > a.ncols() { 0.0 } else { sv.min() };
        (rank, smin)
    };
    Ok(RankReport {
        binding_set: binding,
        jacobian_rows: rows.len(),
        rank,
        sigma_min,
        full_rank: rank == rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongDualityReport {
    pub pass: bool,
    /// Every row is a quadratic polynomial, hence smooth.
    pub polynomial_rows: bool,
    pub samples: usize,
    /// Sample index with the reason it failed.
    pub witnesses: Vec<(usize, String)>,
}

/// Strong duality holds at every sample where the fixed constraints satisfy
/// LICQ. Smoothness is structural since every row is a quadratic.
pub fn strong_duality_test(p: &ParametricCopf, samples: &[(ParamPoint, Vec<f64>)]) -> StrongDualityReport {
    let mut witnesses = Vec::new();
    for (k, (pt, x)) in samples.iter().enumerate() {
        if let Err(e) = p.check_point(pt) {
            witnesses.push((k, e.to_string()));
            continue;
        }
        match fixed_licq_rank(p, x, TAU_BIND, TAU_RANK) {
            Ok(r) if r.full_rank => {}
            Ok(r) => witnesses.push((
                k,
                format!("rank {} of {} rows, sigma_min {:e}", r.rank, r.jacobian_rows, r.sigma_min),
            )),
            Err(e) => witnesses.push((k, e.to_string())),
        }
    }
    StrongDualityReport {
        pass: witnesses.is_empty(),
        polynomial_rows: true,
        samples: samples.len(),
        witnesses,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamIndex {
    Gamma(usize),
    Xi(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub index: ParamIndex,
    /// Central difference of the optimal value.
    pub fd: f64,
    /// Negated dual from the unperturbed solve.
    pub neg_dual: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

/// Optimal value at `pt`, solved from scratch.
pub fn value(p: &ParametricCopf, pt: &ParamPoint, opts: &SolveOptions) -> Result<f64, AnalysisError> {
    let sol = solve(p, pt, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(AnalysisError::Solver(sol.status));
    }
    Ok(sol.objective)
}

fn solve_optimal(p: &ParametricCopf, pt: &ParamPoint, opts: &SolveOptions) -> Result<PrimalDualSolution, AnalysisError> {
    let sol = solve(p, pt, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(AnalysisError::Solver(sol.status));
    }
    Ok(sol)
}

/// Compares central differences of the value function with the negated
/// duals `-lam_tilde` / `-mu_tilde`.
pub fn value_gradient_check(
    p: &ParametricCopf,
    pt: &ParamPoint,
    h_step: f64,
    indices: &[ParamIndex],
    opts: &SolveOptions,
) -> Result<Vec<GradientCheck>, AnalysisError> {
    let base = solve_optimal(p, pt, opts)?;
    let lam = base.lam_tilde_full(p);
    indices
        .par_iter()
        .map(|&idx| {
            let shifted = |d: f64| {
                let mut q = pt.clone();
                match idx {
                    ParamIndex::Gamma(i) => q.gamma[i] += d,
                    ParamIndex::Xi(i) => q.xi[i] += d,
                }
                value(p, &q, opts).map_err(|_| AnalysisError::PerturbationInfeasible(idx))
            };
            let fd = (shifted(h_step)? - shifted(-h_step)?) / (2.0 * h_step);
            let neg_dual = match idx {
                ParamIndex::Gamma(i) => -lam[i],
                ParamIndex::Xi(i) => -base.mu_tilde[i],
            };
            let abs_err = (fd - neg_dual).abs();
            Ok(GradientCheck {
                index: idx,
                fd,
                neg_dual,
                abs_err,
                rel_err: abs_err / neg_dual.abs().max(1e-12),
            })
        })
        .collect()
}

/// Retained `g~` rows (original indexing) that bind within `tol_bind_rel`
/// yet carry a multiplier at most `tol_dual`.
pub fn strict_complementarity_audit(
    p: &ParametricCopf,
    pt: &ParamPoint,
    sol: &PrimalDualSolution,
    tol_bind_rel: f64,
    tol_dual: f64,
) -> Vec<usize> {
    let vals = p.g_tilde_values(&sol.x);
    p.kept
        .iter()
        .zip(&vals)
        .zip(&sol.lam_tilde)
        .filter(|((&k, &v), &l)| {
            let gamma = pt.gamma[k];
            (v - gamma).abs() <= bind_tol(tol_bind_rel, gamma) && l <= tol_dual
        })
        .map(|((&k, _), _)| k)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub kept: Vec<usize>,
    pub obj_gap: f64,
    pub x_gap: f64,
}

/// Drops every `g~` row whose multiplier is at most `tau_bind` and compares
/// the re-solved reduced problem with the full one.
pub fn reduction_equivalence_check(
    p: &ParametricCopf,
    pt: &ParamPoint,
    opts: &SolveOptions,
    tau_bind: f64,
) -> Result<ReductionReport, AnalysisError> {
    let full = solve_optimal(p, pt, opts)?;
    let kept: Vec<usize> = p
        .kept
        .iter()
        .zip(&full.lam_tilde)
        .filter(|(_, &l)| l > tau_bind)
        .map(|(&k, _)| k)
        .collect();
    let red = solve_optimal(&p.reduce(&kept)?, pt, opts)?;
    let x_gap = full
        .x
        .iter()
        .zip(&red.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ReductionReport {
        kept,
        obj_gap: (full.objective - red.objective).abs() / full.objective.abs().max(1.0),
        x_gap,
    })
}

/// `min (4x^2 + x + 1)(x^2 - 1)` with and without `x <= 0`, by grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counterexample {
    pub x_constrained: f64,
    /// Multiplier of `x <= 0` at the constrained optimum.
    pub lambda: f64,
    pub x_unconstrained: f64,
    pub f_constrained: f64,
    pub f_unconstrained: f64,
}

/// Dropping a constraint with a zero multiplier changes the solution of this
/// nonconvex problem, which is why the reduction needs convexity.
pub fn nonconvex_counterexample() -> Counterexample {
    let f = |x: f64| (4.0 * x * x + x + 1.0) * (x * x - 1.0);
    let df = |x: f64| 16.0 * x.powi(3) + 3.0 * x * x - 6.0 * x - 1.0;
    let argmin = |lo: f64, hi: f64| {
        let n = 2_000_000;
        (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap()
    };
    let xc = argmin(-2.0, 0.0);
    let xu = argmin(-2.0, 2.0);
    Counterexample {
        x_constrained: xc,
        // Stationarity f'(x) + lambda = 0 with the row inactive forces zero.
        lambda: if xc < -1e-9 { 0.0 } else { (-df(xc)).max(0.0) },
        x_unconstrained: xu,
        f_constrained: f(xc),
        f_unconstrained: f(xu),
    }
}

/// Per-instance summary written by the `analyze` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub licq: RankReport,
    pub strong_duality: StrongDualityReport,
    pub gradient_check: Vec<GradientCheck>,
    pub strict_complementarity: Vec<usize>,
}

/// Runs every check at one parameter point; `indices` selects the gradient
/// entries to difference.
pub fn analyze(
    p: &ParametricCopf,
    pt: &ParamPoint,
    indices: &[ParamIndex],
    h_step: f64,
    opts: &SolveOptions,
) -> Result<AnalysisReport, AnalysisError> {
    let sol = solve_optimal(p, pt, opts)?;
    let licq = fixed_licq_rank(p, &sol.x, TAU_BIND, TAU_RANK)?;
    let strong_duality = strong_duality_test(p, &[(pt.clone(), sol.x.clone())]);
    let gradient_check = value_gradient_check(p, pt, h_step, indices, opts)?;
    let strict_complementarity = strict_complementarity_audit(p, pt, &sol, TAU_BIND, dual_threshold(&sol));
    Ok(AnalysisReport {
        status: sol.status,
        objective: sol.objective,
        licq,
        strong_duality,
        gradient_check,
        strict_complementarity,
    })
}
