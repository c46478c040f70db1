//! Screen out inequality rows predicted to be slack, solve the smaller
//! problem and put back any row the solution violates until none is.

mod bench;

pub use bench::{benchmark, BenchConfig, BenchReport, InstanceRecord, Outcome, PredictorRow, CSV_HEADER, TIMING_NOTE};

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::dual_threshold;
use crate::moge::{Model, MogeError};
use crate::problem::{ParamPoint, ParametricCopf, ProblemError};
use crate::solver::{solve, PrimalDualSolution, SolveOptions, SolveStatus};

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("predictor: {0}")]
    Predictor(#[from] MogeError),
    #[error("solve {iteration} ended {status:?}")]
    SolverFailure { iteration: usize, status: SolveStatus },
    #[error("repair loop exceeded {0} iterations")]
    LoopOverrun(usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Anything that maps a parameter point to a set of `g~` rows to keep.
pub trait BindingPredictor: Sync {
    fn name(&self) -> String;
    fn predict(&self, p: &ParametricCopf, pt: &ParamPoint) -> Result<Vec<usize>, ScreeningError>;
}

impl BindingPredictor for Model {
    fn name(&self) -> String {
        self.kind().to_string()
    }
    fn predict(&self, _: &ParametricCopf, pt: &ParamPoint) -> Result<Vec<usize>, ScreeningError> {
        Ok(self.predict_binding(pt)?)
    }
}

/// Keeps every row; the reduced problem is the full one.
pub struct AllBind;

impl BindingPredictor for AllBind {
    fn name(&self) -> String {
        "all-bind".into()
    }
    fn predict(&self, p: &ParametricCopf, _: &ParamPoint) -> Result<Vec<usize>, ScreeningError> {
        Ok(p.kept.clone())
    }
}

/// The binding set of a full solve.
pub struct Oracle {
    pub opts: SolveOptions,
}

impl BindingPredictor for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }
    fn predict(&self, p: &ParametricCopf, pt: &ParamPoint) -> Result<Vec<usize>, ScreeningError> {
        let sol = solve(p, pt, &self.opts)?;
        if !sol.is_optimal() {
            return Err(ScreeningError::SolverFailure {
                iteration: 0,
                status: sol.status,
            });
        }
        Ok(binding_set(p, &sol))
    }
}

/// A fixed set, whatever the point.
pub struct Fixed(pub Vec<usize>);

impl BindingPredictor for Fixed {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn predict(&self, _: &ParametricCopf, _: &ParamPoint) -> Result<Vec<usize>, ScreeningError> {
        Ok(self.0.clone())
    }
}

/// Original indices of rows whose multiplier exceeds [`dual_threshold`].
pub fn binding_set(p: &ParametricCopf, sol: &PrimalDualSolution) -> Vec<usize> {
    let tau = dual_threshold(sol);
    p.kept
        .iter()
        .zip(&sol.lam_tilde)
        .filter(|(_, &l)| l > tau)
        .map(|(&k, _)| k)
        .collect()
}

/// Tolerance for calling row `i` violated.
pub fn tau_viol(gamma: f64) -> f64 {
    1e-6 * (1.0 + gamma.abs())
}

/// Rows of the full `g~` outside `kept` that `x` violates.
pub fn violated_rows(p: &ParametricCopf, pt: &ParamPoint, x: &[f64], kept: &BTreeSet<usize>) -> Vec<usize> {
    p.g_tilde_values(x)
        .iter()
        .zip(&p.kept)
        .filter(|(&v, &k)| !kept.contains(&k) && v > pt.gamma[k] + tau_viol(pt.gamma[k]))
        .map(|(_, &k)| k)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub kept: usize,
    pub status: SolveStatus,
    pub objective: f64,
    pub violated: Vec<usize>,
    pub solve_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub predict_s: f64,
    /// Sum over the solve calls.
    pub solve_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub initial_bind: Vec<usize>,
    pub iterations: Vec<Iteration>,
    pub final_solution: PrimalDualSolution,
    /// Rows of `g~` in the last reduced problem.
    pub final_kept: Vec<usize>,
    pub resolve_count: usize,
    /// Truth rows missing from the prediction, when the truth is known.
    pub false_negatives_vs_truth: Option<usize>,
    pub timings: Timings,
}

/// Predict, solve the reduced problem, re-add violated rows, repeat.
pub fn screen_and_solve(
    p: &ParametricCopf,
    predictor: &dyn BindingPredictor,
    pt: &ParamPoint,
    opts: &SolveOptions,
) -> Result<ScreeningResult, ScreeningError> {
    let start = Instant::now();
    let initial_bind = predictor.predict(p, pt)?;
    let predict_s = start.elapsed().as_secs_f64();
    let mut kept: BTreeSet<usize> = initial_bind.iter().copied().collect();
    let mut iterations = Vec::new();
    let mut solve_s = 0.0;
    let limit = p.l_tilde() + 1;
    loop {
        let keep: Vec<usize> = kept.iter().copied().collect();
        let reduced = p.reduce(&keep)?;
        // Coefficient templates are problem construction, not solve time.
        reduced.templates();
        let t = Instant::now();
        let sol = solve(&reduced, pt, opts)?;
        let dt = t.elapsed().as_secs_f64();
        solve_s += dt;
        if !sol.is_optimal() {
            return Err(ScreeningError::SolverFailure {
                iteration: iterations.len(),
                status: sol.status,
            });
        }
        let violated = violated_rows(p, pt, &sol.x, &kept);
        iterations.push(Iteration {
            kept: keep.len(),
            status: sol.status,
            objective: sol.objective,
            violated: violated.clone(),
            solve_s: dt,
        });
        if violated.is_empty() {
            return Ok(ScreeningResult {
                initial_bind,
                resolve_count: iterations.len() - 1,
                iterations,
                final_solution: sol,
                final_kept: keep,
                false_negatives_vs_truth: None,
                timings: Timings {
                    predict_s,
                    solve_s,
                    total_s: start.elapsed().as_secs_f64(),
                },
            });
        }
        if iterations.len() >= limit {
            return Err(ScreeningError::LoopOverrun(iterations.len()));
        }
        kept.extend(violated);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn pct(&self, v: usize) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * v as f64 / t as f64,
        }
    }

    pub fn tp_pct(&self) -> f64 {
        self.pct(self.tp)
    }
    pub fn tn_pct(&self) -> f64 {
        self.pct(self.tn)
    }
    pub fn fp_pct(&self) -> f64 {
        self.pct(self.fp)
    }
    pub fn fn_pct(&self) -> f64 {
        self.pct(self.fn_)
    }

    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Confusion counts over `l` rows per instance.
pub fn score(predicted: &[Vec<usize>], truth: &[Vec<usize>], l: usize) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (pred, tru) in predicted.iter().zip(truth) {
        let mut p = vec![false; l];
        pred.iter().for_each(|&i| p[i] = true);
        let mut t = vec![false; l];
        tru.iter().for_each(|&i| t[i] = true);
        for i in 0..l {
            match (p[i], t[i]) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    c
}

#[cfg(test)]
mod tests;
