use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binding_set, score, screen_and_solve, violated_rows, BindingPredictor, ConfusionCounts, ScreeningError};
use crate::analysis::{dual_threshold, strict_complementarity_audit, TAU_BIND};
use crate::problem::{ParamPoint, ParametricCopf};
use crate::solver::{solve, SolveOptions};

pub const CSV_HEADER: &str =
    "predictor,train_time_s,tp_pct,tn_pct,fp_pct,fn_pct,median_reduction_pct,fraction_resolved";

/// Shown above the CSV header.
pub const TIMING_NOTE: &str = "# solve times are wall clock around solve calls only; prediction time is excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Measure wall clock. Without it every timing column is `NA` and the
    /// report depends on the inputs alone.
    pub timing: bool,
    /// Run instances one after another, so solves do not compete.
    pub serial: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            timing: true,
            serial: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub predicted: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
    pub rel_gap: f64,
    /// Rows of the full problem violated by the final point.
    pub violated: Vec<usize>,
    pub false_negatives: usize,
    pub predict_s: f64,
    pub solve_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub full_objective: f64,
    pub full_s: f64,
    pub truth: Vec<usize>,
    /// Binding rows without a multiplier; the instance is left out of the
    /// confusion counts when this is nonempty.
    pub degenerate: Vec<usize>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRow {
    pub predictor: String,
    pub train_time_s: Option<f64>,
    pub counts: ConfusionCounts,
    pub median_full_s: f64,
    pub median_screened_s: f64,
    pub mean_full_s: f64,
    pub mean_screened_s: f64,
    pub median_predict_s: f64,
    pub median_reduction_pct: f64,
    pub fraction_resolved: f64,
    pub max_iterations: usize,
    pub max_rel_gap: f64,
    /// Every instance matched the full objective to `1e-6` relative and
    /// satisfied every row.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    pub timing: bool,
    pub l_tilde: usize,
    /// Row for the unreduced problem: truth against itself.
    pub full: PredictorRow,
    pub rows: Vec<PredictorRow>,
    pub instances: Vec<InstanceRecord>,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn run_instance(
    p: &ParametricCopf,
    predictors: &[(&dyn BindingPredictor, Option<f64>)],
    index: usize,
    pt: &ParamPoint,
    opts: &SolveOptions,
    cfg: &BenchConfig,
) -> Result<InstanceRecord, ScreeningError> {
    // Slot 0 is the full solve.
    let mut order: Vec<usize> = (0..=predictors.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    order.shuffle(&mut rng);

    let mut full = None;
    let mut results = vec![None; predictors.len()];
    for slot in order {
        if slot == 0 {
            let t = Instant::now();
            let sol = solve(p, pt, opts)?;
            let dt = t.elapsed().as_secs_f64();
            if !sol.is_optimal() {
                return Err(ScreeningError::SolverFailure {
                    iteration: 0,
                    status: sol.status,
                });
            }
            full = Some((sol, dt));
        } else {
            results[slot - 1] = Some(screen_and_solve(p, predictors[slot - 1].0, pt, opts)?);
        }
    }
    let (sol, full_s) = full.expect("full solve ran");
    let truth = binding_set(p, &sol);
    let degenerate = strict_complementarity_audit(p, pt, &sol, TAU_BIND, dual_threshold(&sol));
    let outcomes = results
        .into_iter()
        .map(|r| {
            let r = r.expect("every predictor ran");
            let predicted: BTreeSet<usize> = r.initial_bind.iter().copied().collect();
            Outcome {
                false_negatives: truth.iter().filter(|i| !predicted.contains(i)).count(),
                violated: violated_rows(p, pt, &r.final_solution.x, &BTreeSet::new()),
                predicted: predicted.into_iter().collect(),
                iterations: r.iterations.len(),
                objective: r.final_solution.objective,
                rel_gap: rel_gap(r.final_solution.objective, sol.objective),
                predict_s: r.timings.predict_s,
                solve_s: r.timings.solve_s,
            }
        })
        .collect();
    Ok(InstanceRecord {
        index,
        full_objective: sol.objective,
        full_s,
        truth,
        degenerate,
        outcomes,
    })
}

/// Full and screened solves of every instance, scored against the full
/// solve's binding set.
pub fn benchmark(
    p: &ParametricCopf,
    predictors: &[(&dyn BindingPredictor, Option<f64>)],
    instances: &[ParamPoint],
    opts: &SolveOptions,
    cfg: &BenchConfig,
) -> Result<BenchReport, ScreeningError> {
    p.templates();
    let run = |(i, pt): (usize, &ParamPoint)| run_instance(p, predictors, i, pt, opts, cfg);
    let records: Vec<InstanceRecord> = if cfg.serial {
        instances.iter().enumerate().map(run).collect::<Result<_, _>>()?
    } else {
        instances.par_iter().enumerate().map(run).collect::<Result<_, _>>()?
    };
    let l = p.l_tilde();
    let scored: Vec<&InstanceRecord> = records.iter().filter(|r| r.degenerate.is_empty()).collect();
    let truth: Vec<Vec<usize>> = scored.iter().map(|r| r.truth.clone()).collect();
    let full_times: Vec<f64> = records.iter().map(|r| r.full_s).collect();
    let timing = |v: f64| if cfg.timing { v } else { f64::NAN };

    let full = PredictorRow {
        predictor: "full".into(),
        train_time_s: None,
        counts: score(&truth, &truth, l),
        median_full_s: timing(median(&full_times)),
        median_screened_s: timing(median(&full_times)),
        mean_full_s: timing(mean(&full_times)),
        mean_screened_s: timing(mean(&full_times)),
        median_predict_s: timing(0.0),
        median_reduction_pct: 0.0,
        fraction_resolved: 0.0,
        max_iterations: 1,
        max_rel_gap: 0.0,
        exact: true,
    };
    let rows = predictors
        .iter()
        .enumerate()
        .map(|(k, (pred, train_time))| {
            let out: Vec<&Outcome> = records.iter().map(|r| &r.outcomes[k]).collect();
            let predicted: Vec<Vec<usize>> = scored.iter().map(|r| r.outcomes[k].predicted.clone()).collect();
            let screened: Vec<f64> = out.iter().map(|o| o.solve_s).collect();
            let predict: Vec<f64> = out.iter().map(|o| o.predict_s).collect();
            let mf = median(&full_times);
            let ms = median(&screened);
            let max_rel_gap = out.iter().map(|o| o.rel_gap).fold(0.0, f64::max);
            PredictorRow {
                predictor: pred.name(),
                train_time_s: train_time.map(timing),
                counts: score(&predicted, &truth, l),
                median_full_s: timing(mf),
                median_screened_s: timing(ms),
                mean_full_s: timing(mean(&full_times)),
                mean_screened_s: timing(mean(&screened)),
                median_predict_s: timing(median(&predict)),
                median_reduction_pct: timing(100.0 * (mf - ms) / mf),
                fraction_resolved: out.iter().filter(|o| o.iterations > 1).count() as f64 / out.len().max(1) as f64,
                max_iterations: out.iter().map(|o| o.iterations).max().unwrap_or(0),
                max_rel_gap,
                exact: max_rel_gap <= 1e-6 && out.iter().all(|o| o.violated.is_empty()),
            }
        })
        .collect();
    let mut records = records;
    if !cfg.timing {
        for r in records.iter_mut() {
            r.full_s = f64::NAN;
            for o in r.outcomes.iter_mut() {
                o.predict_s = f64::NAN;
                o.solve_s = f64::NAN;
            }
        }
    }
    Ok(BenchReport {
        case: p.name.clone(),
        timing: cfg.timing,
        l_tilde: l,
        full,
        rows,
        instances: records,
    })
}

fn num(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "NA".into()
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{TIMING_NOTE}");
        let _ = writeln!(s, "{CSV_HEADER}");
        let line = |s: &mut String, r: &PredictorRow, resolved: String| {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.predictor,
                r.train_time_s.map(|t| num(t, 3)).unwrap_or_default(),
                num(r.counts.tp_pct(), 2),
                num(r.counts.tn_pct(), 2),
                num(r.counts.fp_pct(), 2),
                num(r.counts.fn_pct(), 2),
                num(r.median_reduction_pct, 2),
                resolved,
            );
        };
        line(&mut s, &self.full, String::new());
        for r in &self.rows {
            line(&mut s, r, format!("{:.2}", r.fraction_resolved));
        }
        s
    }
}
