use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::problem::build_qcopf;
use crate::testutil::load_case;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

/// case30 with tightened ratings, where several thermal rows bind.
fn loaded_case30(seed: u64) -> (ParametricCopf, ParamPoint) {
    let p = build_qcopf(&load_case("case30"));
    let mut pt = p.nominal_point();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in pt.xi.iter_mut() {
        *v *= rng.random_range(1.0..1.1);
    }
    for (k, g) in pt.gamma.iter_mut().enumerate() {
        if matches!(p.gamma_kind[k], crate::problem::GammaKind::Thermal { .. }) {
            *g *= 0.97 * 0.97;
        }
    }
    (p, pt)
}

fn full(p: &ParametricCopf, pt: &ParamPoint) -> PrimalDualSolution {
    let s = solve(p, pt, &opts()).unwrap();
    assert!(s.is_optimal());
    s
}

#[test]
fn oracle_and_all_bind_need_one_solve() {
    let (p, pt) = loaded_case30(1);
    let sol = full(&p, &pt);
    let truth = binding_set(&p, &sol);
    assert!(!truth.is_empty());
    let r = screen_and_solve(&p, &Oracle { opts: opts() }, &pt, &opts()).unwrap();
    assert_eq!(r.iterations.len(), 1);
    assert_eq!(r.resolve_count, 0);
    assert_eq!(r.initial_bind, truth);
    assert!((r.final_solution.objective - sol.objective).abs() <= 1e-6 * sol.objective.abs());

    let r = screen_and_solve(&p, &AllBind, &pt, &opts()).unwrap();
    assert_eq!(r.iterations.len(), 1);
    assert_eq!(r.final_kept.len(), p.l_tilde());
    assert_eq!(r.final_solution.objective, sol.objective);
}

#[test]
fn dropped_binding_rows_are_recovered() {
    let (p, pt) = loaded_case30(2);
    let sol = full(&p, &pt);
    let truth = binding_set(&p, &sol);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 1..=truth.len().min(3) {
        let mut pred = truth.clone();
        for _ in 0..k {
            pred.remove(rng.random_range(0..pred.len()));
        }
        let r = screen_and_solve(&p, &Fixed(pred.clone()), &pt, &opts()).unwrap();
        assert!(r.iterations.len() <= k + 1, "{k}: {:?}", r.iterations);
        assert!((r.final_solution.objective - sol.objective).abs() <= 1e-6 * sol.objective.abs());
        assert!(violated_rows(&p, &pt, &r.final_solution.x, &BTreeSet::new()).is_empty());
        // The kept set only grows and never re-reports a kept row.
        let mut kept: BTreeSet<usize> = pred.into_iter().collect();
        for it in &r.iterations {
            assert!(it.violated.iter().all(|i| !kept.contains(i)));
            kept.extend(&it.violated);
        }
        // A reduced objective below the full one must come with a violation.
        for it in &r.iterations {
            if it.objective < sol.objective - 2e-8 * sol.objective.abs() {
                assert!(!it.violated.is_empty());
            }
        }
    }
}

#[test]
fn empty_prediction_still_ends_exact() {
    let (p, pt) = loaded_case30(4);
    let sol = full(&p, &pt);
    let r = screen_and_solve(&p, &Fixed(vec![]), &pt, &opts()).unwrap();
    assert!((r.final_solution.objective - sol.objective).abs() <= 1e-6 * sol.objective.abs());
    assert!(r.iterations.len() <= binding_set(&p, &sol).len() + 1);
}

#[test]
fn confusion_counts() {
    let truth = vec![vec![0, 2], vec![1]];
    let c = score(&truth, &truth, 4);
    assert_eq!((c.fp, c.fn_, c.tp, c.tn), (0, 0, 3, 5));
    let c = score(&[vec![], vec![]], &truth, 4);
    assert_eq!(c.fn_, 3);
    assert_eq!(c.total(), 8);
    let c = score(&[vec![0, 3], vec![]], &truth, 4);
    assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 2, 4));
    assert_eq!(c.tp_pct() + c.tn_pct() + c.fp_pct() + c.fn_pct(), 100.0);
}

#[test]
fn benchmark_report_layout() {
    let (p, _) = loaded_case30(0);
    let pts: Vec<ParamPoint> = (5..8).map(|s| loaded_case30(s).1).collect();
    let oracle = Oracle { opts: opts() };
    let none = Fixed(vec![]);
    let preds: Vec<(&dyn BindingPredictor, Option<f64>)> = vec![(&oracle, None), (&AllBind, Some(0.0)), (&none, None)];
    let cfg = BenchConfig {
        timing: false,
        serial: false,
        seed: 1,
    };
    let rep = benchmark(&p, &preds, &pts, &opts(), &cfg).unwrap();
    assert!(rep.rows.iter().all(|r| r.exact));
    assert_eq!(rep.rows[0].counts.fn_ + rep.rows[0].counts.fp, 0);
    assert_eq!(rep.rows[1].fraction_resolved, 0.0);
    assert_eq!(rep.rows[2].counts.tp, 0);
    let csv = rep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TIMING_NOTE);
    assert_eq!(lines[1], CSV_HEADER);
    assert!(lines[2].starts_with("full,,"));
    assert!(lines[2].ends_with(",0.00,"));
    assert!(lines[3].starts_with("oracle,,"));
    assert!(lines[4].starts_with("all-bind,NA,"));
    assert_eq!(lines.len(), 6);
    let again = benchmark(&p, &preds, &pts, &opts(), &BenchConfig { serial: true, ..cfg }).unwrap();
    assert_eq!(again.to_csv(), csv);
}

