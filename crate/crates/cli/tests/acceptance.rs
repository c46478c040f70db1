//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,7` restricts the run to the listed criteria.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::TinyQcqp;
use copf_core::analysis::{
    dual_threshold, fixed_licq_rank, reduction_equivalence_check, strong_duality_test, value_gradient_check,
    ParamIndex, TAU_BIND, TAU_RANK,
};
use copf_core::dataset::{
    default_bounds, generate, hull_sample, Dataset, DatasetMeta, GenerateConfig, Normalization, Sample,
    SamplingBounds,
};
use copf_core::nn::AdamConfig;
use copf_core::moge::{icnn_value, train, Model, Net, PredictorKind, TrainConfig};
use copf_core::problem::GammaKind;
use copf_core::screening::{benchmark, binding_set, screen_and_solve, BenchConfig, BindingPredictor, Fixed};
use copf_core::{
    build_cdfopf, build_qcopf, solve, ModelKind, ParamPoint, ParametricCopf, QuadRow, SolveOptions, SolveStatus,
};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Uniform draws from the default sampling box that solve to optimality.
fn feasible_points(p: &ParametricCopf, count: usize, seed: u64) -> Vec<ParamPoint> {
    let bounds = default_bounds(p, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..count * 20 {
        let pt = bounds.sample(&mut rng);
        if solve(p, &pt, &opts()).map(|s| s.is_optimal()).unwrap_or(false) {
            out.push(pt);
            if out.len() == count {
                break;
            }
        }
    }
    out
}

/// case30 at a perturbed load with the most heavily loaded thermal rows
/// capped just below their flow, so several rows bind.
fn stressed(p: &ParametricCopf, seed: u64, tighten: usize) -> Option<ParamPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = p.nominal_point();
    for v in pt.xi.iter_mut() {
        *v *= rng.random_range(0.85..1.1);
    }
    let sol = solve(p, &pt, &opts()).ok().filter(|s| s.is_optimal())?;
    let flows = p.g_tilde_values(&sol.x);
    let mut rows: Vec<(f64, usize)> = p
        .kept
        .iter()
        .zip(&flows)
        .filter(|(&k, _)| matches!(p.gamma_kind[k], GammaKind::Thermal { .. }))
        .map(|(&k, &f)| (f / pt.gamma[k], k))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(_, k) in rows.iter().take(tighten) {
        let f = flows[p.kept.iter().position(|&j| j == k).unwrap()];
        pt.gamma[k] = pt.gamma[k].min(rng.random_range(0.85..0.95) * f);
    }
    solve(p, &pt, &opts()).ok().filter(|s| s.is_optimal()).map(|_| pt)
}

fn c1() -> Verdict {
    let t = Instant::now();
    let (mut dx, mut df) = (0.0f64, 0.0f64);
    let mut optimal = true;
    for seed in 0..10 {
        let q = TinyQcqp::random(seed);
        let p = q.to_problem();
        let sol = solve(&p, &p.nominal_point(), &opts()).unwrap();
        optimal &= sol.status == SolveStatus::Optimal;
        let (xo, fo) = q.alm_oracle();
        dx = sol.x.iter().zip(&xo).map(|(a, b)| (a - b).abs()).fold(dx, f64::max);
        df = df.max((sol.objective - fo).abs());
    }

    // min x^2 s.t. -x <= -1: x = 1, lambda = 2.
    let p = ParametricCopf::custom(
        QuadRow {
            quad: vec![(0, 0, 2.0)],
            ..QuadRow::default()
        },
        vec![],
        vec![],
        vec![QuadRow::linear(vec![(0, -1.0)], 0.0)],
        vec![],
        vec![f64::NEG_INFINITY],
        vec![f64::INFINITY],
        vec![-1.0],
        vec![],
    );
    let s = solve(&p, &p.nominal_point(), &opts()).unwrap();
    let mut hand = (s.x[0] - 1.0).abs().max((s.lam_tilde[0] - 2.0).abs()).max((s.objective - 1.0).abs());
    // min x1 + x2 s.t. x1^2 + x2^2 <= 2: x = (-1, -1), lambda = 1/2.
    let p = ParametricCopf::custom(
        QuadRow::linear(vec![(0, 1.0), (1, 1.0)], 0.0),
        vec![],
        vec![],
        vec![QuadRow {
            quad: vec![(0, 0, 2.0), (1, 1, 2.0)],
            ..QuadRow::default()
        }],
        vec![],
        vec![-2.0; 2],
        vec![2.0; 2],
        vec![2.0],
        vec![],
    );
    let s = solve(&p, &p.nominal_point(), &opts()).unwrap();
    hand = hand
        .max((s.x[0] + 1.0).abs())
        .max((s.x[1] + 1.0).abs())
        .max((s.lam_tilde[0] - 0.5).abs())
        .max((s.objective + 2.0).abs());

    let secs = t.elapsed().as_secs_f64();
    verdict(
        optimal && dx <= 1e-4 && df <= 1e-4 && hand <= 1e-8 && secs < 5.0,
        format!("10 QCQPs max |dx| {dx:.1e}, max |df| {df:.1e}; hand KKT max err {hand:.1e}; {secs:.1}s"),
    )
}

fn c2() -> Verdict {
    let t = Instant::now();
    let mut worst = String::new();
    let mut checked = 0;
    let mut pass = true;
    for (name, seed) in [("case14", 21), ("case30", 22)] {
        let p = build_qcopf(&common::load_case(name));
        let pts = feasible_points(&p, 5, seed);
        pass &= pts.len() == 5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for pt in &pts {
            let sol = solve(&p, pt, &opts()).unwrap();
            let mut idx: Vec<ParamIndex> = sample_indices(&mut rng, p.m_tilde(), 10)
                .into_iter()
                .map(ParamIndex::Xi)
                .collect();
            // Binding rows first; the rest have a zero gradient on both sides.
            let mut gam = binding_set(&p, &sol);
            gam.truncate(5);
            while gam.len() < 5 {
                let k = p.kept[rng.random_range(0..p.kept.len())];
                if !gam.contains(&k) {
                    gam.push(k);
                }
            }
            idx.extend(gam.into_iter().map(ParamIndex::Gamma));
            match value_gradient_check(&p, pt, 1e-4, &idx, &opts()) {
                Ok(res) => {
                    for r in res {
                        checked += 1;
                        if !(r.rel_err <= 1e-2 || r.abs_err <= 1e-3) {
                            pass = false;
                            worst = format!("; {name} {:?}: fd {:.4e} vs {:.4e}", r.index, r.fd, r.neg_dual);
                        }
                    }
                }
                Err(e) => {
                    pass = false;
                    worst = format!("; {name}: {e}");
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        pass && checked == 150 && secs < 120.0,
        format!("{checked} gradient entries on case14/case30{worst}; {secs:.1}s"),
    )
}

fn c3() -> Verdict {
    let t = Instant::now();
    let p = build_qcopf(&common::load_case("case30"));
    let pts = feasible_points(&p, 40, 31);
    let value = |pt: &ParamPoint| solve(&p, pt, &opts()).ok().filter(|s| s.is_optimal()).map(|s| s.objective);
    let mut worst = f64::NEG_INFINITY;
    let mut infeasible = 0;
    let mut solved = 0;
    for pair in pts.chunks(2) {
        let (va, vb) = (value(&pair[0]).unwrap(), value(&pair[1]).unwrap());
        for a in [0.25, 0.5, 0.75] {
            match value(&pair[0].lerp(&pair[1], a)) {
                Some(v) => {
                    solved += 1;
                    let rhs = a * va + (1.0 - a) * vb;
                    worst = worst.max((v - rhs) / rhs.abs().max(1.0));
                }
                None => infeasible += 1,
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        match value(&hull_sample(&pts, &mut rng)) {
            Some(_) => solved += 1,
            None => infeasible += 1,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        pts.len() == 40 && infeasible == 0 && worst <= 1e-6 && secs < 120.0,
        format!(
            "case30: max Jensen excess {worst:.1e} (relative), {solved} hull points optimal, {infeasible} not; {secs:.1}s"
        ),
    )
}

fn c4() -> Verdict {
    let p = build_qcopf(&common::load_case("case30"));
    let mut worst = 0.0f64;
    let mut dropped = 0;
    let mut done = 0;
    let mut seed = 400;
    while done < 20 && seed < 500 {
        seed += 1;
        let Some(pt) = stressed(&p, seed, 6) else { continue };
        let full = solve(&p, &pt, &opts()).unwrap();
        match reduction_equivalence_check(&p, &pt, &opts(), dual_threshold(&full)) {
            Ok(r) => {
                worst = worst.max(r.obj_gap);
                dropped += p.l_tilde() - r.kept.len();
            }
            Err(_) => worst = f64::INFINITY,
        }
        done += 1;
    }
    verdict(
        done == 20 && worst <= 1e-6,
        format!("20 case30 instances, {dropped} rows dropped in total, max objective change {worst:.1e}"),
    )
}

fn c5() -> Verdict {
    let p = build_qcopf(&common::load_case("case30"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut lines = Vec::new();
    for k in [1usize, 2, 5] {
        let (mut trials, mut max_it, mut worst) = (0, 0, 0.0f64);
        let mut seed = 1000 * k as u64;
        while trials < 20 && seed < 1000 * k as u64 + 200 {
            seed += 1;
            let Some(pt) = stressed(&p, seed, 10) else { continue };
            let full = solve(&p, &pt, &opts()).unwrap();
            let truth = binding_set(&p, &full);
            if truth.len() < k {
                continue;
            }
            let mut pred = truth.clone();
            for _ in 0..k {
                pred.remove(rng.random_range(0..pred.len()));
            }
            trials += 1;
            match screen_and_solve(&p, &Fixed(pred), &pt, &opts()) {
                Ok(r) => {
                    max_it = max_it.max(r.iterations.len());
                    worst = worst.max(rel(r.final_solution.objective, full.objective));
                    pass &= r.iterations.len() <= k + 1;
                }
                Err(_) => pass = false,
            }
        }
        pass &= trials == 20 && worst <= 1e-6;
        lines.push(format!("p={k}: {trials} trials, max {max_it} solves, max gap {worst:.1e}"));
    }
    verdict(pass, lines.join("; "))
}

fn c6(models: &[(&str, &Model)]) -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut jensen = f64::NEG_INFINITY;
    let mut min_eig = f64::INFINITY;
    let mut pass = !models.is_empty();
    for (_, m) in models {
        let Net::Moge { icnn, mgn, .. } = &m.net else {
            pass = false;
            continue;
        };
        let d = m.dim();
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.random_range(-2.0..2.0)).collect() };
        for _ in 0..1000 {
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let s: f64 = rng.random_range(0.0..1.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
            let lhs = icnn_value(icnn, &mid);
            let rhs = s * icnn_value(icnn, &a) + (1.0 - s) * icnn_value(icnn, &b);
            jensen = jensen.max(lhs - rhs);
        }
        let h = 1e-6;
        for _ in 0..100 {
            let u = draw(&mut rng);
            // All 2d shifted inputs in one batch.
            let mut x = Array2::<f64>::zeros((2 * d, d));
            for c in 0..d {
                for k in 0..d {
                    x[(2 * c, k)] = u[k];
                    x[(2 * c + 1, k)] = u[k];
                }
                x[(2 * c, c)] += h;
                x[(2 * c + 1, c)] -= h;
            }
            let y = mgn.forward(&x);
            let j = DMatrix::<f64>::from_fn(d, d, |r, c| (y[(2 * c, r)] - y[(2 * c + 1, r)]) / (2.0 * h));
            let sym = (&j + j.transpose()) * 0.5;
            min_eig = min_eig.min(sym.symmetric_eigenvalues().min());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let names: Vec<&str> = models.iter().map(|m| m.0).collect();
    verdict(
        pass && jensen <= 1e-9 && min_eig >= -1e-6 && secs < 60.0,
        format!(
            "trained experts ({}): max Jensen excess {jensen:.1e}, min Jacobian eigenvalue {min_eig:.1e}; {secs:.1}s",
            names.join(", ")
        ),
    )
}

/// Value function `c'(gamma, xi)` on a box: every dual is constant.
fn constant_gradient_dataset() -> (Dataset, Vec<ParamPoint>, Vec<f64>) {
    let (l, m) = (4, 3);
    let lam = vec![0.8, 1.5, 0.3, 2.0];
    let mu = vec![-1.2, 0.5, 0.9];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let corners: Vec<ParamPoint> = (0..30)
        .map(|_| ParamPoint {
            gamma: (0..l).map(|_| rng.random_range(1.0..2.0)).collect(),
            xi: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut points = corners.clone();
    points.extend((0..170).map(|_| hull_sample(&corners, &mut rng)));
    let test: Vec<ParamPoint> = (0..100).map(|_| hull_sample(&corners, &mut rng)).collect();
    let samples: Vec<Sample> = points
        .into_iter()
        .map(|point| Sample {
            point,
            lam_tilde: lam.clone(),
            mu_tilde: mu.clone(),
        })
        .collect();
    let train_idx: Vec<usize> = (0..samples.len()).collect();
    let norm = Normalization::fit(&samples, &train_idx);
    let ds = Dataset {
        bounds: SamplingBounds::new(vec![1.0; l], vec![2.0; l], vec![-1.0; m], vec![1.0; m]).unwrap(),
        train: train_idx,
        test: vec![],
        norm,
        meta: DatasetMeta {
            case: "constant-gradient".into(),
            model: ModelKind::Qc,
            n_buses: 1,
            l_tilde: l,
            m_tilde: m,
            seed: 7,
            eps: 0.0,
            k1: 30,
            accepted1: 30,
            k2: 170,
            rejected: 0,
        },
        samples,
    };
    let target: Vec<f64> = lam.iter().chain(&mu).map(|v| -v).collect();
    (ds, test, target)
}

fn c7() -> Verdict {
    let (ds, test, target) = constant_gradient_dataset();
    // Zero train loss needs the flat directions of both experts driven
    // out, which takes many small steps at a decaying rate.
    let cfg = TrainConfig {
        steps: 100_000,
        lr_decay: 1e-3,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        icnn_widths: vec![4, 4],
        mgn_rank: 2,
        mgn_hidden: 4,
        gate_hidden: 8,
        log_every: 0,
        ..TrainConfig::default()
    };
    let m = match train(&ds, PredictorKind::Moge, &cfg, 7) {
        Ok(m) => m,
        Err(e) => return verdict(false, e.to_string()),
    };
    let loss = |phase: &str| m.curve.iter().find(|c| c.phase == phase).map(|c| c.final_loss).unwrap_or(f64::NAN);
    let (li, lm) = (loss("icnn"), loss("mgn"));
    let mut err = 0.0f64;
    for pt in &test {
        let y = m.predict_duals(pt).unwrap();
        err = y.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(err, f64::max);
    }
    verdict(
        li < 1e-8 && lm < 1e-8 && err <= 1e-3,
        format!("train loss icnn {li:.1e}, mgn {lm:.1e}; max error on 100 hull-interior points {err:.1e}"),
    )
}

struct Pipeline {
    name: String,
    p: ParametricCopf,
    ds: Dataset,
    model: Model,
    report: copf_core::screening::BenchReport,
    gen_s: f64,
    train_s: f64,
    bench_s: f64,
}

fn pipeline(case: &str, kind: ModelKind, gen: GenerateConfig) -> Result<Pipeline, String> {
    let c = common::load_case(case);
    let p = match kind {
        ModelKind::Qc => build_qcopf(&c),
        ModelKind::Cdf => build_cdfopf(&c).map_err(|e| e.to_string())?,
    };
    let t = Instant::now();
    let bounds = default_bounds(&p, 0.05).map_err(|e| e.to_string())?;
    let ds = generate(&p, &bounds, 0.05, &gen, &opts()).map_err(|e| e.to_string())?;
    let gen_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let model = train(&ds, PredictorKind::Moge, &TrainConfig::default(), 0).map_err(|e| e.to_string())?;
    let train_s = t.elapsed().as_secs_f64();
    let pts: Vec<ParamPoint> = ds.test_samples().map(|s| s.point.clone()).collect();
    let t = Instant::now();
    let preds: Vec<(&dyn BindingPredictor, Option<f64>)> = vec![(&model, Some(train_s))];
    let report = benchmark(&p, &preds, &pts, &opts(), &BenchConfig::default()).map_err(|e| e.to_string())?;
    let bench_s = t.elapsed().as_secs_f64();
    Ok(Pipeline {
        name: case.into(),
        p,
        ds,
        model,
        report,
        gen_s,
        train_s,
        bench_s,
    })
}

fn c8(runs: &[Result<Pipeline, String>]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total_s = 0.0;
    for r in runs {
        match r {
            Ok(r) => {
                let row = &r.report.rows[0];
                let fn_pct = 100.0 * row.counts.fn_ as f64 / row.counts.total().max(1) as f64;
                pass &= row.exact && fn_pct <= 0.01;
                total_s += r.gen_s + r.train_s + r.bench_s;
                parts.push(format!(
                    "{}: {} test instances, max gap {:.1e}, FN {} ({fn_pct:.3}%), FP {:.2}%, fraction resolved {:.2}",
                    r.name,
                    r.report.instances.len(),
                    row.max_rel_gap,
                    row.counts.fn_,
                    row.counts.fp_pct(),
                    row.fraction_resolved
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(e.clone());
            }
        }
    }
    pass &= total_s < 1800.0;
    verdict(pass, format!("{}; {total_s:.0}s", parts.join("; ")))
}

fn c9() -> Verdict {
    let gen = GenerateConfig {
        total: Some(500),
        ..GenerateConfig::default()
    };
    match pipeline("case118", ModelKind::Qc, gen) {
        Ok(r) => {
            let row = &r.report.rows[0];
            let truth_pct = r.report.full.counts.tp_pct();
            let red = row.median_reduction_pct;
            let band = if red >= 10.0 {
                "meets the 10% target"
            } else if red > 0.0 {
                "informational: between 0 and 10%"
            } else {
                "screened slower at the median"
            };
            verdict(
                red > 0.0,
                format!(
                    "case118, {} instances: median full {:.4}s, screened {:.4}s, reduction {red:.2}% ({band}); binding {truth_pct:.2}% of rows, FN {}, exact {}",
                    r.report.instances.len(),
                    row.median_full_s,
                    row.median_screened_s,
                    row.counts.fn_,
                    row.exact
                ),
            )
        }
        Err(e) => verdict(false, e),
    }
}

fn c10(runs: &[Result<Pipeline, String>]) -> Verdict {
    let mut pass = runs.len() == 2;
    let mut parts = Vec::new();
    for r in runs {
        let Ok(r) = r else {
            pass = false;
            continue;
        };
        let mut smin = f64::INFINITY;
        let mut samples = Vec::new();
        for s in r.ds.samples.iter().take(20) {
            let sol = solve(&r.p, &s.point, &opts()).unwrap();
            match fixed_licq_rank(&r.p, &sol.x, TAU_BIND, TAU_RANK) {
                Ok(rep) => {
                    pass &= rep.full_rank && rep.sigma_min > 1e-8;
                    smin = smin.min(rep.sigma_min);
                }
                Err(_) => pass = false,
            }
            samples.push((s.point.clone(), sol.x));
        }
        let sd = strong_duality_test(&r.p, &samples);
        pass &= sd.pass && samples.len() == 20;
        parts.push(format!(
            "{} ({}): min sigma {smin:.2e}, strong duality {}",
            r.name,
            r.p.kind,
            if sd.pass { "holds" } else { "fails" }
        ));
    }
    verdict(pass, parts.join("; "))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_copf"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn c11() -> Verdict {
    let case = common::case_path("case30");
    let case = case.to_str().unwrap();
    let run = |dir: &Path| -> Result<BTreeMap<String, Vec<u8>>, String> {
        cli(dir, &["gen-data", "--case", case, "--k1", "60", "--total", "120", "--seed", "3", "--out", "ds.bin"])?;
        cli(dir, &["train", "--dataset", "ds.bin", "--model", "moge", "--steps", "300", "--seed", "3", "--out", "moge.json"])?;
        cli(dir, &["train", "--dataset", "ds.bin", "--model", "ridge", "--seed", "3", "--out", "ridge.json"])?;
        cli(
            dir,
            &[
                "bench", "--case", case, "--dataset", "ds.bin", "--models", "moge.json", "ridge.json", "oracle",
                "--no-timing", "--out", "report.csv", "--json", "report.json",
            ],
        )?;
        ["ds.bin", "ds.bin.meta.json", "moge.json", "ridge.json", "report.csv", "report.json"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).map(|b| (f.to_string(), b)).map_err(|e| format!("{f}: {e}")))
            .collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (run(a.path()), run(b.path())) {
        (Ok(x), Ok(y)) => {
            let differ: Vec<&String> = x.keys().filter(|k| x[*k] != y[*k]).collect();
            let bytes: usize = x.values().map(Vec::len).sum();
            verdict(
                differ.is_empty(),
                if differ.is_empty() {
                    format!("dataset, models and report byte-identical across two runs ({bytes} bytes)")
                } else {
                    format!("differ: {differ:?}")
                },
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, e),
    }
}

const TITLES: [&str; 11] = [
    "solver oracle equivalence",
    "value gradient identity",
    "value convexity and hull feasibility",
    "reduction equivalence",
    "recovery bound",
    "ICNN/MGN structure",
    "hull generalization",
    "end-to-end screening exactness",
    "relative speedup direction",
    "LICQ and strong duality",
    "determinism",
];

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let want = |k: usize| only.as_ref().is_none_or(|s| s.contains(&k));
    let mut results: BTreeMap<usize, Verdict> = BTreeMap::new();
    let mut step = |k: usize, f: &mut dyn FnMut() -> Verdict| {
        if want(k) {
            eprintln!("running criterion {k}");
            let v = f();
            eprintln!("criterion {k}: {}", if v.pass { "PASS" } else { "FAIL" });
            results.insert(k, v);
        }
    };
    step(1, &mut c1);
    step(2, &mut c2);
    step(3, &mut c3);
    step(4, &mut c4);
    step(5, &mut c5);
    let runs: Vec<Result<Pipeline, String>> = if want(6) || want(8) || want(10) {
        vec![
            pipeline("case30", ModelKind::Qc, GenerateConfig::default()),
            pipeline("case136", ModelKind::Cdf, GenerateConfig::default()),
        ]
    } else {
        Vec::new()
    };
    step(6, &mut || {
        let models: Vec<(&str, &Model)> = runs.iter().flatten().map(|r| (r.name.as_str(), &r.model)).collect();
        c6(&models)
    });
    step(7, &mut c7);
    step(8, &mut || c8(&runs));
    step(9, &mut c9);
    step(10, &mut || c10(&runs));
    step(11, &mut c11);

    let mut failed = 0;
    for (k, v) in &results {
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {k:>2} {}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            TITLES[k - 1],
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
