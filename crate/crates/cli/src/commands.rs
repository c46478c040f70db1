use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use copf_core::analysis::{analyze, AnalysisError, ParamIndex};
use copf_core::case::classify_topology;
use copf_core::dataset::{self, default_bounds, generate, Dataset, DatasetError};
use copf_core::moge::{self, Model, MogeError, PredictorKind};
use copf_core::screening::{
    benchmark, screen_and_solve, AllBind, BenchConfig, BindingPredictor, Oracle, ScreeningError,
};
use copf_core::{
    build_cdfopf, build_qcopf, parse_matpower, CaseError, ModelKind, NetworkCase, ParamPoint, ParametricCopf,
    ProblemError,
};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{CaseArgs, Cli, CliError, Command};

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MogeError> for CliError {
    fn from(e: MogeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::TooFewFeasible(_) | DatasetError::HullInfeasible(_) => CliError::Solver(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Problem(_) | AnalysisError::NotFeasible(_) => CliError::Data(e.to_string()),
            e => CliError::Solver(e.to_string()),
        }
    }
}

impl From<ScreeningError> for CliError {
    fn from(e: ScreeningError) -> Self {
        match e {
            ScreeningError::SolverFailure { .. } | ScreeningError::LoopOverrun(_) => CliError::Solver(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Provenance written next to every output file as `<file>.run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub wall_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_time_s: Option<f64>,
}

pub fn provenance_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}

struct Ctx {
    cfg: RunConfig,
    argv: Vec<String>,
    start: Instant,
}

impl Ctx {
    fn record(
        &self,
        command: &str,
        output: &Path,
        inputs: Vec<PathBuf>,
        seeds: &[(&str, u64)],
        train_time_s: Option<f64>,
    ) -> Result<(), CliError> {
        let rec = Provenance {
            command: command.into(),
            argv: self.argv.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.cfg.clone(),
            seeds: seeds.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            inputs,
            output: output.to_path_buf(),
            wall_s: self.start.elapsed().as_secs_f64(),
            train_time_s,
        };
        write(&provenance_path(output), &json(&rec))
    }

    fn case_path(&self) -> Result<PathBuf, CliError> {
        self.cfg
            .case
            .clone()
            .ok_or_else(|| CliError::Usage("no case given; pass --case or set `case` in the config".into()))
    }

    fn load_case(&self) -> Result<NetworkCase, CliError> {
        let path = self.case_path()?;
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Ok(parse_matpower(&text)?)
    }

    fn problem(&self) -> Result<ParametricCopf, CliError> {
        let case = self.load_case()?;
        Ok(match self.cfg.model {
            ModelKind::Qc => build_qcopf(&case),
            ModelKind::Cdf => build_cdfopf(&case)?,
        })
    }

    fn apply_case(&mut self, a: CaseArgs) {
        if let Some(c) = a.case {
            self.cfg.case = Some(c);
        }
        if let Some(m) = a.model {
            self.cfg.model = m;
        }
    }
}

fn load_point(p: &ParametricCopf, path: Option<&Path>) -> Result<ParamPoint, CliError> {
    let pt = match path {
        None => p.nominal_point(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
    };
    p.check_point(&pt)?;
    Ok(pt)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("model file not found: {}", path.display())));
    }
    moge::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset file not found: {}", path.display())));
    }
    dataset::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `count` indices spread evenly over `0..n`.
fn spread(n: usize, count: usize) -> Vec<usize> {
    let k = count.min(n);
    (0..k).map(|i| i * n / k).collect()
}

pub fn dispatch(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx {
        cfg,
        argv: argv.to_vec(),
        start: Instant::now(),
    };
    match cli.command {
        Command::Parse { case, json: out } => {
            if let Some(c) = case {
                ctx.cfg.case = Some(c);
            }
            let c = ctx.load_case()?;
            let topo = classify_topology(&c)?;
            println!("case {}", c.name);
            println!("buses {}", c.buses.len());
            println!("branches {}", c.branches.len());
            println!("generators {}", c.generators.len());
            println!("transformers {}", c.transformer_count());
            println!("topology {}", if topo.is_radial() { "radial" } else { "meshed" });
            if let Some(out) = out {
                write(&out, &c.to_json())?;
            }
            Ok(())
        }
        Command::Solve { case, gamma_xi, out } => {
            ctx.apply_case(case);
            let p = ctx.problem()?;
            let pt = load_point(&p, gamma_xi.as_deref())?;
            let sol = copf_core::solve(&p, &pt, &ctx.cfg.solver)?;
            println!("case {} model {}", p.name, p.kind);
            println!("status {:?}", sol.status);
            println!("iterations {}", sol.iterations);
            println!("objective {:.10e}", sol.objective);
            println!(
                "kkt stationarity {:.3e} primal {:.3e} dual {:.3e} complementarity {:.3e}",
                sol.kkt.stationarity, sol.kkt.primal_feas, sol.kkt.dual_feas, sol.kkt.complementarity
            );
            if let Some(out) = &out {
                write(out, &json(&sol))?;
                let mut inputs = vec![ctx.case_path()?];
                inputs.extend(gamma_xi);
                ctx.record("solve", out, inputs, &[], None)?;
            }
            if !sol.is_optimal() {
                return Err(CliError::Solver(format!("solve ended {:?}", sol.status)));
            }
            Ok(())
        }
        Command::Analyze {
            case,
            gamma_xi,
            checks,
            h,
            out,
        } => {
            ctx.apply_case(case);
            let p = ctx.problem()?;
            let pt = load_point(&p, gamma_xi.as_deref())?;
            let mut idx: Vec<ParamIndex> = spread(p.m_tilde(), checks).into_iter().map(ParamIndex::Xi).collect();
            idx.extend(spread(p.kept.len(), checks).into_iter().map(|i| ParamIndex::Gamma(p.kept[i])));
            let rep = analyze(&p, &pt, &idx, h, &ctx.cfg.solver)?;
            match &out {
                Some(out) => {
                    write(out, &json(&rep))?;
                    let mut inputs = vec![ctx.case_path()?];
                    inputs.extend(gamma_xi);
                    ctx.record("analyze", out, inputs, &[], None)?;
                }
                None => print!("{}", json(&rep)),
            }
            Ok(())
        }
        Command::GenData {
            case,
            k1,
            k2,
            total,
            eps,
            seed,
            out,
        } => {
            ctx.apply_case(case);
            let s = &mut ctx.cfg.sampling;
            if let Some(v) = k1 {
                s.k1 = v;
            }
            if let Some(v) = k2 {
                s.k2 = v;
                if total.is_none() {
                    s.total = None;
                }
            }
            if total.is_some() {
                s.total = total;
            }
            if let Some(v) = eps {
                s.eps = v;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = out {
                ctx.cfg.output.dataset = v;
            }
            let p = ctx.problem()?;
            let bounds = default_bounds(&p, ctx.cfg.sampling.eps)?;
            let ds = generate(
                &p,
                &bounds,
                ctx.cfg.sampling.eps,
                &ctx.cfg.sampling.generate_config(),
                &ctx.cfg.solver,
            )?;
            let out = ctx.cfg.output.dataset.clone();
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            dataset::save(&ds, &out)?;
            println!(
                "{} samples ({} of {} uniform draws feasible, {} hull points), {} train / {} test -> {}",
                ds.samples.len(),
                ds.meta.accepted1,
                ds.meta.k1,
                ds.meta.k2,
                ds.train.len(),
                ds.test.len(),
                out.display()
            );
            let seed = ctx.cfg.sampling.seed;
            ctx.record("gen-data", &out, vec![ctx.case_path()?], &[("sampling", seed)], None)
        }
        Command::Train {
            dataset: ds_path,
            model,
            steps,
            seed,
            out,
        } => {
            if let Some(v) = steps {
                ctx.cfg.training.params.steps = v;
            }
            if let Some(v) = seed {
                ctx.cfg.training.seed = v;
            }
            if let Some(v) = out {
                ctx.cfg.output.model = v;
            }
            let ds_path = ds_path.unwrap_or_else(|| ctx.cfg.output.dataset.clone());
            let ds = load_dataset(&ds_path)?;
            let t = Instant::now();
            let m = moge::train(&ds, model, &ctx.cfg.training.params, ctx.cfg.training.seed)?;
            let train_s = t.elapsed().as_secs_f64();
            let out = ctx.cfg.output.model.clone();
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            moge::save(&m, &out)?;
            for c in &m.curve {
                println!("{:<6} loss {:.3e} -> {:.3e}", c.phase, c.initial_loss, c.final_loss);
            }
            println!("{model} trained in {train_s:.1} s -> {}", out.display());
            let seed = ctx.cfg.training.seed;
            ctx.record("train", &out, vec![ds_path], &[("training", seed)], Some(train_s))
        }
        Command::Screen {
            case,
            model_file,
            gamma_xi,
            predictor,
            out,
        } => {
            ctx.apply_case(case);
            let p = ctx.problem()?;
            let pt = load_point(&p, gamma_xi.as_deref())?;
            let model = model_file.as_deref().map(load_model).transpose()?;
            let model = model.map(|m| with_bind_rel(m, ctx.cfg.screening.bind_rel));
            let oracle = Oracle { opts: ctx.cfg.solver };
            let pred: &dyn BindingPredictor = match (predictor.as_deref(), &model) {
                (Some("oracle"), _) => &oracle,
                (Some("all-bind"), _) => &AllBind,
                (Some(k), Some(m)) => {
                    let kind: PredictorKind = k.parse().map_err(CliError::Usage)?;
                    if kind != m.kind() {
                        return Err(CliError::Data(format!("model file holds a {} model, not {kind}", m.kind())));
                    }
                    m
                }
                (None, Some(m)) => m,
                (Some(k), None) => {
                    k.parse::<PredictorKind>().map_err(CliError::Usage)?;
                    return Err(CliError::Usage(format!("predictor {k} needs --model-file")));
                }
                (None, None) => return Err(CliError::Usage("pass --model-file or --predictor".into())),
            };
            if let Some(m) = &model {
                check_model(m, &p)?;
            }
            let r = screen_and_solve(&p, pred, &pt, &ctx.cfg.solver)?;
            println!("predictor {}", pred.name());
            println!("predicted binding {:?}", r.initial_bind);
            for (k, it) in r.iterations.iter().enumerate() {
                println!(
                    "solve {k}: {} rows kept, {:?}, objective {:.10e}, violated {:?}",
                    it.kept, it.status, it.objective, it.violated
                );
            }
            println!("objective {:.10e}", r.final_solution.objective);
            println!("resolves {}", r.resolve_count);
            if let Some(out) = &out {
                write(out, &json(&r))?;
                let mut inputs = vec![ctx.case_path()?];
                inputs.extend(model_file);
                inputs.extend(gamma_xi);
                ctx.record("screen", out, inputs, &[], None)?;
            }
            Ok(())
        }
        Command::Bench {
            case,
            dataset: ds_path,
            models,
            out,
            no_timing,
            parallel,
            instances,
            json: json_out,
        } => {
            ctx.apply_case(case);
            if no_timing {
                ctx.cfg.screening.timing = false;
            }
            if parallel {
                ctx.cfg.screening.serial = false;
            }
            if instances.is_some() {
                ctx.cfg.screening.instances = instances;
            }
            if let Some(v) = out {
                ctx.cfg.output.report = v;
            }
            let ds_path = ds_path.unwrap_or_else(|| ctx.cfg.output.dataset.clone());
            let mut loaded = Vec::new();
            let mut inputs = vec![ctx.case_path()?, ds_path.clone()];
            for name in &models {
                if name == "oracle" || name == "all-bind" {
                    continue;
                }
                let path = PathBuf::from(name);
                let m = with_bind_rel(load_model(&path)?, ctx.cfg.screening.bind_rel);
                loaded.push((m, train_time(&path)));
                inputs.push(path);
            }
            let p = ctx.problem()?;
            let ds = load_dataset(&ds_path)?;
            if ds.meta.case != p.name || ds.meta.model != p.kind {
                return Err(CliError::Data(format!(
                    "dataset was generated for {} ({}), not {} ({})",
                    ds.meta.case, ds.meta.model, p.name, p.kind
                )));
            }
            for (m, _) in &loaded {
                check_model(m, &p)?;
            }
            let oracle = Oracle { opts: ctx.cfg.solver };
            let mut preds: Vec<(&dyn BindingPredictor, Option<f64>)> = Vec::new();
            let mut next = loaded.iter();
            for name in &models {
                match name.as_str() {
                    "oracle" => preds.push((&oracle, None)),
                    "all-bind" => preds.push((&AllBind, None)),
                    _ => {
                        let (m, t) = next.next().expect("one model per file");
                        preds.push((m, *t));
                    }
                }
            }
            let mut pts: Vec<ParamPoint> = ds.test_samples().map(|s| s.point.clone()).collect();
            if let Some(n) = ctx.cfg.screening.instances {
                pts.truncate(n);
            }
            if pts.is_empty() {
                return Err(CliError::Data("dataset has no test instances".into()));
            }
            info!("benchmarking {} predictors on {} instances", preds.len(), pts.len());
            let bcfg = BenchConfig {
                timing: ctx.cfg.screening.timing,
                serial: ctx.cfg.screening.serial,
                seed: ctx.cfg.screening.seed,
            };
            let rep = benchmark(&p, &preds, &pts, &ctx.cfg.solver, &bcfg)?;
            let csv = rep.to_csv();
            let out = ctx.cfg.output.report.clone();
            write(&out, &csv)?;
            print!("{csv}");
            if let Some(j) = &json_out {
                write(j, &json(&rep))?;
            }
            for r in &rep.rows {
                if !r.exact {
                    log::warn!("{}: screened objective off by {:.2e}", r.predictor, r.max_rel_gap);
                }
            }
            let seed = ctx.cfg.screening.seed;
            ctx.record("bench", &out, inputs, &[("order", seed)], None)
        }
    }
}

fn with_bind_rel(mut m: Model, rel: Option<f64>) -> Model {
    if let Some(rel) = rel {
        m.bind_threshold *= rel / m.cfg.bind_rel;
        m.cfg.bind_rel = rel;
    }
    m
}

fn check_model(m: &Model, p: &ParametricCopf) -> Result<(), CliError> {
    if m.l_tilde != p.l_tilde() || m.m_tilde != p.m_tilde() {
        return Err(CliError::Data(format!(
            "model expects {} + {} parameters, the problem has {} + {}",
            m.l_tilde,
            m.m_tilde,
            p.l_tilde(),
            p.m_tilde()
        )));
    }
    Ok(())
}

/// Training time recorded by `train` next to the model file, if any.
fn train_time(model: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(provenance_path(model)).ok()?;
    serde_json::from_str::<Provenance>(&text).ok()?.train_time_s
}
