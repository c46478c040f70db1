use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Icnn, MgnArch, Mgn, Mlp, Model, MogeError, Net, PhaseCurve, PredictorKind, Ridge, TrainConfig,
};
use crate::dataset::Dataset;
use crate::nn::{Activation, Adam, Params, Tape, Var};

/// A network whose output rows are compared against target rows.
pub trait Trainable {
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;
    fn output(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var;
    /// Called after every optimizer step.
    fn project(&mut self) {}
}

impl Trainable for Icnn {
    fn params(&self) -> &Params {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }
    fn output(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        self.on_tape(tape, p, u).1
    }
    fn project(&mut self) {
        Icnn::project(self)
    }
}

impl Trainable for Mgn {
    fn params(&self) -> &Params {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }
    fn output(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        self.on_tape(tape, p, u)
    }
}

impl Trainable for Mlp {
    fn params(&self) -> &Params {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }
    fn output(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        self.on_tape(tape, p, u)
    }
}

fn rows(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

enum Loss<'a> {
    Mse(Option<&'a Array2<f64>>),
    Bce,
}

fn loss_node(tape: &mut Tape, out: Var, target: Array2<f64>, loss: &Loss, weight: Option<Array2<f64>>) -> Var {
    match loss {
        Loss::Mse(_) => {
            let denom = target.len() as f64;
            tape.weighted_sse(out, target, weight, denom)
        }
        Loss::Bce => tape.bce_logits(out, target),
    }
}

fn full_loss<N: Trainable>(net: &N, u: &Array2<f64>, t: &Array2<f64>, loss: &Loss) -> f64 {
    let mut tape = Tape::new();
    let p = net.params().on_tape(&mut tape);
    let x = tape.leaf(u.clone());
    let out = net.output(&mut tape, &p, x);
    let w = match loss {
        Loss::Mse(w) => w.cloned(),
        Loss::Bce => None,
    };
    let l = loss_node(&mut tape, out, t.clone(), loss, w);
    tape.scalar(l)
}

fn fit<N: Trainable>(
    net: &mut N,
    u: &Array2<f64>,
    t: &Array2<f64>,
    loss: Loss,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    phase: &str,
    mut hook: impl FnMut(usize, &N),
) -> PhaseCurve {
    let n = u.nrows();
    let initial_loss = full_loss(net, u, t, &loss);
    let mut adam = Adam::new(cfg.adam, &net.params().shapes());
    let mut batch_losses = Vec::new();
    let decay = cfg.lr_decay.powf(1.0 / cfg.steps.saturating_sub(1).max(1) as f64);
    for step in 0..cfg.steps {
        if cfg.lr_decay != 1.0 {
            adam.set_lr(cfg.adam.lr * decay.powi(step as i32));
        }
        let idx = draw(rng, n, cfg.batch);
        let mut tape = Tape::new();
        let p = net.params().on_tape(&mut tape);
        let x = tape.leaf(rows(u, &idx));
        let out = net.output(&mut tape, &p, x);
        let w = match &loss {
            Loss::Mse(w) => w.map(|w| rows(w, &idx)),
            Loss::Bce => None,
        };
        let l = loss_node(&mut tape, out, rows(t, &idx), &loss, w);
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            batch_losses.push((step, tape.scalar(l)));
            debug!("{phase} step {step}: batch loss {:.3e}", tape.scalar(l));
        }
        let grads = tape.backward(l);
        let g: Vec<_> = p.iter().map(|&v| grads.get(v)).collect();
        adam.step(&mut net.params_mut().values, &g);
        net.project();
        hook(step, net);
    }
    let final_loss = full_loss(net, u, t, &loss);
    info!("{phase}: loss {initial_loss:.3e} -> {final_loss:.3e}");
    PhaseCurve {
        phase: phase.to_string(),
        initial_loss,
        final_loss,
        batch_losses,
    }
}

/// Mean-square regression of `net(u)` onto `t`, projecting after every
/// step; `hook` sees the network after each step.
pub fn fit_regressor<N: Trainable>(
    net: &mut N,
    u: &Array2<f64>,
    t: &Array2<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    phase: &str,
    hook: impl FnMut(usize, &N),
) -> PhaseCurve {
    fit(net, u, t, Loss::Mse(None), cfg, rng, phase, hook)
}

/// Cross-entropy fit of logits to 0/1 labels.
pub fn fit_classifier(
    net: &mut Mlp,
    u: &Array2<f64>,
    labels: &Array2<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> PhaseCurve {
    fit(net, u, labels, Loss::Bce, cfg, rng, "deep", |_, _| {})
}

/// Gate over frozen expert outputs; the trainable part is the logit network.
struct GateFit<'a> {
    gate: &'a mut Mlp,
    icnn_out: &'a Array2<f64>,
    mgn_out: &'a Array2<f64>,
    /// Row indices of the current batch into the expert outputs.
    batch: Vec<usize>,
}

impl Trainable for GateFit<'_> {
    fn params(&self) -> &Params {
        &self.gate.params
    }
    fn params_mut(&mut self) -> &mut Params {
        &mut self.gate.params
    }
    fn output(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        let logits = self.gate.on_tape(tape, p, u);
        let w = tape.act(logits, Activation::Sigmoid);
        let a = tape.leaf(rows(self.icnn_out, &self.batch));
        let b = tape.leaf(rows(self.mgn_out, &self.batch));
        let diff = tape.sub(a, b);
        let wd = tape.mul(w, diff);
        tape.add(b, wd)
    }
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Normalized train inputs, model-unit targets and binding labels.
struct TrainData {
    u: Array2<f64>,
    t: Array2<f64>,
    labels: Array2<f64>,
    /// Largest absolute training dual in original units.
    dual_scale: f64,
}

fn train_data(ds: &Dataset) -> Result<TrainData, MogeError> {
    if ds.train.is_empty() {
        return Err(MogeError::EmptyTrainSplit);
    }
    let d = ds.dim();
    let l = ds.meta.l_tilde;
    let n = ds.train.len();
    let mut u = Array2::zeros((n, d));
    let mut t = Array2::zeros((n, d));
    let mut labels = Array2::zeros((n, l));
    let mut dual_scale: f64 = 0.0;
    for (r, s) in ds.train_samples().enumerate() {
        let target = s.target();
        dual_scale = target.iter().fold(dual_scale, |m, v| m.max(v.abs()));
        for (j, v) in ds.norm.input(&s.point).into_iter().enumerate() {
            u[(r, j)] = v;
        }
        for (j, v) in ds.norm.target(&target).into_iter().enumerate() {
            t[(r, j)] = v;
        }
        for i in s.binding() {
            labels[(r, i)] = 1.0;
        }
    }
    Ok(TrainData {
        u,
        t,
        labels,
        dual_scale: if dual_scale > 0.0 { dual_scale } else { 1.0 },
    })
}

fn train_icnn(data: &TrainData, cfg: &TrainConfig, seed: u64) -> (Icnn, PhaseCurve) {
    let d = data.u.ncols();
    let mut icnn = Icnn::new(cfg.icnn_arch(d), &mut stream(seed, 1));
    let curve = fit_regressor(&mut icnn, &data.u, &data.t, cfg, &mut stream(seed, 2), "icnn", |_, _| {});
    (icnn, curve)
}

fn train_mgn(data: &TrainData, cfg: &TrainConfig, seed: u64) -> (Mgn, PhaseCurve) {
    let arch: MgnArch = cfg.mgn_arch(data.u.ncols());
    let mut mgn = Mgn::new(arch, &mut stream(seed, 3));
    let curve = fit_regressor(&mut mgn, &data.u, &data.t, cfg, &mut stream(seed, 4), "mgn", |_, _| {});
    (mgn, curve)
}

fn gate_weights(data: &TrainData, l: usize, n_buses: usize, cfg: &TrainConfig) -> Array2<f64> {
    let heavy = cfg.bind_weight * n_buses as f64;
    let mut w = Array2::ones(data.t.raw_dim());
    for r in 0..w.nrows() {
        for i in 0..l {
            if data.labels[(r, i)] > 0.5 {
                w[(r, i)] = heavy;
            }
        }
        if cfg.weight_mu {
            for j in l..w.ncols() {
                w[(r, j)] = heavy;
            }
        }
    }
    w
}

/// Gate phase with both experts frozen.
fn train_gate(
    data: &TrainData,
    icnn: &Icnn,
    mgn: &Mgn,
    l: usize,
    n_buses: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> (Mlp, PhaseCurve) {
    let d = data.u.ncols();
    let mut gate = Mlp::new(cfg.gate_arch(d), "gate", &mut stream(seed, 5));
    let icnn_out = icnn.grad(&data.u);
    let mgn_out = mgn.forward(&data.u);
    let weight = gate_weights(data, l, n_buses, cfg);
    let n = data.u.nrows();
    let all: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, 6);
    let mut adam = Adam::new(cfg.adam, &gate.params.shapes());

    let loss_on = |gate: &mut Mlp, idx: &[usize]| -> (Tape, Vec<Var>, Var) {
        let fit = GateFit {
            gate,
            icnn_out: &icnn_out,
            mgn_out: &mgn_out,
            batch: idx.to_vec(),
        };
        let mut tape = Tape::new();
        let p = fit.params().on_tape(&mut tape);
        let x = tape.leaf(rows(&data.u, idx));
        let out = fit.output(&mut tape, &p, x);
        let target = rows(&data.t, idx);
        let denom = target.len() as f64;
        let l = tape.weighted_sse(out, target, Some(rows(&weight, idx)), denom);
        (tape, p, l)
    };

    let initial_loss = {
        let (tape, _, l) = loss_on(&mut gate, &all);
        tape.scalar(l)
    };
    let mut batch_losses = Vec::new();
    for step in 0..cfg.steps {
        let idx = draw(&mut rng, n, cfg.batch);
        let (tape, p, l) = loss_on(&mut gate, &idx);
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            batch_losses.push((step, tape.scalar(l)));
        }
        let grads = tape.backward(l);
        let g: Vec<_> = p.iter().map(|&v| grads.get(v)).collect();
        adam.step(&mut gate.params.values, &g);
    }
    let final_loss = {
        let (tape, _, l) = loss_on(&mut gate, &all);
        tape.scalar(l)
    };
    info!("gate: loss {initial_loss:.3e} -> {final_loss:.3e}");
    (
        gate,
        PhaseCurve {
            phase: "gate".into(),
            initial_loss,
            final_loss,
            batch_losses,
        },
    )
}

/// Trains a predictor of the given kind on the training split.
pub fn train(ds: &Dataset, kind: PredictorKind, cfg: &TrainConfig, seed: u64) -> Result<Model, MogeError> {
    let data = train_data(ds)?;
    let l = ds.meta.l_tilde;
    let n_buses = ds.meta.n_buses;
    let mut curve = Vec::new();
    let net = match kind {
        PredictorKind::Moge => {
            let (icnn, c1) = train_icnn(&data, cfg, seed);
            let (mgn, c2) = train_mgn(&data, cfg, seed);
            let (gate, c3) = train_gate(&data, &icnn, &mgn, l, n_buses, cfg, seed);
            curve.extend([c1, c2, c3]);
            Net::Moge { icnn, mgn, gate }
        }
        PredictorKind::Icnn => {
            let (icnn, c) = train_icnn(&data, cfg, seed);
            curve.push(c);
            Net::Icnn(icnn)
        }
        PredictorKind::Mgn => {
            let (mgn, c) = train_mgn(&data, cfg, seed);
            curve.push(c);
            Net::Mgn(mgn)
        }
        PredictorKind::Deep => {
            let d = data.u.ncols();
            let mut mlp = Mlp::new(cfg.deep_arch(d, l), "deep", &mut stream(seed, 7));
            curve.push(fit_classifier(&mut mlp, &data.u, &data.labels, cfg, &mut stream(seed, 8)));
            Net::Deep(mlp)
        }
        PredictorKind::Ridge => {
            let signs = data.labels.mapv(|v| 2.0 * v - 1.0);
            Net::Ridge(Ridge::fit(&data.u, &signs, cfg.ridge_alpha)?)
        }
    };
    Ok(Model {
        net,
        norm: ds.norm.clone(),
        l_tilde: l,
        m_tilde: ds.meta.m_tilde,
        n_buses,
        bind_threshold: cfg.bind_rel * data.dual_scale,
        seed,
        cfg: cfg.clone(),
        curve,
    })
}
