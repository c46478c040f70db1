use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MogeError;
use crate::nn::{init_nonneg, init_uniform, Activation, Params, Tape, Var};

fn zeros_row(n: usize) -> Array2<f64> {
    Array2::zeros((1, n))
}

fn check_shapes(params: &Params, want: &[(usize, usize)]) -> Result<(), MogeError> {
    if params.shapes() != want {
        return Err(MogeError::Format(format!(
            "parameter shapes {:?} do not match architecture {:?}",
            params.shapes(),
            want
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnnArch {
    pub dim: usize,
    /// Hidden widths; a scalar output layer follows.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl IcnnArch {
    fn layer_widths(&self) -> Vec<usize> {
        let mut w = self.widths.clone();
        w.push(1);
        w
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let w = self.layer_widths();
        let mut s = Vec::new();
        for k in 0..w.len() {
            s.push((self.dim, w[k]));
            if k > 0 {
                s.push((w[k - 1], w[k]));
            }
            s.push((1, w[k]));
        }
        s
    }
}

/// Input-convex network `u -> f(u)`; the prediction is `grad f`.
///
/// Parameters are stored per layer as `W_x`, `W_z` (from the second layer
/// on) and the bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Icnn {
    pub arch: IcnnArch,
    pub params: Params,
}

impl Icnn {
    pub fn new(arch: IcnnArch, rng: &mut impl Rng) -> Icnn {
        let w = arch.layer_widths();
        let mut params = Params::new();
        for k in 0..w.len() {
            params.push(format!("icnn.wx{k}"), init_uniform(rng, arch.dim, w[k]));
            if k > 0 {
                params.push(format!("icnn.wz{k}"), init_nonneg(rng, w[k - 1], w[k]));
            }
            params.push(format!("icnn.b{k}"), zeros_row(w[k]));
        }
        Icnn { arch, params }
    }

    pub fn from_parts(arch: IcnnArch, params: Params) -> Result<Icnn, MogeError> {
        check_shapes(&params, &arch.shapes())?;
        Ok(Icnn { arch, params })
    }

    /// Indices into `params` of the `W_z` blocks.
    pub fn wz_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params.names[i].starts_with("icnn.wz")).collect()
    }

    /// Clamps every `W_z` entry at zero.
    pub fn project(&mut self) {
        for i in self.wz_indices() {
            self.params.values[i].mapv_inplace(|v| v.max(0.0));
        }
    }

    /// Value `(B x 1)` and input gradient `(B x dim)` built on the tape so
    /// that the gradient can be differentiated again.
    pub fn on_tape(&self, tape: &mut Tape, p: &[Var], u: Var) -> (Var, Var) {
        let w = self.arch.layer_widths();
        let k_last = w.len() - 1;
        let act = self.arch.activation;
        let (mut wx, mut wz, mut bias) = (Vec::new(), vec![None], Vec::new());
        let mut it = p.iter().copied();
        for k in 0..w.len() {
            wx.push(it.next().expect("W_x"));
            if k > 0 {
                wz.push(it.next());
            }
            bias.push(it.next().expect("bias"));
        }

        let mut pre = Vec::new();
        let mut z: Option<Var> = None;
        let mut value = u;
        for k in 0..w.len() {
            let mut a = tape.affine(u, wx[k], bias[k]);
            if let (Some(zk), Some(wzk)) = (z, wz[k]) {
                let t = tape.matmul(zk, wzk);
                a = tape.add(a, t);
            }
            if k < k_last {
                pre.push(a);
                z = Some(tape.act(a, act));
            } else {
                value = a;
            }
        }

        let rows = tape.value(u).nrows();
        let ones = tape.leaf(Array2::ones((rows, 1)));
        let mut grad = tape.matmul_t(ones, wx[k_last]);
        if k_last == 0 {
            return (value, grad);
        }
        let mut dz = tape.matmul_t(ones, wz[k_last].expect("output W_z"));
        for k in (0..k_last).rev() {
            let d = tape.act_d1(pre[k], act);
            let da = tape.mul(dz, d);
            let gk = tape.matmul_t(da, wx[k]);
            grad = tape.add(grad, gk);
            if k > 0 {
                dz = tape.matmul_t(da, wz[k].expect("hidden W_z"));
            }
        }
        (value, grad)
    }

    pub fn value(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let p = self.params.on_tape(&mut tape);
        let x = tape.leaf(u.clone());
        let (v, _) = self.on_tape(&mut tape, &p, x);
        tape.value(v).clone()
    }

    pub fn grad(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let p = self.params.on_tape(&mut tape);
        let x = tape.leaf(u.clone());
        let (_, g) = self.on_tape(&mut tape, &p, x);
        tape.value(g).clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgnArch {
    pub dim: usize,
    pub rank: usize,
    pub hidden: usize,
    /// One activation per unit; must be convex, nonnegative and `C^2`.
    pub activations: Vec<Activation>,
}

impl MgnArch {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(self.rank, self.dim), (1, self.dim)];
        for _ in &self.activations {
            s.push((self.hidden, self.dim));
            s.push((1, self.hidden));
        }
        s
    }
}

/// `y = b' + V^T V u + sum_k sigma_k(z_k) A_k^T act_k'(z_k)` with
/// `z_k = A_k u + b_k` and `sigma_k(z) = mean_i act_k(z_i)`.
///
/// The Jacobian is `V^T V + sum_k A_k^T (s s^T / h + sigma_k diag(act_k'')) A_k`,
/// positive semidefinite because `sigma_k >= 0` and `act_k'' >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mgn {
    pub arch: MgnArch,
    pub params: Params,
}

impl Mgn {
    pub fn new(arch: MgnArch, rng: &mut impl Rng) -> Mgn {
        let mut params = Params::new();
        params.push("mgn.v", init_uniform(rng, arch.dim, arch.rank).reversed_axes() * 0.1);
        params.push("mgn.b_out", zeros_row(arch.dim));
        for k in 0..arch.activations.len() {
            params.push(format!("mgn.a{k}"), init_uniform(rng, arch.dim, arch.hidden).reversed_axes() * 0.1);
            params.push(format!("mgn.b{k}"), zeros_row(arch.hidden));
        }
        Mgn { arch, params }
    }

    pub fn from_parts(arch: MgnArch, params: Params) -> Result<Mgn, MogeError> {
        check_shapes(&params, &arch.shapes())?;
        Ok(Mgn { arch, params })
    }

    pub fn on_tape(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        let uv = tape.matmul_t(u, p[0]);
        let lin = tape.matmul(uv, p[0]);
        let mut y = tape.add_row(lin, p[1]);
        for (k, &act) in self.arch.activations.iter().enumerate() {
            let (a, b) = (p[2 + 2 * k], p[3 + 2 * k]);
            let za = tape.matmul_t(u, a);
            let z = tape.add_row(za, b);
            let fz = tape.act(z, act);
            let sum = tape.row_sum(fz);
            let sigma = tape.scale(sum, 1.0 / self.arch.hidden as f64);
            let s = tape.act_d1(z, act);
            let back = tape.matmul(s, a);
            let term = tape.mul_col(back, sigma);
            y = tape.add(y, term);
        }
        y
    }

    pub fn forward(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let p = self.params.on_tape(&mut tape);
        let x = tape.leaf(u.clone());
        let y = self.on_tape(&mut tape, &p, x);
        tape.value(y).clone()
    }
}

/// Plain multilayer perceptron; used for the gate (one hidden layer) and the
/// deep classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpArch {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).flat_map(|w| [(w[0], w[1]), (1, w[1])]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: MlpArch,
    pub params: Params,
}

impl Mlp {
    pub fn new(arch: MlpArch, prefix: &str, rng: &mut impl Rng) -> Mlp {
        let mut params = Params::new();
        for (k, w) in arch.sizes.windows(2).enumerate() {
            params.push(format!("{prefix}.w{k}"), init_uniform(rng, w[0], w[1]));
            params.push(format!("{prefix}.b{k}"), zeros_row(w[1]));
        }
        Mlp { arch, params }
    }

    pub fn from_parts(arch: MlpArch, params: Params) -> Result<Mlp, MogeError> {
        check_shapes(&params, &arch.shapes())?;
        Ok(Mlp { arch, params })
    }

    /// Output logits; the last layer is linear.
    pub fn on_tape(&self, tape: &mut Tape, p: &[Var], u: Var) -> Var {
        let layers = self.arch.sizes.len() - 1;
        let mut h = u;
        for k in 0..layers {
            h = tape.affine(h, p[2 * k], p[2 * k + 1]);
            if k + 1 < layers {
                h = tape.act(h, self.arch.activation);
            }
        }
        h
    }

    pub fn forward(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let p = self.params.on_tape(&mut tape);
        let x = tape.leaf(u.clone());
        let y = self.on_tape(&mut tape, &p, x);
        tape.value(y).clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeArch {
    pub dim: usize,
    pub outputs: usize,
    pub alpha: f64,
}

/// Linear scores `u W + c` fitted to labels in `{-1, 1}`; the intercept is
/// not penalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub arch: RidgeArch,
    pub params: Params,
}

impl Ridge {
    pub fn fit(u: &Array2<f64>, labels: &Array2<f64>, alpha: f64) -> Result<Ridge, MogeError> {
        let (n, d) = u.dim();
        let outputs = labels.ncols();
        let mu = u.mean_axis(ndarray::Axis(0)).expect("nonempty");
        let my = labels.mean_axis(ndarray::Axis(0)).expect("nonempty");
        let x = DMatrix::from_fn(n, d, |i, j| u[(i, j)] - mu[j]);
        let y = DMatrix::from_fn(n, outputs, |i, j| labels[(i, j)] - my[j]);
        let mut gram = x.transpose() * &x;
        for i in 0..d {
            gram[(i, i)] += alpha;
        }
        let big = (0..d).fold(0.0f64, |m, i| m.max(gram[(i, i)]));
        let chol = gram.cholesky().ok_or(MogeError::SingularNormalEquations)?;
        let l = chol.l_dirty();
        let small = (0..d).fold(f64::INFINITY, |m, i| m.min(l[(i, i)] * l[(i, i)]));
        if d > 0 && small <= 1e-13 * big.max(f64::MIN_POSITIVE) {
            return Err(MogeError::SingularNormalEquations);
        }
        let w = chol.solve(&(x.transpose() * y));
        let wa = Array2::from_shape_fn((d, outputs), |(i, j)| w[(i, j)]);
        let c = Array2::from_shape_fn((1, outputs), |(_, j)| my[j] - (0..d).map(|i| mu[i] * w[(i, j)]).sum::<f64>());
        let mut params = Params::new();
        params.push("ridge.w", wa);
        params.push("ridge.c", c);
        Ok(Ridge {
            arch: RidgeArch { dim: d, outputs, alpha },
            params,
        })
    }

    pub fn from_parts(arch: RidgeArch, params: Params) -> Result<Ridge, MogeError> {
        check_shapes(&params, &[(arch.dim, arch.outputs), (1, arch.outputs)])?;
        Ok(Ridge { arch, params })
    }

    pub fn scores(&self, u: &Array2<f64>) -> Array2<f64> {
        u.dot(&self.params.values[0]) + &self.params.values[1]
    }
}
