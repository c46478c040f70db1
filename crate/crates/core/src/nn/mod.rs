//! Minimal reverse-mode differentiation over dense batches.
//!
//! Every value is a matrix with one row per sample. Derivatives of
//! activations are ordinary nodes, so an input gradient written out on the
//! tape can itself be differentiated with respect to the parameters.

mod adam;

pub use adam::{Adam, AdamConfig};

use ndarray::{Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Elu,
    /// `elu(x) + 1`, nonnegative.
    EluPlusOne,
    Softplus,
    LeakyRelu,
    Sigmoid,
}

const LEAK: f64 = 0.01;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    pub fn f(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::EluPlusOne => Activation::Elu.f(x) + 1.0,
            Activation::Softplus => softplus(x),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAK * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn d1(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Elu | Activation::EluPlusOne => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAK
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn d2(self, x: f64) -> f64 {
        match self {
            Activation::Identity | Activation::LeakyRelu => 0.0,
            Activation::Elu | Activation::EluPlusOne => {
                if x > 0.0 {
                    0.0
                } else {
                    x.exp()
                }
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Adds a `1 x k` row to every row.
    AddRow(Var, Var),
    /// Multiplies every column by a `n x 1` column.
    MulCol(Var, Var),
    RowSum(Var),
    Scale(Var, f64),
    Act(Var, Activation),
    ActD1(Var, Activation),
    /// `sum(w .* (a - t)^2) / denom`
    WeightedSse { a: Var, target: Array2<f64>, weight: Option<Array2<f64>>, denom: f64 },
    /// Mean binary cross-entropy of logits against 0/1 targets.
    BceLogits { a: Var, target: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[(0, 0)]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.value(a) * self.value(col);
        self.push(v, Op::MulCol(a, col))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        let v = self.value(a).mapv(|x| f.f(x));
        self.push(v, Op::Act(a, f))
    }

    /// Elementwise first derivative of `f` at `a`.
    pub fn act_d1(&mut self, a: Var, f: Activation) -> Var {
        let v = self.value(a).mapv(|x| f.d1(x));
        self.push(v, Op::ActD1(a, f))
    }

    /// `a x + b` with `b` a bias row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn weighted_sse(&mut self, a: Var, target: Array2<f64>, weight: Option<Array2<f64>>, denom: f64) -> Var {
        let d = self.value(a) - &target;
        let s = match &weight {
            Some(w) => (&d * &d * w).sum(),
            None => (&d * &d).sum(),
        };
        self.push(
            Array2::from_elem((1, 1), s / denom),
            Op::WeightedSse {
                a,
                target,
                weight,
                denom,
            },
        )
    }

    pub fn bce_logits(&mut self, a: Var, target: Array2<f64>) -> Var {
        let z = self.value(a);
        let n = z.len() as f64;
        let mut s = 0.0;
        Zip::from(z).and(&target).for_each(|&x, &t| {
            // log(1 + e^x) - t x, stable in both tails.
            s += x.max(0.0) - t * x + (-x.abs()).exp().ln_1p();
        });
        self.push(Array2::from_elem((1, 1), s / n), Op::BceLogits { a, target })
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Grads {
        let mut g: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        fn acc(g: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
            match &mut g[v.0] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            }
        }
        for k in (0..=out.0).rev() {
            let Some(d) = g[k].take() else { continue };
            let node = &self.nodes[k];
            match &node.op {
                Op::Leaf => {
                    g[k] = Some(d);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut g, *a, d.dot(&self.value(*b).t()));
                    acc(&mut g, *b, self.value(*a).t().dot(&d));
                }
                Op::MatMulT(a, b) => {
                    acc(&mut g, *a, d.dot(self.value(*b)));
                    acc(&mut g, *b, d.t().dot(self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, d.clone());
                    acc(&mut g, *b, d);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, -&d);
                    acc(&mut g, *a, d);
                }
                Op::Mul(a, b) => {
                    acc(&mut g, *a, &d * self.value(*b));
                    acc(&mut g, *b, &d * self.value(*a));
                }
                Op::AddRow(a, row) => {
                    acc(&mut g, *row, d.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *a, d);
                }
                Op::MulCol(a, col) => {
                    let dc = (&d * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut g, *col, dc);
                    acc(&mut g, *a, &d * self.value(*col));
                }
                Op::RowSum(a) => {
                    let shape = self.value(*a).raw_dim();
                    let full = d.broadcast(shape).expect("column broadcast").to_owned();
                    acc(&mut g, *a, full);
                }
                Op::Scale(a, s) => acc(&mut g, *a, d * *s),
                Op::Act(a, f) => {
                    let da = Zip::from(&d).and(self.value(*a)).map_collect(|&u, &x| u * f.d1(x));
                    acc(&mut g, *a, da);
                }
                Op::ActD1(a, f) => {
                    let da = Zip::from(&d).and(self.value(*a)).map_collect(|&u, &x| u * f.d2(x));
                    acc(&mut g, *a, da);
                }
                Op::WeightedSse {
                    a,
                    target,
                    weight,
                    denom,
                } => {
                    let s = d[(0, 0)] * 2.0 / denom;
                    let mut da = (self.value(*a) - target) * s;
                    if let Some(w) = weight {
                        da *= w;
                    }
                    acc(&mut g, *a, da);
                }
                Op::BceLogits { a, target } => {
                    let z = self.value(*a);
                    let s = d[(0, 0)] / z.len() as f64;
                    let da = Zip::from(z).and(target).map_collect(|&x, &t| s * (sigmoid(x) - t));
                    acc(&mut g, *a, da);
                }
            }
        }
        Grads(g)
    }
}

pub struct Grads(Vec<Option<Array2<f64>>>);

impl Grads {
    /// Gradient of a leaf; zero-shaped `None` means the output does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }
}

/// A named list of parameter matrices with a fixed declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub names: Vec<String>,
    #[serde(skip)]
    pub values: Vec<Array2<f64>>,
}

impl Params {
    pub fn new() -> Params {
        Params {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// All parameters as tape leaves, in order.
    pub fn on_tape(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.values.iter().map(|v| v.dim()).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for v in self.values.iter_mut() {
            for x in v.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

/// Uniform `[-r, r]` with `r = 1 / sqrt(fan_in)`.
pub fn init_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let r = 1.0 / (rows.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-r..r))
}

/// Uniform `[0, 1 / fan_in]`, for weights that must stay nonnegative.
pub fn init_nonneg(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let r = 1.0 / rows.max(1) as f64;
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..r))
}

#[cfg(test)]
mod tests;
