#![allow(dead_code)]

use std::path::PathBuf;

use copf_core::{parse_matpower, NetworkCase, ParametricCopf, QuadRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/cases")
        .join(format!("{name}.m"))
}

pub fn load_case(name: &str) -> NetworkCase {
    let text = std::fs::read_to_string(case_path(name)).unwrap();
    parse_matpower(&text).unwrap()
}

/// Dense convex QCQP: min 0.5 x'Px + q'x  s.t. 0.5 x'A_k x + b_k'x <= c_k, lo <= x <= hi.
#[derive(Debug, Clone)]
pub struct TinyQcqp {
    pub n: usize,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub cons: Vec<(Vec<Vec<f64>>, Vec<f64>, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn gram(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = b.iter().map(|r| r[i] * r[j]).sum::<f64>();
        }
        m[i][i] += ridge;
    }
    m
}

fn quad(m: &[Vec<f64>], v: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        s += v[i] * x[i];
        for j in 0..n {
            s += 0.5 * m[i][j] * x[i] * x[j];
        }
    }
    s
}

fn quad_grad(m: &[Vec<f64>], v: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| v[i] + (0..x.len()).map(|j| m[i][j] * x[j]).sum::<f64>())
        .collect()
}

impl TinyQcqp {
    /// Strictly convex objective, one to three convex constraints, all
    /// feasible at a random interior point.
    pub fn random(seed: u64) -> TinyQcqp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let p = gram(&mut rng, n, n, 0.2);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(1..=3);
        let cons = (0..k)
            .map(|_| {
                let rank = rng.random_range(0..=n);
                let a = gram(&mut rng, n, rank, 0.0);
                let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c = quad(&a, &b, &x0) + rng.random_range(0.05..0.5);
                (a, b, c)
            })
            .collect();
        TinyQcqp {
            n,
            p,
            q,
            cons,
            lo: vec![-2.0; n],
            hi: vec![2.0; n],
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        quad(&self.p, &self.q, x)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.cons
            .iter()
            .map(|(a, b, c)| quad(a, b, x) - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn row(m: &[Vec<f64>], v: &[f64], c: f64) -> QuadRow {
        let n = v.len();
        let mut quad = Vec::new();
        for i in 0..n {
            for j in i..n {
                if m[i][j] != 0.0 {
                    quad.push((i, j, m[i][j]));
                }
            }
        }
        QuadRow {
            quad,
            lin: v.iter().copied().enumerate().collect(),
            constant: c,
            cone: false,
        }
    }

    /// Constraints enter as parameterized rows with `gamma = c`.
    pub fn to_problem(&self) -> ParametricCopf {
        let rows = self.cons.iter().map(|(a, b, _)| Self::row(a, b, 0.0)).collect();
        let gamma = self.cons.iter().map(|c| c.2).collect();
        ParametricCopf::custom(
            Self::row(&self.p, &self.q, 0.0),
            vec![],
            vec![],
            rows,
            vec![],
            self.lo.clone(),
            self.hi.clone(),
            gamma,
            vec![],
        )
    }

    /// Best feasible point on a uniform grid over the box.
    pub fn grid_search(&self, per_axis: usize) -> Option<(Vec<f64>, f64)> {
        let total = per_axis.pow(self.n as u32);
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut x = vec![0.0; self.n];
        for mut k in 0..total {
            for j in 0..self.n {
                let t = (k % per_axis) as f64 / (per_axis - 1) as f64;
                x[j] = self.lo[j] + t * (self.hi[j] - self.lo[j]);
                k /= per_axis;
            }
            if self.max_violation(&x) > 0.0 {
                continue;
            }
            let f = self.objective(&x);
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((x.clone(), f));
            }
        }
        best
    }

    /// Augmented Lagrangian with projected-gradient inner solves, started
    /// from the grid optimum.
    pub fn alm_oracle(&self) -> (Vec<f64>, f64) {
        let (mut x, _) = self.grid_search(41).expect("grid finds a feasible point");
        let mut y = vec![0.0; self.cons.len()];
        let mut rho = 10.0;
        let project = |x: &mut Vec<f64>| {
            for j in 0..self.n {
                x[j] = x[j].clamp(self.lo[j], self.hi[j]);
            }
        };
        let merit = |x: &[f64], y: &[f64], rho: f64| {
            let mut v = self.objective(x);
            for ((a, b, c), yi) in self.cons.iter().zip(y) {
                let t = (yi + rho * (quad(a, b, x) - c)).max(0.0);
                v += (t * t - yi * yi) / (2.0 * rho);
            }
            v
        };
        let grad = |x: &[f64], y: &[f64], rho: f64| {
            let mut g = quad_grad(&self.p, &self.q, x);
            for ((a, b, c), yi) in self.cons.iter().zip(y) {
                let t = (yi + rho * (quad(a, b, x) - c)).max(0.0);
                if t > 0.0 {
                    for (gj, dj) in g.iter_mut().zip(quad_grad(a, b, x)) {
                        *gj += t * dj;
                    }
                }
            }
            g
        };
        let mut last_viol = f64::INFINITY;
        for _ in 0..200 {
            let mut step = 1.0;
            for _ in 0..5000 {
                let g = grad(&x, &y, rho);
                let f0 = merit(&x, &y, rho);
                let mut moved = false;
                while step > 1e-14 {
                    let mut xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                    project(&mut xn);
                    let d2: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if merit(&xn, &y, rho) <= f0 - 1e-4 / step * d2 {
                        moved = d2 > 1e-30;
                        x = xn;
                        break;
                    }
                    step *= 0.5;
                }
                step *= 2.0;
                if !moved {
                    break;
                }
            }
            for ((a, b, c), yi) in self.cons.iter().zip(y.iter_mut()) {
                *yi = (*yi + rho * (quad(a, b, &x) - c)).max(0.0);
            }
            let viol = self.max_violation(&x).max(0.0);
            if viol > 0.25 * last_viol {
                rho = (rho * 4.0).min(1e8);
            }
            last_viol = viol;
            if viol < 1e-11 && rho >= 1e3 {
                break;
            }
        }
        let f = self.objective(&x);
        (x, f)
    }
}
