use std::collections::BTreeMap;

use super::ParametricCopf;
use crate::linalg::Csr;

/// Precomputed coefficient maps.
///
/// Jacobian entries satisfy `J_e(x) = c_e + T_e x` and the upper triangle of
/// the Lagrangian Hessian satisfies `H_e = M_e [beta; alpha]`, so neither
/// needs the row structure at evaluation time.
#[derive(Debug, Clone)]
pub struct Templates {
    jac: Csr,
    jac_const: Vec<f64>,
    jac_lin: Csr,
    hess: Csr,
    hess_coef: Csr,
}

impl Templates {
    pub fn compile(p: &ParametricCopf) -> Templates {
        let n = p.n;
        let mut jac_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(p.m());
        let mut jac_const = Vec::new();
        let mut lin_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut hess: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();

        for &(i, j, a) in &p.objective.quad {
            hess.entry((i, j)).or_default().push((0, a));
        }
        for (r, row) in p.rows().enumerate() {
            let mut entries: BTreeMap<usize, (f64, Vec<(usize, f64)>)> = BTreeMap::new();
            for &(j, b) in &row.lin {
                entries.entry(j).or_default().0 += b;
            }
            for &(i, j, a) in &row.quad {
                if i == j {
                    entries.entry(i).or_default().1.push((i, a));
                } else {
                    entries.entry(i).or_default().1.push((j, a));
                    entries.entry(j).or_default().1.push((i, a));
                }
                hess.entry((i, j)).or_default().push((1 + r, a));
            }
            let mut pattern = Vec::with_capacity(entries.len());
            for (j, (c, lin)) in entries {
                pattern.push((j, 0.0));
                jac_const.push(c);
                lin_rows.push(lin);
            }
            jac_rows.push(pattern);
        }
        let jac = Csr::from_rows(n, &jac_rows);
        let jac_lin = Csr::from_rows(n, &lin_rows);

        let mut hrows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut coef_rows = Vec::with_capacity(hess.len());
        for ((i, j), coefs) in hess {
            hrows[i].push((j, 0.0));
            coef_rows.push(coefs);
        }
        // BTreeMap order is row-major, which matches the CSR layout.
        let hess = Csr::from_rows(n, &hrows);
        let hess_coef = Csr::from_rows(1 + p.m(), &coef_rows);
        Templates {
            jac,
            jac_const,
            jac_lin,
            hess,
            hess_coef,
        }
    }

    /// Jacobian sparsity with zero values.
    pub fn jacobian_pattern(&self) -> &Csr {
        &self.jac
    }

    pub fn jacobian_values(&self, x: &[f64], out: &mut [f64]) {
        self.jac_lin.mul_vec(x, out);
        for (o, c) in out.iter_mut().zip(&self.jac_const) {
            *o += c;
        }
    }

    /// Upper-triangular Hessian sparsity with zero values.
    pub fn hessian_pattern(&self) -> &Csr {
        &self.hess
    }

    pub fn hessian_values(&self, beta: f64, alpha: &[f64], out: &mut [f64]) {
        let mut w = Vec::with_capacity(1 + alpha.len());
        w.push(beta);
        w.extend_from_slice(alpha);
        self.hess_coef.mul_vec(&w, out);
    }
}
