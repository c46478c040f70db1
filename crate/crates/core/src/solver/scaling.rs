use crate::linalg::inf_norm;
use crate::problem::{ParamPoint, ParametricCopf};

/// Objective and row scaling factors used inside the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub omega: f64,
    /// One factor per constraint row in Jacobian order.
    pub row: Vec<f64>,
}

/// Box midpoint, with one-sided bounds offset by one and free variables at 0.
pub(crate) fn initial_point(p: &ParametricCopf) -> Vec<f64> {
    p.x_lo
        .iter()
        .zip(&p.x_hi)
        .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
            (true, true) => 0.5 * (l + u),
            (true, false) => l + 1.0,
            (false, true) => u - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

impl Scaling {
    pub fn new(p: &ParametricCopf, pt: &ParamPoint) -> Scaling {
        let obj = &p.objective;
        let big = obj
            .quad
            .iter()
            .map(|e| e.2.abs())
            .chain(obj.lin.iter().map(|e| e.1.abs()))
            .fold(1.0f64, f64::max);
        let omega = 1.0 / big;

        let x0 = initial_point(p);
        let jac = p.jacobian(&x0);
        let rhs = p.instantiate(pt).expect("point matches problem").rhs();
        let [_, oh, ogt, oht] = p.block_offsets();
        let row = (0..p.m())
            .map(|r| {
                let g: Vec<f64> = jac.row(r).map(|e| e.1).collect();
                let mut d = (100.0 / inf_norm(&g)).min(1.0);
                let ineq = r < oh || (ogt..oht).contains(&r);
                if ineq {
                    d = d.min(1.0 / rhs[r].abs().max(1.0));
                }
                d
            })
            .collect();
        Scaling { omega, row }
    }
}
