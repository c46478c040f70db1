//! Slack-based primal-dual interior-point method with a Mehrotra
//! predictor-corrector and inertia-corrected LDL^T factorization of the
//! augmented KKT system.
//!
//! Internally the problem is
//!
//! ```text
//! min w f(x)  s.t.  c_I(x) + s = 0, s >= 0,  c_E(x) = 0,  lo <= x <= hi
//! ```
//!
//! with `c_I` the scaled `g` and `g~` rows, `c_E` the scaled `h` and `h~`
//! rows plus one row per fixed variable.

use log::{debug, trace};

use super::scaling::initial_point;
use super::{kkt_residual, KktResiduals, PrimalDualSolution, Scaling, SolveOptions, SolveStatus};
use crate::linalg::{inf_norm, Csr, LdlFactor, LdlSymbolic};
use crate::problem::{ParamPoint, ParametricCopf, ProblemError};

/// Static regularization of the equality block.
const DELTA_C: f64 = 1e-9;
const MAX_DELTA_W: f64 = 1e20;
const REFINE_STEPS: usize = 8;
const STALL_WINDOW: usize = 20;
/// Scaled multipliers beyond this size, with the iterate still infeasible,
/// are read as an infeasibility certificate.
const DUAL_DIVERGENCE: f64 = 1e12;

#[derive(Clone, Copy)]
enum RowRole {
    Ineq(usize),
    Eq(usize),
}

/// Fixed index structure of one solve.
struct Layout {
    n: usize,
    roles: Vec<RowRole>,
    n_ineq: usize,
    /// Equalities from template rows followed by fixed-variable rows.
    n_eq_rows: usize,
    fixed: Vec<usize>,
    lbs: Vec<usize>,
    ubs: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(p: &ParametricCopf) -> Layout {
        let [_, oh, ogt, oht] = p.block_offsets();
        let mut roles = Vec::with_capacity(p.m());
        let (mut ni, mut ne) = (0, 0);
        for r in 0..p.m() {
            if r < oh || (ogt..oht).contains(&r) {
                roles.push(RowRole::Ineq(ni));
                ni += 1;
            } else {
                roles.push(RowRole::Eq(ne));
                ne += 1;
            }
        }
        let mut fixed = Vec::new();
        let mut lbs = Vec::new();
        let mut ubs = Vec::new();
        for j in 0..p.n {
            let (l, u) = (p.x_lo[j], p.x_hi[j]);
            if l == u {
                fixed.push(j);
                continue;
            }
            if l.is_finite() {
                lbs.push(j);
            }
            if u.is_finite() {
                ubs.push(j);
            }
        }
        let n_eq_rows = ne + fixed.len();
        Layout {
            n: p.n,
            roles,
            n_ineq: ni,
            n_eq_rows,
            fixed,
            lbs,
            ubs,
            dim: p.n + ni + n_eq_rows,
        }
    }

    fn eq_col(&self, k: usize) -> usize {
        self.n + self.n_ineq + k
    }
}

/// Upper-triangular CSC pattern of the KKT matrix with slot maps.
struct KktPattern {
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    diag: Vec<usize>,
    hess: Vec<usize>,
    jac: Vec<usize>,
    fixed: Vec<usize>,
}

impl KktPattern {
    fn new(lay: &Layout, hess: &Csr, jac: &Csr) -> KktPattern {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for k in 0..lay.dim {
            pairs.push((k, k));
        }
        for i in 0..hess.nrows {
            for (j, _) in hess.row(i) {
                pairs.push((j, i));
            }
        }
        let col_of = |r: usize| match lay.roles[r] {
            RowRole::Ineq(k) => lay.n + k,
            RowRole::Eq(k) => lay.eq_col(k),
        };
        for r in 0..jac.nrows {
            for (j, _) in jac.row(r) {
                pairs.push((col_of(r), j));
            }
        }
        let n_eq_tmpl = lay.n_eq_rows - lay.fixed.len();
        for (f, &j) in lay.fixed.iter().enumerate() {
            pairs.push((lay.eq_col(n_eq_tmpl + f), j));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut colptr = vec![0usize; lay.dim + 1];
        let mut rowind = Vec::with_capacity(pairs.len());
        for &(c, r) in &pairs {
            colptr[c + 1] += 1;
            rowind.push(r);
        }
        for c in 0..lay.dim {
            colptr[c + 1] += colptr[c];
        }
        let find = |r: usize, c: usize| -> usize {
            let span = colptr[c]..colptr[c + 1];
            span.start + rowind[span].binary_search(&r).expect("entry in pattern")
        };
        let diag = (0..lay.dim).map(|k| find(k, k)).collect();
        let mut hs = Vec::with_capacity(hess.nnz());
        for i in 0..hess.nrows {
            for (j, _) in hess.row(i) {
                hs.push(find(i, j));
            }
        }
        let mut js = Vec::with_capacity(jac.nnz());
        for r in 0..jac.nrows {
            for (j, _) in jac.row(r) {
                js.push(find(j, col_of(r)));
            }
        }
        let fixed = lay
            .fixed
            .iter()
            .enumerate()
            .map(|(f, &j)| find(j, lay.eq_col(n_eq_tmpl + f)))
            .collect();
        KktPattern {
            colptr,
            rowind,
            diag,
            hess: hs,
            jac: js,
            fixed,
        }
    }

    /// `y = K z` for the symmetric matrix stored as its upper triangle.
    fn sym_mul(&self, vals: &[f64], z: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.colptr.len() - 1 {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowind[k];
                y[r] += vals[k] * z[c];
                if r != c {
                    y[c] += vals[k] * z[r];
                }
            }
        }
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

/// Quantities evaluated at the current iterate.
struct Eval {
    /// Scaled constraint values `d_r (row_r(x) - rhs_r)` in template order.
    c: Vec<f64>,
    /// Raw Jacobian (unscaled).
    jac: Csr,
    r_d: Vec<f64>,
    r_i: Vec<f64>,
    r_e: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
    dy: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

struct Solver<'a> {
    p: &'a ParametricCopf,
    opts: &'a SolveOptions,
    lay: Layout,
    sc: Scaling,
    rhs: Vec<f64>,
    kkt: KktPattern,
    sym: LdlSymbolic,
    vals: Vec<f64>,
    last_dw: f64,
}

fn max_step(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (vi, di) in v.iter().zip(dv) {
        if *di < 0.0 {
            a = a.min(-tau * vi / di);
        }
    }
    a
}

impl<'a> Solver<'a> {
    fn evaluate(&self, it: &Iterate) -> Eval {
        let p = self.p;
        let lay = &self.lay;
        let x = &it.x;
        let c: Vec<f64> = p
            .rows()
            .enumerate()
            .map(|(r, row)| self.sc.row[r] * (row.value(x) - self.rhs[r]))
            .collect();
        let jac = p.jacobian(x);

        let mut r_d = p.objective_gradient(x);
        r_d.iter_mut().for_each(|v| *v *= self.sc.omega);
        let w = self.row_weights(&it.lam, &it.y);
        jac.mul_t_vec_add(&w, &mut r_d);
        let n_eq_tmpl = lay.n_eq_rows - lay.fixed.len();
        for (f, &j) in lay.fixed.iter().enumerate() {
            r_d[j] += it.y[n_eq_tmpl + f];
        }
        for (k, &j) in lay.lbs.iter().enumerate() {
            r_d[j] -= it.zl[k];
        }
        for (k, &j) in lay.ubs.iter().enumerate() {
            r_d[j] += it.zu[k];
        }

        let mut r_i = vec![0.0; lay.n_ineq];
        let mut r_e = vec![0.0; lay.n_eq_rows];
        for (r, role) in lay.roles.iter().enumerate() {
            match *role {
                RowRole::Ineq(k) => r_i[k] = c[r] + it.s[k],
                RowRole::Eq(k) => r_e[k] = c[r],
            }
        }
        for (f, &j) in lay.fixed.iter().enumerate() {
            r_e[n_eq_tmpl + f] = x[j] - p.x_lo[j];
        }
        Eval {
            c,
            jac,
            r_d,
            r_i,
            r_e,
        }
    }

    /// Multipliers of the unscaled template rows.
    fn row_weights(&self, lam: &[f64], y: &[f64]) -> Vec<f64> {
        self.lay
            .roles
            .iter()
            .enumerate()
            .map(|(r, role)| {
                self.sc.row[r]
                    * match *role {
                        RowRole::Ineq(k) => lam[k],
                        RowRole::Eq(k) => y[k],
                    }
            })
            .collect()
    }

    fn complementarity(&self, it: &Iterate) -> (f64, usize) {
        let p = self.p;
        let mut sum = crate::linalg::dot(&it.s, &it.lam);
        for (k, &j) in self.lay.lbs.iter().enumerate() {
            sum += (it.x[j] - p.x_lo[j]) * it.zl[k];
        }
        for (k, &j) in self.lay.ubs.iter().enumerate() {
            sum += (p.x_hi[j] - it.x[j]) * it.zu[k];
        }
        let count = it.s.len() + self.lay.lbs.len() + self.lay.ubs.len();
        (sum, count)
    }

    /// Residuals in the same measure as [`kkt_residual`].
    fn measure(&self, it: &Iterate, ev: &Eval) -> KktResiduals {
        let p = self.p;
        let mut primal = inf_norm(&ev.r_e);
        let mut comp: f64 = 0.0;
        for (r, role) in self.lay.roles.iter().enumerate() {
            if let RowRole::Ineq(k) = *role {
                primal = primal.max(ev.c[r].max(0.0));
                comp = comp.max((it.lam[k] * ev.c[r]).abs());
            }
        }
        for (k, &j) in self.lay.lbs.iter().enumerate() {
            comp = comp.max(it.zl[k] * (it.x[j] - p.x_lo[j]));
        }
        for (k, &j) in self.lay.ubs.iter().enumerate() {
            comp = comp.max(it.zu[k] * (p.x_hi[j] - it.x[j]));
        }
        KktResiduals {
            stationarity: inf_norm(&ev.r_d),
            primal_feas: primal,
            dual_feas: 0.0,
            complementarity: comp,
        }
    }

    /// Assembles and factors the KKT matrix, growing the primal
    /// regularization until the inertia is `(n, dim - n)`.
    fn factor(&mut self, it: &Iterate, ev: &Eval) -> Option<LdlFactor> {
        let p = self.p;
        let lay = &self.lay;
        let w = self.row_weights(&it.lam, &it.y);
        let t = p.templates();
        let mut hv = vec![0.0; t.hessian_pattern().nnz()];
        t.hessian_values(self.sc.omega, &w, &mut hv);

        let mut base = vec![0.0; self.vals.len()];
        for (k, &slot) in self.kkt.hess.iter().enumerate() {
            base[slot] += hv[k];
        }
        for r in 0..ev.jac.nrows {
            let d = self.sc.row[r];
            for k in ev.jac.indptr[r]..ev.jac.indptr[r + 1] {
                base[self.kkt.jac[k]] += d * ev.jac.values[k];
            }
        }
        for &slot in &self.kkt.fixed {
            base[slot] += 1.0;
        }
        for (k, &j) in lay.lbs.iter().enumerate() {
            base[self.kkt.diag[j]] += it.zl[k] / (it.x[j] - p.x_lo[j]);
        }
        for (k, &j) in lay.ubs.iter().enumerate() {
            base[self.kkt.diag[j]] += it.zu[k] / (p.x_hi[j] - it.x[j]);
        }
        for k in 0..lay.n_ineq {
            base[self.kkt.diag[lay.n + k]] -= it.s[k] / it.lam[k];
        }
        for k in 0..lay.n_eq_rows {
            base[self.kkt.diag[lay.eq_col(k)]] -= DELTA_C;
        }

        let mut dw = if self.last_dw > 0.0 {
            (self.last_dw / 4.0).max(self.opts.reg)
        } else {
            0.0
        };
        loop {
            self.vals.copy_from_slice(&base);
            for j in 0..lay.n {
                self.vals[self.kkt.diag[j]] += dw;
            }
            if let Ok(f) = self.sym.factor(&self.vals) {
                if f.inertia() == (lay.n, lay.dim - lay.n) {
                    self.last_dw = dw;
                    if dw > 0.0 {
                        trace!("inertia correction {dw:.2e}");
                    }
                    return Some(f);
                }
            }
            dw = if dw == 0.0 {
                self.opts.reg.max(1e-12)
            } else {
                dw * 10.0
            };
            if dw > MAX_DELTA_W {
                return None;
            }
        }
    }

    /// Solves `K z = b` with iterative refinement against the matrix without
    /// the static equality regularization.
    fn kkt_solve(&self, f: &LdlFactor, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        f.solve(&mut z);
        let mut exact = self.vals.clone();
        for k in 0..self.lay.n_eq_rows {
            exact[self.kkt.diag[self.lay.eq_col(k)]] += DELTA_C;
        }
        let mut kz = vec![0.0; z.len()];
        let bnorm = inf_norm(b).max(1.0);
        for _ in 0..REFINE_STEPS {
            self.kkt.sym_mul(&exact, &z, &mut kz);
            let mut res: Vec<f64> = b.iter().zip(&kz).map(|(bi, ki)| bi - ki).collect();
            if inf_norm(&res) <= 1e-14 * bnorm {
                break;
            }
            f.solve(&mut res);
            for (zi, ri) in z.iter_mut().zip(&res) {
                *zi += ri;
            }
        }
        z
    }

    /// Newton direction for complementarity targets `r_s = s*lam - target`,
    /// `r_l`, `r_u`.
    fn direction(
        &self,
        f: &LdlFactor,
        it: &Iterate,
        ev: &Eval,
        r_s: &[f64],
        r_l: &[f64],
        r_u: &[f64],
    ) -> Direction {
        let p = self.p;
        let lay = &self.lay;
        let mut b = vec![0.0; lay.dim];
        for j in 0..lay.n {
            b[j] = -ev.r_d[j];
        }
        for (k, &j) in lay.lbs.iter().enumerate() {
            b[j] -= r_l[k] / (it.x[j] - p.x_lo[j]);
        }
        for (k, &j) in lay.ubs.iter().enumerate() {
            b[j] += r_u[k] / (p.x_hi[j] - it.x[j]);
        }
        for k in 0..lay.n_ineq {
            b[lay.n + k] = -ev.r_i[k] + r_s[k] / it.lam[k];
        }
        for k in 0..lay.n_eq_rows {
            b[lay.eq_col(k)] = -ev.r_e[k];
        }
        let z = self.kkt_solve(f, &b);
        let dx = z[..lay.n].to_vec();
        let dlam = z[lay.n..lay.n + lay.n_ineq].to_vec();
        let dy = z[lay.n + lay.n_ineq..].to_vec();

        // ds = -r_I - J_I dx (scaled rows)
        let mut ds: Vec<f64> = ev.r_i.iter().map(|v| -v).collect();
        for (r, role) in lay.roles.iter().enumerate() {
            if let RowRole::Ineq(k) = *role {
                let d = self.sc.row[r];
                let mut acc = 0.0;
                for (j, v) in ev.jac.row(r) {
                    acc += v * dx[j];
                }
                ds[k] -= d * acc;
            }
        }
        let dzl = lay
            .lbs
            .iter()
            .enumerate()
            .map(|(k, &j)| (-r_l[k] - it.zl[k] * dx[j]) / (it.x[j] - p.x_lo[j]))
            .collect();
        let dzu = lay
            .ubs
            .iter()
            .enumerate()
            .map(|(k, &j)| (-r_u[k] + it.zu[k] * dx[j]) / (p.x_hi[j] - it.x[j]))
            .collect();
        Direction {
            dx,
            ds,
            dlam,
            dy,
            dzl,
            dzu,
        }
    }

    /// Largest primal and dual steps keeping the iterate interior.
    fn step_bounds(&self, it: &Iterate, d: &Direction, tau: f64) -> (f64, f64) {
        let p = self.p;
        let lay = &self.lay;
        let mut ap = max_step(&it.s, &d.ds, tau);
        for &j in &lay.lbs {
            if d.dx[j] < 0.0 {
                ap = ap.min(-tau * (it.x[j] - p.x_lo[j]) / d.dx[j]);
            }
        }
        for &j in &lay.ubs {
            if d.dx[j] > 0.0 {
                ap = ap.min(tau * (p.x_hi[j] - it.x[j]) / d.dx[j]);
            }
        }
        let ad = max_step(&it.lam, &d.dlam, tau)
            .min(max_step(&it.zl, &d.dzl, tau))
            .min(max_step(&it.zu, &d.dzu, tau));
        (ap, ad)
    }

    fn take_step(it: &Iterate, d: &Direction, a: f64) -> Iterate {
        let add = |v: &[f64], dv: &[f64]| -> Vec<f64> {
            v.iter().zip(dv).map(|(x, y)| x + a * y).collect()
        };
        Iterate {
            x: add(&it.x, &d.dx),
            s: add(&it.s, &d.ds),
            lam: add(&it.lam, &d.dlam),
            y: add(&it.y, &d.dy),
            zl: add(&it.zl, &d.dzl),
            zu: add(&it.zu, &d.dzu),
        }
    }

    fn finish(&self, it: &Iterate, status: SolveStatus, iterations: usize, pt: &ParamPoint) -> PrimalDualSolution {
        let p = self.p;
        let lay = &self.lay;
        let [_, oh, ogt, oht] = p.block_offsets();
        let om = self.sc.omega;
        let mut duals = vec![0.0; p.m()];
        for (r, role) in lay.roles.iter().enumerate() {
            let v = match *role {
                RowRole::Ineq(k) => it.lam[k],
                RowRole::Eq(k) => it.y[k],
            };
            duals[r] = v * self.sc.row[r] / om;
        }
        let mut nu_lo = vec![0.0; p.n];
        let mut nu_hi = vec![0.0; p.n];
        for (k, &j) in lay.lbs.iter().enumerate() {
            nu_lo[j] = it.zl[k] / om;
        }
        for (k, &j) in lay.ubs.iter().enumerate() {
            nu_hi[j] = it.zu[k] / om;
        }
        let n_eq_tmpl = lay.n_eq_rows - lay.fixed.len();
        for (f, &j) in lay.fixed.iter().enumerate() {
            let y = it.y[n_eq_tmpl + f] / om;
            nu_hi[j] = y.max(0.0);
            nu_lo[j] = (-y).max(0.0);
        }
        let mut sol = PrimalDualSolution {
            x: it.x.clone(),
            lam: duals[..oh].to_vec(),
            mu: duals[oh..ogt].to_vec(),
            lam_tilde: duals[ogt..oht].to_vec(),
            mu_tilde: duals[oht..].to_vec(),
            nu_lo,
            nu_hi,
            objective: p.objective.value(&it.x),
            status,
            kkt: KktResiduals::default(),
            iterations,
        };
        sol.kkt = kkt_residual(p, pt, &sol);
        sol
    }
}

/// Solves the instance `(p, pt)`.
///
/// Convergence is declared when the residuals reported by
/// [`kkt_residual`](super::kkt_residual) are all below `opts.tol`.
pub fn solve(
    p: &ParametricCopf,
    pt: &ParamPoint,
    opts: &SolveOptions,
) -> Result<PrimalDualSolution, ProblemError> {
    let inst = p.instantiate(pt)?;
    let rhs = inst.rhs();
    let lay = Layout::new(p);
    let sc = Scaling::new(p, pt);
    let t = p.templates();
    let kkt = KktPattern::new(&lay, t.hessian_pattern(), t.jacobian_pattern());
    let sym = match LdlSymbolic::new(lay.dim, &kkt.colptr, &kkt.rowind) {
        Ok(s) => s,
        Err(_) => unreachable!("KKT pattern is upper triangular with full diagonal"),
    };
    let nnz = kkt.rowind.len();
    let mut sv = Solver {
        p,
        opts,
        lay,
        sc,
        rhs,
        kkt,
        sym,
        vals: vec![0.0; nnz],
        last_dw: 0.0,
    };

    let x0 = initial_point(p);
    let mut it = Iterate {
        x: x0,
        s: Vec::new(),
        lam: vec![1.0; sv.lay.n_ineq],
        y: vec![1.0; sv.lay.n_eq_rows],
        zl: vec![1.0; sv.lay.lbs.len()],
        zu: vec![1.0; sv.lay.ubs.len()],
    };
    {
        let c: Vec<f64> = p
            .rows()
            .enumerate()
            .map(|(r, row)| sv.sc.row[r] * (row.value(&it.x) - sv.rhs[r]))
            .collect();
        let mut s = vec![0.0; sv.lay.n_ineq];
        for (r, role) in sv.lay.roles.iter().enumerate() {
            if let RowRole::Ineq(k) = *role {
                s[k] = (-c[r]).max(1.0);
            }
        }
        it.s = s;
    }

    let mut history: Vec<f64> = Vec::new();
    for iter in 0..=opts.max_iter {
        let ev = sv.evaluate(&it);
        let res = sv.measure(&it, &ev);
        let (csum, ccount) = sv.complementarity(&it);
        let mu = if ccount > 0 { csum / ccount as f64 } else { 0.0 };
        debug!(
            "iter {iter:3} mu {mu:.3e} stat {:.3e} prim {:.3e} comp {:.3e}",
            res.stationarity, res.primal_feas, res.complementarity
        );
        if !res.max().is_finite() || !mu.is_finite() {
            return Ok(sv.finish(&it, SolveStatus::NumericalFailure, iter, pt));
        }
        if res.max() <= opts.tol {
            let sol = sv.finish(&it, SolveStatus::Optimal, iter, pt);
            if sol.kkt.max() <= opts.tol {
                return Ok(sol);
            }
        }
        let theta = inf_norm(&ev.r_i).max(inf_norm(&ev.r_e));
        history.push(theta);
        let dual_size = inf_norm(&it.lam).max(inf_norm(&it.y));
        let stalled = history.len() > STALL_WINDOW && theta >= history[history.len() - 1 - STALL_WINDOW];
        if theta > opts.infeasibility_tol && (stalled || dual_size > DUAL_DIVERGENCE) {
            return Ok(sv.finish(&it, SolveStatus::Infeasible, iter, pt));
        }
        if iter == opts.max_iter {
            let status = if theta > opts.infeasibility_tol {
                SolveStatus::Infeasible
            } else {
                SolveStatus::IterLimit
            };
            return Ok(sv.finish(&it, status, iter, pt));
        }

        let Some(fac) = sv.factor(&it, &ev) else {
            return Ok(sv.finish(&it, SolveStatus::NumericalFailure, iter, pt));
        };

        // Predictor.
        let lay = &sv.lay;
        let gap_l: Vec<f64> = lay.lbs.iter().map(|&j| it.x[j] - p.x_lo[j]).collect();
        let gap_u: Vec<f64> = lay.ubs.iter().map(|&j| p.x_hi[j] - it.x[j]).collect();
        let rs_aff: Vec<f64> = it.s.iter().zip(&it.lam).map(|(s, l)| s * l).collect();
        let rl_aff: Vec<f64> = gap_l.iter().zip(&it.zl).map(|(g, z)| g * z).collect();
        let ru_aff: Vec<f64> = gap_u.iter().zip(&it.zu).map(|(g, z)| g * z).collect();
        let aff = sv.direction(&fac, &it, &ev, &rs_aff, &rl_aff, &ru_aff);
        let (ap, ad) = sv.step_bounds(&it, &aff, 1.0);
        let sigma = if ccount > 0 && mu > 0.0 {
            let lay = &sv.lay;
            let mut s = 0.0;
            for k in 0..it.s.len() {
                s += (it.s[k] + ap * aff.ds[k]) * (it.lam[k] + ad * aff.dlam[k]);
            }
            for (k, &j) in lay.lbs.iter().enumerate() {
                s += (gap_l[k] + ap * aff.dx[j]) * (it.zl[k] + ad * aff.dzl[k]);
            }
            for (k, &j) in lay.ubs.iter().enumerate() {
                s += (gap_u[k] - ap * aff.dx[j]) * (it.zu[k] + ad * aff.dzu[k]);
            }
            let mu_aff = s / ccount as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // Corrector.
        // Pushing complementarity far below the tolerance only ruins the
        // conditioning of the next factorization.
        let target = (sigma * mu).max(0.1 * opts.tol);
        let lay = &sv.lay;
        let rs: Vec<f64> = (0..it.s.len())
            .map(|k| rs_aff[k] + aff.ds[k] * aff.dlam[k] - target)
            .collect();
        let rl: Vec<f64> = (0..lay.lbs.len())
            .map(|k| rl_aff[k] + aff.dx[lay.lbs[k]] * aff.dzl[k] - target)
            .collect();
        let ru: Vec<f64> = (0..lay.ubs.len())
            .map(|k| ru_aff[k] - aff.dx[lay.ubs[k]] * aff.dzu[k] - target)
            .collect();
        let dir = sv.direction(&fac, &it, &ev, &rs, &rl, &ru);
        let tau = opts.ftb.max(1.0 - mu);
        let (ap, ad) = sv.step_bounds(&it, &dir, tau);
        let alpha = ap.min(ad);
        trace!("sigma {sigma:.3e} alpha {alpha:.3e}");
        it = Solver::take_step(&it, &dir, alpha);
    }
    unreachable!("loop returns at max_iter")
}
