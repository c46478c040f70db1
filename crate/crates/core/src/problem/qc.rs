use nalgebra::Complex;

use super::{GammaKind, ModelKind, ParametricCopf, QuadRow};
use crate::case::NetworkCase;

/// Pi-model admittances `(y_ff, y_ft, y_tf, y_tt)` of a branch.
pub(crate) fn pi_model(r: f64, x: f64, bc: f64, tau: f64, shift: f64) -> [Complex<f64>; 4] {
    let y = Complex::new(1.0, 0.0) / Complex::new(r, x);
    let t = Complex::from_polar(tau, shift);
    let half = Complex::new(0.0, bc / 2.0);
    let yff = (y + half) / (tau * tau);
    let yft = -y / t.conj();
    let ytf = -y / t;
    let ytt = y + half;
    [yff, yft, ytf, ytt]
}

/// Builds the QC relaxation. Variable layout:
/// `Pg, Qg` per generator, forward `P, Q` and reverse `P, Q` per branch,
/// `WR, WI` per branch, `W` per bus.
pub fn build_qcopf(case: &NetworkCase) -> ParametricCopf {
    let ng = case.generators.len();
    let ne = case.branches.len();
    let nb = case.buses.len();
    let index = case.bus_index();

    let pg = |k: usize| k;
    let qg = |k: usize| ng + k;
    let pf = |e: usize| 2 * ng + e;
    let qf = |e: usize| 2 * ng + ne + e;
    let pt = |e: usize| 2 * ng + 2 * ne + e;
    let qt = |e: usize| 2 * ng + 3 * ne + e;
    let wr = |e: usize| 2 * ng + 4 * ne + e;
    let wi = |e: usize| 2 * ng + 5 * ne + e;
    let w = |i: usize| 2 * ng + 6 * ne + i;
    let n = 2 * ng + 6 * ne + nb;

    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut names = vec![String::new(); n];

    let mut objective = QuadRow::default();
    for (k, g) in case.generators.iter().enumerate() {
        lo[pg(k)] = g.pmin;
        hi[pg(k)] = g.pmax;
        lo[qg(k)] = g.qmin;
        hi[qg(k)] = g.qmax;
        names[pg(k)] = format!("Pg{k}");
        names[qg(k)] = format!("Qg{k}");
        if g.c2 != 0.0 {
            objective.quad.push((pg(k), pg(k), 2.0 * g.c2));
        }
        if g.c1 != 0.0 {
            objective.lin.push((pg(k), g.c1));
        }
        objective.constant += g.c0;
    }
    for (i, b) in case.buses.iter().enumerate() {
        lo[w(i)] = b.vmin * b.vmin;
        hi[w(i)] = b.vmax * b.vmax;
        names[w(i)] = format!("W{}", b.id);
    }

    let mut h = Vec::with_capacity(4 * ne);
    let mut g = Vec::with_capacity(3 * ne);
    let mut fwd = Vec::with_capacity(ne);
    let mut rev = Vec::with_capacity(ne);
    let mut kinds = Vec::with_capacity(2 * ne);
    let mut gamma = Vec::with_capacity(2 * ne);
    for (e, br) in case.branches.iter().enumerate() {
        let (i, j) = (index[&br.from], index[&br.to]);
        let tag = format!("{}_{}_{e}", br.from, br.to);
        names[pf(e)] = format!("P{tag}");
        names[qf(e)] = format!("Q{tag}");
        names[pt(e)] = format!("Pr{tag}");
        names[qt(e)] = format!("Qr{tag}");
        names[wr(e)] = format!("WR{tag}");
        names[wi(e)] = format!("WI{tag}");
        let vv = case.buses[i].vmax * case.buses[j].vmax;
        lo[wr(e)] = -vv;
        hi[wr(e)] = vv;
        lo[wi(e)] = -vv;
        hi[wi(e)] = vv;

        let [yff, yft, ytf, ytt] = pi_model(br.r, br.x, br.bc, br.tau, br.shift);
        h.push(QuadRow::linear(
            vec![
                (pf(e), 1.0),
                (w(i), -yff.re),
                (wr(e), -yft.re),
                (wi(e), -yft.im),
            ],
            0.0,
        ));
        h.push(QuadRow::linear(
            vec![
                (qf(e), 1.0),
                (w(i), yff.im),
                (wi(e), -yft.re),
                (wr(e), yft.im),
            ],
            0.0,
        ));
        h.push(QuadRow::linear(
            vec![
                (pt(e), 1.0),
                (w(j), -ytt.re),
                (wr(e), -ytf.re),
                (wi(e), ytf.im),
            ],
            0.0,
        ));
        h.push(QuadRow::linear(
            vec![
                (qt(e), 1.0),
                (w(j), ytt.im),
                (wi(e), ytf.re),
                (wr(e), ytf.im),
            ],
            0.0,
        ));

        let (a, b) = if i <= j { (w(i), w(j)) } else { (w(j), w(i)) };
        g.push(QuadRow {
            quad: vec![(wr(e), wr(e), 2.0), (wi(e), wi(e), 2.0), (a, b, -1.0)],
            cone: true,
            ..QuadRow::default()
        });
        g.push(QuadRow::linear(
            vec![(wr(e), br.theta_min.tan()), (wi(e), -1.0)],
            0.0,
        ));
        g.push(QuadRow::linear(
            vec![(wi(e), 1.0), (wr(e), -br.theta_max.tan())],
            0.0,
        ));

        fwd.push(QuadRow {
            quad: vec![(pf(e), pf(e), 2.0), (qf(e), qf(e), 2.0)],
            ..QuadRow::default()
        });
        rev.push(QuadRow {
            quad: vec![(pt(e), pt(e), 2.0), (qt(e), qt(e), 2.0)],
            ..QuadRow::default()
        });
    }
    for _ in 0..2 {
        for br in &case.branches {
            kinds.push(GammaKind::Thermal { smax: br.smax });
            gamma.push(br.smax * br.smax);
        }
    }
    let mut g_tilde = fwd;
    g_tilde.extend(rev);

    let mut preal: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    let mut qreal: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (k, gen) in case.generators.iter().enumerate() {
        let i = index[&gen.bus];
        preal[i].push((pg(k), 1.0));
        qreal[i].push((qg(k), 1.0));
    }
    for (e, br) in case.branches.iter().enumerate() {
        let (i, j) = (index[&br.from], index[&br.to]);
        preal[i].push((pf(e), -1.0));
        qreal[i].push((qf(e), -1.0));
        preal[j].push((pt(e), -1.0));
        qreal[j].push((qt(e), -1.0));
    }
    let mut h_tilde = Vec::with_capacity(2 * nb);
    for (i, b) in case.buses.iter().enumerate() {
        let mut lin = std::mem::take(&mut preal[i]);
        if b.gs != 0.0 {
            lin.push((w(i), -b.gs));
        }
        h_tilde.push(QuadRow::linear(lin, 0.0));
    }
    for (i, b) in case.buses.iter().enumerate() {
        let mut lin = std::mem::take(&mut qreal[i]);
        if b.bs != 0.0 {
            lin.push((w(i), b.bs));
        }
        h_tilde.push(QuadRow::linear(lin, 0.0));
    }
    let xi: Vec<f64> = case
        .buses
        .iter()
        .map(|b| b.pd)
        .chain(case.buses.iter().map(|b| b.qd))
        .collect();

    ParametricCopf::assemble(
        ModelKind::Qc,
        case.name.clone(),
        nb,
        objective,
        g,
        h,
        g_tilde,
        h_tilde,
        lo,
        hi,
        names,
        kinds,
        gamma,
        xi,
    )
}
