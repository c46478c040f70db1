use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::case::{Branch, Bus, Generator, NetworkCase, Topology};
use crate::testutil::load_case;

fn bus(id: usize, pd: f64, qd: f64) -> Bus {
    Bus {
        id,
        pd,
        qd,
        gs: 0.0,
        bs: 0.0,
        vmin: 0.9,
        vmax: 1.1,
    }
}

fn line(from: usize, to: usize) -> Branch {
    Branch {
        from,
        to,
        r: 0.01,
        x: 0.05,
        bc: 0.02,
        tau: 1.0,
        shift: 0.0,
        smax: 2.0,
        theta_min: -0.5,
        theta_max: 0.5,
        transformer: false,
    }
}

fn gen(bus: usize) -> Generator {
    Generator {
        bus,
        pmin: 0.0,
        pmax: 3.0,
        qmin: -2.0,
        qmax: 2.0,
        c2: 1.0,
        c1: 10.0,
        c0: 0.5,
    }
}

pub(crate) fn toy_case() -> NetworkCase {
    NetworkCase {
        name: "toy2".into(),
        base_mva: 100.0,
        buses: vec![bus(1, 0.0, 0.0), bus(2, 1.0, 0.3)],
        branches: vec![line(1, 2)],
        generators: vec![gen(1)],
        topology: Topology::Radial(1),
    }
}

#[test]
fn toy_case_counts() {
    let p = build_qcopf(&toy_case());
    assert_eq!(p.n, 10);
    assert_eq!(p.h.len(), 4);
    assert_eq!(p.g.len(), 3);
    assert_eq!(p.g.iter().filter(|r| r.cone).count(), 1);
    assert_eq!(p.l_tilde(), 2);
    assert_eq!(p.m_tilde(), 4);
    assert_eq!(p.gamma_nominal, vec![4.0, 4.0]);
    assert_eq!(p.xi_nominal, vec![0.0, 1.0, 0.0, 0.3]);
}

#[test]
fn case118_dimensions() {
    let case = load_case("case118");
    assert_eq!(case.buses.len(), 118);
    assert_eq!(case.branches.len(), 186);
    assert_eq!(case.generators.len(), 54);
    assert_eq!(case.transformer_count(), 11);
    let p = build_qcopf(&case);
    assert_eq!(p.l_tilde(), 372);
    assert_eq!(p.m_tilde(), 236);
    for r in &p.g_tilde {
        let diag: Vec<f64> = r.quad.iter().filter(|e| e.0 == e.1).map(|e| e.2).collect();
        assert_eq!(diag, vec![2.0, 2.0]);
        assert_eq!(r.quad.len(), 2);
    }
    for r in &p.h {
        assert!(r.is_linear());
    }
    assert!(p.convexity_margin() >= -1e-10);
}

#[test]
fn case136_is_radial_cdf() {
    let case = load_case("case136");
    assert!(case.topology.is_radial());
    assert_eq!(case.branches.len(), 135);
    let p = build_cdfopf(&case).unwrap();
    assert_eq!(p.l_tilde(), 4 + 135);
    assert_eq!(p.m_tilde(), 2 * 135);
    assert!(p.convexity_margin() >= -1e-10);
}

#[test]
fn cdf_refuses_meshed() {
    let case = load_case("case14");
    assert_eq!(build_cdfopf(&case).unwrap_err(), ProblemError::NotRadial);
}

#[test]
fn cdf_single_branch() {
    let p = build_cdfopf(&toy_case()).unwrap();
    // One balance row per quantity and one voltage-drop row.
    assert_eq!(p.h.len(), 3);
    let drops = p.h.iter().filter(|r| r.constant == 1.0).count();
    assert_eq!(drops, 1);
    assert_eq!(p.g.len(), 1);
    assert!(!p.g[0].cone);
    assert_eq!(p.l_tilde(), 5);

    let loss = build_cdfopf_with(
        &toy_case(),
        &CdfOptions {
            loss_objective: true,
            ..CdfOptions::default()
        },
    )
    .unwrap();
    assert!(loss.objective.quad.is_empty());
    assert_eq!(loss.objective.lin.len(), 1);
    assert_eq!(loss.objective.lin[0].1, 0.01);
}

/// Flow rows vanish at flows computed from arbitrary voltage phasors.
#[test]
fn flow_rows_match_complex_power() {
    let mut case = load_case("case30");
    // Give a couple of branches a tap and a phase shift.
    case.branches[3].tau = 1.05;
    case.branches[3].shift = 0.1;
    case.branches[7].tau = 0.97;
    case.branches[7].shift = -0.05;
    let p = build_qcopf(&case);
    let idx = case.bus_index();
    let ng = case.generators.len();
    let ne = case.branches.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<Complex<f64>> = case
        .buses
        .iter()
        .map(|_| Complex::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.4..0.4)))
        .collect();
    let mut x = vec![0.0; p.n];
    for (e, br) in case.branches.iter().enumerate() {
        let (i, j) = (idx[&br.from], idx[&br.to]);
        let [yff, yft, ytf, ytt] = qc::pi_model(br.r, br.x, br.bc, br.tau, br.shift);
        let sij = v[i] * (yff * v[i] + yft * v[j]).conj();
        let sji = v[j] * (ytf * v[i] + ytt * v[j]).conj();
        let wij = v[i] * v[j].conj();
        x[2 * ng + e] = sij.re;
        x[2 * ng + ne + e] = sij.im;
        x[2 * ng + 2 * ne + e] = sji.re;
        x[2 * ng + 3 * ne + e] = sji.im;
        x[2 * ng + 4 * ne + e] = wij.re;
        x[2 * ng + 5 * ne + e] = wij.im;
    }
    for (i, vi) in v.iter().enumerate() {
        x[2 * ng + 6 * ne + i] = vi.norm_sqr();
    }
    for r in &p.h {
        assert!(r.value(&x).abs() < 1e-12, "{}", r.value(&x));
    }
    // Rank-one W sits on the cone boundary.
    for r in p.g.iter().filter(|r| r.cone) {
        assert!(r.value(&x).abs() < 1e-12);
    }
}

fn random_x(p: &ParametricCopf, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p.n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

#[test]
fn jacobian_matches_finite_differences() {
    for p in [
        build_qcopf(&load_case("case14")),
        build_cdfopf(&load_case("case136")).unwrap(),
    ] {
        let pt = p.nominal_point();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_x(&p, &mut rng);
            let j = p.jacobian(&x).to_dense();
            let hstep = 1e-6;
            let stack = |e: Evaluation| -> Vec<f64> {
                e.g.into_iter()
                    .chain(e.h)
                    .chain(e.g_tilde)
                    .chain(e.h_tilde)
                    .collect()
            };
            let mut worst: f64 = 0.0;
            for k in 0..p.n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += hstep;
                xm[k] -= hstep;
                let fp = stack(p.eval(&pt, &xp));
                let fm = stack(p.eval(&pt, &xm));
                for r in 0..p.m() {
                    let fd = (fp[r] - fm[r]) / (2.0 * hstep);
                    worst = worst.max((fd - j[(r, k)]).abs());
                }
            }
            assert!(worst <= 1e-6, "max deviation {worst}");
        }
    }
}

#[test]
fn hessian_is_linear_and_matches_naive_assembly() {
    let p = build_qcopf(&load_case("case118"));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let beta = rng.random_range(0.0..2.0);
        let alpha: Vec<f64> = (0..p.m()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = p.lagrangian_hessian(beta, &alpha);
        let twice: Vec<f64> = alpha.iter().map(|a| 2.0 * a).collect();
        let h2 = p.lagrangian_hessian(2.0 * beta, &twice);
        for (a, b) in h.values.iter().zip(&h2.values) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let mut naive = std::collections::BTreeMap::<(usize, usize), f64>::new();
        for &(i, j, a) in &p.objective.quad {
            *naive.entry((i, j)).or_default() += beta * a;
        }
        for (row, al) in p.rows().zip(&alpha) {
            for &(i, j, a) in &row.quad {
                *naive.entry((i, j)).or_default() += al * a;
            }
        }
        let mut seen = 0;
        for i in 0..p.n {
            for (j, v) in h.row(i) {
                let want = naive.get(&(i, j)).copied().unwrap_or(0.0);
                assert!((v - want).abs() <= 1e-12, "({i},{j}) {v} vs {want}");
                seen += 1;
            }
        }
        assert_eq!(seen, naive.len());
    }
}

#[test]
fn instantiate_checks_dimensions() {
    let p = build_qcopf(&toy_case());
    let mut pt = p.nominal_point();
    assert!(p.instantiate(&pt).is_ok());
    pt.gamma.pop();
    assert_eq!(
        p.instantiate(&pt).unwrap_err(),
        ProblemError::DimensionMismatch {
            what: "gamma",
            expected: 2,
            found: 1
        }
    );
}

#[test]
fn gamma_only_moves_constants() {
    let p = build_qcopf(&load_case("case14"));
    let a = p.nominal_point();
    let mut b = a.clone();
    b.gamma[3] += 0.25;
    let x = vec![0.3; p.n];
    let ea = p.eval(&a, &x);
    let eb = p.eval(&b, &x);
    for (r, (u, v)) in ea.g_tilde.iter().zip(&eb.g_tilde).enumerate() {
        if r == 3 {
            assert!((u - v - 0.25).abs() < 1e-15);
        } else {
            assert_eq!(u, v);
        }
    }
    assert_eq!(ea.h_tilde, eb.h_tilde);
    assert_eq!(p.jacobian(&x), p.jacobian(&x));
}

#[test]
fn reduce_identity_empty_and_out_of_range() {
    let p = build_qcopf(&load_case("case14"));
    let all: Vec<usize> = (0..p.l_tilde()).collect();
    let same = p.reduce(&all).unwrap();
    assert_eq!(same.g_tilde, p.g_tilde);
    assert_eq!(same.kept, p.kept);
    let none = p.reduce(&[]).unwrap();
    assert!(none.g_tilde.is_empty());
    assert_eq!(none.h, p.h);
    assert_eq!(none.g, p.g);
    assert_eq!(none.h_tilde, p.h_tilde);
    assert_eq!(none.l_tilde(), p.l_tilde());
    assert_eq!(
        p.reduce(&[p.l_tilde()]).unwrap_err(),
        ProblemError::IndexOutOfRange(p.l_tilde())
    );
    let some = p.reduce(&[5, 1]).unwrap();
    assert_eq!(some.kept, vec![1, 5]);
    assert_eq!(some.g_tilde[1], p.g_tilde[5]);
    // Reducing a reduced problem cannot resurrect dropped rows.
    assert!(some.reduce(&[2]).is_err());
}

#[test]
fn dump_lists_every_row() {
    let p = build_qcopf(&toy_case());
    let text = p.dump(Some(&p.nominal_point()));
    assert!(text.contains("g0[cone]:"));
    assert_eq!(text.lines().filter(|l| l.starts_with(" gt")).count(), 2);
    assert_eq!(text.lines().filter(|l| l.starts_with(" ht")).count(), 4);
}
