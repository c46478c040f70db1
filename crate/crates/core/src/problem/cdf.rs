use super::{GammaKind, ModelKind, ParametricCopf, ProblemError, QuadRow};
use crate::case::{NetworkCase, RadialTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfOptions {
    /// Squared voltage magnitude at the root bus.
    pub v0: f64,
    /// Minimize `sum r_i l_i` instead of generation cost.
    pub loss_objective: bool,
}

impl Default for CdfOptions {
    fn default() -> Self {
        CdfOptions {
            v0: 1.0,
            loss_objective: false,
        }
    }
}

pub fn build_cdfopf(case: &NetworkCase) -> Result<ParametricCopf, ProblemError> {
    build_cdfopf_with(case, &CdfOptions::default())
}

/// Builds the convexified DistFlow model of a radial case. The root bus is
/// the slack; every other bus owns the branch that feeds it.
///
/// Variable layout: `Pg, Qg` per non-root generator, then `P, Q, l` per
/// non-root bus, then `p, q, v` per non-root bus.
pub fn build_cdfopf_with(
    case: &NetworkCase,
    opts: &CdfOptions,
) -> Result<ParametricCopf, ProblemError> {
    let tree = RadialTree::build(case).ok_or(ProblemError::NotRadial)?;
    let index = case.bus_index();
    let root = tree.root;
    let nodes: Vec<usize> = (0..case.buses.len()).filter(|&i| i != root).collect();
    let nn = nodes.len();
    let mut node_of = vec![usize::MAX; case.buses.len()];
    for (t, &i) in nodes.iter().enumerate() {
        node_of[i] = t;
    }
    let root_gens: Vec<usize> = (0..case.generators.len())
        .filter(|&k| index[&case.generators[k].bus] == root)
        .collect();
    let gens: Vec<usize> = (0..case.generators.len())
        .filter(|&k| index[&case.generators[k].bus] != root)
        .collect();
    if root_gens.len() != 1 {
        return Err(ProblemError::Unsupported(format!(
            "expected one generator at the root bus, found {}",
            root_gens.len()
        )));
    }
    let slack = &case.generators[root_gens[0]];
    let ng = gens.len();

    let pg = |k: usize| k;
    let qg = |k: usize| ng + k;
    let fp = |t: usize| 2 * ng + t;
    let fq = |t: usize| 2 * ng + nn + t;
    let fl = |t: usize| 2 * ng + 2 * nn + t;
    let ip = |t: usize| 2 * ng + 3 * nn + t;
    let iq = |t: usize| 2 * ng + 4 * nn + t;
    let vv = |t: usize| 2 * ng + 5 * nn + t;
    let n = 2 * ng + 6 * nn;

    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut names = vec![String::new(); n];
    for (k, &gk) in gens.iter().enumerate() {
        let gen = &case.generators[gk];
        lo[pg(k)] = gen.pmin;
        hi[pg(k)] = gen.pmax;
        lo[qg(k)] = gen.qmin;
        hi[qg(k)] = gen.qmax;
        names[pg(k)] = format!("Pg{gk}");
        names[qg(k)] = format!("Qg{gk}");
    }
    for (t, &i) in nodes.iter().enumerate() {
        let b = &case.buses[i];
        let id = b.id;
        names[fp(t)] = format!("P{id}");
        names[fq(t)] = format!("Q{id}");
        names[fl(t)] = format!("l{id}");
        names[ip(t)] = format!("p{id}");
        names[iq(t)] = format!("q{id}");
        names[vv(t)] = format!("v{id}");
        // Implied by the cone rows since parent voltages are positive.
        lo[fl(t)] = 0.0;
        lo[vv(t)] = b.vmin * b.vmin;
        hi[vv(t)] = b.vmax * b.vmax;
    }

    let branch_of = |t: usize| &case.branches[tree.feeder[nodes[t]].expect("non-root bus has a feeder")];
    let root_children: Vec<usize> = tree.children[root].iter().map(|&c| node_of[c]).collect();

    let mut h = Vec::with_capacity(3 * nn);
    for t in 0..nn {
        let br = branch_of(t);
        let mut lin: Vec<(usize, f64)> = tree.children[nodes[t]]
            .iter()
            .map(|&c| (fp(node_of[c]), 1.0))
            .collect();
        lin.extend([(ip(t), -1.0), (fp(t), -1.0), (fl(t), br.r)]);
        h.push(QuadRow::linear(lin, 0.0));
    }
    for t in 0..nn {
        let br = branch_of(t);
        let mut lin: Vec<(usize, f64)> = tree.children[nodes[t]]
            .iter()
            .map(|&c| (fq(node_of[c]), 1.0))
            .collect();
        lin.extend([(iq(t), -1.0), (fq(t), -1.0), (fl(t), br.x)]);
        h.push(QuadRow::linear(lin, 0.0));
    }
    for t in 0..nn {
        let br = branch_of(t);
        let mut lin = vec![
            (vv(t), -1.0),
            (fp(t), -2.0 * br.r),
            (fq(t), -2.0 * br.x),
            (fl(t), br.r * br.r + br.x * br.x),
        ];
        let parent = tree.parent[nodes[t]].expect("non-root bus has a parent");
        let constant = if parent == root {
            opts.v0
        } else {
            lin.push((vv(node_of[parent]), 1.0));
            0.0
        };
        h.push(QuadRow::linear(lin, constant));
    }

    let mut g = Vec::with_capacity(nn);
    for t in 0..nn {
        let parent = tree.parent[nodes[t]].expect("non-root bus has a parent");
        let mut row = QuadRow {
            quad: vec![(fp(t), fp(t), 2.0), (fq(t), fq(t), 2.0)],
            ..QuadRow::default()
        };
        if parent == root {
            row.lin.push((fl(t), -opts.v0));
        } else {
            let a = vv(node_of[parent]);
            let b = fl(t);
            row.quad.push((a.min(b), a.max(b), -1.0));
            row.cone = true;
        }
        g.push(row);
    }

    let root_bus = &case.buses[root];
    let sum_p: Vec<(usize, f64)> = root_children.iter().map(|&t| (fp(t), 1.0)).collect();
    let sum_q: Vec<(usize, f64)> = root_children.iter().map(|&t| (fq(t), 1.0)).collect();
    let neg = |v: &[(usize, f64)]| v.iter().map(|&(j, a)| (j, -a)).collect::<Vec<_>>();
    let mut g_tilde = vec![
        QuadRow::linear(neg(&sum_p), 0.0),
        QuadRow::linear(sum_p.clone(), 0.0),
        QuadRow::linear(neg(&sum_q), 0.0),
        QuadRow::linear(sum_q, 0.0),
    ];
    let mut gamma = vec![
        -(slack.pmin - root_bus.pd),
        slack.pmax - root_bus.pd,
        -(slack.qmin - root_bus.qd),
        slack.qmax - root_bus.qd,
    ];
    let mut kinds = vec![
        GammaKind::SlackLower,
        GammaKind::SlackUpper,
        GammaKind::SlackLower,
        GammaKind::SlackUpper,
    ];
    for t in 0..nn {
        let smax = branch_of(t).smax;
        g_tilde.push(QuadRow {
            quad: vec![(fp(t), fp(t), 2.0), (fq(t), fq(t), 2.0)],
            ..QuadRow::default()
        });
        gamma.push(smax * smax);
        kinds.push(GammaKind::Thermal { smax });
    }

    let mut h_tilde = Vec::with_capacity(2 * nn);
    let mut pin: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
    let mut qin: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
    for (k, &gk) in gens.iter().enumerate() {
        let t = node_of[index[&case.generators[gk].bus]];
        pin[t].push((pg(k), 1.0));
        qin[t].push((qg(k), 1.0));
    }
    for (t, mut lin) in pin.into_iter().enumerate() {
        lin.push((ip(t), -1.0));
        h_tilde.push(QuadRow::linear(lin, 0.0));
    }
    for (t, mut lin) in qin.into_iter().enumerate() {
        lin.push((iq(t), -1.0));
        h_tilde.push(QuadRow::linear(lin, 0.0));
    }
    let xi: Vec<f64> = nodes
        .iter()
        .map(|&i| case.buses[i].pd)
        .chain(nodes.iter().map(|&i| case.buses[i].qd))
        .collect();

    let mut objective = QuadRow::default();
    if opts.loss_objective {
        for t in 0..nn {
            objective.lin.push((fl(t), branch_of(t).r));
        }
    } else {
        for (k, &gk) in gens.iter().enumerate() {
            let gen = &case.generators[gk];
            if gen.c2 != 0.0 {
                objective.quad.push((pg(k), pg(k), 2.0 * gen.c2));
            }
            if gen.c1 != 0.0 {
                objective.lin.push((pg(k), gen.c1));
            }
            objective.constant += gen.c0;
        }
        // Root output = sum of flows leaving the root + root load.
        let d = root_bus.pd;
        if slack.c2 != 0.0 {
            for (a, &ta) in root_children.iter().enumerate() {
                for &tb in &root_children[a..] {
                    let (i, j) = (fp(ta).min(fp(tb)), fp(ta).max(fp(tb)));
                    objective.quad.push((i, j, 2.0 * slack.c2));
                }
            }
        }
        let lin = 2.0 * slack.c2 * d + slack.c1;
        if lin != 0.0 {
            for &t in &root_children {
                objective.lin.push((fp(t), lin));
            }
        }
        objective.constant += slack.c2 * d * d + slack.c1 * d + slack.c0;
    }

    Ok(ParametricCopf::assemble(
        ModelKind::Cdf,
        case.name.clone(),
        case.buses.len(),
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
    ))
}
