//! Network data: buses, branches, generators and the topology class that
//! decides which convexified OPF family applies to a case.
//!
//! All electrical quantities are stored in per-unit on `base_mva`. Angles are
//! in radians. Cost coefficients are rescaled so that they apply to per-unit
//! real power, i.e. `cost = c2 * p^2 + c1 * p + c0` with `p` in per-unit.

mod matpower;

pub use matpower::{parse_matpower, to_matpower};

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("missing `mpc.{0}` block")]
    MissingBlock(String),
    #[error("malformed row in `mpc.{block}` at line {line}: {reason}")]
    MalformedRow {
        block: String,
        line: usize,
        reason: String,
    },
    #[error("network graph is not connected")]
    DisconnectedGraph,
    #[error("generator {index} has a negative quadratic cost coefficient")]
    NonconvexCost { index: usize },
    #[error("generator {index} uses an unsupported cost model {model}")]
    UnsupportedCost { index: usize, model: i64 },
    #[error("invalid case data: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub bc: f64,
    pub tau: f64,
    pub shift: f64,
    pub smax: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Set when the source data declares a tap ratio (MATPOWER `ratio != 0`).
    #[serde(default)]
    pub transformer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "root")]
pub enum Topology {
    Meshed,
    Radial(usize),
}

impl Topology {
    pub fn is_radial(&self) -> bool {
        matches!(self, Topology::Radial(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub topology: Topology,
}

/// Default phase-angle-difference limit, strictly inside (-pi/2, pi/2).
pub const DEFAULT_PAD_LIMIT: f64 = 89.0 * std::f64::consts::PI / 180.0;

impl NetworkCase {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn transformer_count(&self) -> usize {
        self.branches.iter().filter(|b| b.transformer).count()
    }

    /// Map from external bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(k, b)| (b.id, k))
            .collect()
    }

    /// Thermal cap used for branches without a rating: ten times the total
    /// generator capacity.
    pub fn unlimited_rating(&self) -> f64 {
        10.0 * self.generators.iter().map(|g| g.pmax.abs()).sum::<f64>()
    }

    /// Checks the per-element invariants of the data model.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::Invalid("baseMVA must be positive".into()));
        }
        let index = self.bus_index();
        if index.len() != self.buses.len() {
            return Err(CaseError::Invalid("duplicate bus id".into()));
        }
        for b in &self.buses {
            if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
                return Err(CaseError::Invalid(format!(
                    "bus {} has invalid voltage bounds [{}, {}]",
                    b.id, b.vmin, b.vmax
                )));
            }
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (k, br) in self.branches.iter().enumerate() {
            if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
                return Err(CaseError::Invalid(format!(
                    "branch {k} references an unknown bus"
                )));
            }
            if br.r * br.r + br.x * br.x <= 0.0 {
                return Err(CaseError::Invalid(format!("branch {k} has zero impedance")));
            }
            if br.tau <= 0.0 {
                return Err(CaseError::Invalid(format!("branch {k} has tap ratio <= 0")));
            }
            if !(-half_pi < br.theta_min && br.theta_min < br.theta_max && br.theta_max < half_pi)
            {
                return Err(CaseError::Invalid(format!(
                    "branch {k} has invalid angle limits"
                )));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            if !index.contains_key(&g.bus) {
                return Err(CaseError::Invalid(format!(
                    "generator {k} references an unknown bus"
                )));
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(CaseError::Invalid(format!("generator {k} has inverted limits")));
            }
            if g.c2 < 0.0 {
                return Err(CaseError::NonconvexCost { index: k });
            }
        }
        Ok(())
    }

    /// Structural equality up to a relative tolerance on every real field.
    pub fn approx_eq(&self, other: &NetworkCase, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300);
        if self.topology != other.topology
            || self.buses.len() != other.buses.len()
            || self.branches.len() != other.branches.len()
            || self.generators.len() != other.generators.len()
            || !close(self.base_mva, other.base_mva)
        {
            return false;
        }
        let buses = self.buses.iter().zip(&other.buses).all(|(a, b)| {
            a.id == b.id
                && close(a.pd, b.pd)
                && close(a.qd, b.qd)
                && close(a.gs, b.gs)
                && close(a.bs, b.bs)
                && close(a.vmin, b.vmin)
                && close(a.vmax, b.vmax)
        });
        let branches = self.branches.iter().zip(&other.branches).all(|(a, b)| {
            a.from == b.from
                && a.to == b.to
                && a.transformer == b.transformer
                && close(a.r, b.r)
                && close(a.x, b.x)
                && close(a.bc, b.bc)
                && close(a.tau, b.tau)
                && close(a.shift, b.shift)
                && close(a.smax, b.smax)
                && close(a.theta_min, b.theta_min)
                && close(a.theta_max, b.theta_max)
        });
        let gens = self.generators.iter().zip(&other.generators).all(|(a, b)| {
            a.bus == b.bus
                && close(a.pmin, b.pmin)
                && close(a.pmax, b.pmax)
                && close(a.qmin, b.qmin)
                && close(a.qmax, b.qmax)
                && close(a.c2, b.c2)
                && close(a.c1, b.c1)
                && close(a.c0, b.c0)
        });
        buses && branches && gens
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn from_json(text: &str) -> Result<NetworkCase, CaseError> {
        let case: NetworkCase =
            serde_json::from_str(text).map_err(|e| CaseError::Invalid(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }
}

/// Classifies a connected network as radial (a tree) or meshed.
///
/// The root of a radial network is the bus hosting the generator with the
/// largest `pmax`; without generators the first bus is used.
pub fn classify_topology(case: &NetworkCase) -> Result<Topology, CaseError> {
    classify_edges(
        &case.buses.iter().map(|b| b.id).collect::<Vec<_>>(),
        &case
            .branches
            .iter()
            .map(|b| (b.from, b.to))
            .collect::<Vec<_>>(),
        root_bus(case),
    )
}

fn root_bus(case: &NetworkCase) -> Option<usize> {
    let mut best: Option<&Generator> = None;
    for g in &case.generators {
        if best.map_or(true, |b| g.pmax > b.pmax) {
            best = Some(g);
        }
    }
    best.map(|g| g.bus)
        .or_else(|| case.buses.first().map(|b| b.id))
}

pub(crate) fn classify_edges(
    bus_ids: &[usize],
    edges: &[(usize, usize)],
    root: Option<usize>,
) -> Result<Topology, CaseError> {
    if bus_ids.is_empty() {
        return Err(CaseError::Invalid("case has no buses".into()));
    }
    let index: HashMap<usize, usize> = bus_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let n = bus_ids.len();
    let mut adj = vec![Vec::new(); n];
    for &(f, t) in edges {
        let (Some(&a), Some(&b)) = (index.get(&f), index.get(&t)) else {
            return Err(CaseError::Invalid("edge references an unknown bus".into()));
        };
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    if reached != n {
        return Err(CaseError::DisconnectedGraph);
    }
    // A connected graph is a tree iff it has exactly n - 1 edges.
    if edges.len() + 1 == n {
        Ok(Topology::Radial(root.unwrap_or(bus_ids[0])))
    } else {
        Ok(Topology::Meshed)
    }
}

/// Parent/child structure of a radial case, oriented away from the root.
#[derive(Debug, Clone)]
pub struct RadialTree {
    /// Position of the root bus in `case.buses`.
    pub root: usize,
    /// Parent bus position for every bus; `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Branch index feeding each bus; `None` for the root.
    pub feeder: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl RadialTree {
    pub fn build(case: &NetworkCase) -> Option<RadialTree> {
        let Topology::Radial(root_id) = case.topology else {
            return None;
        };
        let index = case.bus_index();
        let n = case.buses.len();
        let root = *index.get(&root_id)?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in case.branches.iter().enumerate() {
            let a = index[&br.from];
            let b = index[&br.to];
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        let mut parent = vec![None; n];
        let mut feeder = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, k) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    feeder[v] = Some(k);
                    children[u].push(v);
                    queue.push_back(v);
                }
            }
        }
        Some(RadialTree {
            root,
            parent,
            feeder,
            children,
        })
    }
}
