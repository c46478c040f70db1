//! Reader and writer for the subset of the MATPOWER `.m` case format needed
//! by the OPF builders: `baseMVA`, `bus`, `gen`, `branch` and `gencost`.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{
    classify_topology, Branch, Bus, CaseError, Generator, NetworkCase, DEFAULT_PAD_LIMIT,
};

struct Row {
    line: usize,
    values: Vec<f64>,
}

/// Collects `mpc.<name> = [ ... ];` numeric matrices and `mpc.<name> = x;`
/// scalars. Cell arrays and strings are skipped.
fn scan_blocks(text: &str) -> Result<(HashMap<String, Vec<Row>>, HashMap<String, f64>), CaseError> {
    let mut matrices: HashMap<String, Vec<Row>> = HashMap::new();
    let mut scalars = HashMap::new();
    let mut current: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut rest = line.trim();
        if current.is_none() {
            let Some(stripped) = rest.strip_prefix("mpc.") else {
                continue;
            };
            let Some(eq) = stripped.find('=') else {
                continue;
            };
            let name = stripped[..eq].trim().to_string();
            let rhs = stripped[eq + 1..].trim();
            if let Some(body) = rhs.strip_prefix('[') {
                current = Some(name.clone());
                matrices.entry(name).or_default();
                rest = body;
            } else {
                let value = rhs.trim_end_matches(';').trim();
                if let Ok(v) = value.parse::<f64>() {
                    scalars.insert(name, v);
                }
                continue;
            }
        }
        let Some(name) = current.clone() else {
            continue;
        };
        let (body, closed) = match rest.find(']') {
            Some(p) => (&rest[..p], true),
            None => (rest, false),
        };
        for chunk in body.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                values.push(parse_number(tok).ok_or_else(|| CaseError::MalformedRow {
                    block: name.clone(),
                    line: line_no,
                    reason: format!("not a number: `{tok}`"),
                })?);
            }
            matrices.get_mut(&name).expect("block registered").push(Row {
                line: line_no,
                values,
            });
        }
        if closed {
            current = None;
        }
    }
    Ok((matrices, scalars))
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}

fn require<'a>(
    blocks: &'a HashMap<String, Vec<Row>>,
    name: &str,
) -> Result<&'a [Row], CaseError> {
    blocks
        .get(name)
        .map(|v| v.as_slice())
        .ok_or_else(|| CaseError::MissingBlock(name.to_string()))
}

fn check_width(block: &str, row: &Row, width: usize) -> Result<(), CaseError> {
    if row.values.len() < width {
        return Err(CaseError::MalformedRow {
            block: block.to_string(),
            line: row.line,
            reason: format!("expected at least {width} columns, found {}", row.values.len()),
        });
    }
    Ok(())
}

fn as_id(block: &str, row: &Row, v: f64) -> Result<usize, CaseError> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(CaseError::MalformedRow {
            block: block.to_string(),
            line: row.line,
            reason: format!("invalid bus number {v}"),
        });
    }
    Ok(v as usize)
}

/// Angle limit in degrees to radians, replacing unset or out-of-range
/// values with the default limit.
fn pad_limit(deg: Option<f64>, lower: bool) -> f64 {
    let fallback = if lower { -DEFAULT_PAD_LIMIT } else { DEFAULT_PAD_LIMIT };
    match deg {
        Some(d) if d.is_finite() && d > -90.0 && d < 90.0 && !(d == 0.0) => d.to_radians(),
        _ => fallback,
    }
}

/// Parses MATPOWER case text into a validated per-unit [`NetworkCase`].
///
/// Out-of-service branches and generators are dropped; branches with
/// `rateA = 0` receive the finite cap from [`NetworkCase::unlimited_rating`].
pub fn parse_matpower(text: &str) -> Result<NetworkCase, CaseError> {
    let (blocks, scalars) = scan_blocks(text)?;
    let base_mva = *scalars
        .get("baseMVA")
        .ok_or_else(|| CaseError::MissingBlock("baseMVA".into()))?;
    if !(base_mva > 0.0) {
        return Err(CaseError::Invalid("baseMVA must be positive".into()));
    }
    let bus_rows = require(&blocks, "bus")?;
    let gen_rows = require(&blocks, "gen")?;
    let branch_rows = require(&blocks, "branch")?;
    let cost_rows = require(&blocks, "gencost")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in bus_rows {
        check_width("bus", row, 13)?;
        let v = &row.values;
        buses.push(Bus {
            id: as_id("bus", row, v[0])?,
            pd: v[2] / base_mva,
            qd: v[3] / base_mva,
            gs: v[4] / base_mva,
            bs: v[5] / base_mva,
            vmax: v[11],
            vmin: v[12],
        });
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::MissingBlock("gencost".into()));
    }
    let mut generators = Vec::with_capacity(gen_rows.len());
    for (k, (row, cost)) in gen_rows.iter().zip(cost_rows).enumerate() {
        check_width("gen", row, 10)?;
        check_width("gencost", cost, 4)?;
        let v = &row.values;
        if v[7] <= 0.0 {
            continue;
        }
        let model = cost.values[0] as i64;
        if model != 2 {
            return Err(CaseError::UnsupportedCost { index: k, model });
        }
        let ncoef = cost.values[3] as usize;
        check_width("gencost", cost, 4 + ncoef)?;
        let coefs = &cost.values[4..4 + ncoef];
        // Highest order first; keep only up to quadratic terms.
        let mut c = [0.0f64; 3];
        for (j, &val) in coefs.iter().rev().enumerate() {
            if j < 3 {
                c[j] = val;
            } else if val != 0.0 {
                return Err(CaseError::UnsupportedCost {
                    index: k,
                    model: 2,
                });
            }
        }
        if c[2] < 0.0 {
            return Err(CaseError::NonconvexCost { index: k });
        }
        generators.push(Generator {
            bus: as_id("gen", row, v[0])?,
            qmax: v[3] / base_mva,
            qmin: v[4] / base_mva,
            pmax: v[8] / base_mva,
            pmin: v[9] / base_mva,
            c2: c[2] * base_mva * base_mva,
            c1: c[1] * base_mva,
            c0: c[0],
        });
    }

    let cap = 10.0 * generators.iter().map(|g| g.pmax.abs()).sum::<f64>();
    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in branch_rows {
        check_width("branch", row, 11)?;
        let v = &row.values;
        if v[10] <= 0.0 {
            continue;
        }
        let ratio = v[8];
        let rate = v[5];
        branches.push(Branch {
            from: as_id("branch", row, v[0])?,
            to: as_id("branch", row, v[1])?,
            r: v[2],
            x: v[3],
            bc: v[4],
            tau: if ratio == 0.0 { 1.0 } else { ratio },
            shift: v[9].to_radians(),
            smax: if rate > 0.0 && rate.is_finite() {
                rate / base_mva
            } else {
                cap
            },
            theta_min: pad_limit(v.get(11).copied(), true),
            theta_max: pad_limit(v.get(12).copied(), false),
            transformer: ratio != 0.0,
        });
    }

    let mut case = NetworkCase {
        name: case_name(text),
        base_mva,
        buses,
        branches,
        generators,
        topology: super::Topology::Meshed,
    };
    case.validate()?;
    case.topology = classify_topology(&case)?;
    Ok(case)
}

fn case_name(text: &str) -> String {
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                return rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
        }
    }
    String::new()
}

/// Writes a case back out in MATPOWER layout (MW, MVAr, degrees).
pub fn to_matpower(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let mut out = String::new();
    let name = if case.name.is_empty() { "case" } else { &case.name };
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base:?};");
    let _ = writeln!(out, "mpc.bus = [");
    let root = match case.topology {
        super::Topology::Radial(r) => Some(r),
        super::Topology::Meshed => None,
    };
    for b in &case.buses {
        let kind = if Some(b.id) == root { 3 } else { 1 };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t1\t0\t0\t1\t{:?}\t{:?};",
            b.id,
            kind,
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.vmax,
            b.vmin
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{:?}\t{:?}\t1\t{:?}\t1\t{:?}\t{:?};",
            g.bus,
            g.qmax * base,
            g.qmin * base,
            base,
            g.pmax * base,
            g.pmin * base
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branches {
        let ratio = if br.transformer { br.tau } else { 0.0 };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t0\t0\t{:?}\t{:?}\t1\t{:?}\t{:?};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.bc,
            br.smax * base,
            ratio,
            br.shift.to_degrees(),
            br.theta_min.to_degrees(),
            br.theta_max.to_degrees()
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "mpc.gencost = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t2\t0\t0\t3\t{:?}\t{:?}\t{:?};",
            g.c2 / (base * base),
            g.c1 / base,
            g.c0
        );
    }
    let _ = writeln!(out, "];");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Topology;

    const CHAIN: &str = "
function mpc = chain3
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0  0 0 1 1 0 135 1 1.1 0.9;
  2 1 50 10  0 0 1 1 0 135 1 1.1 0.9;
  3 1 30  5  0 0 1 1 0 135 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
  1 2 0.01 0.05 0.02 120 0 0 0 0 1 -30 30;
  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.01 20 0;
];
";

    #[test]
    fn chain_is_radial_and_closing_it_meshes() {
        let case = parse_matpower(CHAIN).unwrap();
        assert_eq!(case.branches.len(), 2);
        assert_eq!(case.topology, Topology::Radial(1));
        assert_eq!(case.name, "chain3");

        let closed = CHAIN.replace(
            "  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;",
            "  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;\n  3 1 0.02 0.06 0 0 0 0 0 0 1 -30 30;",
        );
        let meshed = parse_matpower(&closed).unwrap();
        assert_eq!(meshed.branches.len(), 3);
        assert_eq!(meshed.topology, Topology::Meshed);
    }

    #[test]
    fn units_and_defaults() {
        let case = parse_matpower(CHAIN).unwrap();
        assert_eq!(case.buses[1].pd * 100.0, 50.0);
        assert!((case.branches[0].smax - 1.2).abs() < 1e-15);
        // rateA = 0 becomes ten times total capacity (2 pu).
        assert!((case.branches[1].smax - 20.0).abs() < 1e-12);
        assert!((case.branches[0].theta_max - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(case.branches[1].theta_max, DEFAULT_PAD_LIMIT);
        assert_eq!(case.branches[1].theta_min, -DEFAULT_PAD_LIMIT);
        assert!((case.generators[0].c2 - 100.0).abs() < 1e-12);
        assert!((case.generators[0].c1 - 2000.0).abs() < 1e-12);
    }

    #[test]
    fn missing_block() {
        let text = CHAIN.replace("mpc.gencost", "mpc.other");
        assert_eq!(
            parse_matpower(&text),
            Err(CaseError::MissingBlock("gencost".into()))
        );
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = CHAIN.replace("2 1 50 10  0 0 1 1 0 135 1 1.1 0.9;", "2 1 50 x;");
        match parse_matpower(&text) {
            Err(CaseError::MalformedRow { block, line, .. }) => {
                assert_eq!(block, "bus");
                assert_eq!(line, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_quadratic_cost() {
        let text = CHAIN.replace("2 0 0 3 0.01 20 0;", "2 0 0 3 -0.01 20 0;");
        assert_eq!(
            parse_matpower(&text),
            Err(CaseError::NonconvexCost { index: 0 })
        );
    }

    #[test]
    fn out_of_service_elements_are_dropped() {
        let text = CHAIN.replace(
            "  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;",
            "  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;\n  3 1 0.02 0.06 0 0 0 0 0 0 0 -30 30;",
        );
        let case = parse_matpower(&text).unwrap();
        assert_eq!(case.branches.len(), 2);
        assert!(case.topology.is_radial());
    }

    #[test]
    fn disconnected_case() {
        let text = CHAIN.replace("  2 3 0.01 0.05 0.02 0   0 0 0 0 1 -360 360;", "");
        assert_eq!(parse_matpower(&text), Err(CaseError::DisconnectedGraph));
    }

    #[test]
    fn single_bus_case() {
        let text = "
mpc.baseMVA = 100;
mpc.bus = [ 4 3 10 2 0 0 1 1 0 135 1 1.05 0.95; ];
mpc.gen = [ 4 0 0 50 -50 1 100 1 80 0; ];
mpc.branch = [
];
mpc.gencost = [ 2 0 0 2 15 0; ];
";
        let case = parse_matpower(text).unwrap();
        assert_eq!(case.topology, Topology::Radial(4));
        assert!(case.branches.is_empty());
        assert_eq!(case.generators[0].c2, 0.0);
        assert!((case.generators[0].c1 - 1500.0).abs() < 1e-12);
    }

    #[test]
    fn writer_round_trip() {
        let case = parse_matpower(CHAIN).unwrap();
        let again = parse_matpower(&to_matpower(&case)).unwrap();
        assert!(case.approx_eq(&again, 1e-12));
    }
}
