//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use copf_core::{build_cdfopf, build_qcopf, parse_matpower, ParametricCopf};

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cases").join(format!("{name}.m"))
}

/// QC model of a meshed case, CDF model of `case136`.
pub fn problem(name: &str) -> ParametricCopf {
    let text = std::fs::read_to_string(case_path(name)).expect("fixture case");
    let case = parse_matpower(&text).expect("parsable fixture");
    if name == "case136" {
        build_cdfopf(&case).expect("radial fixture")
    } else {
        build_qcopf(&case)
    }
}
