use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use steer_core::{bell_diagonal_state, BellDiagonalParams, BipartiteState, HermitianMatrix};

use crate::{fail, parse_num, Failure};

/// Named states addressable from the command line. The registry covers the
/// closed-form families used throughout the test suites: the singlet, Werner
/// and isotropic lines, and arbitrary Bell-diagonal coefficient triples.
pub fn parse_named_state(spec: &str) -> Result<BipartiteState, Failure> {
    if spec == "singlet" {
        return Ok(BipartiteState::singlet());
    }
    if let Some(arg) = spec.strip_prefix("werner:") {
        let w = parse_num::<f64>(arg, "werner visibility")?;
        return Ok(BipartiteState::werner(w)?);
    }
    if let Some(arg) = spec.strip_prefix("bell-diag:") {
        let parts: Vec<&str> = arg.split(',').collect();
        if parts.len() != 3 {
            return Err(fail(format!(
                "bell-diag needs three comma-separated coefficients, got {arg:?}"
            )));
        }
        let t1 = parse_num::<f64>(parts[0], "bell-diag t1")?;
        let t2 = parse_num::<f64>(parts[1], "bell-diag t2")?;
        let t3 = parse_num::<f64>(parts[2], "bell-diag t3")?;
        return Ok(bell_diagonal_state(&BellDiagonalParams::new(t1, t2, t3)?)?);
    }
    if let Some(arg) = spec.strip_prefix("isotropic:") {
        let parts: Vec<&str> = arg.split(',').collect();
        if parts.len() != 2 {
            return Err(fail(format!(
                "isotropic needs dimension and visibility, got {arg:?}"
            )));
        }
        let d = parse_num::<usize>(parts[0], "isotropic dimension")?;
        let v = parse_num::<f64>(parts[1], "isotropic visibility")?;
        return Ok(BipartiteState::isotropic(d, v)?);
    }
    Err(fail(format!(
        "unknown state {spec:?}; expected singlet, werner:w, bell-diag:t1,t2,t3 or isotropic:d,v"
    )))
}

/// On-disk state document: local dimensions plus the row-major density
/// matrix with each entry written as an `[re, im]` pair.
#[derive(Deserialize)]
struct StateDoc {
    #[serde(alias = "dA")]
    dim_a: usize,
    #[serde(alias = "dB")]
    dim_b: usize,
    rho: Vec<[f64; 2]>,
}

pub fn load_state_file(path: &Path) -> Result<BipartiteState, Failure> {
    let raw = std::fs::read_to_string(path)?;
    let doc: StateDoc = serde_json::from_str(&raw)?;
    let dim = doc.dim_a * doc.dim_b;
    if doc.rho.len() != dim * dim {
        return Err(fail(format!(
            "state document has {} entries, expected {dim}x{dim} = {}",
            doc.rho.len(),
            dim * dim
        )));
    }
    let m = DMatrix::from_fn(dim, dim, |r, c| {
        let [re, im] = doc.rho[r * dim + c];
        Complex64::new(re, im)
    });
    let rho = HermitianMatrix::new(m)?;
    Ok(BipartiteState::new(doc.dim_a, doc.dim_b, rho)?)
}

/// Resolves exactly one of `--state` / `--state-file` into a state plus a
/// short description for the output header.
pub fn resolve_state(
    named: Option<&str>,
    file: Option<&Path>,
) -> Result<(BipartiteState, String), Failure> {
    match (named, file) {
        (Some(spec), None) => Ok((parse_named_state(spec)?, spec.to_string())),
        (None, Some(path)) => Ok((load_state_file(path)?, path.display().to_string())),
        _ => Err(fail("exactly one of --state or --state-file is required")),
    }
}
