//! (N,M)-POVM families: enumeration of informationally complete parameter
//! pairs, spectral construction of effect operators from an orthogonal
//! seed matrix, validation of the defining overlap relations, and JSON
//! serialization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{
    bloch_expand, random_orthogonal, HermitianMatrix, LooBasis, ORTHONORMALITY_TOL,
};

/// Minimum effect eigenvalue tolerated before a POVM is rejected as not PSD.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance on completeness and effect-trace relations.
pub const SUM_TOL: f64 = 1e-10;
/// Tolerance on pairwise overlap relations.
pub const OVERLAP_TOL: f64 = 1e-9;

/// Parameters of an (N,M)-POVM: N sub-POVMs with M outcomes each on a
/// d-dimensional system, sharing the purity parameter x = Tr{Π²}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmPovmParams {
    pub dim: usize,
    pub num_povms: usize,
    pub num_outcomes: usize,
    /// Self-overlap Tr{Π_{α,a}²} of every effect, often written x.
    pub purity: f64,
}

impl NmPovmParams {
    pub fn new(dim: usize, num_povms: usize, num_outcomes: usize, purity: f64) -> Result<Self> {
        let p = Self {
            dim,
            num_povms,
            num_outcomes,
            purity,
        };
        p.validate()?;
        Ok(p)
    }

    /// Admissible purity interval (lower bound exclusive, upper inclusive)
    /// for the given dimension and outcome count.
    pub fn purity_range(dim: usize, num_outcomes: usize) -> (f64, f64) {
        let d = dim as f64;
        let m = num_outcomes as f64;
        let lower = d / (m * m);
        let upper = (d * d / (m * m)).min(d / m);
        (lower, upper)
    }

    /// Default purity for random construction: one tenth of the way into the
    /// admissible interval, where effect positivity holds for any seed matrix.
    pub fn default_purity(dim: usize, num_outcomes: usize) -> f64 {
        let (lo, hi) = Self::purity_range(dim, num_outcomes);
        lo + 0.1 * (hi - lo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "POVM dimension must be >= 2, got {}",
                self.dim
            )));
        }
        if self.num_povms < 1 || self.num_outcomes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1 sub-POVMs and M >= 2 outcomes, got N={}, M={}",
                self.num_povms, self.num_outcomes
            )));
        }
        let (lo, hi) = Self::purity_range(self.dim, self.num_outcomes);
        if !(self.purity > lo && self.purity <= hi + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "purity x={} outside admissible range ({lo}, {hi}]",
                self.purity
            )));
        }
        Ok(())
    }

    /// True when the effects span the full operator space: (M−1)·N + 1 = d².
    pub fn is_informationally_complete(&self) -> bool {
        (self.num_outcomes - 1) * self.num_povms + 1 == self.dim * self.dim
    }

    pub fn num_effects(&self) -> usize {
        self.num_povms * self.num_outcomes
    }
}

/// All informationally complete (N, M) pairs for dimension `dim`, i.e. the
/// integer solutions of (M−1)·N = d²−1 with N ≥ 1 and M ≥ 2, sorted by N.
///
/// Always contains (1, d²), (d+1, d) and (d²−1, 2); for d ≥ 3 also
/// (d−1, d+2). For d = 2 these collapse to {(1,4), (3,2)}.
pub fn enumerate_ic_families(dim: usize) -> Result<Vec<(usize, usize)>> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "need dim >= 2, got {dim}"
        )));
    }
    let target = dim * dim - 1;
    let mut out = Vec::new();
    for q in 1..=target {
        // q = M - 1 must divide d² - 1; N is the cofactor
        if target % q == 0 {
            out.push((target / q, q + 1));
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Scaling factor Γ = (xM² − d)/(M(M−1)), strictly positive on the
/// admissible purity range.
pub fn gamma(params: &NmPovmParams) -> Result<f64> {
    params.validate()?;
    let d = params.dim as f64;
    let m = params.num_outcomes as f64;
    Ok((params.purity * m * m - d) / (m * (m - 1.0)))
}

/// Eigendecomposition scaffold behind the coefficient matrix S.
///
/// `lambda` holds the nonzero eigenvalues of SᵀS (dN/M first, then Γ with
/// multiplicity N(M−1)); `eigenvectors` are the matching orthonormal columns
/// (constant column first, then per-block zero-sum Helmert columns);
/// `transform` is the d²×d² orthogonal matrix O whose first row is pinned to
/// the identity component so that each sub-POVM resolves the identity.
#[derive(Debug, Clone)]
pub struct SpectralFactors {
    pub gamma: f64,
    pub lambda: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub transform: DMatrix<f64>,
}

impl SpectralFactors {
    /// Builds the factors for informationally complete parameters. With no
    /// explicit transform, an orthogonal matrix fixing the identity component
    /// is drawn from `seed` (default 0).
    pub fn build(
        params: &NmPovmParams,
        transform: Option<DMatrix<f64>>,
        seed: Option<u64>,
    ) -> Result<Self> {
        params.validate()?;
        if !params.is_informationally_complete() {
            return Err(Error::UnsupportedPovm(format!(
                "spectral construction needs (M-1)N+1 = d^2; got N={}, M={}, d={}",
                params.num_povms, params.num_outcomes, params.dim
            )));
        }
        let d2 = params.dim * params.dim;
        let o = match transform {
            Some(o) => {
                validate_transform(&o, d2)?;
                o
            }
            None => aligned_random_orthogonal(d2, seed.unwrap_or(0)),
        };
        let g = gamma(params)?;
        let n = params.num_povms;
        let m = params.num_outcomes;
        let mut lambda = DVector::from_element(d2, g);
        lambda[0] = (params.dim * n) as f64 / m as f64;
        Ok(Self {
            gamma: g,
            lambda,
            eigenvectors: build_eigenvector_columns(n, m),
            transform: o,
        })
    }

    /// S = Oᵀ √Λ Xᵀ, the d²×(NM) coefficient matrix with effects Π = GᵀS.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        let sqrt_lambda = DMatrix::from_diagonal(&self.lambda.map(f64::sqrt));
        self.transform.transpose() * sqrt_lambda * self.eigenvectors.transpose()
    }
}

/// Constant column followed by within-block Helmert columns: an orthonormal
/// eigenbasis for the nonzero part of the SᵀS spectrum. Every column past the
/// first sums to zero within each sub-POVM block.
fn build_eigenvector_columns(n: usize, m: usize) -> DMatrix<f64> {
    let nm = n * m;
    let rank = n * (m - 1) + 1;
    let mut x = DMatrix::<f64>::zeros(nm, rank);
    let c = 1.0 / (nm as f64).sqrt();
    for i in 0..nm {
        x[(i, 0)] = c;
    }
    for alpha in 0..n {
        for k in 1..m {
            let col = 1 + alpha * (m - 1) + (k - 1);
            let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
            for j in 0..k {
                x[(alpha * m + j, col)] = norm;
            }
            x[(alpha * m + k, col)] = -(k as f64) * norm;
        }
    }
    x
}

/// Orthogonal matrix of the form diag(1, Q) with Q Haar-random: first row and
/// column are the identity-alignment vector e₁.
fn aligned_random_orthogonal(d2: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let q = random_orthogonal(d2 - 1, &mut rng);
    let mut o = DMatrix::<f64>::zeros(d2, d2);
    o[(0, 0)] = 1.0;
    for i in 0..d2 - 1 {
        for j in 0..d2 - 1 {
            o[(i + 1, j + 1)] = q[(i, j)];
        }
    }
    o
}

fn validate_transform(o: &DMatrix<f64>, d2: usize) -> Result<()> {
    if o.nrows() != d2 || o.ncols() != d2 {
        return Err(Error::ShapeMismatch(format!(
            "transform must be {d2}x{d2}, got {}x{}",
            o.nrows(),
            o.ncols()
        )));
    }
    let gram = o * o.transpose();
    let mut dev = 0.0f64;
    for i in 0..d2 {
        for j in 0..d2 {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    if dev > ORTHONORMALITY_TOL {
        return Err(Error::InvalidTransform(dev));
    }
    // identity alignment: first row of O must be e1 so that the sub-POVM sums
    // reproduce the identity in a canonical basis
    let mut align_dev = (o[(0, 0)] - 1.0).abs();
    for j in 1..d2 {
        align_dev = align_dev.max(o[(0, j)].abs());
    }
    if align_dev > ORTHONORMALITY_TOL {
        return Err(Error::InvalidParameter(format!(
            "transform breaks identity alignment (first-row deviation {align_dev:.3e})"
        )));
    }
    Ok(())
}

/// A full (N,M)-POVM: parameters, the operator basis the coefficients refer
/// to, the d²×(NM) coefficient matrix S, and the effect operators with flat
/// index i(α,a) = α·M + a (zero-based).
#[derive(Debug, Clone)]
pub struct NmPovm {
    params: NmPovmParams,
    basis: LooBasis,
    s: DMatrix<f64>,
    effects: Vec<HermitianMatrix>,
}

impl NmPovm {
    pub fn params(&self) -> &NmPovmParams {
        &self.params
    }

    pub fn basis(&self) -> &LooBasis {
        &self.basis
    }

    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn effects(&self) -> &[HermitianMatrix] {
        &self.effects
    }

    /// Effect Π_{α,a} with zero-based sub-POVM and outcome indices.
    pub fn effect(&self, alpha: usize, a: usize) -> &HermitianMatrix {
        &self.effects[alpha * self.params.num_outcomes + a]
    }

    pub fn num_effects(&self) -> usize {
        self.effects.len()
    }
}

/// Builds an (N,M)-POVM via the spectral recipe and validates every defining
/// relation before returning. Only informationally complete parameter pairs
/// are constructible. `transform` must be orthogonal with its first row
/// pinned to e₁; when omitted, one is drawn from `seed`.
///
/// Positivity of the effects is not guaranteed for every admissible purity —
/// failures surface as a construction error carrying the most negative
/// eigenvalue, and retrying with a purity closer to the lower bound (see
/// [`NmPovmParams::default_purity`]) or a different transform may succeed.
pub fn construct_povm(
    params: &NmPovmParams,
    transform: Option<DMatrix<f64>>,
    seed: Option<u64>,
) -> Result<NmPovm> {
    let factors = SpectralFactors::build(params, transform, seed)?;
    let s = factors.s_matrix();
    let basis = LooBasis::gellmann(params.dim)?;
    assemble_povm(*params, basis, s)
}

/// Rebuilds effects from basis and coefficients, then validates.
fn assemble_povm(params: NmPovmParams, basis: LooBasis, s: DMatrix<f64>) -> Result<NmPovm> {
    let d2 = params.dim * params.dim;
    let nm = params.num_effects();
    if s.nrows() != d2 || s.ncols() != nm {
        return Err(Error::ShapeMismatch(format!(
            "coefficient matrix must be {d2}x{nm}, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let mut effects = Vec::with_capacity(nm);
    for i in 0..nm {
        let coeffs = DVector::from_iterator(d2, s.column(i).iter().copied());
        effects.push(basis.combine(&coeffs)?);
    }
    let povm = NmPovm {
        params,
        basis,
        s,
        effects,
    };
    let report = validate_povm(&povm);
    if report.pass {
        return Ok(povm);
    }
    if report.min_eigenvalue < -PSD_TOL {
        return Err(Error::ConstructionFailed {
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    Err(Error::InvalidParameter(format!(
        "constructed effects violate POVM relations: {}",
        report.failed_relations().join(", ")
    )))
}

/// One defining relation with its largest observed deviation.
#[derive(Debug, Clone, Serialize)]
pub struct RelationCheck {
    pub relation: &'static str,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Validation report over all defining (N,M)-POVM relations.
#[derive(Debug, Clone, Serialize)]
pub struct PovmValidation {
    pub checks: Vec<RelationCheck>,
    /// Most negative eigenvalue over all effects.
    pub min_eigenvalue: f64,
    pub pass: bool,
}

impl PovmValidation {
    pub fn failed_relations(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.relation)
            .collect()
    }
}

/// Checks positivity, per-sub-POVM completeness, effect traces and the
/// intra-/inter-POVM overlap relations against the parameters.
pub fn validate_povm(povm: &NmPovm) -> PovmValidation {
    let p = &povm.params;
    let d = p.dim as f64;
    let m = p.num_outcomes as f64;

    let mut min_eig = f64::INFINITY;
    for eff in &povm.effects {
        min_eig = min_eig.min(eff.min_eigenvalue());
    }

    let mut completeness_dev = 0.0f64;
    for alpha in 0..p.num_povms {
        let mut sum = HermitianMatrix::zeros(p.dim);
        for a in 0..p.num_outcomes {
            sum.add_scaled(1.0, povm.effect(alpha, a));
        }
        let dev = (sum.matrix() - DMatrix::identity(p.dim, p.dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        completeness_dev = completeness_dev.max(dev);
    }

    let trace_dev = povm
        .effects
        .iter()
        .map(|eff| (eff.trace() - d / m).abs())
        .fold(0.0f64, f64::max);

    let nm = povm.num_effects();
    let mut overlaps = DMatrix::<f64>::zeros(nm, nm);
    for i in 0..nm {
        for j in i..nm {
            let v = crate::hermitian::hs_inner(&povm.effects[i], &povm.effects[j])
                .expect("effects share a dimension");
            overlaps[(i, j)] = v;
            overlaps[(j, i)] = v;
        }
    }
    let intra_offdiag = (d - m * p.purity) / (m * (m - 1.0));
    let mut intra_dev = 0.0f64;
    let mut inter_dev = 0.0f64;
    for i in 0..nm {
        for j in 0..nm {
            let same_block = i / p.num_outcomes == j / p.num_outcomes;
            let target = if i == j {
                p.purity
            } else if same_block {
                intra_offdiag
            } else {
                d / (m * m)
            };
            let dev = (overlaps[(i, j)] - target).abs();
            if same_block {
                intra_dev = intra_dev.max(dev);
            } else {
                inter_dev = inter_dev.max(dev);
            }
        }
    }

    let checks = vec![
        RelationCheck {
            relation: "positivity",
            deviation: (-min_eig).max(0.0),
            tolerance: PSD_TOL,
            pass: min_eig >= -PSD_TOL,
        },
        RelationCheck {
            relation: "completeness",
            deviation: completeness_dev,
            tolerance: SUM_TOL,
            pass: completeness_dev <= SUM_TOL,
        },
        RelationCheck {
            relation: "effect-trace",
            deviation: trace_dev,
            tolerance: SUM_TOL,
            pass: trace_dev <= SUM_TOL,
        },
        RelationCheck {
            relation: "intra-overlap",
            deviation: intra_dev,
            tolerance: OVERLAP_TOL,
            pass: intra_dev <= OVERLAP_TOL,
        },
        RelationCheck {
            relation: "inter-overlap",
            deviation: inter_dev,
            tolerance: OVERLAP_TOL,
            pass: inter_dev <= OVERLAP_TOL,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    PovmValidation {
        checks,
        min_eigenvalue: min_eig,
        pass,
    }
}

/// Ascending eigenvalues of SᵀS. For informationally complete POVMs this is
/// {Γ with multiplicity N(M−1), dN/M once, 0 with multiplicity N−1}.
pub fn sts_spectrum(povm: &NmPovm) -> Vec<f64> {
    sts_spectrum_of(povm.s_matrix())
}

pub fn sts_spectrum_of(s: &DMatrix<f64>) -> Vec<f64> {
    let sts = s.transpose() * s;
    let mut ev: Vec<f64> = sts.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl NmPovm {
    /// JSON document with the parameters, a basis identifier (or the explicit
    /// basis matrices when non-canonical) and S in row-major order. Floats
    /// carry 17 significant digits so effects round-trip bit-faithfully.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n  \"params\": {");
        out.push_str(&format!(
            "\"dim\": {}, \"num_povms\": {}, \"num_outcomes\": {}, \"purity\": {}",
            self.params.dim,
            self.params.num_povms,
            self.params.num_outcomes,
            fmt_float(self.params.purity)
        ));
        out.push_str("},\n  \"basis\": ");
        if self.basis.is_canonical() {
            out.push_str("\"canonical-gellmann\"");
        } else {
            out.push_str("[\n");
            for (k, el) in self.basis.elements().iter().enumerate() {
                out.push_str("    [");
                let d = el.dim();
                for r in 0..d {
                    out.push('[');
                    for c in 0..d {
                        let z = el.matrix()[(r, c)];
                        out.push_str(&format!("[{}, {}]", fmt_float(z.re), fmt_float(z.im)));
                        if c + 1 < d {
                            out.push_str(", ");
                        }
                    }
                    out.push(']');
                    if r + 1 < d {
                        out.push_str(", ");
                    }
                }
                out.push(']');
                if k + 1 < self.basis.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str("  ]");
        }
        out.push_str(",\n  \"s_matrix\": {");
        out.push_str(&format!(
            "\"rows\": {}, \"cols\": {}, \"data\": [",
            self.s.nrows(),
            self.s.ncols()
        ));
        let mut first = true;
        for r in 0..self.s.nrows() {
            for c in 0..self.s.ncols() {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(&fmt_float(self.s[(r, c)]));
            }
        }
        out.push_str("]}\n}\n");
        out
    }

    /// Parses the document written by [`NmPovm::to_json_string`], rederives
    /// the effects from the basis and S, and revalidates every relation.
    pub fn from_json_str(doc: &str) -> Result<NmPovm> {
        let v: serde_json::Value = serde_json::from_str(doc)?;
        let params: NmPovmParams = serde_json::from_value(
            v.get("params")
                .ok_or_else(|| Error::Config("POVM document missing \"params\"".into()))?
                .clone(),
        )?;
        params.validate()?;

        let basis_v = v
            .get("basis")
            .ok_or_else(|| Error::Config("POVM document missing \"basis\"".into()))?;
        let basis = match basis_v {
            serde_json::Value::String(s) if s == "canonical-gellmann" => {
                LooBasis::gellmann(params.dim)?
            }
            serde_json::Value::String(s) => {
                return Err(Error::Config(format!("unknown basis identifier {s:?}")))
            }
            serde_json::Value::Array(mats) => parse_explicit_basis(params.dim, mats)?,
            _ => return Err(Error::Config("\"basis\" must be a string or array".into())),
        };

        let sm = v
            .get("s_matrix")
            .ok_or_else(|| Error::Config("POVM document missing \"s_matrix\"".into()))?;
        let rows = sm.get("rows").and_then(|x| x.as_u64()).ok_or_else(|| {
            Error::Config("\"s_matrix.rows\" must be a nonnegative integer".into())
        })? as usize;
        let cols = sm.get("cols").and_then(|x| x.as_u64()).ok_or_else(|| {
            Error::Config("\"s_matrix.cols\" must be a nonnegative integer".into())
        })? as usize;
        let data = sm
            .get("data")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Config("\"s_matrix.data\" must be an array".into()))?;
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "s_matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        let mut s = DMatrix::<f64>::zeros(rows, cols);
        for (k, x) in data.iter().enumerate() {
            let val = x
                .as_f64()
                .ok_or_else(|| Error::Config("s_matrix entries must be numbers".into()))?;
            s[(k / cols, k % cols)] = val;
        }
        assemble_povm(params, basis, s)
    }
}

fn parse_explicit_basis(dim: usize, mats: &[serde_json::Value]) -> Result<LooBasis> {
    use num_complex::Complex64;
    let mut elements = Vec::with_capacity(mats.len());
    for mat in mats {
        let rows = mat
            .as_array()
            .ok_or_else(|| Error::Config("basis element must be an array of rows".into()))?;
        if rows.len() != dim {
            return Err(Error::Config(format!(
                "basis element has {} rows, expected {dim}",
                rows.len()
            )));
        }
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for (r, row) in rows.iter().enumerate() {
            let cells = row
                .as_array()
                .filter(|c| c.len() == dim)
                .ok_or_else(|| Error::Config("basis row must hold dim [re, im] pairs".into()))?;
            for (c, cell) in cells.iter().enumerate() {
                let pair = cell
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| Error::Config("basis entry must be a [re, im] pair".into()))?;
                let re = pair[0].as_f64().ok_or_else(|| {
                    Error::Config("basis entry components must be numbers".into())
                })?;
                let im = pair[1].as_f64().ok_or_else(|| {
                    Error::Config("basis entry components must be numbers".into())
                })?;
                m[(r, c)] = Complex64::new(re, im);
            }
        }
        elements.push(HermitianMatrix::new(m)?);
    }
    LooBasis::new(dim, elements)
}

/// Coefficient columns of a constructed POVM round-trip through a Bloch
/// expansion of its effects; exposed for integrity checks.
pub fn max_coefficient_roundtrip_dev(povm: &NmPovm) -> f64 {
    let mut dev = 0.0f64;
    for (i, eff) in povm.effects().iter().enumerate() {
        let r = bloch_expand(eff, povm.basis()).expect("dimensions match by construction");
        for (mu, coeff) in r.coeffs().iter().enumerate() {
            dev = dev.max((coeff - povm.s_matrix()[(mu, i)]).abs());
        }
    }
    dev
}
