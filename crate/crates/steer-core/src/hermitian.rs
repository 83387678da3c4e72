//! Hermitian operator algebra: canonical orthonormal operator bases,
//! Hilbert-Schmidt inner products, Bloch expansions and the trace norm.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Entrywise tolerance for hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance for orthonormality (Gram matrix) checks.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Singular values below this fraction of the largest one are treated as zero.
pub const TRACE_NORM_CUTOFF: f64 = 1e-12;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: DMatrix<Complex64>,
}

impl HermitianMatrix {
    /// Validates hermiticity entrywise within [`HERMITICITY_TOL`].
    pub fn new(data: DMatrix<Complex64>) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "expected nonempty square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let mut max_dev = 0.0f64;
        for i in 0..data.nrows() {
            for j in i..data.ncols() {
                let dev = (data[(i, j)] - data[(j, i)].conj()).norm();
                if dev > max_dev {
                    max_dev = dev;
                }
            }
        }
        if max_dev > HERMITICITY_TOL {
            return Err(Error::NotHermitian(max_dev));
        }
        Ok(Self {
            dim: data.nrows(),
            data,
        })
    }

    /// Caller guarantees hermiticity (e.g. real combinations of hermitian matrices).
    pub(crate) fn new_unchecked(data: DMatrix<Complex64>) -> Self {
        debug_assert!(data.is_square());
        Self {
            dim: data.nrows(),
            data,
        }
    }

    /// Symmetrizes `(M + M†)/2` first; for matrices hermitian up to rounding noise.
    pub fn symmetrized(data: DMatrix<Complex64>) -> Self {
        let herm = (&data + data.adjoint()) * Complex64::new(0.5, 0.0);
        Self::new_unchecked(herm)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new_unchecked(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    /// Real part of the trace (the imaginary part vanishes for hermitian matrices).
    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .data
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.data
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// In-place `self += coeff * other` with a real coefficient.
    pub fn add_scaled(&mut self, coeff: f64, other: &HermitianMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self
            .data
            .as_mut_slice()
            .iter_mut()
            .zip(other.data.as_slice())
        {
            *a += b * coeff;
        }
    }

    pub fn scale(&self, coeff: f64) -> HermitianMatrix {
        Self::new_unchecked(self.data.map(|z| z * coeff))
    }

    /// Kronecker product `self ⊗ other` (row index is `a*d_other + b`).
    pub fn kron(&self, other: &HermitianMatrix) -> HermitianMatrix {
        Self::new_unchecked(self.data.kronecker(&other.data))
    }
}

/// Hilbert-Schmidt inner product `Tr{A B}` of two hermitian matrices.
///
/// The result is real for hermitian inputs; the imaginary residue is checked
/// in debug builds and discarded.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "hs_inner: dimensions {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(hs_inner_raw(a.matrix(), b.matrix()))
}

/// `Tr{A B}` for hermitian `A`, `B` without the shape check.
pub(crate) fn hs_inner_raw(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    // Tr{A B} = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij) for hermitian B.
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        acc += x * y.conj();
    }
    debug_assert!(acc.im.abs() < HERMITICITY_TOL * (1.0 + acc.re.abs()));
    acc.re
}

/// Ordered basis of `d²` hermitian matrices orthonormal under the HS product.
#[derive(Debug, Clone)]
pub struct LooBasis {
    dim: usize,
    elements: Vec<HermitianMatrix>,
    canonical: bool,
}

impl LooBasis {
    /// Validates element count, dimensions and HS-orthonormality within
    /// [`ORTHONORMALITY_TOL`].
    pub fn new(dim: usize, elements: Vec<HermitianMatrix>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "operator basis needs dim >= 2, got {dim}"
            )));
        }
        if elements.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "operator basis for dim {dim} needs {} elements, got {}",
                dim * dim,
                elements.len()
            )));
        }
        if let Some(el) = elements.iter().find(|el| el.dim() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "basis element has dim {}, expected {dim}",
                el.dim()
            )));
        }
        let max_dev = gram_deviation(&elements);
        if max_dev > ORTHONORMALITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "basis is not HS-orthonormal (max Gram deviation {max_dev:.3e})"
            )));
        }
        let canonical = detect_canonical(dim, &elements);
        Ok(Self {
            dim,
            elements,
            canonical,
        })
    }

    /// The canonical orthonormal hermitian basis (generalized Gell-Mann
    /// matrices plus the normalized identity).
    ///
    /// Index layout, 1-based as in the defining formulas and stable across
    /// versions: element 1 is `I/√d`; elements `i = 2..d` are the diagonal
    /// combinations `(Σ_{k<i} |k⟩⟨k| − (i−1)|i⟩⟨i|)/√(i(i−1))`; the symmetric
    /// pair matrix `(|m⟩⟨n|+|n⟩⟨m|)/√2` for `m < n` sits at index `m·d + n`;
    /// the antisymmetric pair matrix `i(|m⟩⟨n|−|n⟩⟨m|)/√2` for `n < m` sits at
    /// index `(m−1)·d + n`.
    pub fn gellmann(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "canonical basis needs dim >= 2, got {dim}"
            )));
        }
        let d = dim;
        let mut elements = vec![HermitianMatrix::zeros(d); d * d];

        let mut ident = DMatrix::<Complex64>::zeros(d, d);
        for k in 0..d {
            ident[(k, k)] = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        elements[0] = HermitianMatrix::new_unchecked(ident);

        for i in 2..=d {
            let norm = 1.0 / ((i * (i - 1)) as f64).sqrt();
            let mut m = DMatrix::<Complex64>::zeros(d, d);
            for k in 1..i {
                m[(k - 1, k - 1)] = Complex64::new(norm, 0.0);
            }
            m[(i - 1, i - 1)] = Complex64::new(-norm * (i as f64 - 1.0), 0.0);
            elements[i - 1] = HermitianMatrix::new_unchecked(m);
        }

        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        for m in 1..=d {
            for n in (m + 1)..=d {
                let mut sym = DMatrix::<Complex64>::zeros(d, d);
                sym[(m - 1, n - 1)] = Complex64::new(inv_sqrt2, 0.0);
                sym[(n - 1, m - 1)] = Complex64::new(inv_sqrt2, 0.0);
                elements[m * d + n - 1] = HermitianMatrix::new_unchecked(sym);

                // antisymmetric partner indexed with the roles swapped (m' = n > n' = m)
                let mut asym = DMatrix::<Complex64>::zeros(d, d);
                asym[(n - 1, m - 1)] = Complex64::new(0.0, inv_sqrt2);
                asym[(m - 1, n - 1)] = Complex64::new(0.0, -inv_sqrt2);
                elements[(n - 1) * d + m - 1] = HermitianMatrix::new_unchecked(asym);
            }
        }

        Ok(Self {
            dim: d,
            elements,
            canonical: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// True when element 1 is `I/√d` and all other elements are traceless.
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn element(&self, idx: usize) -> &HermitianMatrix {
        &self.elements[idx]
    }

    /// Applies a real orthogonal mixing: `G'_μ = Σ_ν O_{μν} G_ν`.
    pub fn rotate(&self, transform: &DMatrix<f64>) -> Result<LooBasis> {
        let n = self.elements.len();
        if transform.nrows() != n || transform.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "rotation must be {n}x{n}, got {}x{}",
                transform.nrows(),
                transform.ncols()
            )));
        }
        let dev = orthogonality_deviation(transform);
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::InvalidTransform(dev));
        }
        let mut elements = Vec::with_capacity(n);
        for mu in 0..n {
            let mut acc = HermitianMatrix::zeros(self.dim);
            for nu in 0..n {
                let c = transform[(mu, nu)];
                if c != 0.0 {
                    acc.add_scaled(c, &self.elements[nu]);
                }
            }
            elements.push(acc);
        }
        let canonical = detect_canonical(self.dim, &elements);
        Ok(LooBasis {
            dim: self.dim,
            elements,
            canonical,
        })
    }

    /// Linear combination `Σ_i coeffs_i G_i`.
    pub fn combine(&self, coeffs: &DVector<f64>) -> Result<HermitianMatrix> {
        if coeffs.len() != self.elements.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients, got {}",
                self.elements.len(),
                coeffs.len()
            )));
        }
        let mut acc = HermitianMatrix::zeros(self.dim);
        for (c, el) in coeffs.iter().zip(&self.elements) {
            if *c != 0.0 {
                acc.add_scaled(*c, el);
            }
        }
        Ok(acc)
    }

    /// Max Gram-matrix deviation from the identity.
    pub fn gram_deviation(&self) -> f64 {
        gram_deviation(&self.elements)
    }
}

fn gram_deviation(elements: &[HermitianMatrix]) -> f64 {
    let mut max_dev = 0.0f64;
    for (i, a) in elements.iter().enumerate() {
        for (j, b) in elements.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (hs_inner_raw(a.matrix(), b.matrix()) - target).abs();
            if dev > max_dev {
                max_dev = dev;
            }
        }
    }
    max_dev
}

fn detect_canonical(dim: usize, elements: &[HermitianMatrix]) -> bool {
    let scale = 1.0 / (dim as f64).sqrt();
    let first_ok = elements[0]
        .matrix()
        .iter()
        .enumerate()
        .all(|(k, z)| {
            let target = if k % (dim + 1) == 0 { scale } else { 0.0 };
            (z - Complex64::new(target, 0.0)).norm() <= HERMITICITY_TOL
        });
    first_ok
        && elements[1..]
            .iter()
            .all(|el| el.trace().abs() <= HERMITICITY_TOL)
}

fn orthogonality_deviation(o: &DMatrix<f64>) -> f64 {
    let gram = o * o.transpose();
    let mut max_dev = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            max_dev = max_dev.max((gram[(i, j)] - target).abs());
        }
    }
    max_dev
}

/// Bloch-style coefficient vector of a hermitian matrix in a given basis.
#[derive(Debug, Clone)]
pub struct BlochVector {
    dim: usize,
    coeffs: DVector<f64>,
}

impl BlochVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// `Σ_i r_i G_i`.
    pub fn reconstruct(&self, basis: &LooBasis) -> Result<HermitianMatrix> {
        if basis.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "bloch vector dim {} vs basis dim {}",
                self.dim,
                basis.dim()
            )));
        }
        basis.combine(&self.coeffs)
    }
}

/// Coefficients `r_i = Tr{G_i ρ}` of `rho` in `basis`.
pub fn bloch_expand(rho: &HermitianMatrix, basis: &LooBasis) -> Result<BlochVector> {
    if rho.dim() != basis.dim() {
        return Err(Error::ShapeMismatch(format!(
            "matrix dim {} vs basis dim {}",
            rho.dim(),
            basis.dim()
        )));
    }
    let coeffs = DVector::from_iterator(
        basis.len(),
        basis
            .elements()
            .iter()
            .map(|g| hs_inner_raw(g.matrix(), rho.matrix())),
    );
    Ok(BlochVector {
        dim: rho.dim(),
        coeffs,
    })
}

/// Trace norm (sum of singular values) of a real rectangular matrix.
///
/// Singular values below `1e-12` times the largest are treated as zero.
pub fn trace_norm(m: &DMatrix<f64>) -> f64 {
    sum_significant(m.clone().singular_values().as_slice())
}

/// Trace norm of a complex rectangular matrix.
pub fn trace_norm_complex(m: &DMatrix<Complex64>) -> f64 {
    sum_significant(m.clone().singular_values().as_slice())
}

fn sum_significant(sv: &[f64]) -> f64 {
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let cutoff = TRACE_NORM_CUTOFF * max;
    sv.iter().filter(|&&s| s > cutoff).sum()
}

/// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
/// matrix with the diagonal of R sign-fixed.
pub fn random_orthogonal<R: rand::Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}
