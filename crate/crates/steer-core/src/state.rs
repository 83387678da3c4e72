//! Bipartite density matrices with the Alice-major tensor convention, their
//! partial traces, and named reference states (singlet, Werner, Bell-diagonal,
//! isotropic).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::{hs_inner_raw, HermitianMatrix};

/// States with a partial-transpose or ordinary eigenvalue below this are
/// rejected as not positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance on unit trace.
pub const TRACE_TOL: f64 = 1e-10;

/// A bipartite density matrix. Row/column indices are Alice-major: the joint
/// index of |a⟩⊗|b⟩ is a·d_B + b, matching the Kronecker-product convention
/// used everywhere in this crate.
#[derive(Debug, Clone)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    rho: HermitianMatrix,
}

impl BipartiteState {
    /// Validates hermiticity (via the matrix type), positivity within
    /// [`PSD_TOL`] and unit trace within [`TRACE_TOL`].
    pub fn new(dim_a: usize, dim_b: usize, rho: HermitianMatrix) -> Result<Self> {
        if dim_a < 2 || dim_b < 2 {
            return Err(Error::InvalidDimension(format!(
                "both factors need dimension >= 2, got {dim_a}x{dim_b}"
            )));
        }
        if rho.dim() != dim_a * dim_b {
            return Err(Error::ShapeMismatch(format!(
                "state matrix is {}x{}, expected {}",
                rho.dim(),
                rho.dim(),
                dim_a * dim_b
            )));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { dim_a, dim_b, rho })
    }

    /// Caller guarantees validity (used by samplers emitting interior states).
    pub(crate) fn new_unchecked(dim_a: usize, dim_b: usize, rho: HermitianMatrix) -> Self {
        Self { dim_a, dim_b, rho }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        self.rho.matrix()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.rho
    }

    /// ρ_A = Tr_B{ρ}.
    pub fn reduced_a(&self) -> HermitianMatrix {
        let m = self.matrix();
        let (da, db) = (self.dim_a, self.dim_b);
        let mut out = DMatrix::<Complex64>::zeros(da, da);
        for a in 0..da {
            for a2 in 0..da {
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..db {
                    acc += m[(a * db + b, a2 * db + b)];
                }
                out[(a, a2)] = acc;
            }
        }
        HermitianMatrix::new_unchecked(out)
    }

    /// ρ_B = Tr_A{ρ}.
    pub fn reduced_b(&self) -> HermitianMatrix {
        let m = self.matrix();
        let (da, db) = (self.dim_a, self.dim_b);
        let mut out = DMatrix::<Complex64>::zeros(db, db);
        for b in 0..db {
            for b2 in 0..db {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..da {
                    acc += m[(a * db + b, a * db + b2)];
                }
                out[(b, b2)] = acc;
            }
        }
        HermitianMatrix::new_unchecked(out)
    }

    /// Local purities (Tr{ρ_A²}, Tr{ρ_B²}).
    pub fn reduced_purities(&self) -> (f64, f64) {
        let ra = self.reduced_a();
        let rb = self.reduced_b();
        (
            hs_inner_raw(ra.matrix(), ra.matrix()),
            hs_inner_raw(rb.matrix(), rb.matrix()),
        )
    }

    /// ρ_A ⊗ ρ_B of the given factors.
    pub fn product(rho_a: &HermitianMatrix, rho_b: &HermitianMatrix) -> Result<Self> {
        Self::new(rho_a.dim(), rho_b.dim(), rho_a.kron(rho_b))
    }

    pub fn maximally_mixed(dim_a: usize, dim_b: usize) -> Result<Self> {
        let d = dim_a * dim_b;
        let rho = HermitianMatrix::identity(d).scale(1.0 / d as f64);
        Self::new(dim_a, dim_b, rho)
    }

    /// The two-qubit singlet (|01⟩ − |10⟩)/√2 as a projector.
    pub fn singlet() -> Self {
        let s = 1.0 / 2.0f64.sqrt();
        let psi = [0.0, s, -s, 0.0];
        let mut m = DMatrix::<Complex64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = Complex64::new(psi[i] * psi[j], 0.0);
            }
        }
        Self::new(2, 2, HermitianMatrix::new_unchecked(m)).expect("singlet is a valid state")
    }

    /// Werner state w·|Ψ⁻⟩⟨Ψ⁻| + (1−w)·I/4, valid for w ∈ [−1/3, 1].
    pub fn werner(w: f64) -> Result<Self> {
        bell_diagonal_state(&BellDiagonalParams::new(-w / 2.0, -w / 2.0, -w / 2.0)?)
    }

    /// Isotropic state v·|Φ⁺⟩⟨Φ⁺| + (1−v)·I/d², valid for
    /// v ∈ [−1/(d²−1), 1], where |Φ⁺⟩ = Σ|kk⟩/√d.
    pub fn isotropic(dim: usize, v: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "isotropic state needs dim >= 2, got {dim}"
            )));
        }
        let d = dim as f64;
        let lo = -1.0 / (d * d - 1.0);
        if !(lo - 1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "isotropic visibility {v} outside [{lo}, 1]"
            )));
        }
        let d2 = dim * dim;
        let mut m = DMatrix::<Complex64>::from_diagonal_element(
            d2,
            d2,
            Complex64::new((1.0 - v) / d2 as f64, 0.0),
        );
        for k in 0..dim {
            for l in 0..dim {
                m[(k * dim + k, l * dim + l)] += Complex64::new(v / d, 0.0);
            }
        }
        Self::new(dim, dim, HermitianMatrix::new_unchecked(m))
    }

    /// Random state under the Hilbert–Schmidt measure: ρ = GG†/Tr{GG†} with a
    /// square complex Gaussian G.
    pub fn random<R: rand::Rng>(dim_a: usize, dim_b: usize, rng: &mut R) -> Self {
        let rho = random_density(dim_a * dim_b, rng);
        Self::new_unchecked(dim_a, dim_b, rho)
    }
}

/// Ginibre-induced random density matrix (Hilbert–Schmidt measure).
pub fn random_density<R: rand::Rng>(dim: usize, rng: &mut R) -> HermitianMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    HermitianMatrix::new_unchecked(w.map(|z| z / tr))
}

/// Correlation coefficients (t₁, t₂, t₃) of a Bell-diagonal two-qubit state
/// ρ = I⊗I/4 + Σᵢ (tᵢ/2)·σᵢ⊗σᵢ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BellDiagonalParams {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl BellDiagonalParams {
    /// Validates state positivity: the four eigenvalues
    /// (1 + 2(s₁t₁ + s₂t₂ + s₃t₃))/4 over all sign patterns with
    /// s₁s₂s₃ = −1 must each be ≥ −1e-12.
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        let p = Self { t1, t2, t3 };
        if p.min_eigenvalue() < -1e-12 {
            return Err(Error::InvalidParameter(format!(
                "Bell-diagonal coefficients ({t1}, {t2}, {t3}) violate positivity \
                 (min eigenvalue {:.3e})",
                p.min_eigenvalue()
            )));
        }
        Ok(p)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        // the four sign patterns with product -1 (one per Bell state)
        let signs = [
            [1.0, -1.0, 1.0],
            [-1.0, 1.0, 1.0],
            [1.0, 1.0, -1.0],
            [-1.0, -1.0, -1.0],
        ];
        signs.map(|s| 0.25 * (1.0 + 2.0 * (s[0] * self.t1 + s[1] * self.t2 + s[2] * self.t3)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// True when (t₁,t₂,t₃) is inside the positivity tetrahedron; used by the
    /// scan grid where invalid points are classified rather than rejected.
    pub fn is_valid(t1: f64, t2: f64, t3: f64) -> bool {
        Self { t1, t2, t3 }.min_eigenvalue() >= -1e-12
    }
}

/// ρ = I⊗I/4 + Σᵢ (tᵢ/2)·σᵢ⊗σᵢ; both reduced states are I/2.
pub fn bell_diagonal_state(p: &BellDiagonalParams) -> Result<BipartiteState> {
    let c = Complex64::new;
    let t = [p.t1, p.t2, p.t3];
    // sigma_x, sigma_y, sigma_z
    let paulis = [
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
    ];
    let mut m = DMatrix::<Complex64>::identity(4, 4) * c(0.25, 0.0);
    for (ti, sigma) in t.iter().zip(&paulis) {
        m += sigma.kronecker(sigma) * c(ti / 2.0, 0.0);
    }
    BipartiteState::new(2, 2, HermitianMatrix::new_unchecked(m))
}
