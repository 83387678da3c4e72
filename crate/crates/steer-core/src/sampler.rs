//! Hit-and-run random walk over the convex body of density matrices,
//! asymptotically uniform with respect to the Hilbert–Schmidt (Euclidean)
//! volume. States are parameterized by their traceless Bloch coefficients
//! c, with ρ(c) = I/D + Σ c_i G_{i+1} over the canonical basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, LooBasis};

/// Below this minimum eigenvalue the whitening transform is considered
/// numerically singular and the chain is repaired.
const SINGULAR_TOL: f64 = 1e-13;
/// Absolute shrink applied to both chord ends to keep the chain strictly
/// interior despite eigensolver noise at the boundary.
const CHORD_MARGIN: f64 = 1e-9;
/// Bound on consecutive repair attempts within one step.
const MAX_REPAIRS_PER_STEP: u32 = 64;

/// Configuration of one hit-and-run chain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SamplerConfig {
    /// Total Hilbert-space dimension (d_A·d_B for bipartite use).
    pub dim: usize,
    pub seed: u64,
    /// Steps discarded before the first emitted sample.
    pub burn_in: usize,
    /// Steps between emitted samples.
    pub thinning: usize,
}

impl SamplerConfig {
    /// Defaults scale with the parameter dimension D²−1: burn-in 50·(D²−1),
    /// thinning D²−1.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "sampler dimension must be at least 2, got {dim}"
            )));
        }
        let dof = dim * dim - 1;
        Ok(Self {
            dim,
            seed,
            burn_in: 50 * dof,
            thinning: dof,
        })
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_thinning(mut self, thinning: usize) -> Result<Self> {
        if thinning == 0 {
            return Err(Error::InvalidParameter(
                "thinning must be at least 1".into(),
            ));
        }
        self.thinning = thinning;
        Ok(self)
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.dim * self.dim - 1
    }
}

/// Step and repair counters of a chain.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ChainStats {
    pub steps: u64,
    pub repairs: u64,
}

/// Hashes a chain index into a seed offset (splitmix64 finalizer), so that
/// chains of one ensemble are decorrelated: seed = base ^ splitmix64(index).
pub fn chain_seed(base: u64, index: u64) -> u64 {
    base ^ splitmix64(index)
}

fn splitmix64(index: u64) -> u64 {
    let mut z = index.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Isotropic unit vector: normalized standard-Gaussian components.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Maximal interval (t_min, t_max) with ρ + t·U ⪰ 0 for an interior ρ and a
/// traceless direction operator U ≠ 0, via the whitened pencil
/// W = ρ^{−1/2}·U·ρ^{−1/2}: t_max = −1/λ_min(W), t_min = −1/λ_max(W).
/// U traceless forces eigenvalues of both signs, so both ends are finite and
/// bracket zero.
pub fn chord_endpoints(rho: &HermitianMatrix, u_op: &HermitianMatrix) -> Result<(f64, f64)> {
    if rho.dim() != u_op.dim() {
        return Err(Error::ShapeMismatch(format!(
            "state dim {} vs direction dim {}",
            rho.dim(),
            u_op.dim()
        )));
    }
    let eig = rho.matrix().clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < SINGULAR_TOL {
        return Err(Error::ChainRepair(min_eig));
    }
    // ρ^{-1/2} from the spectral decomposition
    let d = rho.dim();
    let mut inv_sqrt = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        let s = Complex64::new(1.0 / eig.eigenvalues[k].sqrt(), 0.0);
        let col = eig.eigenvectors.column(k);
        for i in 0..d {
            for j in 0..d {
                inv_sqrt[(i, j)] += s * col[i] * col[j].conj();
            }
        }
    }
    let w = &inv_sqrt * u_op.matrix() * &inv_sqrt;
    let evals = w.symmetric_eigenvalues();
    let w_min = evals.iter().copied().fold(f64::INFINITY, f64::min);
    let w_max = evals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if w_min >= 0.0 || w_max <= 0.0 {
        return Err(Error::InvalidParameter(
            "chord direction must be traceless and nonzero".into(),
        ));
    }
    Ok((-1.0 / w_max, -1.0 / w_min))
}

/// One hit-and-run chain. Starts at the maximally mixed state (the analytic
/// center); every accepted step stays strictly interior.
pub struct HitAndRunChain {
    config: SamplerConfig,
    basis: LooBasis,
    c: DVector<f64>,
    rng: ChaCha12Rng,
    stats: ChainStats,
    burned_in: bool,
}

impl HitAndRunChain {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        let basis = LooBasis::gellmann(config.dim)?;
        Ok(Self {
            c: DVector::zeros(config.degrees_of_freedom()),
            rng: ChaCha12Rng::seed_from_u64(config.seed),
            basis,
            config,
            stats: ChainStats::default(),
            burned_in: false,
        })
    }

    /// Chain `index` of an ensemble sharing `config.seed` as base seed.
    pub fn for_ensemble_member(config: SamplerConfig, index: u64) -> Result<Self> {
        let mut cfg = config;
        cfg.seed = chain_seed(config.seed, index);
        Self::new(cfg)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn stats(&self) -> ChainStats {
        self.stats
    }

    /// Current Bloch coefficients (traceless part).
    pub fn bloch(&self) -> &DVector<f64> {
        &self.c
    }

    /// ρ(c) = I/D + Σ c_i G_{i+1}.
    pub fn current_density(&self) -> HermitianMatrix {
        density_from_bloch(&self.basis, &self.c)
    }

    fn direction_operator(&self, u: &DVector<f64>) -> HermitianMatrix {
        let dim = self.config.dim;
        let mut op = HermitianMatrix::zeros(dim);
        for i in 0..u.len() {
            op.add_scaled(u[i], self.basis.element(i + 1));
        }
        op
    }

    /// One hit-and-run move: isotropic direction, uniform draw on the
    /// (shrunk) feasible chord. A numerically singular state triggers the
    /// repair policy: contract c toward the center by half and retry.
    pub fn step(&mut self) -> Result<()> {
        for _ in 0..MAX_REPAIRS_PER_STEP {
            let u = random_direction(&mut self.rng, self.config.degrees_of_freedom());
            let u_op = self.direction_operator(&u);
            let rho = self.current_density();
            let repair = match chord_endpoints(&rho, &u_op) {
                Ok((t_min, t_max)) => {
                    let lo = t_min + CHORD_MARGIN;
                    let hi = t_max - CHORD_MARGIN;
                    if lo < hi {
                        let t = self.rng.random_range(lo..hi);
                        self.c += u * t;
                        self.stats.steps += 1;
                        return Ok(());
                    }
                    // chord thinner than twice the margin: the state sits in
                    // a near-degenerate corner; treat like a singular state
                    rho.min_eigenvalue()
                }
                Err(Error::ChainRepair(min_eig)) => min_eig,
                Err(e) => return Err(e),
            };
            let _ = repair;
            self.c *= 0.5;
            self.stats.repairs += 1;
        }
        Err(Error::ChainRepair(self.current_density().min_eigenvalue()))
    }

    /// Next thinned sample; runs the burn-in before the first one.
    pub fn next_sample(&mut self) -> Result<HermitianMatrix> {
        if !self.burned_in {
            for _ in 0..self.config.burn_in {
                self.step()?;
            }
            self.burned_in = true;
        }
        for _ in 0..self.config.thinning {
            self.step()?;
        }
        Ok(self.current_density())
    }
}

/// ρ(c) for an arbitrary coefficient vector over the traceless part of the
/// canonical basis.
pub fn density_from_bloch(basis: &LooBasis, c: &DVector<f64>) -> HermitianMatrix {
    let dim = basis.dim();
    let mut rho = HermitianMatrix::identity(dim).scale(1.0 / dim as f64);
    for i in 0..c.len() {
        rho.add_scaled(c[i], basis.element(i + 1));
    }
    rho
}

/// Iterator over thinned samples of a single chain.
pub struct SampleStream {
    chain: HitAndRunChain,
    remaining: usize,
}

impl Iterator for SampleStream {
    type Item = Result<HermitianMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.chain.next_sample())
    }
}

/// `n` asymptotically uniform density matrices of dimension `config.dim`.
pub fn sample_states(config: SamplerConfig, n: usize) -> Result<SampleStream> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    Ok(SampleStream {
        chain: HitAndRunChain::new(config)?,
        remaining: n,
    })
}
