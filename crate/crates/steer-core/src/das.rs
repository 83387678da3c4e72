//! Steering detection through entanglement of an auxiliary state: the τ-state
//! reduction for qubit Alice, the partial-transpose (NPT) test, and the
//! correlation-matrix entanglement criterion.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{trace_norm, HermitianMatrix, LooBasis};
use crate::state::BipartiteState;
use crate::steering::{correlation_matrix, DetectorKind, SteeringVerdict, VIOLATION_TOL};

/// Partial-transpose eigenvalues below −NPT_TOL certify entanglement; the
/// margin sits below eigensolver noise for the dimensions handled here.
pub const NPT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntanglementMethod {
    Npt,
    Correlation,
}

/// Result of an entanglement test. `entangled` certifies entanglement; when
/// `exact` is set (NPT with d_A·d_B ≤ 6) a negative flag also certifies
/// separability, otherwise the test is sufficient-only.
#[derive(Debug, Clone, Serialize)]
pub struct EntanglementVerdict {
    pub method: EntanglementMethod,
    /// Minimum partial-transpose eigenvalue (npt) or lhs − rhs (correlation).
    pub witness: f64,
    pub entangled: bool,
    pub exact: bool,
}

/// Transposes the chosen tensor factor under the Alice-major index
/// convention. The result is hermitian with unit trace but not necessarily
/// positive; negativity witnesses entanglement.
pub fn partial_transpose(state: &BipartiteState, subsystem: Subsystem) -> HermitianMatrix {
    let (da, db) = (state.dim_a(), state.dim_b());
    let rho = state.matrix();
    let mut out = DMatrix::<Complex64>::zeros(da * db, da * db);
    for a in 0..da {
        for a2 in 0..da {
            for b in 0..db {
                for b2 in 0..db {
                    let (src_r, src_c) = match subsystem {
                        Subsystem::A => (a2 * db + b, a * db + b2),
                        Subsystem::B => (a * db + b2, a2 * db + b),
                    };
                    out[(a * db + b, a2 * db + b2)] = rho[(src_r, src_c)];
                }
            }
        }
    }
    HermitianMatrix::new(out).expect("partial transpose preserves hermiticity")
}

/// Peres–Horodecki test: entangled iff the partial transpose has an
/// eigenvalue below −1e-10. Exact (necessary and sufficient) for
/// d_A·d_B ≤ 6, otherwise sufficient-only.
pub fn is_npt(state: &BipartiteState) -> EntanglementVerdict {
    let witness = partial_transpose(state, Subsystem::B).min_eigenvalue();
    EntanglementVerdict {
        method: EntanglementMethod::Npt,
        witness,
        entangled: witness < -NPT_TOL,
        exact: state.dim_a() * state.dim_b() <= 6,
    }
}

/// Mixing parameter of the τ-state reduction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DasConfig {
    mu: f64,
}

/// Largest admissible mixing parameter, 1/√3; it maximizes detection since
/// the τ-state is affine in μ with a separable μ=0 endpoint.
pub fn mu_max() -> f64 {
    1.0 / 3.0f64.sqrt()
}

impl DasConfig {
    pub fn new(mu: f64) -> Result<Self> {
        if !(0.0..=mu_max() + 1e-12).contains(&mu) {
            return Err(Error::InvalidParameter(format!(
                "mixing parameter must lie in [0, 1/sqrt(3)], got {mu}"
            )));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl Default for DasConfig {
    fn default() -> Self {
        Self { mu: mu_max() }
    }
}

/// τ = μρ + ((1−μ)/2)·I₂⊗ρ_B. Defined for qubit Alice only; τ inherits Bob's
/// marginal, and its entanglement witnesses steerability of ρ from Alice to
/// Bob.
pub fn das_tau(state: &BipartiteState, cfg: &DasConfig) -> Result<BipartiteState> {
    if state.dim_a() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "tau reduction requires a qubit on Alice's side, got d_A = {}",
            state.dim_a()
        )));
    }
    let mu = cfg.mu;
    let background = HermitianMatrix::identity(2).kron(&state.reduced_b());
    let mut tau = state.hermitian().scale(mu);
    tau.add_scaled((1.0 - mu) / 2.0, &background);
    BipartiteState::new(2, state.dim_b(), tau)
}

/// Steering test by reduction to entanglement: ρ is declared steerable from
/// Alice to Bob when τ(μ) has a negative partial transpose. The verdict's
/// lhs is the PT negativity −λ_min(τ^{T_B}) and its rhs the NPT tolerance,
/// so `violated` agrees exactly with [`is_npt`] on τ.
pub fn das_steering_check(state: &BipartiteState, cfg: &DasConfig) -> Result<SteeringVerdict> {
    let tau = das_tau(state, cfg)?;
    let ent = is_npt(&tau);
    Ok(SteeringVerdict::with_flag(
        -ent.witness,
        NPT_TOL,
        ent.entangled,
        DetectorKind::DasNpt,
    ))
}

/// Correlation-matrix entanglement criterion:
/// ‖C(G^A,G^B|ρ)‖₁ > √((1 − Tr{ρ_A²})(1 − Tr{ρ_B²})) certifies entanglement.
pub fn ccnr_entanglement_check(
    state: &BipartiteState,
    basis_a: &LooBasis,
    basis_b: &LooBasis,
) -> Result<EntanglementVerdict> {
    if basis_a.dim() != state.dim_a() || basis_b.dim() != state.dim_b() {
        return Err(Error::ShapeMismatch(format!(
            "basis dims ({}, {}) vs state dims ({}, {})",
            basis_a.dim(),
            basis_b.dim(),
            state.dim_a(),
            state.dim_b()
        )));
    }
    if !basis_a.is_canonical() || !basis_b.is_canonical() {
        return Err(Error::InvalidParameter(
            "entanglement criterion requires canonical bases".into(),
        ));
    }
    let c = correlation_matrix(state, basis_a.into(), basis_b.into())?;
    let lhs = trace_norm(c.matrix());
    let (pa, pb) = state.reduced_purities();
    let rhs = ((1.0 - pa) * (1.0 - pb)).sqrt();
    let witness = lhs - rhs;
    Ok(EntanglementVerdict {
        method: EntanglementMethod::Correlation,
        witness,
        entangled: witness > VIOLATION_TOL,
        exact: false,
    })
}

/// Numerical check of the identity connecting the two detectors at μ = 1/√3:
/// the correlation entanglement test on τ, with both sides divided by μ,
/// coincides with the steering test on ρ. Returns the larger of the lhs and
/// rhs residuals.
pub fn das_local_equivalence_residual(state: &BipartiteState) -> Result<f64> {
    let cfg = DasConfig::default();
    let mu = cfg.mu();
    let tau = das_tau(state, &cfg)?;

    let basis_a = LooBasis::gellmann(2)?;
    let basis_b = LooBasis::gellmann(state.dim_b())?;

    let c_tau = correlation_matrix(&tau, (&basis_a).into(), (&basis_b).into())?;
    let (pa_tau, pb_tau) = tau.reduced_purities();
    let lhs_tau = trace_norm(c_tau.matrix());
    let rhs_tau = ((1.0 - pa_tau) * (1.0 - pb_tau)).sqrt();

    let loo = crate::steering::loo_steering_check(state, &basis_a, &basis_b)?;
    Ok((lhs_tau / mu - loo.lhs)
        .abs()
        .max((rhs_tau / mu - loo.rhs).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::random_density;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn partial_transpose_is_involution_and_preserves_product_structure() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let s = BipartiteState::random(2, 3, &mut rng);
        for sub in [Subsystem::A, Subsystem::B] {
            let pt = partial_transpose(&s, sub);
            assert_abs_diff_eq!(pt.trace(), 1.0, epsilon = 1e-13);
            let back = BipartiteState::new_unchecked(2, 3, pt);
            let again = partial_transpose(&back, sub);
            assert!((again.matrix() - s.matrix()).map(|z| z.norm()).max() < 1e-14);
        }

        let a = random_density(2, &mut rng);
        let b = random_density(3, &mut rng);
        let prod = BipartiteState::product(&a, &b).unwrap();
        let pt = partial_transpose(&prod, Subsystem::B);
        assert!(pt.min_eigenvalue() > -1e-12);
        let b_t = HermitianMatrix::new(b.matrix().transpose()).unwrap();
        let expected = a.kron(&b_t);
        assert!((pt.matrix() - expected.matrix()).map(|z| z.norm()).max() < 1e-13);
    }

    #[test]
    fn singlet_partial_transpose_spectrum() {
        let s = BipartiteState::singlet();
        let pt = partial_transpose(&s, Subsystem::B);
        let eig = pt.eigenvalues();
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (have, want) in eig.iter().zip(expected) {
            assert_abs_diff_eq!(*have, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn npt_examples() {
        let v = is_npt(&BipartiteState::singlet());
        assert!(v.entangled);
        assert!(v.exact);
        assert_abs_diff_eq!(v.witness, -0.5, epsilon = 1e-12);

        let v = is_npt(&BipartiteState::maximally_mixed(2, 2).unwrap());
        assert!(!v.entangled);

        // Werner: min PT eigenvalue (1−3w)/4, entangled exactly above w = 1/3
        for w in [0.0, 0.2, 1.0 / 3.0, 0.34, 0.6, 1.0] {
            let v = is_npt(&BipartiteState::werner(w).unwrap());
            assert_abs_diff_eq!(v.witness, (1.0 - 3.0 * w) / 4.0, epsilon = 1e-12);
            assert_eq!(v.entangled, w > 1.0 / 3.0 + 1e-9);
        }

        let v = is_npt(&BipartiteState::isotropic(3, 0.9).unwrap());
        assert!(v.entangled);
        assert!(!v.exact);
    }

    #[test]
    fn tau_state_construction() {
        assert!(DasConfig::new(0.0).is_ok());
        assert!(DasConfig::new(mu_max()).is_ok());
        assert!(DasConfig::new(0.6).is_err());
        assert!(DasConfig::new(-0.1).is_err());

        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let s = BipartiteState::random(2, 3, &mut rng);

        // μ = 0 erases Alice entirely
        let tau0 = das_tau(&s, &DasConfig::new(0.0).unwrap()).unwrap();
        let expected = HermitianMatrix::identity(2).scale(0.5).kron(&s.reduced_b());
        assert!((tau0.matrix() - expected.matrix()).map(|z| z.norm()).max() < 1e-13);

        // marginals: Bob's is inherited, Alice's is contracted toward I/2
        let cfg = DasConfig::default();
        let tau = das_tau(&s, &cfg).unwrap();
        assert!(
            (tau.reduced_b().matrix() - s.reduced_b().matrix())
                .map(|z| z.norm())
                .max()
                < 1e-13
        );
        let mut contracted = s.reduced_a().scale(cfg.mu());
        contracted.add_scaled((1.0 - cfg.mu()) / 2.0, &HermitianMatrix::identity(2));
        assert!(
            (tau.reduced_a().matrix() - contracted.matrix())
                .map(|z| z.norm())
                .max()
                < 1e-13
        );

        // singlet at μ = 1/√3 becomes the Werner state of that visibility
        let tau = das_tau(&BipartiteState::singlet(), &cfg).unwrap();
        let werner = BipartiteState::werner(mu_max()).unwrap();
        assert!((tau.matrix() - werner.matrix()).map(|z| z.norm()).max() < 1e-13);

        // qutrit Alice unsupported
        let s3 = BipartiteState::maximally_mixed(3, 2).unwrap();
        assert!(matches!(
            das_tau(&s3, &cfg),
            Err(Error::UnsupportedDimension(_))
        ));
    }

    #[test]
    fn das_check_examples() {
        let cfg = DasConfig::default();

        let v = das_steering_check(&BipartiteState::singlet(), &cfg).unwrap();
        assert!(v.violated);
        assert_eq!(v.detector, DetectorKind::DasNpt);

        // Werner composition: τ of Werner(w) is Werner(w/√3)
        let v = das_steering_check(&BipartiteState::werner(0.5).unwrap(), &cfg).unwrap();
        assert!(!v.violated);
        let v = das_steering_check(&BipartiteState::werner(0.8).unwrap(), &cfg).unwrap();
        assert!(v.violated);

        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let prod = BipartiteState::product(
            &random_density(2, &mut rng),
            &random_density(2, &mut rng),
        )
        .unwrap();
        let v = das_steering_check(&prod, &cfg).unwrap();
        assert!(!v.violated);

        assert!(das_steering_check(&BipartiteState::maximally_mixed(3, 2).unwrap(), &cfg).is_err());
    }

    #[test]
    fn correlation_entanglement_examples() {
        let ba = LooBasis::gellmann(2).unwrap();
        let bb = LooBasis::gellmann(2).unwrap();

        let v = ccnr_entanglement_check(&BipartiteState::singlet(), &ba, &bb).unwrap();
        assert!(v.entangled);
        assert_abs_diff_eq!(v.witness, 1.5 - 0.5, epsilon = 1e-12);

        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let prod = BipartiteState::product(
            &random_density(2, &mut rng),
            &random_density(2, &mut rng),
        )
        .unwrap();
        let v = ccnr_entanglement_check(&prod, &ba, &bb).unwrap();
        assert!(!v.entangled);
        assert!(v.witness < 1e-9);

        // Werner detection threshold by bisection on the numerically
        // evaluated witness: must land on 1/3
        let margin = |w: f64| {
            ccnr_entanglement_check(&BipartiteState::werner(w).unwrap(), &ba, &bb)
                .unwrap()
                .witness
        };
        let (mut lo, mut hi) = (0.2, 0.5);
        assert!(margin(lo) < 0.0 && margin(hi) > 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if margin(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_abs_diff_eq!(0.5 * (lo + hi), 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn local_equivalence_residual_is_tiny() {
        assert_abs_diff_eq!(
            {
                let mu = mu_max();
                (1.0 + mu * mu) / (2.0 * mu * mu)
            },
            2.0,
            epsilon = 1e-14
        );

        assert!(das_local_equivalence_residual(&BipartiteState::singlet()).unwrap() < 1e-9);

        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for db in 2..=4 {
            for _ in 0..10 {
                let s = BipartiteState::random(2, db, &mut rng);
                let r = das_local_equivalence_residual(&s).unwrap();
                assert!(r < 1e-9, "residual {r} at d_B = {db}");
            }
        }
    }

    #[test]
    fn loo_detection_implies_das_detection_in_low_dimensions() {
        let cfg = DasConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        let mut found_violations = 0usize;
        for db in [2usize, 3] {
            let ba = LooBasis::gellmann(2).unwrap();
            let bb = LooBasis::gellmann(db).unwrap();
            for _ in 0..5000 {
                let s = BipartiteState::random(2, db, &mut rng);
                let loo = crate::steering::loo_steering_check(&s, &ba, &bb).unwrap();
                if loo.violated {
                    found_violations += 1;
                    let das = das_steering_check(&s, &cfg).unwrap();
                    assert!(das.violated, "loo margin {} but tau is PPT", loo.margin);
                }
            }
        }
        assert!(found_violations > 50, "only {found_violations} violations");
    }
}
