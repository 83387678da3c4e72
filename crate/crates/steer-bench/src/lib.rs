//! Shared fixtures for the benchmark targets: pre-burned sampler chains and
//! representative states so the benches measure the hot path, not setup.

use steer_core::{BipartiteState, HitAndRunChain, LooBasis, SamplerConfig};

/// A generic (well inside the body, not near the boundary) state of the given
/// bipartite dimensions, drawn deterministically.
pub fn fixture_state(dim_a: usize, dim_b: usize) -> BipartiteState {
    let config = SamplerConfig::new(dim_a * dim_b, 9).expect("fixture config");
    let mut chain = HitAndRunChain::new(config).expect("fixture chain");
    let rho = chain.next_sample().expect("fixture sample");
    BipartiteState::new(dim_a, dim_b, rho).expect("sampled states are valid")
}

/// Canonical orthonormal Hermitian bases for both sides.
pub fn fixture_bases(dim_a: usize, dim_b: usize) -> (LooBasis, LooBasis) {
    (
        LooBasis::gellmann(dim_a).expect("basis"),
        LooBasis::gellmann(dim_b).expect("basis"),
    )
}
