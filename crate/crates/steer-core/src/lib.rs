//! Numerical toolkit for correlation-matrix steering detection and
//! steerable-volume estimation on bipartite quantum states.

pub mod das;
pub mod error;
pub mod hermitian;
pub mod povm;
pub mod sampler;
pub mod state;
pub mod steering;
pub mod volume;

pub use das::{
    ccnr_entanglement_check, das_local_equivalence_residual, das_steering_check, das_tau, is_npt,
    mu_max, partial_transpose, DasConfig, EntanglementMethod, EntanglementVerdict, Subsystem,
    NPT_TOL,
};
pub use error::{Error, Result};
pub use hermitian::{
    bloch_expand, hs_inner, random_orthogonal, trace_norm, trace_norm_complex, BlochVector,
    HermitianMatrix, LooBasis,
};
pub use povm::{
    construct_povm, enumerate_ic_families, gamma, sts_spectrum, validate_povm, NmPovm,
    NmPovmParams, PovmValidation, SpectralFactors,
};
pub use sampler::{
    chain_seed, chord_endpoints, density_from_bloch, random_direction, sample_states, ChainStats,
    HitAndRunChain, SampleStream, SamplerConfig,
};
pub use state::{bell_diagonal_state, random_density, BellDiagonalParams, BipartiteState};
pub use steering::{
    bell_diagonal_scan, classify_bell_point, correlation_matrix, loo_steering_check,
    loo_steering_check_swapped, optimize_rescaled_steering, povm_moments, povm_moments_direct,
    povm_steering_check, scaling_identity_residual, scan_to_csv, CorrelationMatrix, DetectorKind,
    LocalOperators, PovmMoments, RescaleOptions, RescalingVector, ScanClass, ScanPoint,
    SteeringVerdict, VIOLATION_TOL,
};
pub use volume::{
    append_jsonl, cross_detector_audit, estimate_ratio, job_record_line, reproduce_table,
    reproduce_table_rows, AuditReport, Detector, EstimationJob, RatioEstimate, ReferenceEntry,
    TableReport, TableRow, TABLE_NPT, TABLE_RESCALED,
};
