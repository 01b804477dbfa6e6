//! Convergence-rate experiments: deformation estimates, scheme comparison,
//! Egorov evolution and the leading term of the trace formula.
//!
//! Every suite takes prebuilt quantum spaces, one per k, so callers decide how
//! spaces are computed and cached.

mod profile;
mod rate;
mod suites;

pub use profile::{TestFunctionProfile, PROFILE_NODES};
pub use rate::{RateExpectation, RatePoint, RateSeries, MAX_FIT_RESIDUAL_LOG10, MIN_RATE_POINTS};
pub use suites::{
    calibrate_commutator_sign, deformation_suite, egorov_defect, propagator, pullback, scheme_comparison_suite,
    symbol_bracket, trace_formula_check, weighted_trace, weighted_trace_of, BoundCheck, ComparisonSeries,
    DeformationSeries, EgorovSeries, TraceSeries, WeightedTrace, ANTI_HERMITIAN_TOL, COMMUTATOR_SIGN,
    EGOROV_MAX_TIME, UNITARITY_TOL,
};

#[cfg(test)]
mod tests;
