//! Chaos-expansion kernel norms and series, by several independent routes.

pub mod ops;
pub mod proposal;
pub mod realspace;
pub mod timeint;

pub use ops::{
    chaos_norm, closed_form_first_norm, laplace_identity_check, laplace_w_check, lower_bound_u,
    lower_bound_w, mollification_probe, reverse_cauchy_schwarz_check, second_moment_series,
    t_n_estimate, LaplaceIdentityReport, LaplaceWReport, Method, MollificationProbe,
    MomentSeriesResult, ReverseCsReport, CRITICAL_M_UPPER, EXACT_SYMMETRIZATION_MAX, ORDER_CAP,
};
pub use proposal::{c_lebesgue, c_mu_prime, Proposal, TupleSampler};
pub use realspace::realspace_norm;
pub use timeint::{g_value, simplex_sin_integral, simplex_sin_integral_cached, MAX_ORDER};
