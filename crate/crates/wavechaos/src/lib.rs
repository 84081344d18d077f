//! Numerical toolkit for the hyperbolic Anderson model with static noise:
//! chaos-expansion norms of the solution's kernel hierarchy, a variational
//! constant driving the exact moment asymptotics, rate and critical-time
//! constants, series growth diagnostics, and a direct d = 1 simulator used
//! to cross-check everything end to end.
//!
//! The solution of ∂²u/∂t² = Δu + √θ u Ẇ (d ≤ 3, Ẇ Gaussian, constant in
//! time, colored or white in space) expands as u(t,x) = 1 + Σ_n θ^{n/2} I_n(f_n),
//! so E|u|² = Σ_n θ^n n! ‖f̃_n‖², and all large-t / large-p behavior is
//! governed by a single variational quantity computed in [`variational`].

pub mod asymptotics;
pub mod chaos;
pub mod error;
pub mod kernels;
pub mod quad;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod util;
pub mod variational;

pub use error::{Error, Result};
