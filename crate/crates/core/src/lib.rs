//! Radial ground states of quasilinear scalar field equations.
//!
//! This crate computes positive radially symmetric solutions of
//!
//! ```text
//! -Δ_p u - β Δ_q u = g(u)   in ℝ^N,    u(x) → 0 as |x| → ∞,
//! ```
//!
//! where `Δ_p u = div(|∇u|^{p-2}∇u)`, `N ≥ 3`, `1 < p < q`, `p < N`, and of
//! the k-th order Born-Infeld approximation
//!
//! ```text
//! -Δu - β Δ_4 u - (3/2)β² Δ_6 u - ... - a_k β^{k-1} Δ_{2k} u = g(u),
//! ```
//!
//! whose coefficients come from the Taylor expansion of `1/sqrt(1 - 2β|∇u|²)`.
//!
//! For radial profiles the divergence structure integrates exactly: with the
//! scalar flux `Φ(w) = Σ c_e |w|^{e-2} w` and `F(r) = r^{N-1} Φ(u'(r))`, the
//! PDE reduces to `F'(r) = -r^{N-1} g(u(r))`. The solver integrates this flux
//! form with an adaptive Runge-Kutta scheme, classifies trajectories
//! (crossing / rebound / decay), and locates ground states by bisection on
//! `u(0)`. Candidate solutions are then certified against the exact integral
//! identities every finite-action C¹ solution must satisfy: the Pohozaev and
//! Nehari identities, the ground-state action relation
//! `I(u) = (1/N) Σ c_e ‖∇u‖_e^e`, and a radial decay bound. For pure-power
//! Born-Infeld chains the same identities combine into a nonexistence
//! certificate covering the subcritical range.
//!
//! Module map:
//!
//! - [`operator`] — the divergence-form operator, its scalar flux and inverse.
//! - [`nonlinearity`] — nonlinearity classes, hypothesis checks, truncation
//!   and the `g = g₁ - g₂` decomposition.
//! - [`grid`] — graded radial grids, weighted quadrature, profiles and norms.
//! - [`shooting`] — the radial ODE integrator, shot classification, scans and
//!   bisection.
//! - [`variational`] — action functionals, dilation paths and mountain-pass
//!   level estimates.
//! - [`certificates`] — identity residuals, decay statistics, nonexistence
//!   certificates.
//! - [`config`] — TOML problem descriptions used by the CLI.

// Validation guards use `!(x > 0.0)` deliberately: unlike `x <= 0.0` it
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod config;
pub mod grid;
pub mod nonlinearity;
pub mod operator;
pub mod shooting;
pub mod variational;


pub use certificates::{certify, nonexistence_certificate, CertificateReport, Tolerances};
pub use grid::{Profile, RadialGrid};
pub use nonlinearity::{Decomposition, MassRegime, NonlinearitySpec};
pub use operator::OperatorSpec;
pub use shooting::{find_ground_state, multi_start_ground_state, ShootingConfig, ShotOutcome};

