//! Two-species Wasserstein-2 gradient flows for games over measures.
//!
//! This crate simulates and analyzes coupled gradient flows of two
//! probability measures (a "population" rho and an "algorithm" mu) driven by
//! a shared game energy, in two modes:
//!
//! - **cooperative**: both species descend the energy F_a — a joint
//!   Wasserstein gradient flow;
//! - **competitive**: rho ascends and mu descends F_c — continuous-time
//!   gradient descent-ascent for a min-max game over measures.
//!
//! It provides:
//!
//! - measure representations (particle ensembles, 1D finite-volume grid
//!   densities, Dirac states) — [`measures`];
//! - a declarative energy library with analytic gradients and convexity
//!   constants, energy/dissipation evaluation, and theoretical rates —
//!   [`energy`];
//! - an Euler–Maruyama interacting-particle integrator — [`particle_sim`];
//! - a positivity-preserving 1D finite-volume solver with Gibbs steady-state
//!   iteration — [`fv_solver`];
//! - exact Wasserstein-2 distances (1D quantile form; Hungarian assignment
//!   for small ensembles), the joint metric, and exponential-rate fitting —
//!   [`ot_metrics`];
//! - timescale-separated best-response dynamics and Danskin/envelope
//!   checks — [`timescale`];
//! - config-driven scenarios with CSV/JSON/SVG outputs — [`scenarios`].

pub mod energy;
pub mod error;
pub mod fv_solver;
pub mod measures;
pub mod ot_metrics;
pub mod particle_sim;
pub mod scenarios;
pub mod timescale;
pub mod trajectory;

pub use energy::{
    dissipation, eval_energy, grad_field_mu, grad_field_rho, rate_constants, ApplicationExtras,
    CouplingFamily, EnergySpec, KernelFamily, Mode, PotentialFamily, RateConstants,
};
pub use error::{Error, Result};
pub use measures::{
    histogram, moment2, sample_gaussian, DiracState, GridDensity, Measure, ParticleEnsemble,
};
pub use ot_metrics::{fit_rate, w2_1d, w2_assignment, wbar, RateFit};
pub use trajectory::{Snapshot, Trajectory};
