//! A backend-agnostic handle on the evolving population state, so dynamics
//! drivers (fixed classifier, coupled, mean-shift probing) can be written
//! once for both the particle and grid solvers.

use crate::energy::EnergySpec;
use crate::error::Result;
use crate::fv_solver::{fv_step, FvState};
use crate::measures::{GridDensity, Measure, ParticleEnsemble};
use crate::particle_sim::{step, SimState, StepConfig};

/// The evolving state: a grid density or a particle ensemble, with the
/// algorithm species riding along.
#[derive(Debug, Clone)]
pub enum Carrier {
    /// Finite-volume state.
    Grid(FvState),
    /// Particle-system state (owns the noise stream).
    Part(SimState),
}

impl Carrier {
    /// Wraps initial measures for the appropriate backend.
    pub fn new(rho: Measure, mu: Measure, seed: u64) -> Result<Self> {
        match rho {
            Measure::Grid(g) => Ok(Carrier::Grid(FvState::new(g, mu)?)),
            Measure::Particles(p) => Ok(Carrier::Part(SimState::new(p, mu, seed)?)),
            Measure::Dirac(_) => Err(crate::error::Error::invalid(
                "population must be a grid density or a particle ensemble",
            )),
        }
    }

    /// Current simulation time.
    pub fn time(&self) -> f64 {
        match self {
            Carrier::Grid(s) => s.time,
            Carrier::Part(s) => s.time,
        }
    }

    /// The population as a [`Measure`].
    pub fn rho(&self) -> Measure {
        match self {
            Carrier::Grid(s) => Measure::Grid(s.rho.clone()),
            Carrier::Part(s) => Measure::Particles(s.rho.clone()),
        }
    }

    /// The population grid, when carried by the grid backend.
    pub fn rho_grid(&self) -> Option<&GridDensity> {
        match self {
            Carrier::Grid(s) => Some(&s.rho),
            Carrier::Part(_) => None,
        }
    }

    /// The population particles, when carried by the particle backend.
    pub fn rho_particles(&self) -> Option<&ParticleEnsemble> {
        match self {
            Carrier::Grid(_) => None,
            Carrier::Part(s) => Some(&s.rho),
        }
    }

    /// The algorithm species.
    pub fn mu(&self) -> &Measure {
        match self {
            Carrier::Grid(s) => &s.mu,
            Carrier::Part(s) => &s.mu,
        }
    }

    /// Replaces the algorithm species (keeps time and noise stream).
    pub fn set_mu(&mut self, mu: Measure) {
        match self {
            Carrier::Grid(s) => s.mu = mu,
            Carrier::Part(s) => s.mu = mu,
        }
    }

    /// One coupled step: both species move.
    pub fn step_coupled(&mut self, spec: &EnergySpec, dt: f64) -> Result<()> {
        match self {
            Carrier::Grid(s) => {
                *s = fv_step(spec, s, dt)?;
            }
            Carrier::Part(s) => {
                *s = step(spec, s, StepConfig::plain(dt))?;
            }
        }
        Ok(())
    }

    /// One step with the algorithm species held fixed.
    pub fn step_frozen_mu(&mut self, spec: &EnergySpec, dt: f64) -> Result<()> {
        match self {
            Carrier::Grid(s) => {
                let mu = s.mu.clone();
                *s = fv_step(spec, s, dt)?;
                s.mu = mu;
            }
            Carrier::Part(s) => {
                *s = step(spec, s, StepConfig { dt, freeze_rho: false, freeze_mu: true })?;
            }
        }
        Ok(())
    }
}
