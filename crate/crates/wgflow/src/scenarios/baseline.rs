//! Mean-shift performative-prediction baseline.
//!
//! The baseline never differentiates through the population response.
//! Instead it probes: perturb the classifier, deploy, record the population
//! mean, fit a linear response model `mean ~ c0 + c1 * x`, and jump to the
//! minimizer of the induced surrogate loss (the scenario loss with the
//! population replaced by a mean-shifted copy of the initial population).
//! Probing and deployment both advance real simulation time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{eval_energy, EnergySpec};
use crate::error::{Error, Result};
use crate::measures::{DiracState, GridDensity, Measure};
use crate::trajectory::{Snapshot, Trajectory};

use super::carrier::Carrier;

/// Knobs of the probing loop.
#[derive(Debug, Clone, Copy)]
pub struct MeanShiftConfig {
    /// Probes per outer cycle.
    pub rounds: usize,
    /// Uniform perturbation half-width.
    pub perturb_scale: f64,
    /// Population steps per probe and per deployment block.
    pub inner_steps: usize,
    /// Seed for the perturbation stream.
    pub seed: u64,
}

/// Least-squares line through `(x, y)` probes; errors when all abscissae
/// coincide (nothing to regress on).
pub fn fit_linear(probes: &[(f64, f64)]) -> Result<(f64, f64)> {
    if probes.len() < 2 {
        return Err(Error::SingularFit(format!("need at least 2 probes, got {}", probes.len())));
    }
    let n = probes.len() as f64;
    let mx = probes.iter().map(|p| p.0).sum::<f64>() / n;
    let my = probes.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = probes.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularFit("all probe points identical".into()));
    }
    let sxy: f64 = probes.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c1 = sxy / sxx;
    Ok((my - c1 * mx, c1))
}

/// Deterministic golden-section minimizer on `[lo, hi]`.
pub fn golden_min(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..90 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Copy of a grid density translated by `shift` (linear interpolation on the
/// same grid; mass leaving the domain is clipped and the result
/// renormalized).
pub fn shifted_grid(g: &GridDensity, shift: f64) -> Result<GridDensity> {
    let h = g.cell_width();
    let n = g.cells();
    let sample = |z: f64| -> f64 {
        // Piecewise-linear in cell-center coordinates; zero outside.
        let u = (z - g.lo()) / h - 0.5;
        if u <= -1.0 || u >= n as f64 {
            return 0.0;
        }
        let k = u.floor();
        let frac = u - k;
        let at = |i: f64| -> f64 {
            if i < 0.0 || i >= n as f64 {
                0.0
            } else {
                g.values()[i as usize]
            }
        };
        (1.0 - frac) * at(k) + frac * at(k + 1.0)
    };
    let values: Vec<f64> = (0..n).map(|k| sample(g.center(k) - shift)).collect();
    GridDensity::new(g.lo(), g.hi(), values)
}

/// `rho` shifted so its mean moves by `shift`, in the backend's own
/// representation.
fn shifted_rho(rho0: &Measure, shift: f64) -> Result<Measure> {
    match rho0 {
        Measure::Grid(g) => Ok(Measure::Grid(shifted_grid(g, shift)?)),
        Measure::Particles(p) => Ok(Measure::Particles(p.translated(&[shift])?)),
        Measure::Dirac(d) => Ok(Measure::Dirac(DiracState::new(vec![d.point()[0] + shift])?)),
    }
}

/// Scenario loss seen by the classifier at `x`. Particle populations with
/// diffusion have no evaluable entropy; the entropy term is constant in `x`,
/// so it is dropped there without moving the argmin.
pub fn classifier_loss(spec: &EnergySpec, rho: &Measure, x: f64) -> Result<f64> {
    let mu = Measure::Dirac(DiracState::new(vec![x])?);
    if matches!(rho, Measure::Grid(_)) || spec.alpha == 0.0 {
        eval_energy(spec, rho, &mu)
    } else {
        let mut flat = spec.clone();
        flat.alpha = 0.0;
        eval_energy(&flat, rho, &mu)
    }
}

/// Runs the baseline to `t_end`. Returns the trajectory with channels
/// `x_0` (classifier location), `mean_rho`, and `loss`, recorded at the
/// start and after every inner block, with snapshots at the same times.
pub fn mean_shift_baseline(
    spec: &EnergySpec,
    mut carrier: Carrier,
    x_init: f64,
    t_end: f64,
    dt: f64,
    cfg: MeanShiftConfig,
) -> Result<Trajectory> {
    if cfg.rounds == 0 || cfg.inner_steps == 0 {
        return Err(Error::invalid("mean_shift_baseline needs positive rounds and inner_steps"));
    }
    if t_end <= carrier.time() || dt <= 0.0 {
        return Err(Error::invalid("mean_shift_baseline needs t_end > t0 and dt > 0"));
    }
    let rho0 = carrier.rho();
    let mean0 = rho0.mean()[0];
    // Surrogate bracket: generous around the running classifier, clipped to
    // the grid interior so the shifted copy keeps its mass in the domain.
    let half_width = (10.0 * cfg.perturb_scale).max(2.0);
    let clip = carrier.rho_grid().map(|g| {
        let margin = 0.15 * (g.hi() - g.lo());
        (g.lo() + margin, g.hi() - margin)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x_init;
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory, carrier: &Carrier, x: f64| -> Result<()> {
        let rho = carrier.rho();
        let t = carrier.time();
        traj.snapshots.push(Snapshot {
            time: t,
            rho: rho.clone(),
            mu: Measure::Dirac(DiracState::new(vec![x])?),
        });
        traj.record(t, "x_0", x);
        traj.record(t, "mean_rho", rho.mean()[0]);
        traj.record(t, "loss", classifier_loss(spec, &rho, x)?);
        Ok(())
    };
    record(&mut traj, &carrier, x)?;

    let advance =
        |carrier: &mut Carrier, x_now: f64, budget: &mut usize| -> Result<bool> {
            carrier.set_mu(Measure::Dirac(DiracState::new(vec![x_now])?));
            for _ in 0..cfg.inner_steps {
                if *budget == 0 {
                    return Ok(false);
                }
                carrier.step_frozen_mu(spec, dt)?;
                *budget -= 1;
            }
            Ok(true)
        };

    let total_steps = ((t_end - carrier.time()) / dt).round().max(1.0) as usize;
    let mut budget = total_steps;
    'outer: while budget > 0 {
        // Probing phase: each probe is a real deployment.
        let mut probes = Vec::with_capacity(cfg.rounds);
        for _ in 0..cfg.rounds {
            let delta = if cfg.perturb_scale > 0.0 {
                rng.gen_range(-cfg.perturb_scale..=cfg.perturb_scale)
            } else {
                0.0
            };
            let x_probe = x + delta;
            let full = advance(&mut carrier, x_probe, &mut budget)?;
            probes.push((x_probe, carrier.rho().mean()[0]));
            record(&mut traj, &carrier, x_probe)?;
            if !full {
                break 'outer;
            }
        }
        // Linear response model and surrogate jump.
        let (c0, c1) = fit_linear(&probes)?;
        let (mut b_lo, mut b_hi) = (x - half_width, x + half_width);
        if let Some((lo, hi)) = clip {
            b_lo = b_lo.max(lo);
            b_hi = b_hi.min(hi);
        }
        let surrogate = |y: f64| -> Result<f64> {
            let shifted = shifted_rho(&rho0, c0 + c1 * y - mean0)?;
            classifier_loss(spec, &shifted, y)
        };
        x = golden_min(surrogate, b_lo, b_hi)?;
        // Deployment at the chosen classifier.
        let full = advance(&mut carrier, x, &mut budget)?;
        record(&mut traj, &carrier, x)?;
        if !full {
            break;
        }
    }
    Ok(traj)
}
