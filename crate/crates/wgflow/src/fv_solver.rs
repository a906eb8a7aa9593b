//! Positivity-preserving 1D finite-volume solver for the coupled PDE system.
//!
//! Each species with a grid representation evolves by the continuity
//! equation with an advective-diffusive edge flux:
//!
//! ```text
//! u_{k+1/2} = flow_sign * (xi_{k+1} - xi_k) / h              (edge velocity)
//! G_{k+1/2} = (alpha/h) [B(-x) rho_k - B(x) rho_{k+1}],  x = u h / alpha
//! rho_k    <- rho_k - (dt/h) (G_{k+1/2} - G_{k-1/2})
//! ```
//!
//! where `xi` is the first variation without the entropy term (the entropy's
//! `alpha grad log rho` drift becomes the diffusive part of the flux, which
//! carries a `+` sign in both modes because ascent on -R(rho) is descent on
//! R(rho)) and `B(x) = x/(e^x - 1)` is the Bernoulli weight of
//! Scharfetter-Gummel exponential fitting, which interpolates between full
//! upwinding of the advective flux (the alpha -> 0 limit, used verbatim when
//! alpha = 0) and the centered diffusive flux (u = 0), and makes the discrete
//! Gibbs state an exact steady state.
//! Fluxes vanish at the domain boundary (zero-flux truncation), so mass is
//! conserved to rounding per step. Both species' fluxes are computed from
//! the same time-level state (Jacobi coupling), preserving the zero-sum
//! symmetry of the competitive dynamics. A Dirac species advances by
//! explicit Euler on its ODE.
//!
//! Steps are refused (not clipped) when `dt` exceeds the CFL bound
//! `min(h / (2 max|u|), h^2 / (4 alpha))`.

use crate::energy::{convolve_value, grad_field_mu, integrate, CouplingFamily, EnergySpec};
use crate::error::{Error, Result};
use crate::measures::{DiracState, GridDensity, Measure};
use crate::trajectory::{Observers, Snapshot, Trajectory};

/// State of the coupled finite-volume system.
#[derive(Debug, Clone)]
pub struct FvState {
    /// Population density.
    pub rho: GridDensity,
    /// Algorithm species: grid density or Dirac point.
    pub mu: Measure,
    /// Current simulation time.
    pub time: f64,
}

impl FvState {
    /// Builds an initial state at t = 0.
    pub fn new(rho: GridDensity, mu: Measure) -> Result<Self> {
        if matches!(mu, Measure::Particles(_)) {
            return Err(Error::UnsupportedRepresentation(
                "the finite-volume solver does not accept a particle species".into(),
            ));
        }
        Ok(Self { rho, mu, time: 0.0 })
    }
}

/// Which species a Gibbs solve targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    /// The population (rho) side.
    Rho,
    /// The algorithm (mu) side.
    Mu,
}

/// Mean payoff against the opponent, I f(z, .) d(opponent), at a point.
/// Linear-in-opponent payoffs collapse to the opponent's mean (terms
/// depending only on the opponent are constant in z and drop out of all
/// velocity differences).
fn coupling_avg_f_z(c: &CouplingFamily, z: &[f64], mu: &Measure, mu_mean: &[f64]) -> f64 {
    match c {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            c.f(z, mu_mean)
        }
        CouplingFamily::LogisticGame { .. } => integrate(mu, |x| c.f(z, x)),
    }
}

fn coupling_avg_f_x(c: &CouplingFamily, x: &[f64], rho: &Measure, rho_mean: &[f64]) -> f64 {
    match c {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            c.f(rho_mean, x)
        }
        CouplingFamily::LogisticGame { .. } => integrate(rho, |z| c.f(z, x)),
    }
}

/// Non-entropy first variation of the rho species at all cell centers.
fn xi_rho(spec: &EnergySpec, rho: &GridDensity, mu: &Measure) -> Vec<f64> {
    let s = spec.mode.r_sign();
    let rho_m = Measure::Grid(rho.clone());
    let mu_mean = mu.mean();
    (0..rho.cells())
        .map(|k| {
            let z = [rho.center(k)];
            coupling_avg_f_z(&spec.coupling, &z, mu, &mu_mean)
                + s * (spec.v1.value(&z) + convolve_value(&spec.w1, &z, &rho_m))
        })
        .collect()
}

/// Non-entropy first variation of the mu species at all cell centers
/// (descent sign; includes application extras).
fn xi_mu(spec: &EnergySpec, rho: &GridDensity, mu: &GridDensity) -> Vec<f64> {
    let rho_m = Measure::Grid(rho.clone());
    let mu_m = Measure::Grid(mu.clone());
    let rho_mean = vec![rho.mean()];
    (0..mu.cells())
        .map(|k| {
            let x = [mu.center(k)];
            let mut v = coupling_avg_f_x(&spec.coupling, &x, &rho_m, &rho_mean)
                + spec.v2.value(&x)
                + convolve_value(&spec.w2, &x, &mu_m);
            if let Some(extras) = &spec.application_extras {
                let pi = Measure::Particles(extras.pi.clone());
                v += integrate(&pi, |z| spec.coupling.f2(z, &x))
                    + 0.5 * extras.kappa * (x[0] - extras.x0[0]) * (x[0] - extras.x0[0]);
            }
            v
        })
        .collect()
}

/// Bernoulli function B(x) = x / (e^x - 1), the Scharfetter-Gummel flux
/// weight. Series expansion near zero avoids 0/0; `exp_m1` keeps the large
/// |x| limits (B(x) -> 0 for x -> +inf, B(x) -> -x for x -> -inf) exact.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - x / 2.0 + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// One explicit finite-volume update of a single grid species. `flow_sign`
/// is +1 for ascent, -1 for descent; `diffusion` is the entropy weight.
fn advance_grid(
    g: &GridDensity,
    xi: &[f64],
    flow_sign: f64,
    diffusion: f64,
    dt: f64,
    species: &str,
) -> Result<GridDensity> {
    let n = g.cells();
    let h = g.cell_width();
    let v = g.values();
    // Edge velocities u_{k+1/2}, k = 0..n-2 (boundary fluxes are zero).
    let u: Vec<f64> = (0..n - 1).map(|k| flow_sign * (xi[k + 1] - xi[k]) / h).collect();
    let max_u = u.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    let mut bound = f64::INFINITY;
    if max_u > 0.0 {
        bound = bound.min(h / (2.0 * max_u));
    }
    if diffusion > 0.0 {
        bound = bound.min(h * h / (4.0 * diffusion));
    }
    if dt > bound {
        return Err(Error::CflViolation {
            dt,
            bound,
            context: format!("{species} finite-volume step (max|u| = {max_u:.3e}, h = {h:.3e})"),
        });
    }
    // Interior-edge fluxes. With diffusion the advective and diffusive
    // contributions are combined with Scharfetter-Gummel exponential
    // fitting, F = (alpha/h) [B(-x) rho_k - B(x) rho_{k+1}] with
    // x = u h / alpha and B the Bernoulli function: this reduces to the
    // centered diffusive flux when u = 0 and to full upwinding as
    // alpha -> 0, stays positivity-preserving under the same CFL bound,
    // and vanishes exactly on the discrete Gibbs state (plain upwinding
    // biases the steady state by O(h), which is above the accuracy the
    // steady-state oracles require at the reference resolution).
    let mut flux = vec![0.0; n + 1];
    for k in 0..n - 1 {
        flux[k + 1] = if diffusion > 0.0 {
            let x = u[k] * h / diffusion;
            diffusion / h * (bernoulli(-x) * v[k] - bernoulli(x) * v[k + 1])
        } else if u[k] >= 0.0 {
            u[k] * v[k]
        } else {
            u[k] * v[k + 1]
        };
    }
    let mut new_v = Vec::with_capacity(n);
    for k in 0..n {
        let val = v[k] - dt / h * (flux[k + 1] - flux[k]);
        assert!(
            val > -1e-10,
            "finite-volume scheme produced a negative cell average ({val:.3e}) \
             despite the CFL bound; this is a scheme bug"
        );
        new_v.push(val.max(0.0));
    }
    let old_mass: f64 = v.iter().sum::<f64>() * h;
    let new_mass: f64 = new_v.iter().sum::<f64>() * h;
    assert!(
        (new_mass - old_mass).abs() <= 1e-12 * old_mass.max(1.0),
        "finite-volume step changed total mass by {:.3e}; the zero-flux \
         boundary must conserve mass exactly",
        new_mass - old_mass
    );
    GridDensity::new(g.lo(), g.hi(), new_v)
}

/// Advances the coupled system by one finite-volume step.
pub fn fv_step(spec: &EnergySpec, state: &FvState, dt: f64) -> Result<FvState> {
    if dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    // Jacobi coupling: both first variations from the same time level.
    let xi_r = xi_rho(spec, &state.rho, &state.mu);
    let new_rho = advance_grid(
        &state.rho,
        &xi_r,
        spec.mode.rho_flow_sign(),
        spec.alpha,
        dt,
        "rho",
    )?;
    let new_mu = match &state.mu {
        Measure::Grid(g) => {
            let xi_m = xi_mu(spec, &state.rho, g);
            Measure::Grid(advance_grid(g, &xi_m, -1.0, spec.beta, dt, "mu")?)
        }
        Measure::Dirac(d) => {
            if spec.beta > 0.0 {
                return Err(Error::UnsupportedRepresentation(
                    "a Dirac algorithm species requires beta = 0".into(),
                ));
            }
            let rho_m = Measure::Grid(state.rho.clone());
            let g = grad_field_mu(spec, &rho_m, &state.mu, &[d.point().to_vec()])?;
            let x: Vec<f64> = d.point().iter().zip(&g[0]).map(|(xi, gi)| xi - dt * gi).collect();
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::Divergence {
                    time: state.time + dt,
                    what: "mu Dirac coordinate became non-finite".into(),
                });
            }
            Measure::Dirac(DiracState::new(x)?)
        }
        Measure::Particles(_) => unreachable!("rejected at construction"),
    };
    Ok(FvState { rho: new_rho, mu: new_mu, time: state.time + dt })
}

/// Runs the finite-volume time loop to `t_end`, recording snapshots and
/// diagnostics every `snapshot_every` time units.
pub fn fv_simulate(
    spec: &EnergySpec,
    state0: FvState,
    t_end: f64,
    dt: f64,
    snapshot_every: f64,
    observers: &Observers,
) -> Result<Trajectory> {
    if t_end <= state0.time {
        return Err(Error::invalid("t_end must exceed the initial time"));
    }
    let n_steps = ((t_end - state0.time) / dt).round().max(1.0) as usize;
    let stride = ((snapshot_every / dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    let mut state = state0;
    let snap = |state: &FvState, traj: &mut Trajectory, spec: &EnergySpec| -> Result<()> {
        let rho = Measure::Grid(state.rho.clone());
        traj.snapshots.push(Snapshot { time: state.time, rho: rho.clone(), mu: state.mu.clone() });
        observers.observe(spec, state.time, &rho, &state.mu, traj)
    };
    snap(&state, &mut traj, spec)?;
    for k in 1..=n_steps {
        state = fv_step(spec, &state, dt)?;
        if k % stride == 0 || k == n_steps {
            snap(&state, &mut traj, spec)?;
        }
    }
    Ok(traj)
}

/// Result of a Gibbs fixed-point solve.
#[derive(Debug, Clone)]
pub struct GibbsResult {
    /// The converged density.
    pub density: GridDensity,
    /// Final sup-norm change between iterates (the stopping residual).
    pub residual: f64,
    /// Number of fixed-point iterations performed.
    pub iterations: usize,
}

/// Solves the Euler–Lagrange fixed point of one species' flow with the
/// opponent held fixed:
///
/// ```text
/// rho* = normalize(exp(-(1/alpha) * sign * (I f d(opponent) +/- V +/- W * rho*)))
/// ```
///
/// with signs per mode (ascent flips them), by damped iteration (damping 0.5
/// guards against oscillation under strong kernels). When the species has no
/// self-interaction kernel the map has no self-dependence and the closed form
/// is returned in a single iteration.
pub fn gibbs_steady_state(
    spec: &EnergySpec,
    species: Species,
    opponent: &Measure,
    lo: f64,
    hi: f64,
    cells: usize,
) -> Result<GibbsResult> {
    let (diffusion, kernel) = match species {
        Species::Rho => (spec.alpha, &spec.w1),
        Species::Mu => (spec.beta, &spec.w2),
    };
    if diffusion <= 0.0 {
        return Err(Error::invalid(
            "gibbs_steady_state requires positive diffusion for the chosen species",
        ));
    }
    if hi <= lo || cells < 2 {
        return Err(Error::invalid("gibbs_steady_state requires hi > lo and at least 2 cells"));
    }
    let h = (hi - lo) / cells as f64;
    let centers: Vec<f64> = (0..cells).map(|k| lo + (k as f64 + 0.5) * h).collect();
    let opp_mean = opponent.mean();

    // Stationarity of the rho flow reads `coup + s (V1 + W1*rho) + s alpha
    // log rho = const` with s the mode sign of R, so `log rho = const
    // - coup/(s alpha) - (V1 + W1*rho)/alpha`. The mu side always descends:
    // `log mu = const - (coup + V2 + W2*mu + extras)/beta`. The part not
    // involving the species' own kernel is fixed across iterations.
    let fixed: Vec<f64> = centers
        .iter()
        .map(|&c| {
            let p = [c];
            match species {
                Species::Rho => {
                    let coup = coupling_avg_f_z(&spec.coupling, &p, opponent, &opp_mean);
                    -coup / (spec.mode.r_sign() * diffusion) - spec.v1.value(&p) / diffusion
                }
                Species::Mu => {
                    let mut pot = coupling_avg_f_x(&spec.coupling, &p, opponent, &opp_mean)
                        + spec.v2.value(&p);
                    if let Some(extras) = &spec.application_extras {
                        let pi = Measure::Particles(extras.pi.clone());
                        pot += integrate(&pi, |z| spec.coupling.f2(z, &p))
                            + 0.5 * extras.kappa * (p[0] - extras.x0[0]) * (p[0] - extras.x0[0]);
                    }
                    -pot / diffusion
                }
            }
        })
        .collect();

    // Applies the Gibbs map to the current iterate: exp(fixed - W*rho /
    // diffusion), shifted by the max exponent before exponentiating so large
    // potentials cannot overflow, then normalized.
    let gibbs_map = |current: Option<&GridDensity>| -> Result<GridDensity> {
        let mut exponent = fixed.clone();
        if let Some(d) = current {
            let m = Measure::Grid(d.clone());
            for (e, &c) in exponent.iter_mut().zip(&centers) {
                *e -= convolve_value(kernel, &[c], &m) / diffusion;
            }
        }
        let shift = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        GridDensity::new(lo, hi, exponent.iter().map(|e| (e - shift).exp()).collect())
    };

    if kernel.is_zero() {
        // No self-dependence: the map is constant and its image is the fixed
        // point exactly.
        return Ok(GibbsResult { density: gibbs_map(None)?, residual: 0.0, iterations: 1 });
    }

    const DAMPING: f64 = 0.5;
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 10_000;
    let uniform = GridDensity::new(lo, hi, vec![1.0; cells])?;
    let mut current = uniform;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let target = gibbs_map(Some(&current))?;
        let damped: Vec<f64> = current
            .values()
            .iter()
            .zip(target.values())
            .map(|(&a, &b)| (1.0 - DAMPING) * a + DAMPING * b)
            .collect();
        let next = GridDensity::new(lo, hi, damped)?;
        residual = current
            .values()
            .iter()
            .zip(next.values())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        current = next;
        if residual < TOL {
            return Ok(GibbsResult { density: current, residual, iterations: it });
        }
    }
    Err(Error::IterationLimit {
        limit: MAX_ITERS,
        residual,
        context: "gibbs_steady_state damped fixed-point iteration".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{eval_energy, CouplingFamily, KernelFamily, Mode, PotentialFamily};
    use crate::measures::DiracState;
    use nalgebra::DMatrix;

    fn quad_potential(curv: f64) -> PotentialFamily {
        PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[curv]),
        }
    }

    fn spec_1d(mode: Mode) -> EnergySpec {
        EnergySpec {
            mode,
            coupling: CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[0.0]) },
            v1: PotentialFamily::Zero,
            v2: PotentialFamily::Zero,
            w1: KernelFamily::Zero,
            w2: KernelFamily::Zero,
            alpha: 0.0,
            beta: 0.0,
            dim_rho: 1,
            dim_mu: 1,
            application_extras: None,
        }
    }

    fn dirac(x: f64) -> Measure {
        Measure::Dirac(DiracState::new(vec![x]).unwrap())
    }

    #[test]
    fn uniform_is_stationary_without_potentials() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 0.1;
        let rho = GridDensity::new(-1.0, 1.0, vec![1.0; 50]).unwrap();
        let state = FvState::new(rho.clone(), dirac(0.0)).unwrap();
        let next = fv_step(&spec, &state, 1e-3).unwrap();
        for (a, b) in rho.values().iter().zip(next.rho.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_diffusion_matches_heat_kernel() {
        // With only entropy, the flow is the heat equation: N(0, 0.5) at
        // t = 0.25 with alpha = 1 becomes N(0, 0.5 + 2 t) = N(0, 1).
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 1.0;
        let rho = GridDensity::gaussian(0.0, 0.5, -8.0, 8.0, 400).unwrap();
        let state = FvState::new(rho, dirac(0.0)).unwrap();
        let traj = fv_simulate(&spec, state, 0.25, 2e-4, 0.25, &Observers::default()).unwrap();
        let fin = traj.snapshots.last().unwrap().rho.as_grid().unwrap();
        let exact = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        assert!(fin.l1_distance(&exact).unwrap() < 5e-3);
    }

    #[test]
    fn ou_flow_relaxes_to_gibbs_and_dissipates_energy() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 1.0;
        spec.v1 = quad_potential(1.0);
        let rho = GridDensity::gaussian(2.0, 0.25, -8.0, 8.0, 400).unwrap();
        let state = FvState::new(rho, dirac(0.0)).unwrap();
        let mut obs = Observers::default();
        obs.energy = true;
        let traj = fv_simulate(&spec, state, 10.0, 2.5e-4, 0.5, &obs).unwrap();
        let fin = traj.snapshots.last().unwrap().rho.as_grid().unwrap();
        let exact = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        let l1 = fin.l1_distance(&exact).unwrap();
        assert!(l1 < 1e-2, "L1 = {l1}");
        let energies = traj.channel("energy");
        for w in energies.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-8, "energy increased: {:?}", w);
        }
    }

    #[test]
    fn grid_mu_descends_its_potential() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 0.05;
        spec.beta = 0.05;
        spec.v1 = quad_potential(1.0);
        spec.v2 = quad_potential(1.0);
        let rho = GridDensity::gaussian(0.0, 1.0, -6.0, 6.0, 150).unwrap();
        let mu = GridDensity::gaussian(2.0, 0.2, -6.0, 6.0, 150).unwrap();
        let m0 = mu.mean();
        let state = FvState::new(rho, Measure::Grid(mu)).unwrap();
        let traj = fv_simulate(&spec, state, 1.0, 2e-3, 1.0, &Observers::default()).unwrap();
        let fin = traj.snapshots.last().unwrap().mu.as_grid().unwrap().mean();
        assert!(fin < m0 - 0.5, "mu mean should move toward 0: {m0} -> {fin}");
    }

    #[test]
    fn dirac_mu_follows_explicit_euler() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v2 = quad_potential(1.0);
        let rho = GridDensity::gaussian(0.0, 1.0, -6.0, 6.0, 100).unwrap();
        let state = FvState::new(rho, dirac(1.0)).unwrap();
        let next = fv_step(&spec, &state, 0.1).unwrap();
        let x = next.mu.as_dirac().unwrap().point()[0];
        assert!((x - 0.9).abs() < 1e-14);
    }

    #[test]
    fn dirac_mu_with_diffusion_is_rejected() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 0.05;
        spec.beta = 0.1;
        let rho = GridDensity::gaussian(0.0, 1.0, -6.0, 6.0, 100).unwrap();
        let state = FvState::new(rho, dirac(1.0)).unwrap();
        assert!(matches!(
            fv_step(&spec, &state, 1e-3),
            Err(Error::UnsupportedRepresentation(_))
        ));
    }

    #[test]
    fn oversized_step_is_refused_not_clipped() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 1.0;
        let rho = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        let state = FvState::new(rho, dirac(0.0)).unwrap();
        match fv_step(&spec, &state, 0.1) {
            Err(Error::CflViolation { dt, bound, .. }) => {
                assert_eq!(dt, 0.1);
                assert!(bound < 0.1);
            }
            other => panic!("expected CFL refusal, got {other:?}"),
        }
    }

    #[test]
    fn gibbs_ou_is_standard_gaussian() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 1.0;
        spec.v1 = quad_potential(1.0);
        let res =
            gibbs_steady_state(&spec, Species::Rho, &dirac(0.0), -8.0, 8.0, 400).unwrap();
        assert_eq!(res.iterations, 1);
        let exact = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        assert!(res.density.l1_distance(&exact).unwrap() < 1e-8);
    }

    #[test]
    fn gibbs_competitive_tilts_toward_payoff() {
        // Competitive rho maximizes the coupling: with f = z x against a
        // Dirac at m and V1 = z^2/2, the stationary density is
        // proportional to exp(z m - z^2/2), i.e. N(m, 1).
        let mut spec = spec_1d(Mode::Competitive);
        spec.alpha = 1.0;
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_potential(1.0);
        let res =
            gibbs_steady_state(&spec, Species::Rho, &dirac(1.0), -7.0, 9.0, 400).unwrap();
        let exact = GridDensity::gaussian(1.0, 1.0, -7.0, 9.0, 400).unwrap();
        assert!(res.density.l1_distance(&exact).unwrap() < 1e-8);
        assert!((res.density.mean() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gibbs_mu_side_uses_descent_sign_in_both_modes() {
        for mode in [Mode::Cooperative, Mode::Competitive] {
            let mut spec = spec_1d(mode);
            spec.alpha = 1.0;
            spec.beta = 1.0;
            spec.v2 = quad_potential(1.0);
            let res =
                gibbs_steady_state(&spec, Species::Mu, &dirac(0.0), -8.0, 8.0, 400).unwrap();
            let exact = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
            assert!(res.density.l1_distance(&exact).unwrap() < 1e-8);
        }
    }

    #[test]
    fn gibbs_with_kernel_is_resolution_stable() {
        // Self-consistency with a quadratic kernel; midpoint quadrature of
        // smooth decaying integrands is spectrally accurate, so the low
        // moments of the fixed point agree across resolutions far below the
        // cell width.
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 1.0;
        spec.v1 = quad_potential(1.0);
        spec.w1 = KernelFamily::Quadratic { strength: 0.5 };
        let coarse =
            gibbs_steady_state(&spec, Species::Rho, &dirac(0.0), -8.0, 8.0, 400).unwrap();
        let fine =
            gibbs_steady_state(&spec, Species::Rho, &dirac(0.0), -8.0, 8.0, 800).unwrap();
        assert!(coarse.iterations > 1);
        assert!(coarse.residual < 1e-10);
        assert!((coarse.density.mean() - fine.density.mean()).abs() < 1e-6);
        assert!((coarse.density.moment2() - fine.density.moment2()).abs() < 1e-6);
    }

    #[test]
    fn jacobi_coupling_uses_one_time_level() {
        // The Dirac mu drift depends on the rho mean, which moves during the
        // step. A Gauss-Seidel update would see the updated mean; the Jacobi
        // update must use the pre-step mean exactly.
        let mut spec = spec_1d(Mode::Cooperative);
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_potential(1.0);
        spec.v2 = quad_potential(1.0);
        let rho = GridDensity::gaussian(2.0, 0.5, -6.0, 8.0, 140).unwrap();
        let mean_before = rho.mean();
        let state = FvState::new(rho, dirac(1.0)).unwrap();
        let dt = 1e-3;
        let next = fv_step(&spec, &state, dt).unwrap();
        assert!((next.rho.mean() - mean_before).abs() > 1e-6, "rho should have moved");
        let x1 = next.mu.as_dirac().unwrap().point()[0];
        // dx/dt = -(mean_rho * 1 + x); Jacobi uses the old mean.
        let expected = 1.0 - dt * (mean_before + 1.0);
        assert!((x1 - expected).abs() < 1e-14, "expected {expected}, got {x1}");
    }

    #[test]
    fn energy_evaluates_along_fv_trajectory() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.alpha = 0.5;
        spec.v1 = quad_potential(1.0);
        let rho = GridDensity::gaussian(1.0, 0.5, -6.0, 6.0, 100).unwrap();
        let state = FvState::new(rho, dirac(0.0)).unwrap();
        let next = fv_step(&spec, &state, 1e-3).unwrap();
        let e = eval_energy(&spec, &Measure::Grid(next.rho), &next.mu).unwrap();
        assert!(e.is_finite());
    }
}
