//! Euler–Maruyama integrator for the coupled interacting-particle system.
//!
//! The population particles follow (competitive mode shown; the coupling
//! term carries a minus sign in cooperative mode)
//!
//! ```text
//! dz_i = [ +(1/N_x) sum_j grad_z f(z_i, x_j)
//!          -(1/N_z) sum_k grad W1(z_i - z_k)
//!          - grad V1(z_i) ] dt + sqrt(2 alpha) dB_i
//! ```
//!
//! and the algorithm particles always descend:
//!
//! ```text
//! dx_j = [ -(1/N_z) sum_i grad_x f(z_i, x_j)
//!          -(1/N_x) sum_l grad W2(x_j - x_l)
//!          - grad V2(x_j) ] dt + sqrt(2 beta) dB_j
//! ```
//!
//! Entropy acts on particles exclusively through the Brownian term — the
//! drift never differentiates an estimated density. All sign-sensitive code
//! routes through [`grad_field_rho`]/[`grad_field_mu`] so the mode convention
//! lives in exactly one place: the drift is `mode.rho_flow_sign() *
//! grad_field_rho` for the population and `-grad_field_mu` for the
//! algorithm. A zero-diffusion algorithm species may be a [`DiracState`],
//! which propagates as a single point (no spread is ever introduced).
//!
//! Noise is applied after the drift within a step, one Gaussian draw per
//! particle per step in fixed particle order, so trajectories are
//! deterministic for a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::energy::{grad_field_mu, grad_field_rho, EnergySpec};
use crate::error::{Error, Result};
use crate::measures::{Measure, ParticleEnsemble};
use crate::trajectory::{Observers, Trajectory};

/// State of the coupled particle system.
#[derive(Debug, Clone)]
pub struct SimState {
    /// Population ensemble.
    pub rho: ParticleEnsemble,
    /// Algorithm species: ensemble or Dirac point.
    pub mu: Measure,
    /// Current simulation time.
    pub time: f64,
    /// Generator state; advances with every step.
    pub rng: ChaCha8Rng,
}

impl SimState {
    /// Builds an initial state at t = 0 with a seeded generator.
    pub fn new(rho: ParticleEnsemble, mu: Measure, seed: u64) -> Result<Self> {
        if matches!(mu, Measure::Grid(_)) {
            return Err(Error::UnsupportedRepresentation(
                "particle simulation does not accept a grid species".into(),
            ));
        }
        Ok(Self { rho, mu, time: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) })
    }
}

/// Time step and freeze flags for [`step`].
#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    /// Euler–Maruyama time step.
    pub dt: f64,
    /// Hold the population fixed (frozen-opponent variants).
    pub freeze_rho: bool,
    /// Hold the algorithm fixed (fixed-classifier variants).
    pub freeze_mu: bool,
}

impl StepConfig {
    /// Plain step with nothing frozen.
    pub fn plain(dt: f64) -> Self {
        Self { dt, freeze_rho: false, freeze_mu: false }
    }
}

/// Largest curvature-type constant available from the spec's families,
/// floored at 1; the explicit scheme requires `dt <= 0.5 / this`.
pub fn stability_curvature(spec: &EnergySpec) -> f64 {
    let mut c: f64 = 1.0;
    c = c.max(spec.v1.upper().abs()).max(spec.v1.lambda().abs());
    c = c.max(spec.v2.upper().abs()).max(spec.v2.lambda().abs());
    for v in [
        spec.coupling.lambda_f1(),
        spec.coupling.lambda_f2(),
        spec.coupling.big_lambda1(spec.dim_rho),
        spec.coupling.cross_l(spec.dim_rho, spec.dim_mu),
        spec.w1.lambda_w(),
        spec.w2.lambda_w(),
    ]
    .into_iter()
    .flatten()
    {
        c = c.max(v.abs());
    }
    if let Some(extras) = &spec.application_extras {
        c = c.max(extras.kappa);
    }
    c
}

fn check_dt(spec: &EnergySpec, dt: f64) -> Result<()> {
    if dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    let bound = 0.5 / stability_curvature(spec);
    if dt > bound {
        return Err(Error::CflViolation {
            dt,
            bound,
            context: "explicit Euler-Maruyama curvature bound".into(),
        });
    }
    Ok(())
}

fn find_divergence(coords: &[f64], dim: usize, species: &str, time: f64) -> Result<()> {
    for (i, chunk) in coords.chunks(dim).enumerate() {
        if let Some((c, v)) = chunk.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Divergence {
                time,
                what: format!("{species} particle {i}, coordinate {c} became {v}"),
            });
        }
    }
    Ok(())
}

/// Advances the coupled system by one Euler–Maruyama step.
///
/// Both species' drifts are evaluated from the same time-level state.
pub fn step(spec: &EnergySpec, state: &SimState, cfg: StepConfig) -> Result<SimState> {
    check_dt(spec, cfg.dt)?;
    if spec.beta > 0.0 && matches!(state.mu, Measure::Dirac(_)) {
        return Err(Error::UnsupportedRepresentation(
            "a Dirac algorithm species requires beta = 0".into(),
        ));
    }
    let dt = cfg.dt;
    let rho_measure = Measure::Particles(state.rho.clone());
    let mut rng = state.rng.clone();
    let std = Normal::new(0.0, 1.0).expect("unit normal is valid");

    // Population update.
    let mut new_rho = state.rho.clone();
    if !cfg.freeze_rho {
        let d1 = state.rho.dim();
        let at: Vec<Vec<f64>> = (0..state.rho.len()).map(|i| state.rho.point(i).to_vec()).collect();
        let fields = grad_field_rho(spec, &rho_measure, &state.mu, &at)?;
        let sign = spec.mode.rho_flow_sign();
        let mut coords = state.rho.coords().to_vec();
        for (i, g) in fields.iter().enumerate() {
            for c in 0..d1 {
                coords[i * d1 + c] += dt * sign * g[c];
            }
        }
        if spec.alpha > 0.0 {
            let amp = (2.0 * spec.alpha * dt).sqrt();
            for v in coords.iter_mut() {
                *v += amp * std.sample(&mut rng);
            }
        }
        find_divergence(&coords, d1, "rho", state.time + dt)?;
        new_rho = ParticleEnsemble::from_flat(d1, coords, state.rho.weights().to_vec());
    }

    // Algorithm update (always descent), from the same time level.
    let new_mu = if cfg.freeze_mu {
        state.mu.clone()
    } else {
        match &state.mu {
            Measure::Particles(p) => {
                let d2 = p.dim();
                let at: Vec<Vec<f64>> = (0..p.len()).map(|j| p.point(j).to_vec()).collect();
                let fields = grad_field_mu(spec, &rho_measure, &state.mu, &at)?;
                let mut coords = p.coords().to_vec();
                for (j, g) in fields.iter().enumerate() {
                    for c in 0..d2 {
                        coords[j * d2 + c] -= dt * g[c];
                    }
                }
                if spec.beta > 0.0 {
                    let amp = (2.0 * spec.beta * dt).sqrt();
                    for v in coords.iter_mut() {
                        *v += amp * std.sample(&mut rng);
                    }
                }
                find_divergence(&coords, d2, "mu", state.time + dt)?;
                Measure::Particles(ParticleEnsemble::from_flat(d2, coords, p.weights().to_vec()))
            }
            Measure::Dirac(d) => {
                let fields =
                    grad_field_mu(spec, &rho_measure, &state.mu, &[d.point().to_vec()])?;
                let x: Vec<f64> =
                    d.point().iter().zip(&fields[0]).map(|(xi, g)| xi - dt * g).collect();
                find_divergence(&x, x.len(), "mu", state.time + dt)?;
                Measure::Dirac(crate::measures::DiracState::new(x)?)
            }
            Measure::Grid(_) => unreachable!("rejected at construction"),
        }
    };

    Ok(SimState { rho: new_rho, mu: new_mu, time: state.time + dt, rng })
}

/// Runs the time loop to `t_end`, recording snapshots and diagnostics every
/// `snapshot_every` time units (clamped to at least one step).
pub fn simulate(
    spec: &EnergySpec,
    state0: SimState,
    cfg: StepConfig,
    t_end: f64,
    snapshot_every: f64,
    observers: &Observers,
) -> Result<Trajectory> {
    if t_end <= state0.time {
        return Err(Error::invalid("t_end must exceed the initial time"));
    }
    let n_steps = ((t_end - state0.time) / cfg.dt).round().max(1.0) as usize;
    let stride = ((snapshot_every / cfg.dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    let mut state = state0;
    let snap = |state: &SimState, traj: &mut Trajectory| -> Result<()> {
        let rho = Measure::Particles(state.rho.clone());
        traj.snapshots.push(crate::trajectory::Snapshot {
            time: state.time,
            rho: rho.clone(),
            mu: state.mu.clone(),
        });
        observers.observe(spec, state.time, &rho, &state.mu, traj)
    };
    snap(&state, &mut traj)?;
    for k in 1..=n_steps {
        state = step(spec, &state, cfg).map_err(|e| match e {
            Error::Divergence { time, what } => Error::Divergence { time, what },
            other => other,
        })?;
        if k % stride == 0 || k == n_steps {
            snap(&state, &mut traj)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{CouplingFamily, KernelFamily, Mode, PotentialFamily};
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

    fn single(z: f64) -> ParticleEnsemble {
        ParticleEnsemble::equal_weights(vec![vec![z]]).unwrap()
    }

    fn dirac(x: f64) -> Measure {
        Measure::Dirac(DiracState::new(vec![x]).unwrap())
    }

    #[test]
    fn cooperative_descends_potential() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v1 = quad_potential(1.0);
        let s0 = SimState::new(single(1.0), dirac(0.0), 0).unwrap();
        let s1 = step(&spec, &s0, StepConfig::plain(0.1)).unwrap();
        assert!((s1.rho.point(0)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn competitive_also_descends_own_potential() {
        // Ascent on F_c = ... - R(rho) is descent on R(rho): the restoring
        // terms keep their sign across modes; only the coupling flips.
        let mut spec = spec_1d(Mode::Competitive);
        spec.v1 = quad_potential(1.0);
        let s0 = SimState::new(single(1.0), dirac(0.0), 0).unwrap();
        let s1 = step(&spec, &s0, StepConfig::plain(0.1)).unwrap();
        assert!((s1.rho.point(0)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn mode_flips_only_the_coupling() {
        let mut coop = spec_1d(Mode::Cooperative);
        coop.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        let mut comp = coop.clone();
        comp.mode = Mode::Competitive;
        let s0 = SimState::new(single(0.0), dirac(2.0), 0).unwrap();
        let a = step(&coop, &s0, StepConfig::plain(0.1)).unwrap();
        let b = step(&comp, &s0, StepConfig::plain(0.1)).unwrap();
        // coupling drift is -+ x_bar = -+2; dt = 0.1.
        assert!((a.rho.point(0)[0] + 0.2).abs() < 1e-15);
        assert!((b.rho.point(0)[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn negabs_kernel_repels() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.w1 = KernelFamily::NegAbs;
        let rho = ParticleEnsemble::equal_weights(vec![vec![-1.0], vec![1.0]]).unwrap();
        let s0 = SimState::new(rho, dirac(0.0), 0).unwrap();
        let s1 = step(&spec, &s0, StepConfig::plain(0.1)).unwrap();
        // Drift on the right particle: -(1/2)[grad W(0) + grad W(2)] = +0.5
        // (the self term is included and vanishes since grad W(0) = 0).
        assert!((s1.rho.point(0)[0] + 1.05).abs() < 1e-15);
        assert!((s1.rho.point(1)[0] - 1.05).abs() < 1e-15);
    }

    #[test]
    fn dirac_descends_regularizer() {
        let mut spec = spec_1d(Mode::Competitive);
        spec.application_extras = Some(crate::energy::ApplicationExtras {
            pi: single(0.0),
            kappa: 1.0,
            x0: vec![0.0],
        });
        let s0 = SimState::new(single(0.0), dirac(1.0), 0).unwrap();
        let traj = simulate(
            &spec,
            s0,
            StepConfig::plain(1e-3),
            5.0,
            0.5,
            &Observers::default(),
        )
        .unwrap();
        let last = traj.snapshots.last().unwrap();
        let x = last.mu.as_dirac().unwrap().point()[0];
        let exact = (-5.0_f64).exp();
        assert!((x - exact).abs() / exact < 0.01, "x = {x}, exact = {exact}");
    }

    #[test]
    fn zero_spec_leaves_state_unchanged() {
        let spec = spec_1d(Mode::Cooperative);
        let s0 = SimState::new(single(0.7), dirac(-0.3), 0).unwrap();
        let traj = simulate(
            &spec,
            s0.clone(),
            StepConfig::plain(0.1),
            1.0,
            0.1,
            &Observers::default(),
        )
        .unwrap();
        for s in &traj.snapshots {
            assert_eq!(s.rho.as_particles().unwrap().point(0)[0], 0.7);
            assert_eq!(s.mu.as_dirac().unwrap().point()[0], -0.3);
        }
    }

    #[test]
    fn ou_stationary_second_moment() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v1 = quad_potential(1.0);
        spec.alpha = 1.0;
        let rho = crate::measures::sample_gaussian(&[0.0], &[0.25], 10_000, 42).unwrap();
        let s0 = SimState::new(rho, dirac(0.0), 7).unwrap();
        let traj = simulate(
            &spec,
            s0,
            StepConfig::plain(2e-3),
            5.0,
            1.0,
            &Observers::default(),
        )
        .unwrap();
        let m2 = traj.snapshots.last().unwrap().rho.moment2();
        assert!((m2 - 1.0).abs() < 0.05, "moment2 = {m2}");
    }

    #[test]
    fn trajectories_are_deterministic() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v1 = quad_potential(1.0);
        spec.alpha = 0.5;
        let rho = crate::measures::sample_gaussian(&[1.0], &[1.0], 64, 3).unwrap();
        let run = || {
            let s0 = SimState::new(rho.clone(), dirac(0.0), 11).unwrap();
            simulate(&spec, s0, StepConfig::plain(0.01), 1.0, 0.2, &Observers::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.rho.as_particles().unwrap(), sb.rho.as_particles().unwrap());
        }
    }

    #[test]
    fn mean_field_error_shrinks_with_n() {
        // OU with variance relaxing toward 1: error vs the analytic second
        // moment shrinks as N grows (two-N check).
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v1 = quad_potential(1.0);
        spec.alpha = 1.0;
        let analytic = 1.0 + (0.25 - 1.0) * (-2.0_f64).exp(); // t = 1
        let run = |n: usize| {
            let rho = crate::measures::sample_gaussian(&[0.0], &[0.25], n, 9).unwrap();
            let s0 = SimState::new(rho, dirac(0.0), 5).unwrap();
            let traj = simulate(
                &spec,
                s0,
                StepConfig::plain(1e-3),
                1.0,
                1.0,
                &Observers::default(),
            )
            .unwrap();
            (traj.snapshots.last().unwrap().rho.moment2() - analytic).abs()
        };
        let err_small = run(200);
        let err_large = run(20_000);
        assert!(
            err_large < err_small,
            "error did not shrink: N=200 -> {err_small}, N=20000 -> {err_large}"
        );
        assert!(err_large < 0.05);
    }

    #[test]
    fn step_refuses_large_dt() {
        let mut spec = spec_1d(Mode::Cooperative);
        spec.v1 = quad_potential(4.0);
        let s0 = SimState::new(single(1.0), dirac(0.0), 0).unwrap();
        assert!(matches!(
            step(&spec, &s0, StepConfig::plain(0.2)),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn frozen_species_do_not_move() {
        let mut spec = spec_1d(Mode::Competitive);
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v2 = quad_potential(1.0);
        let s0 = SimState::new(single(1.0), dirac(2.0), 0).unwrap();
        let cfg = StepConfig { dt: 0.1, freeze_rho: true, freeze_mu: false };
        let s1 = step(&spec, &s0, cfg).unwrap();
        assert_eq!(s1.rho.point(0)[0], 1.0);
        assert!(s1.mu.as_dirac().unwrap().point()[0] != 2.0);
    }
}
