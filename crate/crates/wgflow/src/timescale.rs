//! Timescale-separated competitive dynamics.
//!
//! Two singular limits of the competitive flow, each replacing the fast
//! species by its instantaneous best response:
//!
//! - **Fast algorithm** ([`fast_algorithm_flow`]): the algorithm point
//!   equilibrates instantly, `x = b(rho) = argmin_x G(rho, x)` solved by
//!   Newton on the strongly convex inner objective; the population then
//!   takes one ascent step against `b(rho_t)`.
//! - **Fast population** ([`fast_population_flow`]): the population
//!   equilibrates instantly to the Gibbs best response `r(x)` (an
//!   Euler-Lagrange fixed point), and the algorithm point follows the
//!   envelope gradient ODE `dx/dt = -grad_x G(r(x), x)`.
//!
//! [`danskin_check`] verifies the envelope identity `grad G_d(x) =
//! (grad_x G(rho, x))|_{rho = r(x)}` against central finite differences of
//! the fully re-solved objective, with Richardson extrapolation in the step
//! size. All operations require competitive mode; the inner tolerances
//! (1e-10 gradient norm, 1e-8 Euler-Lagrange residual) sit one to two
//! orders below outer-flow discretization error so the separation is
//! numerically honest.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::energy::{
    convolve_value, eval_energy, grad_field_mu, integrate, rate_constants, EnergySpec, Mode,
};
use crate::error::{Error, Result};
use crate::fv_solver::{fv_step, gibbs_steady_state, FvState, Species};
use crate::measures::{DiracState, GridDensity, Measure};
use crate::particle_sim::{step, SimState, StepConfig};
use crate::trajectory::{Observers, Snapshot, Trajectory};

/// Solution of an inner best-response problem.
#[derive(Debug, Clone)]
pub enum BestResponse {
    /// Point best response b(rho) of the algorithm species.
    Point(Vec<f64>),
    /// Density best response r(x) of the population species.
    Density(GridDensity),
}

impl BestResponse {
    /// The point solution, or an error for a density solution.
    pub fn as_point(&self) -> Result<&[f64]> {
        match self {
            BestResponse::Point(p) => Ok(p),
            BestResponse::Density(_) => {
                Err(Error::invalid("best response is a density, not a point"))
            }
        }
    }

    /// The density solution, or an error for a point solution.
    pub fn as_density(&self) -> Result<&GridDensity> {
        match self {
            BestResponse::Density(d) => Ok(d),
            BestResponse::Point(_) => {
                Err(Error::invalid("best response is a point, not a density"))
            }
        }
    }
}

/// A priori norm bound on the point best response,
/// `|b(rho)|^2 <= |x0|^2 + 2 (a1 + a2) / kappa`.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    /// Squared norm of the computed best response.
    pub norm_sq: f64,
    /// The a priori bound.
    pub bound: f64,
}

impl BoundCheck {
    /// Whether the computed response respects the bound.
    pub fn holds(&self) -> bool {
        self.norm_sq <= self.bound + 1e-12
    }
}

/// Outcome of an inner best-response solve.
#[derive(Debug, Clone)]
pub struct BestResponseReport {
    /// The minimizer (point) or maximizer (density).
    pub argmin_or_argmax: BestResponse,
    /// Inner iterations used.
    pub iterations: usize,
    /// Final residual: gradient norm (point) or Euler-Lagrange sup residual
    /// (density).
    pub residual: f64,
    /// Populated when the growth constants a1, a2 exist for the coupling.
    pub bound_check: Option<BoundCheck>,
}

fn require_competitive(spec: &EnergySpec, what: &str) -> Result<()> {
    if spec.mode != Mode::Competitive {
        return Err(Error::invalid(format!(
            "{what} is defined for competitive mode only"
        )));
    }
    Ok(())
}

/// Entry-wise integral of the coupling's x-Hessians against a measure.
fn integrated_hess_x(spec: &EnergySpec, rho: &Measure, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut q = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            q[(i, j)] = integrate(rho, |z| spec.coupling.hess_x(z, x)[(i, j)]);
        }
    }
    if let Some(extras) = &spec.application_extras {
        let pi = Measure::Particles(extras.pi.clone());
        for i in 0..d {
            for j in 0..d {
                q[(i, j)] += integrate(&pi, |z| spec.coupling.hess_x_f2(z, x)[(i, j)]);
            }
        }
    }
    q
}

/// Solves the algorithm's inner problem `b(rho) = argmin_x G(rho, x)` by
/// Newton iteration with the analytic Hessian
/// `Q(rho) = kappa I + I hess_x f1 drho + I hess_x f2 dpi + hess V2`.
///
/// `warm` seeds the iteration (flows pass the previous step's solution);
/// otherwise the regularizer anchor x0 is used. Fails with a convexity
/// error if Q loses positive definiteness, and with an iteration-limit
/// error past 100 Newton steps.
pub fn best_response_x(
    spec: &EnergySpec,
    rho: &Measure,
    warm: Option<&[f64]>,
) -> Result<BestResponseReport> {
    require_competitive(spec, "best_response_x")?;
    let extras = spec
        .application_extras
        .as_ref()
        .ok_or_else(|| Error::invalid("best_response_x requires application extras (kappa > 0)"))?;
    if extras.kappa <= 0.0 {
        return Err(Error::invalid("best_response_x requires kappa > 0"));
    }
    let d = extras.x0.len();
    let mut x: Vec<f64> = warm.unwrap_or(&extras.x0).to_vec();
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 100;
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_ITERS {
        let mu = Measure::Dirac(DiracState::new(x.clone())?);
        let g = grad_field_mu(spec, rho, &mu, std::slice::from_ref(&x))?.remove(0);
        residual = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual < TOL {
            let bound_check = match (spec.coupling.a1(), spec.coupling.a2()) {
                (Some(a1), Some(a2)) => Some(BoundCheck {
                    norm_sq: x.iter().map(|v| v * v).sum(),
                    bound: extras.x0.iter().map(|v| v * v).sum::<f64>()
                        + 2.0 * (a1 + a2) / extras.kappa,
                }),
                _ => None,
            };
            return Ok(BestResponseReport {
                argmin_or_argmax: BestResponse::Point(x),
                iterations: it,
                residual,
                bound_check,
            });
        }
        let mut q = integrated_hess_x(spec, rho, &x) + spec.v2.hess(&x);
        for i in 0..d {
            q[(i, i)] += extras.kappa;
        }
        let chol = Cholesky::new(q).ok_or_else(|| {
            Error::Convexity("inner Hessian Q(rho) is not positive definite".into())
        })?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        for i in 0..d {
            x[i] -= step[i];
        }
    }
    Err(Error::IterationLimit {
        limit: MAX_ITERS,
        residual,
        context: "best_response_x Newton iteration".into(),
    })
}

/// Solves the population's inner problem: the Gibbs best response
/// `r(x) ∝ rho_tilde exp((f1(., x) - W1*r)/alpha)` with reference
/// `rho_tilde ∝ exp(-V1/alpha)`, i.e. the Euler-Lagrange fixed point of the
/// competitive rho-flow against a frozen algorithm point.
///
/// The residual reported is the Euler-Lagrange defect
/// `sup_k |alpha log rho_k + V1_k - f1_k + (W1*rho)_k - c|` with `c` the
/// rho-weighted mean, taken over cells carrying at least 1e-12 of the peak
/// density (emptier cells underflow the logarithm without affecting the
/// solution). Fails if the defect exceeds 1e-8.
pub fn best_response_rho(
    spec: &EnergySpec,
    x: &[f64],
    lo: f64,
    hi: f64,
    cells: usize,
) -> Result<BestResponseReport> {
    require_competitive(spec, "best_response_rho")?;
    if spec.alpha <= 0.0 {
        return Err(Error::invalid("best_response_rho requires alpha > 0"));
    }
    let opponent = Measure::Dirac(DiracState::new(x.to_vec())?);
    let gibbs = gibbs_steady_state(spec, Species::Rho, &opponent, lo, hi, cells)?;
    let mut rho = gibbs.density;
    let mut iterations = gibbs.iterations;

    // Euler-Lagrange defect of the current iterate, over cells carrying at
    // least 1e-12 of the peak density.
    let el_residual = |rho: &GridDensity| -> f64 {
        let rho_m = Measure::Grid(rho.clone());
        let peak = rho.values().iter().cloned().fold(0.0_f64, f64::max);
        let h = rho.cell_width();
        let mut defects = Vec::new();
        let mut weights = Vec::new();
        for k in 0..rho.cells() {
            let v = rho.values()[k];
            if v < 1e-12 * peak {
                continue;
            }
            let z = [rho.center(k)];
            let defect = spec.alpha * v.ln() + spec.v1.value(&z) - spec.coupling.f(&z, x)
                + convolve_value(&spec.w1, &z, &rho_m);
            defects.push(defect);
            weights.push(v * h);
        }
        let wsum: f64 = weights.iter().sum();
        let c: f64 = defects.iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>() / wsum;
        defects.iter().map(|d| (d - c).abs()).fold(0.0_f64, f64::max)
    };

    // The damped solver stops on a sup-norm change of the density, which
    // does not control the logarithmic defect in low-density cells. A few
    // undamped applications of the Gibbs map fix that: each one makes
    // log rho exact for the previous convolution, so the defect shrinks by
    // the (small) kernel contraction factor uniformly over cells.
    let mut residual = el_residual(&rho);
    let mut refinements = 0;
    while residual >= 1e-8 && refinements < 100 {
        let rho_m = Measure::Grid(rho.clone());
        let exponent: Vec<f64> = (0..rho.cells())
            .map(|k| {
                let z = [rho.center(k)];
                (spec.coupling.f(&z, x)
                    - spec.v1.value(&z)
                    - convolve_value(&spec.w1, &z, &rho_m))
                    / spec.alpha
            })
            .collect();
        let shift = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        rho = GridDensity::new(lo, hi, exponent.iter().map(|e| (e - shift).exp()).collect())?;
        refinements += 1;
        iterations += 1;
        residual = el_residual(&rho);
    }
    if residual >= 1e-8 {
        return Err(Error::IterationLimit {
            limit: iterations,
            residual,
            context: "best_response_rho Euler-Lagrange residual".into(),
        });
    }
    Ok(BestResponseReport {
        argmin_or_argmax: BestResponse::Density(rho),
        iterations,
        residual,
        bound_check: None,
    })
}

/// Records the point best response into diagnostic channels.
fn record_b(traj: &mut Trajectory, time: f64, b: &BestResponseReport) {
    let p = match &b.argmin_or_argmax {
        BestResponse::Point(p) => p,
        BestResponse::Density(_) => unreachable!("point best response expected"),
    };
    for (i, v) in p.iter().enumerate() {
        traj.record(time, &format!("b_{i}"), *v);
    }
    traj.record(time, "b_norm_sq", p.iter().map(|v| v * v).sum());
    if let Some(bc) = &b.bound_check {
        traj.record(time, "b_bound", bc.bound);
    }
}

/// Fast-algorithm flow: at each step the algorithm point is re-solved to
/// `b(rho_t)` (warm-started) and the population takes one ascent step
/// against it. The population may be a particle ensemble (Euler-Maruyama,
/// seeded) or a grid density (finite volume); `b` is recorded in the
/// `b_i` / `b_norm_sq` channels (plus `b_bound` when the a priori bound is
/// available), and `lambda_b` is recorded at t = 0 when the constants exist.
pub fn fast_algorithm_flow(
    spec: &EnergySpec,
    rho0: Measure,
    t_end: f64,
    dt: f64,
    snapshot_every: f64,
    seed: u64,
    observers: &Observers,
) -> Result<Trajectory> {
    require_competitive(spec, "fast_algorithm_flow")?;
    if t_end <= 0.0 || dt <= 0.0 {
        return Err(Error::invalid("t_end and dt must be positive"));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let stride = ((snapshot_every / dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    if let Some(lb) = rate_constants(spec).lambda_b {
        traj.record(0.0, "lambda_b", lb);
    }

    enum Carrier {
        Particles(SimState),
        Grid(FvState),
    }
    let mut carrier = match rho0 {
        Measure::Particles(p) => {
            let b0 = best_response_x(spec, &Measure::Particles(p.clone()), None)?;
            let mu = Measure::Dirac(DiracState::new(b0.argmin_or_argmax.as_point()?.to_vec())?);
            Carrier::Particles(SimState::new(p, mu, seed)?)
        }
        Measure::Grid(g) => {
            let b0 = best_response_x(spec, &Measure::Grid(g.clone()), None)?;
            let mu = Measure::Dirac(DiracState::new(b0.argmin_or_argmax.as_point()?.to_vec())?);
            Carrier::Grid(FvState::new(g, mu)?)
        }
        Measure::Dirac(_) => {
            return Err(Error::UnsupportedRepresentation(
                "fast_algorithm_flow population must be particles or a grid".into(),
            ));
        }
    };

    let mut warm: Option<Vec<f64>> = None;
    for k in 0..=n_steps {
        let time = k as f64 * dt;
        let rho = match &carrier {
            Carrier::Particles(s) => Measure::Particles(s.rho.clone()),
            Carrier::Grid(s) => Measure::Grid(s.rho.clone()),
        };
        let b = best_response_x(spec, &rho, warm.as_deref())?;
        let b_point = b.argmin_or_argmax.as_point()?.to_vec();
        if let Some(bc) = &b.bound_check {
            if !bc.holds() {
                return Err(Error::Divergence {
                    time,
                    what: format!(
                        "best response left its a priori ball: |b|^2 = {} > {}",
                        bc.norm_sq, bc.bound
                    ),
                });
            }
        }
        let mu = Measure::Dirac(DiracState::new(b_point.clone())?);
        if k % stride == 0 || k == n_steps {
            traj.snapshots.push(Snapshot { time, rho: rho.clone(), mu: mu.clone() });
            observers.observe(spec, time, &rho, &mu, &mut traj)?;
            record_b(&mut traj, time, &b);
        }
        if k == n_steps {
            break;
        }
        match &mut carrier {
            Carrier::Particles(s) => {
                s.mu = mu;
                let cfg = StepConfig { dt, freeze_rho: false, freeze_mu: true };
                *s = step(spec, s, cfg)?;
            }
            Carrier::Grid(s) => {
                s.mu = mu;
                *s = fv_step(spec, s, dt)?;
            }
        }
        warm = Some(b_point);
    }
    Ok(traj)
}

/// Fast-population flow: the envelope ODE `dx/dt = -grad_x G(r(x), x)` with
/// the Gibbs best response `r(x)` fully re-solved each step (explicit
/// Euler). Snapshots carry `(r(x_t), delta_{x_t})`; channels record the
/// coordinates `x_i`, `x_norm`, the envelope objective `g_d`, and
/// `lambda_d` at t = 0 when available.
pub fn fast_population_flow(
    spec: &EnergySpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    lo: f64,
    hi: f64,
    cells: usize,
    snapshot_every: f64,
) -> Result<Trajectory> {
    require_competitive(spec, "fast_population_flow")?;
    if t_end <= 0.0 || dt <= 0.0 {
        return Err(Error::invalid("t_end and dt must be positive"));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let stride = ((snapshot_every / dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    if let Some(ld) = rate_constants(spec).lambda_d {
        traj.record(0.0, "lambda_d", ld);
    }
    let mut x = x0.to_vec();
    for k in 0..=n_steps {
        let time = k as f64 * dt;
        let r = best_response_rho(spec, &x, lo, hi, cells)?;
        let rho = Measure::Grid(r.argmin_or_argmax.as_density()?.clone());
        let mu = Measure::Dirac(DiracState::new(x.clone())?);
        if k % stride == 0 || k == n_steps {
            traj.snapshots.push(Snapshot { time, rho: rho.clone(), mu: mu.clone() });
            for (i, v) in x.iter().enumerate() {
                traj.record(time, &format!("x_{i}"), *v);
            }
            traj.record(time, "x_norm", x.iter().map(|v| v * v).sum::<f64>().sqrt());
            traj.record(time, "g_d", eval_energy(spec, &rho, &mu)?);
        }
        if k == n_steps {
            break;
        }
        let g = grad_field_mu(spec, &rho, &mu, std::slice::from_ref(&x))?.remove(0);
        for i in 0..x.len() {
            x[i] -= dt * g[i];
            if !x[i].is_finite() {
                return Err(Error::Divergence {
                    time: time + dt,
                    what: format!("fast-population coordinate {i} became non-finite"),
                });
            }
        }
    }
    Ok(traj)
}

/// Result of an envelope-gradient check.
#[derive(Debug, Clone)]
pub struct DanskinReport {
    /// Analytic envelope gradient `(grad_x G(rho, x))|_{rho = r(x)}`.
    pub analytic: Vec<f64>,
    /// Richardson-extrapolated central finite differences of `G_d`.
    pub fd: Vec<f64>,
    /// `|analytic - fd| / max(|analytic|, 1e-12)` in the Euclidean norm.
    pub rel_err: f64,
}

/// Verifies the envelope identity by comparing the analytic gradient at
/// `x` with central finite differences of `G_d(y) = G(r(y), y)`, fully
/// re-solving `r` at each probe. Differences at `h` and `h/2` are combined
/// by Richardson extrapolation to cancel the O(h^2) term.
pub fn danskin_check(
    spec: &EnergySpec,
    x: &[f64],
    h: f64,
    lo: f64,
    hi: f64,
    cells: usize,
) -> Result<DanskinReport> {
    require_competitive(spec, "danskin_check")?;
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step h must be positive"));
    }
    let g_d = |y: &[f64]| -> Result<f64> {
        let r = best_response_rho(spec, y, lo, hi, cells)?;
        let rho = Measure::Grid(r.argmin_or_argmax.as_density()?.clone());
        eval_energy(spec, &rho, &Measure::Dirac(DiracState::new(y.to_vec())?))
    };
    let r = best_response_rho(spec, x, lo, hi, cells)?;
    let rho = Measure::Grid(r.argmin_or_argmax.as_density()?.clone());
    let mu = Measure::Dirac(DiracState::new(x.to_vec())?);
    let analytic = grad_field_mu(spec, &rho, &mu, &[x.to_vec()])?.remove(0);
    let mut fd = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let central = |step: f64| -> Result<f64> {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += step;
            minus[i] -= step;
            Ok((g_d(&plus)? - g_d(&minus)?) / (2.0 * step))
        };
        let d1 = central(h)?;
        let d2 = central(h / 2.0)?;
        fd.push((4.0 * d2 - d1) / 3.0);
    }
    let diff: f64 = analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    Ok(DanskinReport { analytic, fd, rel_err: diff / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{ApplicationExtras, CouplingFamily, KernelFamily, PotentialFamily};
    use crate::measures::ParticleEnsemble;
    use crate::ot_metrics::{fit_rate, w2_auto};

    fn extras(kappa: f64, x0: Vec<f64>, pi: Vec<Vec<f64>>) -> ApplicationExtras {
        ApplicationExtras {
            pi: ParticleEnsemble::equal_weights(pi).unwrap(),
            kappa,
            x0,
        }
    }

    fn base_spec() -> EnergySpec {
        EnergySpec {
            mode: Mode::Competitive,
            coupling: CouplingFamily::Bilinear {
                b: DMatrix::from_row_slice(1, 1, &[0.0]),
            },
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

    fn quad_v(curv: f64) -> PotentialFamily {
        PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[curv]),
        }
    }

    fn dirac_m(x: f64) -> Measure {
        Measure::Dirac(DiracState::new(vec![x]).unwrap())
    }

    #[test]
    fn point_response_quadratic_hand_solved() {
        // f1 = (x - z)^2 / 2, kappa = 1, x0 = 0, rho = delta_1:
        // stationarity (x - 1) + x = 0 gives b = 0.5.
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::QuadraticJoint {
            zz: DMatrix::from_row_slice(1, 1, &[1.0]),
            zx: DMatrix::from_row_slice(1, 1, &[-1.0]),
            xx: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        spec.application_extras = Some(extras(1.0, vec![0.0], vec![vec![0.0]]));
        let rep = best_response_x(&spec, &dirac_m(1.0), None).unwrap();
        let b = rep.argmin_or_argmax.as_point().unwrap();
        assert!((b[0] - 0.5).abs() < 1e-10);
        assert!(rep.residual < 1e-10);
        assert!(rep.iterations <= 3);
    }

    #[test]
    fn point_response_pure_regularizer() {
        let mut spec = base_spec();
        spec.application_extras = Some(extras(2.0, vec![3.0], vec![vec![0.0]]));
        let rep = best_response_x(&spec, &dirac_m(0.0), None).unwrap();
        assert!((rep.argmin_or_argmax.as_point().unwrap()[0] - 3.0).abs() < 1e-10);
        // Zero bilinear coupling admits a1 = a2 = 0: bound = |x0|^2.
        let bc = rep.bound_check.unwrap();
        assert!(bc.holds());
        assert!((bc.bound - 9.0).abs() < 1e-12);
    }

    #[test]
    fn point_response_logistic_matches_golden_section() {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::LogisticGame { a: 2.0, l: 0.0 };
        spec.application_extras = Some(extras(1.0, vec![0.0], vec![vec![1.0]]));
        let rep = best_response_x(&spec, &dirac_m(0.0), None).unwrap();
        let b = rep.argmin_or_argmax.as_point().unwrap()[0];
        // Independent derivative-free oracle on the same objective.
        let obj = |x: f64| {
            spec.coupling.f(&[0.0], &[x]) + spec.coupling.f2(&[1.0], &[x]) + 0.5 * x * x
        };
        let (mut lo, mut hi) = (-5.0, 5.0);
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if obj(m1) < obj(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let golden = 0.5 * (lo + hi);
        // Derivative-free search bottoms out at sqrt(machine eps) around a
        // quadratic minimum (~1.5e-8 here).
        assert!((b - golden).abs() < 1e-7, "newton {b} vs golden {golden}");
    }

    #[test]
    fn point_response_optimality_under_perturbation() {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::LogisticGame { a: 1.5, l: 0.0 };
        spec.application_extras = Some(extras(1.0, vec![0.2], vec![vec![1.0], vec![2.0]]));
        let rho = Measure::Particles(
            ParticleEnsemble::equal_weights(vec![vec![-0.3], vec![0.4], vec![1.1]]).unwrap(),
        );
        let rep = best_response_x(&spec, &rho, None).unwrap();
        let b = rep.argmin_or_argmax.as_point().unwrap().to_vec();
        let extras_ref = spec.application_extras.as_ref().unwrap();
        let pi = Measure::Particles(extras_ref.pi.clone());
        let obj = |x: &[f64]| {
            integrate(&rho, |z| spec.coupling.f(z, x))
                + integrate(&pi, |z| spec.coupling.f2(z, x))
                + 0.5 * extras_ref.kappa * (x[0] - extras_ref.x0[0]).powi(2)
        };
        let g0 = obj(&b);
        for s in [-1.0, 1.0] {
            let mut p = b.clone();
            p[0] += s * 1e-3;
            assert!(obj(&p) >= g0, "perturbation lowered the inner objective");
        }
    }

    #[test]
    fn missing_extras_is_rejected() {
        let spec = base_spec();
        assert!(best_response_x(&spec, &dirac_m(0.0), None).is_err());
    }

    #[test]
    fn density_response_gaussian_bilinear() {
        // f1 = z x, V1 = z^2/2, alpha = 1: r(x) ∝ exp(x z - z^2/2) = N(x, 1).
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        let rep = best_response_rho(&spec, &[0.7], -8.0, 8.0, 400).unwrap();
        let r = rep.argmin_or_argmax.as_density().unwrap();
        let exact = GridDensity::gaussian(0.7, 1.0, -8.0, 8.0, 400).unwrap();
        assert!(r.l1_distance(&exact).unwrap() < 1e-6);
        assert!(rep.residual < 1e-8);
    }

    #[test]
    fn density_response_at_zero_is_reference() {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        let rep = best_response_rho(&spec, &[0.0], -8.0, 8.0, 400).unwrap();
        let r = rep.argmin_or_argmax.as_density().unwrap();
        let tilde = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        assert!(r.l1_distance(&tilde).unwrap() < 1e-10);
    }

    #[test]
    fn density_response_kernel_resolution_stable() {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_v(1.0);
        spec.w1 = KernelFamily::Quadratic { strength: 0.4 };
        spec.alpha = 1.0;
        let coarse = best_response_rho(&spec, &[0.5], -8.0, 8.0, 400).unwrap();
        let fine = best_response_rho(&spec, &[0.5], -8.0, 8.0, 800).unwrap();
        let c = coarse.argmin_or_argmax.as_density().unwrap();
        let f = fine.argmin_or_argmax.as_density().unwrap();
        assert!((c.mean() - f.mean()).abs() < 1e-6);
        assert!((c.moment2() - f.moment2()).abs() < 1e-6);
    }

    #[test]
    fn density_response_optimality_under_mass_transfer() {
        // r(x) maximizes G(., x): moving mass between any two cells must not
        // increase the objective.
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        let rep = best_response_rho(&spec, &[0.4], -8.0, 8.0, 200).unwrap();
        let r = rep.argmin_or_argmax.as_density().unwrap().clone();
        let mu = dirac_m(0.4);
        let g_star = eval_energy(&spec, &Measure::Grid(r.clone()), &mu).unwrap();
        // Deterministic pseudo-random cell pairs.
        let mut state = 88172645463325252_u64;
        let mut rand_cell = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 200) as usize
        };
        for _ in 0..10 {
            let (i, j) = (rand_cell(), rand_cell());
            if i == j {
                continue;
            }
            let mut v = r.values().to_vec();
            let d = 1e-3 * v[i];
            v[i] -= d;
            v[j] += d;
            let pert = GridDensity::new(-8.0, 8.0, v).unwrap();
            let g = eval_energy(&spec, &Measure::Grid(pert), &mu).unwrap();
            assert!(g <= g_star + 1e-10, "transfer raised G: {g} > {g_star}");
        }
    }

    /// Competitive bilinear spec with V1 = z^2/2, alpha = 1, kappa = 1:
    /// lambda_b = 1 and lambda_d = 2 (the envelope gradient is (1+kappa)x).
    fn gaussian_bilinear_spec() -> EnergySpec {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        spec.application_extras = Some(extras(1.0, vec![0.0], vec![vec![0.0]]));
        spec
    }

    #[test]
    fn fast_algorithm_flow_contracts_at_lambda_b() {
        let spec = gaussian_bilinear_spec();
        assert_eq!(rate_constants(&spec).lambda_b, Some(1.0));
        let rho0 = GridDensity::gaussian(2.0, 0.25, -8.0, 8.0, 200).unwrap();
        let traj = fast_algorithm_flow(
            &spec,
            Measure::Grid(rho0),
            4.0,
            1e-3,
            0.25,
            0,
            &Observers::default(),
        )
        .unwrap();
        // Terminal Gibbs iterate as the limit reference.
        let b_series = traj.channel("b_0");
        let b_end = b_series.last().unwrap().1;
        let limit = best_response_rho(&spec, &[b_end], -8.0, 8.0, 200).unwrap();
        let rho_inf = Measure::Grid(limit.argmin_or_argmax.as_density().unwrap().clone());
        let series: Vec<(f64, f64)> = traj
            .snapshots
            .iter()
            .map(|s| (s.time, w2_auto(&s.rho, &rho_inf).unwrap()))
            .collect();
        let fit = fit_rate(&series[..series.len() - 1], None).unwrap();
        assert!(fit.rate >= 0.9, "fitted rate {} below 0.9 lambda_b", fit.rate);
    }

    #[test]
    fn fast_algorithm_flow_stationary_at_fixed_point() {
        let spec = gaussian_bilinear_spec();
        // Joint fixed point: b = -mean(rho), rho = Gibbs(b) => b = 0,
        // rho = N(0,1); the exponential-fitting flux is exactly
        // well-balanced there.
        let rho0 = best_response_rho(&spec, &[0.0], -8.0, 8.0, 200).unwrap();
        let rho0 = rho0.argmin_or_argmax.as_density().unwrap().clone();
        let reference = Measure::Grid(rho0.clone());
        let traj = fast_algorithm_flow(
            &spec,
            Measure::Grid(rho0),
            1.0,
            1e-3,
            0.5,
            0,
            &Observers::default(),
        )
        .unwrap();
        for s in &traj.snapshots {
            assert!(w2_auto(&s.rho, &reference).unwrap() < 1e-6);
        }
    }

    #[test]
    fn fast_population_flow_contracts_at_lambda_d() {
        let spec = gaussian_bilinear_spec();
        // lambda_d = kappa + lambda1 + lambda2 = 1 is a lower bound; the
        // Danskin covariance term adds another 1, so the true decay is 2x.
        let lambda_d = rate_constants(&spec).lambda_d.unwrap();
        assert_eq!(lambda_d, 1.0);
        let traj =
            fast_population_flow(&spec, &[1.5], 2.0, 0.01, -10.0, 10.0, 300, 0.1).unwrap();
        let xs = traj.channel("x_norm");
        let fit = fit_rate(&xs[..xs.len() - 1], None).unwrap();
        assert!(fit.rate >= 0.9 * lambda_d, "fitted rate {} below 0.9 lambda_d", fit.rate);
        assert!(fit.rate > 1.9, "expected the full envelope rate 2, got {}", fit.rate);
        // Envelope objective decays at twice the state rate.
        let gd = traj.channel("g_d");
        let g_inf = {
            let t = fast_population_flow(&spec, &[0.0], 0.01, 0.01, -10.0, 10.0, 300, 0.01)
                .unwrap();
            t.channel("g_d")[0].1
        };
        let series: Vec<(f64, f64)> = gd
            .iter()
            .map(|&(t, v)| (t, v - g_inf))
            .take_while(|&(_, v)| v > 1e-12)
            .collect();
        let efit = fit_rate(&series, None).unwrap();
        assert!(efit.rate >= 0.9 * 2.0 * lambda_d, "energy rate {} too low", efit.rate);
        assert!(efit.rate > 3.8, "expected energy rate 4, got {}", efit.rate);
    }

    #[test]
    fn fast_population_flow_fixed_point_is_stationary() {
        let spec = gaussian_bilinear_spec();
        // grad G_d(x) = (1 + kappa) x vanishes at x = 0 (up to grid
        // truncation of the Gibbs mean).
        let traj = fast_population_flow(&spec, &[0.0], 1.0, 0.01, -10.0, 10.0, 300, 0.1).unwrap();
        for (_, v) in traj.channel("x_norm") {
            assert!(v < 1e-8, "drifted to |x| = {v}");
        }
    }

    #[test]
    fn danskin_gaussian_bilinear_analytic() {
        let spec = gaussian_bilinear_spec();
        let rep = danskin_check(&spec, &[0.5], 1e-4, -10.0, 10.0, 400).unwrap();
        // grad G_d(x) = mean(N(x,1)) + kappa x = 2x = 1 at x = 0.5.
        assert!((rep.analytic[0] - 1.0).abs() < 1e-9);
        assert!(rep.rel_err < 1e-4, "rel_err = {}", rep.rel_err);
    }

    #[test]
    fn danskin_x_independent_coupling_is_exact() {
        let mut spec = base_spec();
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        spec.application_extras = Some(extras(1.0, vec![0.0], vec![vec![0.0]]));
        let rep = danskin_check(&spec, &[0.8], 1e-4, -8.0, 8.0, 300).unwrap();
        // Both sides are the pure regularizer gradient kappa x.
        assert!((rep.analytic[0] - 0.8).abs() < 1e-12);
        assert!(rep.rel_err < 1e-9, "rel_err = {}", rep.rel_err);
    }

    #[test]
    fn danskin_logistic_small_instance() {
        let mut spec = base_spec();
        spec.coupling = CouplingFamily::LogisticGame { a: 1.0, l: 0.1 };
        spec.v1 = quad_v(1.0);
        spec.alpha = 1.0;
        spec.application_extras = Some(extras(1.0, vec![0.0], vec![vec![1.0]]));
        let rep = danskin_check(&spec, &[0.3], 1e-3, -9.0, 9.0, 400).unwrap();
        assert!(rep.rel_err < 1e-3, "rel_err = {}", rep.rel_err);
    }

    #[test]
    fn cooperative_mode_is_rejected() {
        let mut spec = gaussian_bilinear_spec();
        spec.mode = Mode::Cooperative;
        assert!(best_response_x(&spec, &dirac_m(0.0), None).is_err());
        assert!(best_response_rho(&spec, &[0.0], -8.0, 8.0, 100).is_err());
        assert!(danskin_check(&spec, &[0.0], 1e-4, -8.0, 8.0, 100).is_err());
    }
}
