//! Game energies over measure pairs and their first-variation gradient fields.
//!
//! A game is described declaratively by an [`EnergySpec`]: a coupling payoff
//! f(z, x), external potentials V1, V2, interaction kernels W1, W2, diffusion
//! strengths alpha, beta, and a mode. The two energies are
//!
//! ```text
//! cooperative:  F_a(rho, mu) = II f drho dmu + R(rho) + U(mu)
//! competitive:  F_c(rho, mu) = II f drho dmu - R(rho) + U(mu)
//! R(rho) = alpha H(rho) + 0.5 I (W1 * rho) drho + I V1 drho
//! U(mu)  = beta  H(mu)  + 0.5 I (W2 * mu) dmu  + I V2 dmu   (+ extras)
//! H(eta) = I eta log eta
//! ```
//!
//! In the cooperative mode both species descend F_a; in the competitive mode
//! rho ascends F_c while mu descends it (gradient descent-ascent). The first
//! variations are
//!
//! ```text
//! delta_rho F = I f(., x) dmu  +/- (V1 + W1 * rho + alpha log rho)
//! delta_mu  F = I f(z, .) drho  +  (V2 + W2 * mu  + beta  log mu) + extras
//! ```
//!
//! with `+` in cooperative and `-` in competitive mode (F_c carries -R(rho)).
//! Either way the rho-drift used by the integrators is
//! `flow_sign * grad delta_rho F` with flow_sign = -1 (descent) cooperative
//! and +1 (ascent) competitive, so the V1/W1/entropy terms always relax the
//! population toward its own Gibbs state and only the coupling term switches
//! between attraction to and repulsion from the opponent's preference.
//!
//! Application energies G(rho, x) (a population played against a point
//! algorithm) are expressed with `application_extras`: a fixed label-1
//! ensemble pi entering through the secondary payoff f2, and a quadratic
//! regularizer (kappa/2)|x - x0|^2 on the algorithm side.

pub mod families;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{GridDensity, Measure, ParticleEnsemble};
pub use families::{CouplingFamily, KernelFamily, PotentialFamily, SIGMOID_D2_MAX};

/// Game mode: who descends and who ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Both species descend F_a.
    Cooperative,
    /// rho ascends F_c, mu descends it (min-max).
    Competitive,
}

impl Mode {
    /// Sign of R(rho) inside the energy: +1 cooperative, -1 competitive.
    pub fn r_sign(self) -> f64 {
        match self {
            Mode::Cooperative => 1.0,
            Mode::Competitive => -1.0,
        }
    }

    /// Sign of `grad delta_rho F` in the rho-drift: -1 descent, +1 ascent.
    pub fn rho_flow_sign(self) -> f64 {
        match self {
            Mode::Cooperative => -1.0,
            Mode::Competitive => 1.0,
        }
    }
}

/// Fixed data of an application energy G(rho, x).
#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationExtras {
    /// Fixed label-1 population integrated against the secondary payoff f2.
    pub pi: ParticleEnsemble,
    /// Strength of the quadratic regularizer on the algorithm.
    pub kappa: f64,
    /// Regularizer anchor point.
    pub x0: Vec<f64>,
}

/// Full declarative description of a game energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    /// Cooperative or competitive coupling of the two flows.
    pub mode: Mode,
    /// Payoff f(z, x) between the species.
    pub coupling: CouplingFamily,
    /// External potential on the rho species.
    pub v1: PotentialFamily,
    /// External potential on the mu species.
    pub v2: PotentialFamily,
    /// Interaction kernel within the rho species.
    pub w1: KernelFamily,
    /// Interaction kernel within the mu species.
    pub w2: KernelFamily,
    /// Diffusion strength (entropy weight) on rho.
    pub alpha: f64,
    /// Diffusion strength on mu.
    pub beta: f64,
    /// rho dimension d1.
    pub dim_rho: usize,
    /// mu dimension d2.
    pub dim_mu: usize,
    /// Optional application-energy terms (pi, kappa, x0).
    pub application_extras: Option<ApplicationExtras>,
}

impl EnergySpec {
    /// Validates family parameters and dimensional consistency.
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid("diffusion strengths must be nonnegative"));
        }
        if self.dim_rho == 0 || self.dim_mu == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if let Some(d) = self.v1.validate()? {
            if d != self.dim_rho {
                return Err(Error::invalid("V1 dimension does not match dim_rho"));
            }
        }
        if let Some(d) = self.v2.validate()? {
            if d != self.dim_mu {
                return Err(Error::invalid("V2 dimension does not match dim_mu"));
            }
        }
        if let Some((d1, d2)) = self.coupling.validate()? {
            if d1 != self.dim_rho || d2 != self.dim_mu {
                return Err(Error::invalid("coupling dimensions do not match the species"));
            }
        }
        self.w1.validate()?;
        self.w2.validate()?;
        if let Some(extras) = &self.application_extras {
            if extras.kappa <= 0.0 {
                return Err(Error::invalid("application kappa must be positive"));
            }
            if extras.x0.len() != self.dim_mu {
                return Err(Error::invalid("application x0 dimension does not match dim_mu"));
            }
            if extras.pi.dim() != self.dim_rho {
                return Err(Error::invalid("application pi dimension does not match dim_rho"));
            }
        }
        Ok(())
    }
}

/// Theoretical exponential rates computable from the spec's family constants.
///
/// Each field is present only when every constituent constant exists for the
/// configured families and the rate is meaningful for the configured mode:
///
/// ```text
/// lambda_a = lambda_f + min(lambda_V1, lambda_V2)        (cooperative)
/// lambda_c = min(lambda_f1 + lambda_V1,
///                lambda_f2 + lambda_V2)                  (competitive)
/// lambda_b = lambda_V1 - Lambda1                         (fast algorithm)
/// lambda_d = kappa + lambda1 + lambda2                   (fast population)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct RateConstants {
    /// Cooperative joint-descent rate.
    pub lambda_a: Option<f64>,
    /// Competitive contraction rate.
    pub lambda_c: Option<f64>,
    /// Fast-algorithm (inner best response b(rho)) population rate.
    pub lambda_b: Option<f64>,
    /// Fast-population (inner best response r(x)) algorithm rate.
    pub lambda_d: Option<f64>,
}

/// Side rates of the competitive contraction:
/// (lambda_f1 + lambda_V1, lambda_f2 + lambda_V2). Useful when one species is
/// frozen and only the other side's rate is observable.
pub fn competitive_side_rates(spec: &EnergySpec) -> (Option<f64>, Option<f64>) {
    let rho_side = spec.coupling.lambda_f1().map(|l| l + spec.v1.lambda());
    let mu_side = spec.coupling.lambda_f2().map(|l| l + spec.v2.lambda());
    (rho_side, mu_side)
}

/// Computes all available theoretical rates for a spec.
pub fn rate_constants(spec: &EnergySpec) -> RateConstants {
    let mut rc = RateConstants::default();
    let lv1 = spec.v1.lambda();
    let lv2 = spec.v2.lambda();
    match spec.mode {
        Mode::Cooperative => {
            rc.lambda_a = spec
                .coupling
                .lambda_f_joint(spec.dim_rho, spec.dim_mu)
                .map(|lf| lf + lv1.min(lv2));
        }
        Mode::Competitive => {
            let (r, m) = competitive_side_rates(spec);
            rc.lambda_c = match (r, m) {
                (Some(a), Some(b)) => Some(a.min(b)),
                _ => None,
            };
        }
    }
    if let Some(extras) = &spec.application_extras {
        if spec.alpha > 0.0 {
            rc.lambda_b = spec.coupling.big_lambda1(spec.dim_rho).map(|l1| lv1 - l1);
        }
        let l1 = spec.coupling.lambda1(spec.dim_mu);
        let l2 = spec.coupling.lambda2(spec.dim_mu);
        rc.lambda_d = match (l1, l2) {
            (Some(a), Some(b)) => Some(extras.kappa + a + b),
            _ => None,
        };
    }
    rc
}

// ---------------------------------------------------------------------------
// Integration helpers over the three measure representations
// ---------------------------------------------------------------------------

/// Applies `f` to every support point of `m` with its weight and sums.
pub(crate) fn integrate(m: &Measure, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    match m {
        Measure::Particles(p) => {
            (0..p.len()).map(|i| p.weights()[i] * f(p.point(i))).sum()
        }
        Measure::Grid(g) => {
            let h = g.cell_width();
            (0..g.cells()).map(|k| h * g.values()[k] * f(&[g.center(k)])).sum()
        }
        Measure::Dirac(d) => f(d.point()),
    }
}

/// Weighted vector average of `f` over the support of `m`.
fn integrate_vec(m: &Measure, dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut add = |w: f64, v: Vec<f64>| {
        for (a, b) in acc.iter_mut().zip(&v) {
            *a += w * b;
        }
    };
    match m {
        Measure::Particles(p) => {
            for i in 0..p.len() {
                add(p.weights()[i], f(p.point(i)));
            }
        }
        Measure::Grid(g) => {
            let h = g.cell_width();
            for k in 0..g.cells() {
                add(h * g.values()[k], f(&[g.center(k)]));
            }
        }
        Measure::Dirac(d) => add(1.0, f(d.point())),
    }
    acc
}

/// Mean coupling gradient in z: I grad_z f(z, x) dmu(x).
///
/// Bilinear and quadratic-joint payoffs are linear in x, so the integral
/// collapses exactly to the opponent's mean — this keeps particle pair loops
/// O(N) for those families without changing any value.
pub(crate) fn coupling_mean_grad_z(c: &CouplingFamily, z: &[f64], mu: &Measure) -> Vec<f64> {
    match c {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            c.grad_z(z, &mu.mean())
        }
        CouplingFamily::LogisticGame { .. } => {
            integrate_vec(mu, z.len(), |x| c.grad_z(z, x))
        }
    }
}

/// Mean coupling gradient in x: I grad_x f(z, x) drho(z).
pub(crate) fn coupling_mean_grad_x(c: &CouplingFamily, x: &[f64], rho: &Measure) -> Vec<f64> {
    match c {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            c.grad_x(&rho.mean(), x)
        }
        CouplingFamily::LogisticGame { .. } => {
            integrate_vec(rho, x.len(), |z| c.grad_x(z, x))
        }
    }
}

/// Convolution value (W * m)(z) by direct sum/quadrature.
pub(crate) fn convolve_value(w: &KernelFamily, z: &[f64], m: &Measure) -> f64 {
    if w.is_zero() {
        return 0.0;
    }
    integrate(m, |y| {
        let d: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
        w.value(&d)
    })
}

/// Convolution gradient grad(W * m)(z) by direct sum/quadrature.
pub(crate) fn convolve_grad(w: &KernelFamily, z: &[f64], m: &Measure) -> Vec<f64> {
    if w.is_zero() {
        return vec![0.0; z.len()];
    }
    integrate_vec(m, z.len(), |y| {
        let d: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
        w.grad(&d)
    })
}

/// Entropy H = I eta log eta for a measure carrying diffusion.
fn entropy(m: &Measure, diffusion: f64, species: &str) -> Result<f64> {
    if diffusion == 0.0 {
        return Ok(0.0);
    }
    match m {
        Measure::Grid(g) => {
            let h = g.cell_width();
            Ok(h * g
                .values()
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>())
        }
        _ => Err(Error::UnsupportedRepresentation(format!(
            "{species} has diffusion {diffusion} but is not a grid density; \
             particle entropy is realized as Brownian noise in the integrator, \
             not as an energy term"
        ))),
    }
}

/// Double integral II f(z, x) drho dmu by direct nested sums.
fn double_coupling(c: &CouplingFamily, rho: &Measure, mu: &Measure) -> f64 {
    integrate(rho, |z| integrate(mu, |x| c.f(z, x)))
}

/// Self-interaction energy 0.5 II W(y - y') dm dm'.
fn self_interaction(w: &KernelFamily, m: &Measure) -> f64 {
    if w.is_zero() {
        return 0.0;
    }
    0.5 * integrate(m, |y| {
        integrate(m, |yp| {
            let d: Vec<f64> = y.iter().zip(yp).map(|(a, b)| a - b).collect();
            w.value(&d)
        })
    })
}

/// Evaluates the game energy F_a or F_c (per mode) on a measure pair.
///
/// Entropy terms require the corresponding measure to be a grid density;
/// asking for particle entropy is an unsupported-representation error.
pub fn eval_energy(spec: &EnergySpec, rho: &Measure, mu: &Measure) -> Result<f64> {
    let h_rho = entropy(rho, spec.alpha, "rho")?;
    let h_mu = entropy(mu, spec.beta, "mu")?;
    let r = spec.alpha * h_rho
        + self_interaction(&spec.w1, rho)
        + integrate(rho, |z| spec.v1.value(z));
    let mut u = spec.beta * h_mu
        + self_interaction(&spec.w2, mu)
        + integrate(mu, |x| spec.v2.value(x));
    if let Some(extras) = &spec.application_extras {
        let pi = Measure::Particles(extras.pi.clone());
        u += integrate(mu, |x| {
            integrate(&pi, |z| spec.coupling.f2(z, x))
                + 0.5
                    * extras.kappa
                    * x.iter().zip(&extras.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        });
    }
    Ok(double_coupling(&spec.coupling, rho, mu) + spec.mode.r_sign() * r + u)
}

/// Gradient of log density at the center of cell `k`, by central differences
/// of `log(max(v, floor))` (one-sided at the boundary cells).
pub(crate) fn grid_log_grad_at(g: &GridDensity, k: usize) -> f64 {
    const FLOOR: f64 = 1e-300;
    let h = g.cell_width();
    let lv = |i: usize| g.values()[i].max(FLOOR).ln();
    let n = g.cells();
    if n == 1 {
        0.0
    } else if k == 0 {
        (lv(1) - lv(0)) / h
    } else if k == n - 1 {
        (lv(n - 1) - lv(n - 2)) / h
    } else {
        (lv(k + 1) - lv(k - 1)) / (2.0 * h)
    }
}

fn grid_cell_of(g: &GridDensity, z: f64) -> Result<usize> {
    if z < g.lo() || z > g.hi() {
        return Err(Error::Extrapolation { point: z, lo: g.lo(), hi: g.hi() });
    }
    let k = ((z - g.lo()) / g.cell_width()).floor() as usize;
    Ok(k.min(g.cells() - 1))
}

/// Entropy drift term alpha * grad log rho at a query point, for grid rho;
/// zero (excluded, realized as noise) for particles and Diracs.
fn entropy_grad(rho: &Measure, alpha: f64, z: &[f64]) -> Result<Vec<f64>> {
    if alpha == 0.0 {
        return Ok(vec![0.0; z.len()]);
    }
    match rho {
        Measure::Grid(g) => {
            let k = grid_cell_of(g, z[0])?;
            Ok(vec![alpha * grid_log_grad_at(g, k)])
        }
        // Entropy on particles is realized exclusively as Brownian noise in
        // the integrator; no density is differentiated here.
        _ => Ok(vec![0.0; z.len()]),
    }
}

/// First-variation gradient field of the rho species at the query points:
/// `grad_z delta_rho F = I grad_z f dmu +/- (grad V1 + grad W1*rho + alpha grad log rho)`
/// with `+` cooperative, `-` competitive.
pub fn grad_field_rho(
    spec: &EnergySpec,
    rho: &Measure,
    mu: &Measure,
    at: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let s = spec.mode.r_sign();
    // For payoffs linear in the opponent the coupling average collapses to
    // the opponent's mean; hoist it so query loops stay O(1) per point.
    let mu_mean = match &spec.coupling {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            Some(mu.mean())
        }
        _ => None,
    };
    at.iter()
        .map(|z| {
            let mut g = match &mu_mean {
                Some(m) => spec.coupling.grad_z(z, m),
                None => coupling_mean_grad_z(&spec.coupling, z, mu),
            };
            let v = spec.v1.grad(z);
            let w = convolve_grad(&spec.w1, z, rho);
            let e = entropy_grad(rho, spec.alpha, z)?;
            for i in 0..g.len() {
                g[i] += s * (v[i] + w[i] + e[i]);
            }
            Ok(g)
        })
        .collect()
}

/// First-variation gradient field of the mu species (always descent sign):
/// `grad_x delta_mu F = I grad_x f drho + grad V2 + grad W2*mu + beta grad log mu`
/// plus, when application extras are present,
/// `I grad_x f2 dpi + kappa (x - x0)`.
pub fn grad_field_mu(
    spec: &EnergySpec,
    rho: &Measure,
    mu: &Measure,
    at: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let rho_mean = match &spec.coupling {
        CouplingFamily::Bilinear { .. } | CouplingFamily::QuadraticJoint { .. } => {
            Some(rho.mean())
        }
        _ => None,
    };
    let pi_measure = spec
        .application_extras
        .as_ref()
        .map(|e| Measure::Particles(e.pi.clone()));
    at.iter()
        .map(|x| {
            let mut g = match &rho_mean {
                Some(m) => spec.coupling.grad_x(m, x),
                None => coupling_mean_grad_x(&spec.coupling, x, rho),
            };
            let v = spec.v2.grad(x);
            let w = convolve_grad(&spec.w2, x, mu);
            let e = entropy_grad(mu, spec.beta, x)?;
            for i in 0..g.len() {
                g[i] += v[i] + w[i] + e[i];
            }
            if let Some(extras) = &spec.application_extras {
                let pi = pi_measure.as_ref().expect("hoisted with extras");
                let f2g = integrate_vec(pi, x.len(), |z| spec.coupling.grad_x_f2(z, x));
                for i in 0..g.len() {
                    g[i] += f2g[i] + extras.kappa * (x[i] - extras.x0[i]);
                }
            }
            Ok(g)
        })
        .collect()
}

/// Dissipation functional: weighted L2 norms of both velocity fields,
/// `D = I |grad delta_rho F|^2 drho + I |grad delta_mu F|^2 dmu`.
pub fn dissipation(spec: &EnergySpec, rho: &Measure, mu: &Measure) -> Result<f64> {
    let norm2 = |grads: Vec<Vec<f64>>| -> Vec<f64> {
        grads.iter().map(|g| g.iter().map(|c| c * c).sum()).collect()
    };
    let support = |m: &Measure| -> Vec<Vec<f64>> {
        match m {
            Measure::Particles(p) => (0..p.len()).map(|i| p.point(i).to_vec()).collect(),
            Measure::Grid(g) => (0..g.cells()).map(|k| vec![g.center(k)]).collect(),
            Measure::Dirac(d) => vec![d.point().to_vec()],
        }
    };
    let weights = |m: &Measure| -> Vec<f64> {
        match m {
            Measure::Particles(p) => p.weights().to_vec(),
            Measure::Grid(g) => {
                let h = g.cell_width();
                g.values().iter().map(|v| h * v).collect()
            }
            Measure::Dirac(_) => vec![1.0],
        }
    };
    let rho_n = norm2(grad_field_rho(spec, rho, mu, &support(rho))?);
    let mu_n = norm2(grad_field_mu(spec, rho, mu, &support(mu))?);
    let d_rho: f64 = weights(rho).iter().zip(&rho_n).map(|(w, n)| w * n).sum();
    let d_mu: f64 = weights(mu).iter().zip(&mu_n).map(|(w, n)| w * n).sum();
    Ok(d_rho + d_mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiracState;
    use nalgebra::DMatrix;

    fn dirac(p: &[f64]) -> Measure {
        Measure::Dirac(DiracState::new(p.to_vec()).unwrap())
    }

    fn bilinear_1d(c: f64) -> CouplingFamily {
        CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[c]) }
    }

    fn base_spec(mode: Mode) -> EnergySpec {
        EnergySpec {
            mode,
            coupling: bilinear_1d(1.0),
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

    #[test]
    fn energy_dirac_zero() {
        let spec = base_spec(Mode::Competitive);
        let e = eval_energy(&spec, &dirac(&[0.0]), &dirac(&[1.0])).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_dirac_with_v2() {
        let mut spec = base_spec(Mode::Competitive);
        spec.v2 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        let e = eval_energy(&spec, &dirac(&[1.0]), &dirac(&[1.0])).unwrap();
        assert!((e - 1.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_of_gaussian_grid() {
        let mut spec = base_spec(Mode::Cooperative);
        spec.coupling = bilinear_1d(0.0);
        spec.alpha = 1.0;
        let g = Measure::Grid(GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap());
        let e = eval_energy(&spec, &g, &dirac(&[0.0])).unwrap();
        let exact = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((e - exact).abs() < 1e-3, "entropy = {e}, exact = {exact}");
    }

    #[test]
    fn entropy_on_particles_is_error() {
        let mut spec = base_spec(Mode::Cooperative);
        spec.alpha = 1.0;
        let p = Measure::Particles(
            ParticleEnsemble::equal_weights(vec![vec![0.0], vec![1.0]]).unwrap(),
        );
        assert!(matches!(
            eval_energy(&spec, &p, &dirac(&[0.0])),
            Err(Error::UnsupportedRepresentation(_))
        ));
    }

    #[test]
    fn grad_field_rho_pure_potential() {
        let mut spec = base_spec(Mode::Cooperative);
        spec.coupling = bilinear_1d(0.0);
        spec.v1 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        let g = grad_field_rho(&spec, &dirac(&[3.0]), &dirac(&[0.0]), &[vec![3.0]]).unwrap();
        assert!((g[0][0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn grad_field_rho_competitive_coupling_positive() {
        // Competitive mode: coupling contributes +grad_z I f dmu = x_bar = 2.
        let spec = base_spec(Mode::Competitive);
        let g = grad_field_rho(&spec, &dirac(&[0.0]), &dirac(&[2.0]), &[vec![0.0]]).unwrap();
        assert!((g[0][0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mode_flip_changes_only_restoring_terms() {
        // With both a coupling and a potential present, flipping the mode
        // flips the sign of the V1-part relative to the coupling part.
        let mut coop = base_spec(Mode::Cooperative);
        coop.v1 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        let mut comp = coop.clone();
        comp.mode = Mode::Competitive;
        let rho = dirac(&[3.0]);
        let mu = dirac(&[2.0]);
        let gc = grad_field_rho(&coop, &rho, &mu, &[vec![3.0]]).unwrap();
        let gk = grad_field_rho(&comp, &rho, &mu, &[vec![3.0]]).unwrap();
        // coupling part = 2 in both; potential part = 3 with sign +/-.
        assert!((gc[0][0] - 5.0).abs() < 1e-15);
        assert!((gk[0][0] - (2.0 - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn grad_field_rho_negabs_symmetric() {
        let mut spec = base_spec(Mode::Cooperative);
        spec.coupling = bilinear_1d(0.0);
        spec.w1 = KernelFamily::NegAbs;
        let rho = Measure::Particles(
            ParticleEnsemble::equal_weights(vec![vec![-1.0], vec![1.0]]).unwrap(),
        );
        let g = grad_field_rho(&spec, &rho, &dirac(&[0.0]), &[vec![0.0]]).unwrap();
        assert_eq!(g[0][0], 0.0);
    }

    #[test]
    fn grad_field_mu_regularizer() {
        let mut spec = base_spec(Mode::Competitive);
        spec.coupling = bilinear_1d(0.0);
        spec.application_extras = Some(ApplicationExtras {
            pi: ParticleEnsemble::equal_weights(vec![vec![0.0]]).unwrap(),
            kappa: 1.0,
            x0: vec![0.0],
        });
        let g = grad_field_mu(&spec, &dirac(&[0.0]), &dirac(&[5.0]), &[vec![5.0]]).unwrap();
        assert!((g[0][0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn grad_field_mu_coupling_from_rho() {
        let spec = base_spec(Mode::Competitive);
        let g = grad_field_mu(&spec, &dirac(&[3.0]), &dirac(&[0.0]), &[vec![0.5]]).unwrap();
        assert!((g[0][0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn dissipation_at_dirac_minimizer() {
        let mut spec = base_spec(Mode::Competitive);
        spec.coupling = bilinear_1d(0.0);
        spec.v2 = PotentialFamily::Quadratic {
            center: vec![2.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        let d = dissipation(&spec, &dirac(&[0.0]), &dirac(&[2.0])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn dissipation_of_gibbs_state_small() {
        // N(0,1) is the exact Gibbs state of V1 = z^2/2 with alpha = 1.
        let mut spec = base_spec(Mode::Cooperative);
        spec.coupling = bilinear_1d(0.0);
        spec.v1 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        spec.alpha = 1.0;
        let g = Measure::Grid(GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap());
        let d = dissipation(&spec, &g, &dirac(&[0.0])).unwrap();
        assert!(d >= 0.0);
        assert!(d < 1e-4, "dissipation = {d}");
    }

    #[test]
    fn rate_constants_quadratic_competitive() {
        let mut spec = base_spec(Mode::Competitive);
        spec.coupling = CouplingFamily::QuadraticJoint {
            zz: DMatrix::from_row_slice(1, 1, &[-1.0]),
            zx: DMatrix::from_row_slice(1, 1, &[0.0]),
            xx: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        spec.v1 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[0.5]),
        };
        spec.v2 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[0.5]),
        };
        // lambda_f1 = -sup(zz) = 1, lambda_f2 = inf(xx) = 1.
        let rc = rate_constants(&spec);
        assert!((rc.lambda_c.unwrap() - 1.5).abs() < 1e-12);
        assert!(rc.lambda_a.is_none());
    }

    #[test]
    fn rate_constants_census_setup() {
        let mut spec = base_spec(Mode::Competitive);
        spec.coupling = CouplingFamily::LogisticGame { a: 2.0, l: 0.06 };
        spec.v1 = PotentialFamily::NegLogGaussian {
            mean: vec![54.0],
            cov_diag: vec![10.0],
            scale: 0.1,
        };
        spec.alpha = 0.1;
        let (rho_side, _) = competitive_side_rates(&spec);
        assert!((rho_side.unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rate_constants_kernels_do_not_enter() {
        let mut spec = base_spec(Mode::Competitive);
        spec.v1 = PotentialFamily::Quadratic {
            center: vec![0.0],
            curvature: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        spec.v2 = spec.v1.clone();
        let rc_plain = rate_constants(&spec);
        spec.w1 = KernelFamily::Morse { c1: 4.0, c2: 2.0, l1: 0.2, l2: 4.0 };
        let rc_kernel = rate_constants(&spec);
        assert_eq!(spec.w1.lambda_w(), None);
        assert_eq!(rc_plain.lambda_c, rc_kernel.lambda_c);
    }
}
