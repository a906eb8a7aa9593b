//! Closed family library for potentials, couplings, and interaction kernels.
//!
//! Every family carries analytic gradients and analytic convexity constants
//! (Hessian eigenvalue bounds), so theoretical rates are exact fields rather
//! than numerical estimates. Arbitrary user callbacks are deliberately not
//! supported: a black-box function cannot report its own convexity.
//!
//! Curvature conventions used throughout (1D statements generalize to
//! eigenvalue bounds):
//!
//! ```text
//! potential V:    lambda <= V'' <= Lambda
//! coupling  f:    lambda_f        = joint Hessian lower bound (cooperative)
//!                 lambda_f1       = inf(-d^2f/dz^2)   (competitive, z-side)
//!                 lambda_f2       = inf(+d^2f/dx^2)   (competitive, x-side)
//!                 big_lambda1     = sup(+d^2f1/dz^2)
//!                 cross_l         = sup ||d^2f/dzdx||
//!                 lambda1,lambda2 = inf d^2f1/dx^2, inf d^2f2/dx^2
//!                 a1, a2          = sup of -x.grad_x f_i over all (z,x)
//! kernel    W:    lambda_w <= W'' where a global bound exists
//! ```
//!
//! A constant is reported as `None` when the family genuinely does not admit
//! it (for example `a1` for a bilinear coupling, whose `x.grad_x f` is
//! unbounded below). The logistic game reports `lambda_f1 = lambda_f2 = 0`:
//! the sigmoid's curvature vanishes at infinity and the rate analysis of the
//! census setting uses the tail values, matching the expected-rate convention
//! of the source model (its transient curvature bound is still reported
//! honestly through `big_lambda1`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest absolute value of the sigmoid's second derivative s''(u),
/// attained at s = (3 +/- sqrt(3))/6: equals 1/(6*sqrt(3)).
pub const SIGMOID_D2_MAX: f64 = 0.096_225_044_864_937_63;

/// Logistic sigmoid.
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn sym_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// External potential families V(z).
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFamily {
    /// V = 0.
    Zero,
    /// V(z) = 0.5 (z - center)^T curvature (z - center).
    Quadratic { center: Vec<f64>, curvature: DMatrix<f64> },
    /// V(z) = -scale * log rho_tilde(z) for a diagonal Gaussian rho_tilde,
    /// including the normalization constant.
    NegLogGaussian { mean: Vec<f64>, cov_diag: Vec<f64>, scale: f64 },
    /// V(z) = sign * sigmoid(a z_1) + tilt * z_1 (1D classifier-style loss).
    LogisticLoss { a: f64, sign: f64, tilt: f64 },
}

impl PotentialFamily {
    /// Validates family parameters; returns the potential's dimension when
    /// it pins one (Zero and LogisticLoss work in any dimension).
    pub fn validate(&self) -> Result<Option<usize>> {
        match self {
            PotentialFamily::Zero => Ok(None),
            PotentialFamily::Quadratic { center, curvature } => {
                if curvature.nrows() != center.len() || !is_symmetric(curvature, 1e-12) {
                    return Err(Error::invalid(
                        "Quadratic potential needs a symmetric curvature matching the center dimension",
                    ));
                }
                Ok(Some(center.len()))
            }
            PotentialFamily::NegLogGaussian { mean, cov_diag, scale } => {
                if mean.len() != cov_diag.len() || mean.is_empty() {
                    return Err(Error::invalid("NegLogGaussian mean/cov_diag length mismatch"));
                }
                if cov_diag.iter().any(|&v| v <= 0.0) || *scale <= 0.0 {
                    return Err(Error::invalid("NegLogGaussian needs cov_diag > 0 and scale > 0"));
                }
                Ok(Some(mean.len()))
            }
            PotentialFamily::LogisticLoss { a, .. } => {
                if *a <= 0.0 {
                    return Err(Error::invalid("LogisticLoss slope a must be positive"));
                }
                Ok(None)
            }
        }
    }

    /// V(z).
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::Quadratic { center, curvature } => {
                let d = DVector::from_iterator(z.len(), z.iter().zip(center).map(|(a, b)| a - b));
                0.5 * (curvature * &d).dot(&d)
            }
            PotentialFamily::NegLogGaussian { mean, cov_diag, scale } => {
                let mut s = 0.0;
                for i in 0..mean.len() {
                    let d = z[i] - mean[i];
                    s += 0.5 * d * d / cov_diag[i]
                        + 0.5 * (2.0 * std::f64::consts::PI * cov_diag[i]).ln();
                }
                scale * s
            }
            PotentialFamily::LogisticLoss { a, sign, tilt } => {
                sign * sigmoid(a * z[0]) + tilt * z[0]
            }
        }
    }

    /// grad V(z).
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        match self {
            PotentialFamily::Zero => vec![0.0; z.len()],
            PotentialFamily::Quadratic { center, curvature } => {
                let d = DVector::from_iterator(z.len(), z.iter().zip(center).map(|(a, b)| a - b));
                (curvature * d).iter().copied().collect()
            }
            PotentialFamily::NegLogGaussian { mean, cov_diag, scale } => (0..mean.len())
                .map(|i| scale * (z[i] - mean[i]) / cov_diag[i])
                .collect(),
            PotentialFamily::LogisticLoss { a, sign, tilt } => {
                let s = sigmoid(a * z[0]);
                let mut g = vec![0.0; z.len()];
                g[0] = sign * a * s * (1.0 - s) + tilt;
                g
            }
        }
    }

    /// Hessian of V at `z` (d x d).
    pub fn hess(&self, z: &[f64]) -> DMatrix<f64> {
        let d = z.len();
        match self {
            PotentialFamily::Zero => DMatrix::zeros(d, d),
            PotentialFamily::Quadratic { curvature, .. } => curvature.clone(),
            PotentialFamily::NegLogGaussian { cov_diag, scale, .. } => {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    cov_diag.iter().map(|&v| scale / v),
                ))
            }
            PotentialFamily::LogisticLoss { a, sign, .. } => {
                let s = sigmoid(a * z[0]);
                let mut m = DMatrix::zeros(d, d);
                m[(0, 0)] = sign * a * a * s * (1.0 - s) * (1.0 - 2.0 * s);
                m
            }
        }
    }

    /// Lower Hessian eigenvalue bound (lambda).
    pub fn lambda(&self) -> f64 {
        match self {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::Quadratic { curvature, .. } => sym_eig_bounds(curvature).0,
            PotentialFamily::NegLogGaussian { cov_diag, scale, .. } => {
                scale * cov_diag.iter().fold(f64::INFINITY, |m, &v| m.min(1.0 / v))
            }
            PotentialFamily::LogisticLoss { a, sign, .. } => -sign.abs() * a * a * SIGMOID_D2_MAX,
        }
    }

    /// Upper Hessian eigenvalue bound (Lambda).
    pub fn upper(&self) -> f64 {
        match self {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::Quadratic { curvature, .. } => sym_eig_bounds(curvature).1,
            PotentialFamily::NegLogGaussian { cov_diag, scale, .. } => {
                scale * cov_diag.iter().fold(0.0_f64, |m, &v| m.max(1.0 / v))
            }
            PotentialFamily::LogisticLoss { a, sign, .. } => sign.abs() * a * a * SIGMOID_D2_MAX,
        }
    }
}

/// Coupling families f(z, x). The logistic game also carries a second payoff
/// f2 integrated against the fixed label-1 population in application
/// energies; all other families have f2 = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingFamily {
    /// f(z, x) = z^T B x.
    Bilinear { b: DMatrix<f64> },
    /// f(z, x) = 0.5 z^T zz z + z^T zx x + 0.5 x^T xx x.
    QuadraticJoint { zz: DMatrix<f64>, zx: DMatrix<f64>, xx: DMatrix<f64> },
    /// q(z, x) = sigmoid(a * sum(z - x)); f1 = 1 - q - l * sum(z); f2 = q.
    LogisticGame { a: f64, l: f64 },
}

impl CouplingFamily {
    /// Validates shapes and returns (d1, d2) when the family pins them.
    pub fn validate(&self) -> Result<Option<(usize, usize)>> {
        match self {
            CouplingFamily::Bilinear { b } => Ok(Some((b.nrows(), b.ncols()))),
            CouplingFamily::QuadraticJoint { zz, zx, xx } => {
                if !is_symmetric(zz, 1e-12) || !is_symmetric(xx, 1e-12) {
                    return Err(Error::invalid("QuadraticJoint blocks zz and xx must be symmetric"));
                }
                if zx.nrows() != zz.nrows() || zx.ncols() != xx.nrows() {
                    return Err(Error::invalid("QuadraticJoint cross block shape mismatch"));
                }
                Ok(Some((zz.nrows(), xx.nrows())))
            }
            CouplingFamily::LogisticGame { a, .. } => {
                if *a <= 0.0 {
                    return Err(Error::invalid("LogisticGame slope a must be positive"));
                }
                Ok(None)
            }
        }
    }

    fn q(&self, z: &[f64], x: &[f64]) -> f64 {
        match self {
            CouplingFamily::LogisticGame { a, .. } => {
                let u: f64 = z.iter().sum::<f64>() - x.iter().sum::<f64>();
                sigmoid(a * u)
            }
            _ => unreachable!("q is only defined for LogisticGame"),
        }
    }

    /// f(z, x) (the min-max payoff; f1 for the logistic game).
    pub fn f(&self, z: &[f64], x: &[f64]) -> f64 {
        match self {
            CouplingFamily::Bilinear { b } => {
                let mut s = 0.0;
                for i in 0..z.len() {
                    for j in 0..x.len() {
                        s += z[i] * b[(i, j)] * x[j];
                    }
                }
                s
            }
            CouplingFamily::QuadraticJoint { zz, zx, xx } => {
                let zv = DVector::from_column_slice(z);
                let xv = DVector::from_column_slice(x);
                0.5 * (zz * &zv).dot(&zv) + (zx * &xv).dot(&zv) + 0.5 * (xx * &xv).dot(&xv)
            }
            CouplingFamily::LogisticGame { l, .. } => {
                1.0 - self.q(z, x) - l * z.iter().sum::<f64>()
            }
        }
    }

    /// Secondary payoff f2(z, x): q for the logistic game, else 0.
    pub fn f2(&self, z: &[f64], x: &[f64]) -> f64 {
        match self {
            CouplingFamily::LogisticGame { .. } => self.q(z, x),
            _ => 0.0,
        }
    }

    /// grad_z f(z, x).
    pub fn grad_z(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        match self {
            CouplingFamily::Bilinear { b } => (0..z.len())
                .map(|i| (0..x.len()).map(|j| b[(i, j)] * x[j]).sum())
                .collect(),
            CouplingFamily::QuadraticJoint { zz, zx, .. } => {
                let zv = DVector::from_column_slice(z);
                let xv = DVector::from_column_slice(x);
                (zz * zv + zx * xv).iter().copied().collect()
            }
            CouplingFamily::LogisticGame { a, l } => {
                let q = self.q(z, x);
                let g = -a * q * (1.0 - q) - l;
                vec![g; z.len()]
            }
        }
    }

    /// grad_x f(z, x).
    pub fn grad_x(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        match self {
            CouplingFamily::Bilinear { b } => (0..x.len())
                .map(|j| (0..z.len()).map(|i| z[i] * b[(i, j)]).sum())
                .collect(),
            CouplingFamily::QuadraticJoint { zx, xx, .. } => {
                let zv = DVector::from_column_slice(z);
                let xv = DVector::from_column_slice(x);
                (zx.transpose() * zv + xx * xv).iter().copied().collect()
            }
            CouplingFamily::LogisticGame { a, .. } => {
                let q = self.q(z, x);
                let g = a * q * (1.0 - q);
                vec![g; x.len()]
            }
        }
    }

    /// grad_x f2(z, x).
    pub fn grad_x_f2(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        match self {
            CouplingFamily::LogisticGame { a, .. } => {
                let q = self.q(z, x);
                let g = -a * q * (1.0 - q);
                vec![g; x.len()]
            }
            _ => vec![0.0; x.len()],
        }
    }

    /// Hessian of f in x (d2 x d2).
    pub fn hess_x(&self, z: &[f64], x: &[f64]) -> DMatrix<f64> {
        match self {
            CouplingFamily::Bilinear { b } => DMatrix::zeros(b.ncols(), b.ncols()),
            CouplingFamily::QuadraticJoint { xx, .. } => xx.clone(),
            CouplingFamily::LogisticGame { a, .. } => {
                let q = self.q(z, x);
                let t = a * a * q * (1.0 - q) * (1.0 - 2.0 * q);
                DMatrix::from_element(x.len(), x.len(), t)
            }
        }
    }

    /// Hessian of f2 in x (d2 x d2).
    pub fn hess_x_f2(&self, z: &[f64], x: &[f64]) -> DMatrix<f64> {
        match self {
            CouplingFamily::LogisticGame { a, .. } => {
                let q = self.q(z, x);
                let t = -a * a * q * (1.0 - q) * (1.0 - 2.0 * q);
                DMatrix::from_element(x.len(), x.len(), t)
            }
            _ => DMatrix::zeros(x.len(), x.len()),
        }
    }

    /// Joint Hessian lower bound over (z, x) (cooperative constant).
    pub fn lambda_f_joint(&self, d1: usize, d2: usize) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { b } => Some(-spectral_norm(b)),
            CouplingFamily::QuadraticJoint { zz, zx, xx } => {
                let n = zz.nrows() + xx.nrows();
                let mut m = DMatrix::zeros(n, n);
                m.view_mut((0, 0), (zz.nrows(), zz.ncols())).copy_from(zz);
                m.view_mut((0, zz.nrows()), (zx.nrows(), zx.ncols())).copy_from(zx);
                m.view_mut((zz.nrows(), 0), (zx.ncols(), zx.nrows())).copy_from(&zx.transpose());
                m.view_mut((zz.nrows(), zz.nrows()), (xx.nrows(), xx.ncols())).copy_from(xx);
                Some(sym_eig_bounds(&m).0)
            }
            CouplingFamily::LogisticGame { a, .. } => {
                // Rank-one Hessian along [1..1, -1..-1]; second derivative
                // bounded by SIGMOID_D2_MAX.
                Some(-a * a * SIGMOID_D2_MAX * (d1 + d2) as f64)
            }
        }
    }

    /// inf eig(-hess_z f): concavity margin of the ascending species.
    pub fn lambda_f1(&self) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { .. } => Some(0.0),
            CouplingFamily::QuadraticJoint { zz, .. } => Some(-sym_eig_bounds(zz).1),
            // Tail convention: the sigmoid's curvature vanishes at infinity.
            CouplingFamily::LogisticGame { .. } => Some(0.0),
        }
    }

    /// inf eig(hess_x f): convexity margin of the descending species.
    pub fn lambda_f2(&self) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { .. } => Some(0.0),
            CouplingFamily::QuadraticJoint { xx, .. } => Some(sym_eig_bounds(xx).0),
            CouplingFamily::LogisticGame { .. } => Some(0.0),
        }
    }

    /// sup eig(hess_z f1): adverse curvature against the fast-algorithm flow.
    pub fn big_lambda1(&self, d1: usize) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { .. } => Some(0.0),
            CouplingFamily::QuadraticJoint { zz, .. } => Some(sym_eig_bounds(zz).1.max(0.0)),
            CouplingFamily::LogisticGame { a, .. } => {
                Some(a * a * SIGMOID_D2_MAX * d1 as f64)
            }
        }
    }

    /// sup of the mixed-derivative spectral norm ||hess_zx f||.
    pub fn cross_l(&self, d1: usize, d2: usize) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { b } => Some(spectral_norm(b)),
            CouplingFamily::QuadraticJoint { zx, .. } => Some(spectral_norm(zx)),
            CouplingFamily::LogisticGame { a, .. } => {
                Some(a * a * SIGMOID_D2_MAX * ((d1 * d2) as f64).sqrt())
            }
        }
    }

    /// inf eig(hess_x f1): convexity of the algorithm's primary payoff.
    pub fn lambda1(&self, d2: usize) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { .. } => Some(0.0),
            CouplingFamily::QuadraticJoint { xx, .. } => Some(sym_eig_bounds(xx).0),
            CouplingFamily::LogisticGame { a, .. } => {
                Some(-a * a * SIGMOID_D2_MAX * d2 as f64)
            }
        }
    }

    /// inf eig(hess_x f2): convexity of the secondary payoff.
    pub fn lambda2(&self, d2: usize) -> Option<f64> {
        match self {
            CouplingFamily::LogisticGame { a, .. } => {
                Some(-a * a * SIGMOID_D2_MAX * d2 as f64)
            }
            _ => Some(0.0),
        }
    }

    /// Loose growth constant a1 = sup(-x.grad_x f1), when finite.
    ///
    /// Bilinear and cross-coupled quadratic payoffs have x.grad_x f unbounded
    /// below over all (z, x), so they report `None`; a cross-free quadratic
    /// with positive semidefinite x-block admits a1 = 0.
    pub fn a1(&self) -> Option<f64> {
        match self {
            CouplingFamily::Bilinear { b } => {
                if b.iter().all(|&v| v == 0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            CouplingFamily::QuadraticJoint { zx, xx, .. } => {
                let cross_free = zx.iter().all(|&v| v == 0.0);
                if cross_free && sym_eig_bounds(xx).0 >= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            // x.grad_x f1 = a q (1-q) sum(x) is unbounded below near z = x.
            CouplingFamily::LogisticGame { .. } => None,
        }
    }

    /// Loose growth constant a2 = sup(-x.grad_x f2), when finite.
    pub fn a2(&self) -> Option<f64> {
        match self {
            CouplingFamily::LogisticGame { .. } => None,
            // f2 = 0 for the other families.
            _ => Some(0.0),
        }
    }
}

/// Symmetric interaction kernel families W(z) = w(|z|).
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// W = 0.
    Zero,
    /// W(z) = 0.5 * strength * |z|^2.
    Quadratic { strength: f64 },
    /// W(z) = -|z| (repulsive).
    NegAbs,
    /// W(z) = c1 exp(-|z|/l1) - c2 exp(-|z|/l2) (short-range repulsion,
    /// long-range attraction for c1 > c2, l1 < l2).
    Morse { c1: f64, c2: f64, l1: f64, l2: f64 },
}

impl KernelFamily {
    /// Validates kernel parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelFamily::Morse { l1, l2, .. } if *l1 <= 0.0 || *l2 <= 0.0 => {
                Err(Error::invalid("Morse length scales must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// True when the kernel is identically zero (pair loops are skipped).
    pub fn is_zero(&self) -> bool {
        matches!(self, KernelFamily::Zero)
            || matches!(self, KernelFamily::Quadratic { strength } if *strength == 0.0)
    }

    /// W(z).
    pub fn value(&self, z: &[f64]) -> f64 {
        let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        match self {
            KernelFamily::Zero => 0.0,
            KernelFamily::Quadratic { strength } => 0.5 * strength * r * r,
            KernelFamily::NegAbs => -r,
            KernelFamily::Morse { c1, c2, l1, l2 } => c1 * (-r / l1).exp() - c2 * (-r / l2).exp(),
        }
    }

    /// grad W(z); the radial derivative at the origin is resolved to 0
    /// (subgradient selection for NegAbs, symmetry for Morse).
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        match self {
            KernelFamily::Zero => vec![0.0; z.len()],
            KernelFamily::Quadratic { strength } => z.iter().map(|c| strength * c).collect(),
            KernelFamily::NegAbs => {
                if r == 0.0 {
                    vec![0.0; z.len()]
                } else {
                    z.iter().map(|c| -c / r).collect()
                }
            }
            KernelFamily::Morse { c1, c2, l1, l2 } => {
                if r == 0.0 {
                    vec![0.0; z.len()]
                } else {
                    let dw = -(c1 / l1) * (-r / l1).exp() + (c2 / l2) * (-r / l2).exp();
                    z.iter().map(|c| dw * c / r).collect()
                }
            }
        }
    }

    /// Lower Hessian bound lambda_W where it exists globally.
    pub fn lambda_w(&self) -> Option<f64> {
        match self {
            KernelFamily::Zero => Some(0.0),
            KernelFamily::Quadratic { strength } => Some(*strength),
            KernelFamily::NegAbs | KernelFamily::Morse { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..z.len())
            .map(|i| {
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[i] += h;
                zm[i] -= h;
                (f(&zp) - f(&zm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn quadratic_potential_gradient() {
        let v = PotentialFamily::Quadratic {
            center: vec![1.0, -2.0],
            curvature: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        let z = [0.3, 0.7];
        let g = v.grad(&z);
        let fd = fd_grad(|p| v.value(p), &z);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
        // Eigenvalues of [[2, 0.5], [0.5, 1]] are (3 +/- sqrt(2))/2.
        assert!((v.lambda() - (3.0 - 2.0_f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn neg_log_gaussian_constants() {
        let v = PotentialFamily::NegLogGaussian {
            mean: vec![54.0],
            cov_diag: vec![10.0],
            scale: 0.1,
        };
        assert!((v.lambda() - 0.01).abs() < 1e-15);
        let g = v.grad(&[57.0]);
        assert!((g[0] - 0.1 * 3.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_loss_gradient_matches_fd() {
        let v = PotentialFamily::LogisticLoss { a: 2.0, sign: 1.0, tilt: 0.06 };
        let z = [0.4];
        let g = v.grad(&z);
        let fd = fd_grad(|p| v.value(p), &z);
        assert!((g[0] - fd[0]).abs() < 1e-6);
        assert!(v.lambda() < 0.0 && v.upper() > 0.0);
    }

    #[test]
    fn bilinear_coupling_gradients() {
        let f = CouplingFamily::Bilinear { b: DMatrix::from_row_slice(1, 1, &[1.0]) };
        assert_eq!(f.f(&[2.0], &[3.0]), 6.0);
        assert_eq!(f.grad_z(&[2.0], &[3.0]), vec![3.0]);
        assert_eq!(f.grad_x(&[2.0], &[3.0]), vec![2.0]);
        assert_eq!(f.lambda_f_joint(1, 1), Some(-1.0));
        assert_eq!(f.lambda_f1(), Some(0.0));
        assert_eq!(f.a1(), None);
    }

    #[test]
    fn quadratic_joint_matches_fd() {
        let f = CouplingFamily::QuadraticJoint {
            zz: DMatrix::from_row_slice(1, 1, &[1.0]),
            zx: DMatrix::from_row_slice(1, 1, &[-1.0]),
            xx: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        // f = (z - x)^2 / 2
        assert!((f.f(&[2.0], &[0.5]) - 1.125).abs() < 1e-12);
        let gz = f.grad_z(&[2.0], &[0.5]);
        assert!((gz[0] - 1.5).abs() < 1e-12);
        let gx = f.grad_x(&[2.0], &[0.5]);
        assert!((gx[0] + 1.5).abs() < 1e-12);
        // Joint Hessian [[1,-1],[-1,1]] has eigenvalues {0, 2}.
        assert!((f.lambda_f_joint(1, 1).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_game_grad_x_value() {
        // grad_x q(0,0) = -a q(1-q) = -0.5 for a = 2.
        let f = CouplingFamily::LogisticGame { a: 2.0, l: 0.0 };
        let g = f.grad_x_f2(&[0.0], &[0.0]);
        assert!((g[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn logistic_game_grads_match_fd() {
        let f = CouplingFamily::LogisticGame { a: 2.0, l: 0.06 };
        let (z, x) = ([0.3], [-0.2]);
        let gz = f.grad_z(&z, &x);
        let fdz = fd_grad(|p| f.f(p, &x), &z);
        assert!((gz[0] - fdz[0]).abs() < 1e-6);
        let gx = f.grad_x(&z, &x);
        let fdx = fd_grad(|p| f.f(&z, p), &x);
        assert!((gx[0] - fdx[0]).abs() < 1e-6);
    }

    #[test]
    fn kernels_are_antisymmetric() {
        let kernels = [
            KernelFamily::Quadratic { strength: 0.7 },
            KernelFamily::NegAbs,
            KernelFamily::Morse { c1: 4.0, c2: 2.0, l1: 0.2, l2: 4.0 },
        ];
        for k in &kernels {
            for z in [[0.5, -1.0], [2.0, 0.0], [-0.1, 0.3]] {
                let g = k.grad(&z);
                let gm = k.grad(&[-z[0], -z[1]]);
                for (a, b) in g.iter().zip(&gm) {
                    assert!((a + b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn negabs_origin_subgradient_zero() {
        assert_eq!(KernelFamily::NegAbs.grad(&[0.0]), vec![0.0]);
    }

    #[test]
    fn morse_gradient_matches_fd() {
        let k = KernelFamily::Morse { c1: 4.0, c2: 2.0, l1: 0.2, l2: 4.0 };
        let z = [0.7, -0.4];
        let g = k.grad(&z);
        let fd = fd_grad(|p| k.value(p), &z);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
