//! Optimal-transport metrics and exponential-rate fitting.
//!
//! Wasserstein-2 distances are computed exactly in the two regimes the
//! scenarios need:
//!
//! - **1D** (grids, weighted ensembles, Diracs): `W2^2 = I_0^1 |Qa(s) - Qb(s)|^2 ds`
//!   via quantile functions — piecewise-linear CDF inversion for grids,
//!   weighted step quantiles for ensembles — integrated over 10^4 uniform
//!   s-nodes, with an exact sorted-matching shortcut for equal-count
//!   equal-weight ensembles.
//! - **small ensembles in any dimension**: exact optimal assignment
//!   (Hungarian algorithm) on squared-Euclidean costs, N <= 512.
//!
//! The joint metric over pairs is `Wbar^2 = W2(rho, rho')^2 + W2(mu, mu')^2`.
//! Exponential rates are estimated by least squares on (t, log v).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{Measure, ParticleEnsemble};
#[cfg(test)]
use crate::measures::GridDensity;

/// Number of quantile quadrature nodes for 1D distances.
const QUANTILE_NODES: usize = 10_000;

/// A 1D quantile function: piecewise-linear for grids, step for ensembles.
enum Quantile {
    /// (cumulative mass at cell right edges, lo, h): linear inside cells.
    Grid { cum: Vec<f64>, lo: f64, h: f64 },
    /// Sorted support points with cumulative weights.
    Steps { xs: Vec<f64>, cum: Vec<f64> },
}

impl Quantile {
    fn of(m: &Measure) -> Result<Self> {
        if m.dim() != 1 {
            return Err(Error::invalid("1D Wasserstein distance requires 1D measures"));
        }
        match m {
            Measure::Grid(g) => {
                let h = g.cell_width();
                let mut cum = Vec::with_capacity(g.cells());
                let mut acc = 0.0;
                for v in g.values() {
                    acc += h * v;
                    cum.push(acc);
                }
                // Guard against rounding: force the last edge to exactly 1.
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                Ok(Quantile::Grid { cum, lo: g.lo(), h })
            }
            Measure::Particles(p) => {
                let mut idx: Vec<usize> = (0..p.len()).collect();
                idx.sort_by(|&a, &b| {
                    p.point(a)[0].partial_cmp(&p.point(b)[0]).expect("finite coordinates")
                });
                let mut xs = Vec::with_capacity(p.len());
                let mut cum = Vec::with_capacity(p.len());
                let mut acc = 0.0;
                for &i in &idx {
                    acc += p.weights()[i];
                    xs.push(p.point(i)[0]);
                    cum.push(acc);
                }
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                Ok(Quantile::Steps { xs, cum })
            }
            Measure::Dirac(d) => {
                Ok(Quantile::Steps { xs: vec![d.point()[0]], cum: vec![1.0] })
            }
        }
    }

    /// Q(s) for s in (0, 1).
    fn eval(&self, s: f64) -> f64 {
        match self {
            Quantile::Grid { cum, lo, h } => {
                let k = cum.partition_point(|&c| c < s);
                let k = k.min(cum.len() - 1);
                let c_prev = if k == 0 { 0.0 } else { cum[k - 1] };
                let mass = cum[k] - c_prev;
                let frac = if mass > 0.0 { (s - c_prev) / mass } else { 0.0 };
                lo + (k as f64 + frac.clamp(0.0, 1.0)) * h
            }
            Quantile::Steps { xs, cum } => {
                let k = cum.partition_point(|&c| c < s);
                xs[k.min(xs.len() - 1)]
            }
        }
    }
}

/// Exact 1D Wasserstein-2 distance between grids, 1D ensembles, or Diracs.
pub fn w2_1d(a: &Measure, b: &Measure) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::invalid("w2_1d requires both measures to be 1D"));
    }
    // Exact sorted matching when both are equal-count equal-weight ensembles.
    if let (Measure::Particles(pa), Measure::Particles(pb)) = (a, b) {
        if pa.len() == pb.len() && pa.equal_weighted() && pb.equal_weighted() {
            let sort = |p: &ParticleEnsemble| {
                let mut xs: Vec<f64> = (0..p.len()).map(|i| p.point(i)[0]).collect();
                xs.sort_by(|x, y| x.partial_cmp(y).expect("finite coordinates"));
                xs
            };
            let (xa, xb) = (sort(pa), sort(pb));
            let s: f64 = xa.iter().zip(&xb).map(|(x, y)| (x - y) * (x - y)).sum();
            return Ok((s / pa.len() as f64).sqrt());
        }
    }
    let (qa, qb) = (Quantile::of(a)?, Quantile::of(b)?);
    let m = QUANTILE_NODES as f64;
    let mut acc = 0.0;
    for i in 0..QUANTILE_NODES {
        let s = (i as f64 + 0.5) / m;
        let d = qa.eval(s) - qb.eval(s);
        acc += d * d;
    }
    Ok((acc / m).sqrt())
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// algorithm with row/column potentials, O(n^3)). Returns the total cost and
/// the column assigned to each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    debug_assert!(cost.iter().all(|r| r.len() == n));
    const INF: f64 = f64::INFINITY;
    // 1-based arrays; p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the root.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[i][assign[i]]).sum();
    (total, assign)
}

/// Exact Wasserstein-2 distance between equal-count equal-weight ensembles
/// (any dimension, N <= 512) via optimal assignment on squared costs.
pub fn w2_assignment(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::UnsupportedRepresentation(
            "w2_assignment requires equal particle counts".into(),
        ));
    }
    if !a.equal_weighted() || !b.equal_weighted() {
        return Err(Error::UnsupportedRepresentation(
            "w2_assignment requires equal weights".into(),
        ));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    if a.len() > 512 {
        return Err(Error::UnsupportedRepresentation(
            "w2_assignment is limited to N <= 512; histogram to a grid instead".into(),
        ));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    a.point(i)
                        .iter()
                        .zip(b.point(j))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum()
                })
                .collect()
        })
        .collect();
    let (total, _) = hungarian(&cost);
    Ok((total / n as f64).sqrt())
}

/// W2 between two measures, dispatching to the exact method available for
/// the pair's representations.
pub fn w2_auto(a: &Measure, b: &Measure) -> Result<f64> {
    match (a, b) {
        (Measure::Dirac(p), Measure::Dirac(q)) => {
            if p.dim() != q.dim() {
                return Err(Error::invalid("dimension mismatch"));
            }
            Ok(p.point()
                .iter()
                .zip(q.point())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt())
        }
        (Measure::Particles(p), Measure::Particles(q)) if p.dim() > 1 => w2_assignment(p, q),
        _ => w2_1d(a, b),
    }
}

/// Joint metric over measure pairs:
/// `Wbar = sqrt(W2(rho, rho')^2 + W2(mu, mu')^2)`.
pub fn wbar(rho_pair: (&Measure, &Measure), mu_pair: (&Measure, &Measure)) -> Result<f64> {
    let wr = w2_auto(rho_pair.0, rho_pair.1)?;
    let wm = w2_auto(mu_pair.0, mu_pair.1)?;
    Ok((wr * wr + wm * wm).sqrt())
}

/// Result of an exponential-rate fit `v(t) ~ exp(intercept - rate * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Negated slope of the log-linear fit.
    pub rate: f64,
    /// Intercept of the log-linear fit (log of the t=0 amplitude).
    pub intercept: f64,
    /// Coefficient of determination of the fit on log values.
    pub r_squared: f64,
    /// Time window actually used.
    pub window: (f64, f64),
}

/// Default fit window for a series: drops the first 10% of the horizon
/// (initial transient).
pub fn default_window(series: &[(f64, f64)]) -> (f64, f64) {
    let t0 = series.first().map(|p| p.0).unwrap_or(0.0);
    let t1 = series.last().map(|p| p.0).unwrap_or(0.0);
    (t0 + 0.1 * (t1 - t0), t1)
}

/// Least-squares exponential rate fit on (t, log v) over a window
/// (defaults to [`default_window`]).
pub fn fit_rate(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<RateFit> {
    let window = window.unwrap_or_else(|| default_window(series));
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidSeries(format!(
            "need at least 3 points in window [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| *v <= 0.0) {
        return Err(Error::InvalidSeries(format!(
            "nonpositive value {v} at t={t}; cannot fit on log scale"
        )));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.0 - mean_t)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularFit("all time points identical".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1.ln() - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let ss_tot: f64 = pts.iter().map(|p| (p.1.ln() - mean_y) * (p.1.ln() - mean_y)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1.ln() - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit { rate: -slope, intercept, r_squared, window })
}
