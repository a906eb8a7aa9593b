//! Measure representations: weighted particle ensembles, 1D cell-averaged
//! grid densities, and Dirac point states.
//!
//! These are the state objects every solver and diagnostic operates on.
//! Particle ensembles live in any dimension; grid densities are 1D (the
//! finite-volume solver is 1D by design). All types are immutable value
//! objects after construction and carry no hidden RNG state.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Weighted point cloud representing one species' measure.
///
/// Coordinates are stored flat (`n * dim` reals, point-major) for cache
/// locality in pair loops. Weights are strictly positive and sum to one;
/// zero-weight particles are dropped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble from points and weights, normalizing the weights.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("ensemble must contain at least one point"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("points must have dimension >= 1"));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        let mut kept = Vec::with_capacity(weights.len());
        for (p, &w) in points.iter().zip(&weights) {
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "point of length {} in ensemble of dimension {dim}",
                    p.len()
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("weight {w} is not a finite nonnegative real")));
            }
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("non-finite coordinate in ensemble"));
            }
            if w > 0.0 {
                coords.extend_from_slice(p);
                kept.push(w);
            }
        }
        if kept.is_empty() {
            return Err(Error::invalid("all weights are zero"));
        }
        let total: f64 = kept.iter().sum();
        for w in &mut kept {
            *w /= total;
        }
        Ok(Self { dim, coords, weights: kept })
    }

    /// Equal-weight ensemble from a point list.
    pub fn equal_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    /// Internal constructor from flat coordinates (already validated).
    pub(crate) fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), dim * weights.len());
        Self { dim, coords, weights }
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the ensemble has no particles (construction forbids this).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of particle `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat coordinate storage (point-major).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals 1/N to within 1e-12.
    pub fn equal_weighted(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - w0).abs() <= 1e-12)
    }

    /// Weighted mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, &w) in self.weights.iter().enumerate() {
            for (mj, &c) in m.iter_mut().zip(self.point(i)) {
                *mj += w * c;
            }
        }
        m
    }

    /// Weighted second moment about the origin: sum of w_i * ||z_i||^2.
    pub fn moment2(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| w * self.point(i).iter().map(|c| c * c).sum::<f64>())
            .sum()
    }

    /// Copy of the ensemble translated by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::invalid("shift dimension mismatch"));
        }
        let mut coords = self.coords.clone();
        for chunk in coords.chunks_exact_mut(self.dim) {
            for (c, &s) in chunk.iter_mut().zip(shift) {
                *c += s;
            }
        }
        Ok(Self { dim: self.dim, coords, weights: self.weights.clone() })
    }

    /// Serializes to CSV, one row per particle: coordinates then weight.
    ///
    /// Floats use shortest round-trip formatting, so parsing the output
    /// reproduces the ensemble bit-for-bit.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            for c in self.point(i) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{}\n", self.weights[i]));
        }
        out
    }

    /// Parses the CSV format produced by [`ParticleEnsemble::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    what: "ensemble csv".into(),
                    message: format!("line {}: expected at least 2 fields", lineno + 1),
                });
            }
            let mut row = Vec::with_capacity(fields.len() - 1);
            for f in &fields[..fields.len() - 1] {
                row.push(parse_f64(f, lineno)?);
            }
            weights.push(parse_f64(fields[fields.len() - 1], lineno)?);
            points.push(row);
        }
        Self::new(points, weights)
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        what: "csv float".into(),
        message: format!("line {}: {e}", lineno + 1),
    })
}

/// 1D cell-averaged nonnegative density on a uniform grid, unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl GridDensity {
    /// Builds a grid density, normalizing `values` to unit mass.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("invalid domain [{lo}, {hi}]")));
        }
        if values.is_empty() {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("grid values must be finite and nonnegative"));
        }
        let mut g = Self { lo, hi, values };
        let mass = g.mass();
        if mass <= 0.0 {
            return Err(Error::invalid("grid density has zero mass"));
        }
        for v in &mut g.values {
            *v /= mass;
        }
        Ok(g)
    }

    /// Grid projection of a Gaussian N(mean, var) by midpoint evaluation,
    /// normalized on the truncated domain.
    pub fn gaussian(mean: f64, var: f64, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if var <= 0.0 {
            return Err(Error::invalid("variance must be positive"));
        }
        let h = (hi - lo) / cells as f64;
        let values: Vec<f64> = (0..cells)
            .map(|k| {
                let c = lo + (k as f64 + 0.5) * h;
                (-(c - mean) * (c - mean) / (2.0 * var)).exp()
            })
            .collect();
        Self::new(lo, hi, values)
    }

    /// Left domain edge.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    /// Right domain edge.
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    /// Cell width h.
    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.values.len() as f64
    }

    /// Center of cell k.
    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.cell_width()
    }

    /// Cell-average values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass h * sum(values).
    pub fn mass(&self) -> f64 {
        self.cell_width() * self.values.iter().sum::<f64>()
    }

    /// Second moment about the origin by midpoint quadrature.
    pub fn moment2(&self) -> f64 {
        let h = self.cell_width();
        h * self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.center(k) * self.center(k))
            .sum::<f64>()
    }

    /// Weighted mean by midpoint quadrature.
    pub fn mean(&self) -> f64 {
        let h = self.cell_width();
        h * self.values.iter().enumerate().map(|(k, v)| v * self.center(k)).sum::<f64>()
    }

    /// L1 distance to another density on the same grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::invalid("L1 distance requires identical grids"));
        }
        let h = self.cell_width();
        Ok(h * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
    }

    /// True when two densities share lo, hi, and cell count exactly.
    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.cells() == other.cells()
    }

    /// Serializes to CSV: header row `lo,hi,cells`, then one value per row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},{}\n", self.lo, self.hi, self.cells());
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    /// Parses the CSV format produced by [`GridDensity::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse {
            what: "grid csv".into(),
            message: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                what: "grid csv".into(),
                message: "header must be lo,hi,cells".into(),
            });
        }
        let lo = parse_f64(fields[0], 0)?;
        let hi = parse_f64(fields[1], 0)?;
        let cells: usize = fields[2].trim().parse().map_err(|e| Error::Parse {
            what: "grid csv".into(),
            message: format!("bad cell count: {e}"),
        })?;
        let values: Result<Vec<f64>> = lines.map(|l| parse_f64(l, 0)).collect();
        let values = values?;
        if values.len() != cells {
            return Err(Error::Parse {
                what: "grid csv".into(),
                message: format!("expected {cells} values, found {}", values.len()),
            });
        }
        // Bypass the normalizing constructor: the stored values were already
        // normalized when written, and rescaling by a freshly summed mass
        // would perturb the last ulp and break lossless round-tripping.
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("invalid domain [{lo}, {hi}]")));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("grid values must be finite and nonnegative"));
        }
        let g = Self { lo, hi, values };
        if (g.mass() - 1.0).abs() > 1e-9 {
            return Err(Error::Parse {
                what: "grid csv".into(),
                message: format!("stored density has mass {}, expected 1", g.mass()),
            });
        }
        Ok(g)
    }
}

/// A single point mass (zero-diffusion species propagates as a Dirac).
#[derive(Debug, Clone, PartialEq)]
pub struct DiracState {
    point: Vec<f64>,
}

impl DiracState {
    /// Builds a Dirac at `point`.
    pub fn new(point: Vec<f64>) -> Result<Self> {
        if point.is_empty() || !point.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("Dirac point must be nonempty and finite"));
        }
        Ok(Self { point })
    }

    /// Location of the point mass.
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Second moment ||x||^2.
    pub fn moment2(&self) -> f64 {
        self.point.iter().map(|c| c * c).sum()
    }
}

/// Any of the three measure representations, as accepted by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    /// Weighted point cloud.
    Particles(ParticleEnsemble),
    /// 1D finite-volume density.
    Grid(GridDensity),
    /// Single point mass.
    Dirac(DiracState),
}

impl Measure {
    /// Ambient dimension of the measure.
    pub fn dim(&self) -> usize {
        match self {
            Measure::Particles(p) => p.dim(),
            Measure::Grid(_) => 1,
            Measure::Dirac(d) => d.dim(),
        }
    }

    /// Second moment about the origin.
    pub fn moment2(&self) -> f64 {
        match self {
            Measure::Particles(p) => p.moment2(),
            Measure::Grid(g) => g.moment2(),
            Measure::Dirac(d) => d.moment2(),
        }
    }

    /// Mean vector of the measure.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Measure::Particles(p) => p.mean(),
            Measure::Grid(g) => vec![g.mean()],
            Measure::Dirac(d) => d.point().to_vec(),
        }
    }

    /// Borrow as grid density, if that is the representation.
    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Measure::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Borrow as particle ensemble, if that is the representation.
    pub fn as_particles(&self) -> Option<&ParticleEnsemble> {
        match self {
            Measure::Particles(p) => Some(p),
            _ => None,
        }
    }

    /// Borrow as Dirac state, if that is the representation.
    pub fn as_dirac(&self) -> Option<&DiracState> {
        match self {
            Measure::Dirac(d) => Some(d),
            _ => None,
        }
    }
}

/// Second moment of any measure representation.
pub fn moment2(m: &Measure) -> f64 {
    m.moment2()
}

/// Draws `n` equal-weight samples from a diagonal Gaussian, deterministically
/// for a fixed seed.
pub fn sample_gaussian(
    mean: &[f64],
    cov_diag: &[f64],
    n: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    if mean.is_empty() || mean.len() != cov_diag.len() {
        return Err(Error::invalid("mean and cov_diag must have equal nonzero length"));
    }
    if cov_diag.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("cov_diag must be positive elementwise"));
    }
    let dim = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal is valid");
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for j in 0..dim {
            coords.push(mean[j] + cov_diag[j].sqrt() * std.sample(&mut rng));
        }
    }
    Ok(ParticleEnsemble::from_flat(dim, coords, vec![1.0 / n as f64; n]))
}

/// Bins a 1D ensemble into a grid density.
///
/// Mass outside [lo, hi] is clipped into the boundary cells; points exactly on
/// an interior cell boundary go to the lower-index cell (deterministic
/// tie-break). Output is normalized to unit mass.
pub fn histogram(m: &ParticleEnsemble, lo: f64, hi: f64, cells: usize) -> Result<GridDensity> {
    if m.dim() != 1 {
        return Err(Error::UnsupportedRepresentation(
            "histogram requires a 1D ensemble".into(),
        ));
    }
    if !(lo < hi) || cells < 2 {
        return Err(Error::invalid("histogram requires lo < hi and cells >= 2"));
    }
    let h = (hi - lo) / cells as f64;
    let mut values = vec![0.0; cells];
    for i in 0..m.len() {
        let z = m.point(i)[0];
        let t = (z - lo) / h;
        let mut k = t.floor() as i64;
        // Exact boundary hits assign to the lower-index cell.
        if t == k as f64 && k > 0 {
            k -= 1;
        }
        let k = k.clamp(0, cells as i64 - 1) as usize;
        values[k] += m.weights()[i] / h;
    }
    GridDensity::new(lo, hi, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment2_two_point_ensemble() {
        let e = ParticleEnsemble::equal_weights(vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(e.moment2(), 2.0);
    }

    #[test]
    fn moment2_origin_point() {
        let e = ParticleEnsemble::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(e.moment2(), 0.0);
    }

    #[test]
    fn moment2_gaussian_grid() {
        let g = GridDensity::gaussian(0.0, 1.0, -8.0, 8.0, 400).unwrap();
        assert!((g.moment2() - 1.0).abs() < 1e-3, "moment2 = {}", g.moment2());
    }

    #[test]
    fn sample_gaussian_mean_close() {
        let e = sample_gaussian(&[0.0], &[1.0], 100_000, 7).unwrap();
        assert!(e.mean()[0].abs() < 0.02, "mean = {}", e.mean()[0]);
    }

    #[test]
    fn sample_gaussian_moment2_close() {
        let e = sample_gaussian(&[54.0], &[10.0], 100_000, 1).unwrap();
        let expected = 54.0 * 54.0 + 10.0;
        assert!((e.moment2() - expected).abs() / expected < 0.01, "moment2 = {}", e.moment2());
    }

    #[test]
    fn sample_gaussian_single_point() {
        let e = sample_gaussian(&[1.0, 2.0], &[1.0, 1.0], 1, 3).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.weights(), &[1.0]);
    }

    #[test]
    fn sample_gaussian_rejects_empty() {
        assert!(sample_gaussian(&[0.0], &[1.0], 0, 0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_gaussian(&[0.0, 1.0], &[1.0, 2.0], 500, 42).unwrap();
        let b = sample_gaussian(&[0.0, 1.0], &[1.0, 2.0], 500, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_dirac_tie_breaks_left() {
        let e = ParticleEnsemble::equal_weights(vec![vec![0.0]]).unwrap();
        let g = histogram(&e, -1.0, 1.0, 2).unwrap();
        assert_eq!(g.values()[0], 1.0 / g.cell_width());
        assert_eq!(g.values()[1], 0.0);
    }

    #[test]
    fn histogram_two_points_split() {
        let e = ParticleEnsemble::equal_weights(vec![vec![-0.5], vec![0.5]]).unwrap();
        let g = histogram(&e, -1.0, 1.0, 2).unwrap();
        let h = g.cell_width();
        assert!((g.values()[0] - 0.5 / h).abs() < 1e-15);
        assert!((g.values()[1] - 0.5 / h).abs() < 1e-15);
    }

    #[test]
    fn histogram_gaussian_l1_close() {
        let e = sample_gaussian(&[0.0], &[1.0], 100_000, 11).unwrap();
        let g = histogram(&e, -6.0, 6.0, 240).unwrap();
        let exact = GridDensity::gaussian(0.0, 1.0, -6.0, 6.0, 240).unwrap();
        // Monte-Carlo binning noise scales like sqrt(cells/n) ~ 0.049 here;
        // the observed error sits well inside that envelope.
        let l1 = g.l1_distance(&exact).unwrap();
        assert!(l1 < 0.03, "L1 = {l1}");
    }

    #[test]
    fn histogram_mass_is_one() {
        let e = sample_gaussian(&[3.0], &[4.0], 1000, 5).unwrap();
        let g = histogram(&e, -2.0, 2.0, 16).unwrap(); // heavy clipping on purpose
        assert!((g.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn histogram_moment2_converges() {
        // Error should roughly halve... (quarter for midpoint) as cells double;
        // allow factor-4 slack around halving.
        let e = sample_gaussian(&[0.0], &[1.0], 20_000, 9).unwrap();
        let target = e.moment2();
        let coarse = (histogram(&e, -8.0, 8.0, 100).unwrap().moment2() - target).abs();
        let fine = (histogram(&e, -8.0, 8.0, 200).unwrap().moment2() - target).abs();
        assert!(fine <= coarse * 2.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn ensemble_csv_round_trip() {
        let e = sample_gaussian(&[0.3, -1.7], &[1.0, 0.5], 64, 13).unwrap();
        let back = ParticleEnsemble::from_csv(&e.to_csv()).unwrap();
        assert_eq!(e, back);
    }

    #[test]
    fn grid_csv_round_trip() {
        let g = GridDensity::gaussian(1.5, 2.0, -7.0, 9.0, 120).unwrap();
        let back = GridDensity::from_csv(&g.to_csv()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn zero_weight_particles_dropped() {
        let e = ParticleEnsemble::new(vec![vec![1.0], vec![2.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.point(0), &[1.0]);
    }

    #[test]
    fn grid_normalizes_mass() {
        let g = GridDensity::new(0.0, 1.0, vec![3.0, 1.0]).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
    }
}
