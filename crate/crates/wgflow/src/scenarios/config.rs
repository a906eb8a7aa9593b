//! Scenario configuration: a flat, typed key tree loaded from a single TOML
//! file. Unknown keys are rejected by the deserializer; semantic validation
//! errors name the offending key.
//!
//! Tagged unions (potentials, kernels, solvers, dynamics, ...) are modeled as
//! flat structs with a `kind` discriminator plus optional fields, validated
//! by hand. This keeps `deny_unknown_fields` effective everywhere and lets
//! error messages point at the exact key.

use serde::{Deserialize, Serialize};

use crate::energy::{
    ApplicationExtras, CouplingFamily, EnergySpec, KernelFamily, Mode, PotentialFamily,
};
use crate::error::{Error, Result};
use crate::measures::{sample_gaussian, GridDensity, Measure, ParticleEnsemble};
use nalgebra::DMatrix;

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn require<T>(opt: Option<T>, key: &str) -> Result<T> {
    opt.ok_or_else(|| config_err(key, "required by the selected kind but missing"))
}

/// Errors when any of the named optional fields is set; used to reject
/// parameters that the selected `kind` does not consume.
fn forbid(fields: &[(bool, &str)], kind: &str) -> Result<()> {
    for (set, key) in fields {
        if *set {
            return Err(config_err(key, format!("not used by kind `{kind}`")));
        }
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(config_err(key, "matrix must be non-empty"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(config_err(key, "matrix rows must all have the same length"));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

// ---------------------------------------------------------------------------
// Top-level config
// ---------------------------------------------------------------------------

/// Full description of a scenario: energy, initial data, solver backend,
/// dynamics, time grid, outputs, fit target, and embedded assertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scenario name (used for output labeling).
    pub name: String,
    /// Energy specification.
    pub energy: EnergyConfig,
    /// Initial measures.
    pub init: InitConfig,
    /// Optional second initial pair; enables the `wbar_pair` channel
    /// (joint distance between the two trajectories, synchronous noise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init2: Option<InitConfig>,
    /// Solver backend.
    pub solver: SolverConfig,
    /// Dynamics selection.
    pub dynamics: DynamicsConfig,
    /// Time discretization.
    pub time: TimeConfig,
    /// Reference state for `w2_*_ref` channels.
    #[serde(default)]
    pub reference: ReferenceConfig,
    /// Primary exponential-rate fit target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    /// Output controls.
    #[serde(default)]
    pub outputs: OutputsConfig,
    /// Embedded acceptance assertions checked by `run_scenario`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<AssertionConfig>,
}

impl ScenarioConfig {
    /// Parses a scenario from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes the scenario back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs are TOML-representable")
    }

    /// Semantic validation beyond what the type system enforces. Errors name
    /// the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(config_err("name", "must be non-empty"));
        }
        let spec = self.energy.to_spec()?;
        spec.validate().map_err(|e| config_err("energy", e.to_string()))?;
        self.solver.validate()?;
        self.time.validate()?;
        self.init.validate(&spec, &self.solver, "init")?;
        if let Some(init2) = &self.init2 {
            init2.validate(&spec, &self.solver, "init2")?;
        }
        self.dynamics.validate(&spec, &self.solver)?;
        if let Some(fit) = &self.fit {
            fit.validate()?;
        }
        for (i, a) in self.assertions.iter().enumerate() {
            a.validate(&format!("assertions[{i}]"))?;
        }
        // Diffusive CFL pre-check for the grid backend; the advective part
        // depends on the running solution and is enforced step by step.
        // Dynamics that never step the grid with `time.dt` (inner Gibbs
        // solves, no-op smoke runs) are exempt.
        let steps_grid = !matches!(self.dynamics.kind.as_str(), "fast_rho" | "zero");
        if matches!(self.solver.kind(), SolverKind::Fv) && steps_grid {
            let lo = self.solver.lo.unwrap();
            let hi = self.solver.hi.unwrap();
            let cells = self.solver.cells.unwrap();
            let h = (hi - lo) / cells as f64;
            let diff = spec.alpha.max(spec.beta);
            if diff > 0.0 && self.time.dt > h * h / (4.0 * diff) {
                return Err(config_err(
                    "time.dt",
                    format!(
                        "exceeds the diffusive stability bound {:.3e} for the grid",
                        h * h / (4.0 * diff)
                    ),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

/// Serializable mirror of [`EnergySpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    /// `"cooperative"` or `"competitive"`.
    pub mode: String,
    /// Diffusion strength on rho.
    pub alpha: f64,
    /// Diffusion strength on mu.
    pub beta: f64,
    /// rho dimension.
    pub dim_rho: usize,
    /// mu dimension.
    pub dim_mu: usize,
    /// Coupling family.
    pub coupling: CouplingConfig,
    /// External potential on rho.
    #[serde(default)]
    pub v1: PotentialConfig,
    /// External potential on mu.
    #[serde(default)]
    pub v2: PotentialConfig,
    /// Interaction kernel within rho.
    #[serde(default)]
    pub w1: KernelConfig,
    /// Interaction kernel within mu.
    #[serde(default)]
    pub w2: KernelConfig,
    /// Application-energy extras (pi, kappa, x0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extras: Option<ExtrasConfig>,
}

impl EnergyConfig {
    /// Builds the runtime [`EnergySpec`].
    pub fn to_spec(&self) -> Result<EnergySpec> {
        let mode = match self.mode.as_str() {
            "cooperative" => Mode::Cooperative,
            "competitive" => Mode::Competitive,
            other => {
                return Err(config_err(
                    "energy.mode",
                    format!("expected `cooperative` or `competitive`, got `{other}`"),
                ))
            }
        };
        Ok(EnergySpec {
            mode,
            coupling: self.coupling.to_family()?,
            v1: self.v1.to_family("energy.v1")?,
            v2: self.v2.to_family("energy.v2")?,
            w1: self.w1.to_family("energy.w1")?,
            w2: self.w2.to_family("energy.w2")?,
            alpha: self.alpha,
            beta: self.beta,
            dim_rho: self.dim_rho,
            dim_mu: self.dim_mu,
            application_extras: match &self.extras {
                Some(e) => Some(e.to_extras()?),
                None => None,
            },
        })
    }
}

/// Coupling family selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// `"bilinear"`, `"quadratic_joint"`, or `"logistic_game"`.
    pub kind: String,
    /// Bilinear matrix B (rows over z).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    /// Quadratic block in z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zz: Option<Vec<Vec<f64>>>,
    /// Quadratic cross block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zx: Option<Vec<Vec<f64>>>,
    /// Quadratic block in x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xx: Option<Vec<Vec<f64>>>,
    /// Logistic slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Logistic linear tilt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

impl CouplingConfig {
    fn to_family(&self) -> Result<CouplingFamily> {
        let k = "energy.coupling";
        match self.kind.as_str() {
            "bilinear" => {
                forbid(
                    &[
                        (self.zz.is_some(), "energy.coupling.zz"),
                        (self.zx.is_some(), "energy.coupling.zx"),
                        (self.xx.is_some(), "energy.coupling.xx"),
                        (self.a.is_some(), "energy.coupling.a"),
                        (self.l.is_some(), "energy.coupling.l"),
                    ],
                    "bilinear",
                )?;
                let b = require(self.b.as_ref(), "energy.coupling.b")?;
                Ok(CouplingFamily::Bilinear { b: to_matrix(b, "energy.coupling.b")? })
            }
            "quadratic_joint" => {
                forbid(
                    &[
                        (self.b.is_some(), "energy.coupling.b"),
                        (self.a.is_some(), "energy.coupling.a"),
                        (self.l.is_some(), "energy.coupling.l"),
                    ],
                    "quadratic_joint",
                )?;
                Ok(CouplingFamily::QuadraticJoint {
                    zz: to_matrix(require(self.zz.as_ref(), "energy.coupling.zz")?, "energy.coupling.zz")?,
                    zx: to_matrix(require(self.zx.as_ref(), "energy.coupling.zx")?, "energy.coupling.zx")?,
                    xx: to_matrix(require(self.xx.as_ref(), "energy.coupling.xx")?, "energy.coupling.xx")?,
                })
            }
            "logistic_game" => {
                forbid(
                    &[
                        (self.b.is_some(), "energy.coupling.b"),
                        (self.zz.is_some(), "energy.coupling.zz"),
                        (self.zx.is_some(), "energy.coupling.zx"),
                        (self.xx.is_some(), "energy.coupling.xx"),
                    ],
                    "logistic_game",
                )?;
                Ok(CouplingFamily::LogisticGame {
                    a: require(self.a, "energy.coupling.a")?,
                    l: require(self.l, "energy.coupling.l")?,
                })
            }
            other => Err(config_err(
                &format!("{k}.kind"),
                format!("unknown coupling kind `{other}`"),
            )),
        }
    }
}

/// External-potential selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// `"zero"`, `"quadratic"`, `"neg_log_gaussian"`, or `"logistic_loss"`.
    pub kind: String,
    /// Quadratic center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Quadratic curvature matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<Vec<f64>>>,
    /// Gaussian anchor mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Gaussian anchor diagonal covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
    /// NegLogGaussian scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Logistic slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Logistic sign.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,
    /// Logistic tilt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: "zero".into(),
            center: None,
            curvature: None,
            mean: None,
            cov_diag: None,
            scale: None,
            a: None,
            sign: None,
            tilt: None,
        }
    }
}

impl PotentialConfig {
    fn to_family(&self, key: &str) -> Result<PotentialFamily> {
        let used = |f: &str| format!("{key}.{f}");
        match self.kind.as_str() {
            "zero" => {
                forbid(
                    &[
                        (self.center.is_some(), &used("center")),
                        (self.curvature.is_some(), &used("curvature")),
                        (self.mean.is_some(), &used("mean")),
                        (self.cov_diag.is_some(), &used("cov_diag")),
                        (self.scale.is_some(), &used("scale")),
                        (self.a.is_some(), &used("a")),
                        (self.sign.is_some(), &used("sign")),
                        (self.tilt.is_some(), &used("tilt")),
                    ],
                    "zero",
                )?;
                Ok(PotentialFamily::Zero)
            }
            "quadratic" => Ok(PotentialFamily::Quadratic {
                center: require(self.center.clone(), &used("center"))?,
                curvature: to_matrix(
                    &require(self.curvature.clone(), &used("curvature"))?,
                    &used("curvature"),
                )?,
            }),
            "neg_log_gaussian" => Ok(PotentialFamily::NegLogGaussian {
                mean: require(self.mean.clone(), &used("mean"))?,
                cov_diag: require(self.cov_diag.clone(), &used("cov_diag"))?,
                scale: require(self.scale, &used("scale"))?,
            }),
            "logistic_loss" => Ok(PotentialFamily::LogisticLoss {
                a: require(self.a, &used("a"))?,
                sign: self.sign.unwrap_or(1.0),
                tilt: self.tilt.unwrap_or(0.0),
            }),
            other => Err(config_err(
                &used("kind"),
                format!("unknown potential kind `{other}`"),
            )),
        }
    }
}

/// Interaction-kernel selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// `"zero"`, `"quadratic"`, `"neg_abs"`, or `"morse"`.
    pub kind: String,
    /// Quadratic kernel strength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    /// Morse repulsion amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    /// Morse attraction amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    /// Morse repulsion length scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    /// Morse attraction length scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { kind: "zero".into(), strength: None, c1: None, c2: None, l1: None, l2: None }
    }
}

impl KernelConfig {
    /// Converts to the runtime family; `key` prefixes error locations.
    pub fn to_family(&self, key: &str) -> Result<KernelFamily> {
        let used = |f: &str| format!("{key}.{f}");
        let morse_set = [
            (self.c1.is_some(), used("c1")),
            (self.c2.is_some(), used("c2")),
            (self.l1.is_some(), used("l1")),
            (self.l2.is_some(), used("l2")),
        ];
        let morse_refs: Vec<(bool, &str)> =
            morse_set.iter().map(|(s, k)| (*s, k.as_str())).collect();
        match self.kind.as_str() {
            "zero" => {
                forbid(&[(self.strength.is_some(), &used("strength"))], "zero")?;
                forbid(&morse_refs, "zero")?;
                Ok(KernelFamily::Zero)
            }
            "quadratic" => {
                forbid(&morse_refs, "quadratic")?;
                Ok(KernelFamily::Quadratic {
                    strength: require(self.strength, &used("strength"))?,
                })
            }
            "neg_abs" => {
                forbid(&[(self.strength.is_some(), &used("strength"))], "neg_abs")?;
                forbid(&morse_refs, "neg_abs")?;
                Ok(KernelFamily::NegAbs)
            }
            "morse" => {
                forbid(&[(self.strength.is_some(), &used("strength"))], "morse")?;
                Ok(KernelFamily::Morse {
                    c1: require(self.c1, &used("c1"))?,
                    c2: require(self.c2, &used("c2"))?,
                    l1: require(self.l1, &used("l1"))?,
                    l2: require(self.l2, &used("l2"))?,
                })
            }
            other => Err(config_err(&used("kind"), format!("unknown kernel kind `{other}`"))),
        }
    }
}

/// Application-energy extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrasConfig {
    /// Quadratic regularizer strength.
    pub kappa: f64,
    /// Regularizer anchor.
    pub x0: Vec<f64>,
    /// Fixed label-1 population.
    pub pi: EnsembleConfig,
}

impl ExtrasConfig {
    fn to_extras(&self) -> Result<ApplicationExtras> {
        Ok(ApplicationExtras {
            pi: self.pi.to_ensemble("energy.extras.pi")?,
            kappa: self.kappa,
            x0: self.x0.clone(),
        })
    }
}

/// A deterministic particle-ensemble generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// `"gaussian"` (seeded sample) or `"points"` (explicit list).
    pub kind: String,
    /// Gaussian mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Gaussian diagonal covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
    /// Sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Sampling seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit points (equal weights).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
}

impl EnsembleConfig {
    /// Materializes the ensemble; `key` prefixes error locations.
    pub fn to_ensemble(&self, key: &str) -> Result<ParticleEnsemble> {
        let used = |f: &str| format!("{key}.{f}");
        match self.kind.as_str() {
            "gaussian" => {
                forbid(&[(self.points.is_some(), &used("points"))], "gaussian")?;
                sample_gaussian(
                    &require(self.mean.clone(), &used("mean"))?,
                    &require(self.cov_diag.clone(), &used("cov_diag"))?,
                    require(self.n, &used("n"))?,
                    require(self.seed, &used("seed"))?,
                )
            }
            "points" => {
                forbid(
                    &[
                        (self.mean.is_some(), &used("mean")),
                        (self.cov_diag.is_some(), &used("cov_diag")),
                        (self.n.is_some(), &used("n")),
                        (self.seed.is_some(), &used("seed")),
                    ],
                    "points",
                )?;
                ParticleEnsemble::equal_weights(require(self.points.clone(), &used("points"))?)
            }
            other => Err(config_err(&used("kind"), format!("unknown ensemble kind `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Initial measures
// ---------------------------------------------------------------------------

/// Initial data for both species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Initial population.
    pub rho: MeasureInit,
    /// Initial algorithm species.
    pub mu: MeasureInit,
}

impl InitConfig {
    fn validate(&self, spec: &EnergySpec, solver: &SolverConfig, key: &str) -> Result<()> {
        self.rho.validate(spec.dim_rho, &format!("{key}.rho"))?;
        self.mu.validate(spec.dim_mu, &format!("{key}.mu"))?;
        if matches!(solver.kind(), SolverKind::Fv) {
            if spec.dim_rho != 1 {
                return Err(config_err("energy.dim_rho", "grid backend is 1D only"));
            }
            if self.rho.kind == "dirac" {
                return Err(config_err(
                    &format!("{key}.rho.kind"),
                    "grid backend needs an absolutely continuous rho",
                ));
            }
        }
        Ok(())
    }
}

/// One species' initial measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureInit {
    /// `"gaussian"` (grid projection or seeded sample per backend),
    /// `"dirac"`, or `"points"`.
    pub kind: String,
    /// Gaussian mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Gaussian diagonal covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
    /// Dirac location.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// Explicit particle list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
}

impl MeasureInit {
    /// A Gaussian initial measure (the common case).
    pub fn gaussian(mean: Vec<f64>, cov_diag: Vec<f64>) -> Self {
        Self { kind: "gaussian".into(), mean: Some(mean), cov_diag: Some(cov_diag), point: None, points: None }
    }

    /// A Dirac initial measure.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self { kind: "dirac".into(), mean: None, cov_diag: None, point: Some(point), points: None }
    }

    fn validate(&self, dim: usize, key: &str) -> Result<()> {
        let used = |f: &str| format!("{key}.{f}");
        match self.kind.as_str() {
            "gaussian" => {
                let m = require(self.mean.as_ref(), &used("mean"))?;
                let c = require(self.cov_diag.as_ref(), &used("cov_diag"))?;
                if m.len() != dim || c.len() != dim {
                    return Err(config_err(key, format!("dimension mismatch: species is {dim}D")));
                }
                if c.iter().any(|&v| v <= 0.0) {
                    return Err(config_err(&used("cov_diag"), "must be positive"));
                }
                Ok(())
            }
            "dirac" => {
                let p = require(self.point.as_ref(), &used("point"))?;
                if p.len() != dim {
                    return Err(config_err(&used("point"), format!("species is {dim}D")));
                }
                Ok(())
            }
            "points" => {
                let p = require(self.points.as_ref(), &used("points"))?;
                if p.is_empty() || p.iter().any(|q| q.len() != dim) {
                    return Err(config_err(&used("points"), format!("need non-empty {dim}D points")));
                }
                Ok(())
            }
            other => Err(config_err(&used("kind"), format!("unknown init kind `{other}`"))),
        }
    }

    /// Materializes the measure for the chosen backend. Gaussians become grid
    /// projections on the FV grid and seeded samples for particles.
    pub fn realize(
        &self,
        solver: &SolverConfig,
        n_particles: usize,
        seed: u64,
        key: &str,
    ) -> Result<Measure> {
        match self.kind.as_str() {
            "gaussian" => {
                let mean = self.mean.as_ref().unwrap();
                let cov = self.cov_diag.as_ref().unwrap();
                match solver.kind() {
                    SolverKind::Fv => Ok(Measure::Grid(GridDensity::gaussian(
                        mean[0],
                        cov[0],
                        solver.lo.unwrap(),
                        solver.hi.unwrap(),
                        solver.cells.unwrap(),
                    )?)),
                    SolverKind::Particles => Ok(Measure::Particles(sample_gaussian(
                        mean,
                        cov,
                        n_particles,
                        seed,
                    )?)),
                }
            }
            "dirac" => Ok(Measure::Dirac(crate::measures::DiracState::new(
                self.point.clone().unwrap(),
            )?)),
            "points" => Ok(Measure::Particles(ParticleEnsemble::equal_weights(
                self.points.clone().unwrap(),
            )?)),
            other => Err(config_err(&format!("{key}.kind"), format!("unknown init kind `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Solver / dynamics / time / outputs
// ---------------------------------------------------------------------------

/// Which backend carries the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Interacting-particle Euler-Maruyama.
    Particles,
    /// 1D finite-volume grid.
    Fv,
}

/// Solver backend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// `"particles"` or `"fv"`.
    #[serde(rename = "kind")]
    pub kind_str: String,
    /// Particle count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Noise/sampling seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Grid lower edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    /// Grid upper edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    /// Grid cell count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

impl SolverConfig {
    /// Parsed backend kind.
    pub fn kind(&self) -> SolverKind {
        match self.kind_str.as_str() {
            "fv" => SolverKind::Fv,
            _ => SolverKind::Particles,
        }
    }

    /// Particle backend with `n` particles and a noise seed.
    pub fn particles(n: usize, seed: u64) -> Self {
        Self {
            kind_str: "particles".into(),
            n: Some(n),
            seed: Some(seed),
            lo: None,
            hi: None,
            cells: None,
        }
    }

    /// Grid backend on `[lo, hi]` with `cells` cells.
    pub fn fv(lo: f64, hi: f64, cells: usize) -> Self {
        Self {
            kind_str: "fv".into(),
            n: None,
            seed: None,
            lo: Some(lo),
            hi: Some(hi),
            cells: Some(cells),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind_str.as_str() {
            "particles" => {
                forbid(
                    &[
                        (self.lo.is_some(), "solver.lo"),
                        (self.hi.is_some(), "solver.hi"),
                        (self.cells.is_some(), "solver.cells"),
                    ],
                    "particles",
                )?;
                if require(self.n, "solver.n")? == 0 {
                    return Err(config_err("solver.n", "must be positive"));
                }
                require(self.seed, "solver.seed")?;
                Ok(())
            }
            "fv" => {
                forbid(
                    &[(self.n.is_some(), "solver.n"), (self.seed.is_some(), "solver.seed")],
                    "fv",
                )?;
                let lo = require(self.lo, "solver.lo")?;
                let hi = require(self.hi, "solver.hi")?;
                if hi <= lo {
                    return Err(config_err("solver.hi", "must exceed solver.lo"));
                }
                if require(self.cells, "solver.cells")? < 2 {
                    return Err(config_err("solver.cells", "need at least 2 cells"));
                }
                Ok(())
            }
            other => Err(config_err("solver.kind", format!("unknown solver kind `{other}`"))),
        }
    }
}

/// Dynamics selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// `"coupled"`, `"fast_x"`, `"fast_rho"`, `"fixed_x"`,
    /// `"mean_shift_baseline"`, or `"zero"` (no stepping; smoke runs).
    pub kind: String,
    /// Fixed classifier location for `fixed_x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_value: Option<Vec<f64>>,
    /// Mean-shift probe rounds per outer cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Mean-shift uniform perturbation half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_scale: Option<f64>,
    /// Population steps per probe / deployment block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
}

impl DynamicsConfig {
    /// Plain coupled dynamics.
    pub fn coupled() -> Self {
        Self { kind: "coupled".into(), x_value: None, rounds: None, perturb_scale: None, inner_steps: None }
    }

    /// Frozen classifier at `x`.
    pub fn fixed_x(x: Vec<f64>) -> Self {
        Self { kind: "fixed_x".into(), x_value: Some(x), rounds: None, perturb_scale: None, inner_steps: None }
    }

    /// Timescale-separated flow with an inner best response.
    pub fn fast(kind: &str) -> Self {
        Self { kind: kind.into(), x_value: None, rounds: None, perturb_scale: None, inner_steps: None }
    }

    /// Mean-shift probing baseline.
    pub fn mean_shift(rounds: usize, perturb_scale: f64, inner_steps: usize) -> Self {
        Self {
            kind: "mean_shift_baseline".into(),
            x_value: None,
            rounds: Some(rounds),
            perturb_scale: Some(perturb_scale),
            inner_steps: Some(inner_steps),
        }
    }

    fn validate(&self, spec: &EnergySpec, solver: &SolverConfig) -> Result<()> {
        let baseline_keys = [
            (self.rounds.is_some(), "dynamics.rounds"),
            (self.perturb_scale.is_some(), "dynamics.perturb_scale"),
            (self.inner_steps.is_some(), "dynamics.inner_steps"),
        ];
        match self.kind.as_str() {
            "coupled" | "zero" => {
                forbid(&[(self.x_value.is_some(), "dynamics.x_value")], &self.kind)?;
                forbid(&baseline_keys, &self.kind)?;
                Ok(())
            }
            "fast_x" | "fast_rho" => {
                forbid(&[(self.x_value.is_some(), "dynamics.x_value")], &self.kind)?;
                forbid(&baseline_keys, &self.kind)?;
                if spec.mode != Mode::Competitive {
                    return Err(config_err(
                        "dynamics.kind",
                        "timescale-separated flows require competitive mode",
                    ));
                }
                if spec.application_extras.is_none() {
                    return Err(config_err(
                        "energy.extras",
                        "timescale-separated flows need application extras (pi, kappa, x0)",
                    ));
                }
                if self.kind == "fast_rho" && !matches!(solver.kind(), SolverKind::Fv) {
                    return Err(config_err(
                        "solver.kind",
                        "fast_rho needs the grid backend for the inner Gibbs solve",
                    ));
                }
                Ok(())
            }
            "fixed_x" => {
                forbid(&baseline_keys, "fixed_x")?;
                let x = require(self.x_value.as_ref(), "dynamics.x_value")?;
                if x.len() != spec.dim_mu {
                    return Err(config_err("dynamics.x_value", format!("mu is {}D", spec.dim_mu)));
                }
                Ok(())
            }
            "mean_shift_baseline" => {
                forbid(&[(self.x_value.is_some(), "dynamics.x_value")], "mean_shift_baseline")?;
                if spec.dim_mu != 1 {
                    return Err(config_err(
                        "dynamics.kind",
                        "mean_shift_baseline needs a 1D classifier",
                    ));
                }
                if require(self.rounds.unwrap_or(16).checked_sub(1), "dynamics.rounds").is_err() {
                    return Err(config_err("dynamics.rounds", "must be positive"));
                }
                if require(self.perturb_scale, "dynamics.perturb_scale")? < 0.0 {
                    return Err(config_err("dynamics.perturb_scale", "must be nonnegative"));
                }
                if require(self.inner_steps, "dynamics.inner_steps")? == 0 {
                    return Err(config_err("dynamics.inner_steps", "must be positive"));
                }
                Ok(())
            }
            other => Err(config_err("dynamics.kind", format!("unknown dynamics kind `{other}`"))),
        }
    }
}

/// Time discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time.
    pub t_end: f64,
    /// Step size.
    pub dt: f64,
    /// Diagnostics/snapshot interval.
    pub snapshot_every: f64,
}

impl TimeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) {
            return Err(config_err("time.t_end", "must be positive"));
        }
        if !(self.dt > 0.0) || self.dt > self.t_end {
            return Err(config_err("time.dt", "must be positive and at most t_end"));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(config_err("time.snapshot_every", "must be positive"));
        }
        Ok(())
    }
}

/// Reference state for `w2_*_ref` channels and energy gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// `"none"`, `"gibbs"` (steady state from the Gibbs fixed point), or
    /// `"terminal"` (the run's own final snapshot).
    pub kind: String,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { kind: "none".into() }
    }
}

/// Primary exponential-rate fit target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Diagnostics channel to fit (recorded or derived, e.g. `energy_gap`,
    /// `wbar_pair`).
    pub channel: String,
    /// Values below `rel_floor * max` are dropped before fitting (cuts the
    /// discretization-limited flat tail).
    #[serde(default = "default_rel_floor")]
    pub rel_floor: f64,
}

fn default_rel_floor() -> f64 {
    1e-3
}

impl FitConfig {
    /// Fit a named channel with the default floor.
    pub fn channel(name: &str) -> Self {
        Self { channel: name.into(), rel_floor: default_rel_floor() }
    }

    fn validate(&self) -> Result<()> {
        if self.channel.is_empty() {
            return Err(config_err("fit.channel", "must be non-empty"));
        }
        if !(self.rel_floor > 0.0 && self.rel_floor < 1.0) {
            return Err(config_err("fit.rel_floor", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Output controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Output directory (overridable from the CLI).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_dir: Option<String>,
    /// Emit deterministic SVG charts.
    #[serde(default)]
    pub svg: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { csv_dir: None, svg: false }
    }
}

// ---------------------------------------------------------------------------
// Assertions
// ---------------------------------------------------------------------------

/// One embedded acceptance assertion, checked after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionConfig {
    /// Assertion kind; see `runner` for semantics:
    /// `fitted_rate_between`, `channel_rate_at_least`, `r_squared_above`,
    /// `dissipation_envelope`, `moment_bound`, `talagrand`,
    /// `best_response_bound`, `gd_beats_baseline`,
    /// `subgroup_higher_with_other_kernel`, `rates_absent`,
    /// `trajectory_constant`.
    pub kind: String,
    /// Lower bracket edge (`fitted_rate_between`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    /// Upper bracket edge (`fitted_rate_between`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    /// Channel for `channel_rate_at_least`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    /// Named theoretical constant: `lambda_a`, `lambda_c`, `lambda_b`,
    /// `lambda_d`, `two_lambda_a`, `two_lambda_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<String>,
    /// Multiplicative factor against the constant or bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    /// Minimum value (`r_squared_above`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    /// Multiplicative slack (envelope/bound checks; default 1.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    /// Margin as a fraction of the loss range (`gd_beats_baseline`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Subgroup name (`subgroup_higher_with_other_kernel`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<String>,
    /// Relative floor for per-assertion channel fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_floor: Option<f64>,
    /// Comparison kernel for the rerun; a table, so it stays last for TOML.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_kernel: Option<KernelConfig>,
}

impl AssertionConfig {
    /// Bare assertion of the given kind.
    pub fn kind(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            lo: None,
            hi: None,
            channel: None,
            constant: None,
            factor: None,
            min: None,
            slack: None,
            margin: None,
            subgroup: None,
            other_kernel: None,
            rel_floor: None,
        }
    }

    /// `fitted_rate_between` with a bracket.
    pub fn rate_between(lo: f64, hi: f64) -> Self {
        let mut a = Self::kind("fitted_rate_between");
        a.lo = Some(lo);
        a.hi = Some(hi);
        a
    }

    /// `channel_rate_at_least` against a named constant.
    pub fn channel_rate(channel: &str, constant: &str, factor: f64) -> Self {
        let mut a = Self::kind("channel_rate_at_least");
        a.channel = Some(channel.into());
        a.constant = Some(constant.into());
        a.factor = Some(factor);
        a
    }

    fn validate(&self, key: &str) -> Result<()> {
        let known = [
            "fitted_rate_between",
            "channel_rate_at_least",
            "r_squared_above",
            "dissipation_envelope",
            "moment_bound",
            "talagrand",
            "best_response_bound",
            "gd_beats_baseline",
            "subgroup_higher_with_other_kernel",
            "rates_absent",
            "trajectory_constant",
        ];
        if !known.contains(&self.kind.as_str()) {
            return Err(config_err(
                &format!("{key}.kind"),
                format!("unknown assertion kind `{}`", self.kind),
            ));
        }
        match self.kind.as_str() {
            "fitted_rate_between" => {
                let lo = require(self.lo, &format!("{key}.lo"))?;
                let hi = require(self.hi, &format!("{key}.hi"))?;
                if hi <= lo {
                    return Err(config_err(&format!("{key}.hi"), "must exceed lo"));
                }
            }
            "channel_rate_at_least" => {
                require(self.channel.as_ref(), &format!("{key}.channel"))?;
                require(self.constant.as_ref(), &format!("{key}.constant"))?;
                require(self.factor, &format!("{key}.factor"))?;
            }
            "r_squared_above" => {
                require(self.min, &format!("{key}.min"))?;
            }
            "subgroup_higher_with_other_kernel" => {
                require(self.subgroup.as_ref(), &format!("{key}.subgroup"))?;
                require(self.other_kernel.as_ref(), &format!("{key}.other_kernel"))?;
            }
            "gd_beats_baseline" => {
                require(self.margin, &format!("{key}.margin"))?;
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn builtin_presets_round_trip_through_toml() {
        for name in presets::builtin_names() {
            let cfg = presets::builtin(name).unwrap();
            let toml_text = cfg.to_toml();
            let back = ScenarioConfig::from_toml(&toml_text).unwrap();
            assert_eq!(back, cfg, "round trip changed `{name}`");
        }
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let mut text = presets::builtin("census").unwrap().to_toml();
        text.push_str("\nbogus_key = 3\n");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn unknown_nested_key_is_rejected() {
        let text = r#"
            name = "x"
            [energy]
            mode = "competitive"
            alpha = 0.1
            beta = 0.0
            dim_rho = 1
            dim_mu = 1
            [energy.coupling]
            kind = "bilinear"
            b = [[1.0]]
            typo_field = 2.0
            [init.rho]
            kind = "gaussian"
            mean = [0.0]
            cov_diag = [1.0]
            [init.mu]
            kind = "dirac"
            point = [0.0]
            [solver]
            kind = "fv"
            lo = -5.0
            hi = 5.0
            cells = 50
            [dynamics]
            kind = "coupled"
            [time]
            t_end = 1.0
            dt = 0.001
            snapshot_every = 0.1
        "#;
        let err = ScenarioConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("typo_field"), "{err}");
    }

    #[test]
    fn field_of_wrong_kind_names_offending_key() {
        let mut cfg = presets::builtin("census").unwrap();
        cfg.energy.v1.strengthless_probe();
        // NegLogGaussian with an extra quadratic center: forbidden.
        cfg.energy.v1.kind = "zero".into();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("energy.v1"), "{err}");
    }

    #[test]
    fn missing_required_field_names_key() {
        let mut cfg = presets::builtin("census").unwrap();
        cfg.energy.coupling.a = None;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("energy.coupling.a"), "{err}");
    }

    #[test]
    fn cfl_precheck_names_dt() {
        let mut cfg = presets::builtin("census").unwrap();
        cfg.time.dt = 10.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("time.dt"), "{err}");
    }

    #[test]
    fn fast_dynamics_require_extras() {
        let mut cfg = presets::builtin("fast_x").unwrap();
        cfg.energy.extras = None;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("energy.extras"), "{err}");
    }
}

#[cfg(test)]
impl PotentialConfig {
    /// Test helper: set a field that the `zero` kind forbids.
    fn strengthless_probe(&mut self) {
        self.mean = Some(vec![0.0]);
    }
}
