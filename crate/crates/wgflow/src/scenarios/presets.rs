//! Built-in scenario presets, available by name from the library and the
//! CLI. Each encodes one experiment with its embedded assertions.

use crate::error::{Error, Result};

use super::config::{
    AssertionConfig, CouplingConfig, DynamicsConfig, EnergyConfig, EnsembleConfig, ExtrasConfig,
    FitConfig, InitConfig, KernelConfig, MeasureInit, OutputsConfig, PotentialConfig,
    ReferenceConfig, ScenarioConfig, SolverConfig, TimeConfig,
};

/// Names of all built-in scenarios, in presentation order.
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "census",
        "competitive_quadratic_fv",
        "competitive_quadratic_particles",
        "cooperative_quadratic",
        "fast_x",
        "fast_x_bounded",
        "fast_rho",
        "loan",
        "performative",
        "zero",
    ]
}

/// Looks up a built-in scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let cfg = match name {
        "census" => census(),
        "competitive_quadratic_fv" => competitive_quadratic_fv(),
        "competitive_quadratic_particles" => competitive_quadratic_particles(),
        "cooperative_quadratic" => cooperative_quadratic(),
        "fast_x" => fast_x(),
        "fast_x_bounded" => fast_x_bounded(),
        "fast_rho" => fast_rho(),
        "loan" => loan(),
        "performative" => performative(),
        "zero" => zero(),
        other => {
            return Err(Error::Config {
                key: "name".into(),
                message: format!(
                    "unknown built-in scenario `{other}`; known: {}",
                    builtin_names().join(", ")
                ),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Small constructors for the flat config unions
// ---------------------------------------------------------------------------

fn bilinear(b: Vec<Vec<f64>>) -> CouplingConfig {
    CouplingConfig { kind: "bilinear".into(), b: Some(b), zz: None, zx: None, xx: None, a: None, l: None }
}

fn quadratic_joint(zz: Vec<Vec<f64>>, zx: Vec<Vec<f64>>, xx: Vec<Vec<f64>>) -> CouplingConfig {
    CouplingConfig {
        kind: "quadratic_joint".into(),
        b: None,
        zz: Some(zz),
        zx: Some(zx),
        xx: Some(xx),
        a: None,
        l: None,
    }
}

fn logistic_game(a: f64, l: f64) -> CouplingConfig {
    CouplingConfig { kind: "logistic_game".into(), b: None, zz: None, zx: None, xx: None, a: Some(a), l: Some(l) }
}

fn quadratic_potential(center: Vec<f64>, curvature: Vec<Vec<f64>>) -> PotentialConfig {
    PotentialConfig {
        kind: "quadratic".into(),
        center: Some(center),
        curvature: Some(curvature),
        ..PotentialConfig::default()
    }
}

fn neg_log_gaussian(mean: Vec<f64>, cov_diag: Vec<f64>, scale: f64) -> PotentialConfig {
    PotentialConfig {
        kind: "neg_log_gaussian".into(),
        mean: Some(mean),
        cov_diag: Some(cov_diag),
        scale: Some(scale),
        ..PotentialConfig::default()
    }
}

fn gaussian_ensemble(mean: Vec<f64>, cov_diag: Vec<f64>, n: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        kind: "gaussian".into(),
        mean: Some(mean),
        cov_diag: Some(cov_diag),
        n: Some(n),
        seed: Some(seed),
        points: None,
    }
}

fn point_ensemble(points: Vec<Vec<f64>>) -> EnsembleConfig {
    EnsembleConfig { kind: "points".into(), mean: None, cov_diag: None, n: None, seed: None, points: Some(points) }
}

fn energy_1d(mode: &str, alpha: f64, beta: f64, coupling: CouplingConfig) -> EnergyConfig {
    EnergyConfig {
        mode: mode.into(),
        alpha,
        beta,
        dim_rho: 1,
        dim_mu: 1,
        coupling,
        v1: PotentialConfig::default(),
        v2: PotentialConfig::default(),
        w1: KernelConfig::default(),
        w2: KernelConfig::default(),
        extras: None,
    }
}

fn time(t_end: f64, dt: f64, snapshot_every: f64) -> TimeConfig {
    TimeConfig { t_end, dt, snapshot_every }
}

fn reference(kind: &str) -> ReferenceConfig {
    ReferenceConfig { kind: kind.into() }
}

fn base(name: &str, energy: EnergyConfig, init: InitConfig, solver: SolverConfig, dynamics: DynamicsConfig, t: TimeConfig) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        energy,
        init,
        init2: None,
        solver,
        dynamics,
        time: t,
        reference: ReferenceConfig::default(),
        fit: None,
        outputs: OutputsConfig::default(),
        assertions: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// The presets
// ---------------------------------------------------------------------------

/// Income-threshold game on the grid: a population of incomes reacts to a
/// frozen threshold classifier, and the approach to the tilted Gibbs steady
/// state is slow (the small logistic gain sets the clock).
fn census() -> ScenarioConfig {
    let mut energy = energy_1d("competitive", 0.1, 0.0, logistic_game(2.0, 0.06));
    energy.v1 = neg_log_gaussian(vec![54.0], vec![10.0], 0.1);
    energy.extras = Some(ExtrasConfig {
        kappa: 1.0,
        x0: vec![47.0],
        pi: gaussian_ensemble(vec![48.0], vec![4.0], 128, 11),
    });
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![54.0], vec![10.0]),
        mu: MeasureInit::dirac(vec![47.0]),
    };
    let mut cfg = base(
        "census",
        energy,
        init,
        SolverConfig::fv(28.0, 80.0, 400),
        DynamicsConfig::fixed_x(vec![47.0]),
        time(300.0, 0.01, 5.0),
    );
    cfg.reference = reference("gibbs");
    cfg.fit = Some(FitConfig { channel: "w2_rho_ref".into(), rel_floor: 1e-2 });
    cfg.assertions = vec![AssertionConfig::rate_between(0.005, 0.02)];
    cfg
}

fn competitive_quadratic_energy(alpha: f64, beta: f64) -> EnergyConfig {
    let mut energy = energy_1d("competitive", alpha, beta, bilinear(vec![vec![1.0]]));
    energy.v1 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy.v2 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy
}

/// Competitive bilinear-quadratic game on the grid; two runs from mirrored
/// initial pairs contract toward each other at the two-sided rate.
fn competitive_quadratic_fv() -> ScenarioConfig {
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![2.0], vec![0.25]),
        mu: MeasureInit::gaussian(vec![-2.0], vec![0.25]),
    };
    let mut cfg = base(
        "competitive_quadratic_fv",
        competitive_quadratic_energy(0.05, 0.05),
        init,
        SolverConfig::fv(-6.0, 6.0, 300),
        DynamicsConfig::coupled(),
        time(5.0, 1.5e-3, 0.1),
    );
    cfg.init2 = Some(InitConfig {
        rho: MeasureInit::gaussian(vec![-2.0], vec![0.25]),
        mu: MeasureInit::gaussian(vec![2.0], vec![0.25]),
    });
    cfg.fit = Some(FitConfig { channel: "wbar_pair".into(), rel_floor: 1e-2 });
    cfg.assertions = vec![
        AssertionConfig::channel_rate("wbar_pair", "lambda_c", 0.9),
        {
            let mut a = AssertionConfig::kind("r_squared_above");
            a.min = Some(0.99);
            a
        },
        AssertionConfig::kind("dissipation_envelope"),
        AssertionConfig::kind("moment_bound"),
    ];
    cfg
}

/// The same game carried by interacting particles with synchronous noise;
/// the pair distance between the mirrored runs is exactly the mean gap.
fn competitive_quadratic_particles() -> ScenarioConfig {
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![2.0], vec![0.25]),
        mu: MeasureInit::gaussian(vec![-2.0], vec![0.25]),
    };
    let mut cfg = base(
        "competitive_quadratic_particles",
        competitive_quadratic_energy(0.05, 0.05),
        init,
        SolverConfig::particles(4096, 7),
        DynamicsConfig::coupled(),
        time(5.0, 5e-3, 0.1),
    );
    cfg.init2 = Some(InitConfig {
        rho: MeasureInit::gaussian(vec![-2.0], vec![0.25]),
        mu: MeasureInit::gaussian(vec![2.0], vec![0.25]),
    });
    cfg.fit = Some(FitConfig { channel: "wbar_pair".into(), rel_floor: 1e-2 });
    cfg.assertions = vec![
        AssertionConfig::channel_rate("wbar_pair", "lambda_c", 0.9),
        {
            let mut a = AssertionConfig::kind("r_squared_above");
            a.min = Some(0.99);
            a
        },
        AssertionConfig::kind("moment_bound"),
    ];
    cfg
}

/// Cooperative quadratic game on the grid: joint descent of the shared
/// energy, with the gap decaying at twice the joint convexity rate and the
/// transport-entropy comparison along the way.
fn cooperative_quadratic() -> ScenarioConfig {
    let mut energy = energy_1d(
        "cooperative",
        0.1,
        0.1,
        quadratic_joint(vec![vec![1.0]], vec![vec![-1.0]], vec![vec![1.0]]),
    );
    energy.v1 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy.v2 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![2.0], vec![0.25]),
        mu: MeasureInit::gaussian(vec![-1.0], vec![0.25]),
    };
    let mut cfg = base(
        "cooperative_quadratic",
        energy,
        init,
        SolverConfig::fv(-6.0, 6.0, 300),
        DynamicsConfig::coupled(),
        time(3.5, 1e-3, 0.05),
    );
    cfg.reference = reference("gibbs");
    cfg.fit = Some(FitConfig { channel: "energy_gap".into(), rel_floor: 1e-2 });
    cfg.assertions = vec![
        AssertionConfig::channel_rate("energy_gap", "two_lambda_a", 0.9),
        AssertionConfig::kind("talagrand"),
    ];
    cfg
}

fn fast_extras(x0: Vec<f64>) -> ExtrasConfig {
    ExtrasConfig { kappa: 1.0, x0, pi: point_ensemble(vec![vec![0.0]]) }
}

/// Timescale-separated flow with an instantaneous best-responding
/// algorithm: the population relaxes at the frozen-opponent rate.
fn fast_x() -> ScenarioConfig {
    let mut energy = energy_1d("competitive", 1.0, 0.0, bilinear(vec![vec![1.0]]));
    energy.v1 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy.extras = Some(fast_extras(vec![0.0]));
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![2.0], vec![1.0]),
        mu: MeasureInit::dirac(vec![0.0]),
    };
    let mut cfg = base(
        "fast_x",
        energy,
        init,
        SolverConfig::fv(-8.0, 8.0, 240),
        DynamicsConfig::fast("fast_x"),
        time(6.0, 1e-3, 0.1),
    );
    cfg.reference = reference("terminal");
    cfg.assertions = vec![{
        let mut a = AssertionConfig::channel_rate("w2_rho_ref", "lambda_b", 0.9);
        a.rel_floor = Some(1e-2);
        a
    }];
    cfg
}

/// Same separation but with a concave-convex quadratic payoff, whose
/// best-response norm admits an a priori bound that the run must respect.
fn fast_x_bounded() -> ScenarioConfig {
    let mut energy = energy_1d(
        "competitive",
        1.0,
        0.0,
        quadratic_joint(vec![vec![-0.5]], vec![vec![0.0]], vec![vec![0.5]]),
    );
    energy.v1 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy.extras = Some(fast_extras(vec![1.0]));
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![2.0], vec![1.0]),
        mu: MeasureInit::dirac(vec![0.0]),
    };
    let mut cfg = base(
        "fast_x_bounded",
        energy,
        init,
        SolverConfig::fv(-8.0, 8.0, 240),
        DynamicsConfig::fast("fast_x"),
        time(6.0, 1e-3, 0.1),
    );
    cfg.reference = reference("terminal");
    cfg.assertions = vec![
        AssertionConfig::kind("best_response_bound"),
        {
            let mut a = AssertionConfig::channel_rate("w2_rho_ref", "lambda_b", 0.9);
            a.rel_floor = Some(1e-2);
            a
        },
        AssertionConfig::kind("moment_bound"),
    ];
    cfg
}

/// The opposite separation: the population equilibrates instantly (inner
/// Gibbs solve on the grid) while the finite-dimensional algorithm descends
/// its reduced objective.
fn fast_rho() -> ScenarioConfig {
    let mut energy = energy_1d("competitive", 1.0, 0.0, bilinear(vec![vec![1.0]]));
    energy.v1 = quadratic_potential(vec![0.0], vec![vec![1.0]]);
    energy.extras = Some(fast_extras(vec![0.0]));
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![0.0], vec![1.0]),
        mu: MeasureInit::dirac(vec![1.5]),
    };
    let mut cfg = base(
        "fast_rho",
        energy,
        init,
        SolverConfig::fv(-8.0, 8.0, 240),
        DynamicsConfig::fast("fast_rho"),
        time(4.0, 0.02, 0.05),
    );
    cfg.assertions = vec![
        {
            let mut a = AssertionConfig::channel_rate("x_norm", "lambda_d", 0.9);
            a.rel_floor = Some(1e-4);
            a
        },
        {
            let mut a = AssertionConfig::channel_rate("g_d_gap", "two_lambda_d", 0.9);
            a.rel_floor = Some(1e-4);
            a
        },
    ];
    cfg
}

/// Two-dimensional strategic lending population against a frozen
/// classifier: under a long-range attractive-repulsive kernel the initially
/// mislabeled subgroup ends up better classified than under the purely
/// attractive one.
fn loan() -> ScenarioConfig {
    let mut energy = EnergyConfig {
        mode: "competitive".into(),
        alpha: 0.05,
        beta: 0.0,
        dim_rho: 2,
        dim_mu: 2,
        coupling: logistic_game(3.0, 0.05),
        v1: neg_log_gaussian(vec![0.6, 0.6], vec![0.18, 0.18], 0.15),
        v2: PotentialConfig::default(),
        w1: KernelConfig { kind: "neg_abs".into(), ..KernelConfig::default() },
        w2: KernelConfig::default(),
        extras: None,
    };
    energy.extras = Some(ExtrasConfig {
        kappa: 1.0,
        x0: vec![0.0, 0.0],
        pi: gaussian_ensemble(vec![-0.6, -0.6], vec![0.08, 0.08], 160, 22),
    });
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![0.6, 0.6], vec![0.18, 0.18]),
        mu: MeasureInit::dirac(vec![0.0, 0.0]),
    };
    let mut cfg = base(
        "loan",
        energy,
        init,
        SolverConfig::particles(320, 21),
        DynamicsConfig::fixed_x(vec![0.0, 0.0]),
        time(2.0, 0.01, 0.1),
    );
    cfg.assertions = vec![{
        let mut a = AssertionConfig::kind("subgroup_higher_with_other_kernel");
        a.subgroup = Some("initially_mislabeled".into());
        a.other_kernel = Some(KernelConfig {
            kind: "morse".into(),
            c1: Some(4.0),
            c2: Some(3.0),
            l1: Some(0.2),
            l2: Some(2.0),
            ..KernelConfig::default()
        });
        a
    }];
    cfg
}

/// Performative-prediction comparison: coupled gradient descent of the
/// classifier against a probe-and-shift baseline that must pay simulation
/// time for every probe.
fn performative() -> ScenarioConfig {
    let mut energy = energy_1d("competitive", 0.05, 0.0, logistic_game(3.0, 0.1));
    energy.v1 = neg_log_gaussian(vec![0.0], vec![1.0], 0.05);
    energy.extras = Some(ExtrasConfig {
        kappa: 0.5,
        x0: vec![0.0],
        pi: gaussian_ensemble(vec![-2.0], vec![0.2], 64, 31),
    });
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![0.0], vec![1.0]),
        mu: MeasureInit::dirac(vec![0.0]),
    };
    let mut cfg = base(
        "performative",
        energy,
        init,
        SolverConfig::fv(-9.0, 9.0, 300),
        DynamicsConfig::mean_shift(6, 2.0, 50),
        time(8.0, 5e-3, 0.25),
    );
    cfg.assertions = vec![{
        let mut a = AssertionConfig::kind("gd_beats_baseline");
        a.margin = Some(0.05);
        a
    }];
    cfg
}

/// Smoke scenario: no dynamics, no rates; the run must leave the state
/// untouched and report no theoretical constants.
fn zero() -> ScenarioConfig {
    let energy = energy_1d("cooperative", 0.0, 0.0, logistic_game(1.0, 0.1));
    let init = InitConfig {
        rho: MeasureInit::gaussian(vec![0.0], vec![1.0]),
        mu: MeasureInit::dirac(vec![0.0]),
    };
    let mut cfg = base(
        "zero",
        energy,
        init,
        SolverConfig::particles(16, 3),
        DynamicsConfig { kind: "zero".into(), x_value: None, rounds: None, perturb_scale: None, inner_steps: None },
        time(1.0, 0.1, 0.25),
    );
    cfg.assertions = vec![
        AssertionConfig::kind("rates_absent"),
        AssertionConfig::kind("trajectory_constant"),
    ];
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates() {
        for name in builtin_names() {
            builtin(name).unwrap_or_else(|e| panic!("preset `{name}` invalid: {e}"));
        }
    }

    #[test]
    fn unknown_builtin_names_known_ones() {
        let err = builtin("no_such").unwrap_err();
        assert!(err.to_string().contains("census"), "{err}");
    }
}
