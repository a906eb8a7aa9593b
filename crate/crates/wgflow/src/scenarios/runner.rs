//! Scenario execution: dispatch into the solvers, derived diagnostics
//! channels, rate fitting, embedded assertions, and artifact emission.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::energy::{eval_energy, rate_constants, EnergySpec, Mode, RateConstants};
use crate::error::{Error, Result};
use crate::fv_solver::{gibbs_steady_state, Species};
use crate::measures::{DiracState, GridDensity, Measure};
use crate::ot_metrics::{fit_rate, w2_auto, RateFit};
use crate::timescale::{fast_algorithm_flow, fast_population_flow};
use crate::trajectory::{Observers, Snapshot, Trajectory};

use super::baseline::{classifier_loss, mean_shift_baseline, MeanShiftConfig};
use super::carrier::Carrier;
use super::charts;
use super::config::{AssertionConfig, InitConfig, ScenarioConfig, SolverKind};
use super::metrics::{classifier_metrics, predicts_label1, ClassifierMetrics};

/// Outcome of one embedded assertion.
#[derive(Debug, Clone, Serialize)]
pub struct AssertionResult {
    /// Assertion kind (plus channel where applicable).
    pub name: String,
    /// Whether it held.
    pub passed: bool,
    /// Human-readable evidence.
    pub detail: String,
}

/// Gradient-descent versus mean-shift-baseline comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GdComparison {
    /// Final loss of the coupled gradient-descent companion run.
    pub gd_final_loss: f64,
    /// Final loss of the baseline run.
    pub baseline_final_loss: f64,
    /// Spread of the loss across both runs.
    pub loss_range: f64,
    /// (baseline - gd) / range.
    pub margin_achieved: f64,
}

/// Versioned, deterministic run summary (wall clock excluded from the
/// determinism contract).
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// Summary schema version.
    pub schema_version: u32,
    /// Scenario name.
    pub name: String,
    /// Game mode.
    pub mode: String,
    /// Dynamics kind.
    pub dynamics: String,
    /// Solver kind.
    pub solver: String,
    /// Noise/sampling seed (particle backend).
    pub seed: Option<u64>,
    /// Theoretical rates from the family constants.
    pub rate_constants: RateConstants,
    /// Primary fitted channel, when configured.
    pub fit_channel: Option<String>,
    /// Primary fitted exponential rate.
    pub fitted_rate: Option<f64>,
    /// Full primary fit.
    pub fit: Option<RateFit>,
    /// Last recorded value of every diagnostics channel.
    pub final_metrics: BTreeMap<String, f64>,
    /// Classifier metrics (strategic-classification scenarios).
    pub classifier: Option<ClassifierMetrics>,
    /// Classifier metrics under the comparison kernel, when asserted.
    pub classifier_other_kernel: Option<ClassifierMetrics>,
    /// Gradient-descent comparison, when asserted.
    pub gd_comparison: Option<GdComparison>,
    /// Underdetermined modeling choices documented for auditability.
    pub choices: BTreeMap<String, String>,
    /// Embedded assertion outcomes.
    pub assertions: Vec<AssertionResult>,
    /// Run duration (not part of the determinism contract).
    pub wall_clock_seconds: f64,
}

/// Everything produced by [`run_scenario`].
#[derive(Debug)]
pub struct ScenarioOutcome {
    /// The run summary.
    pub summary: Summary,
    /// Primary trajectory (snapshots + diagnostics).
    pub trajectory: Trajectory,
    /// Loss series of the gradient-descent companion, when one ran.
    pub companion_loss: Option<Vec<(f64, f64)>>,
    /// True when every embedded assertion passed.
    pub passed: bool,
}

impl ScenarioOutcome {
    /// Pretty summary JSON (includes the wall clock).
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is serializable")
    }

    /// Summary JSON with the wall-clock field removed; byte-identical across
    /// reruns with the same config and seed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(&self.summary).expect("summary is serializable");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_clock_seconds");
        }
        serde_json::to_string_pretty(&v).expect("summary is serializable")
    }
}

// ---------------------------------------------------------------------------
// Dynamics dispatch
// ---------------------------------------------------------------------------

fn observers_for(spec: &EnergySpec, rho: &Measure, mu: &Measure) -> Observers {
    // Entropy terms are only evaluable on grids; skip the energy channel
    // when a diffusive species is particle-carried.
    let rho_ok = matches!(rho, Measure::Grid(_)) || spec.alpha == 0.0;
    let mu_ok = !matches!(mu, Measure::Particles(_)) || spec.beta == 0.0;
    Observers {
        energy: rho_ok && mu_ok,
        dissipation: true,
        moments: true,
        reference: None,
    }
}

/// Generic time loop for coupled and frozen-classifier dynamics.
fn run_flow(
    spec: &EnergySpec,
    mut carrier: Carrier,
    t_end: f64,
    dt: f64,
    snapshot_every: f64,
    frozen_mu: bool,
) -> Result<Trajectory> {
    let observers = observers_for(spec, &carrier.rho(), carrier.mu());
    let n_steps = ((t_end - carrier.time()) / dt).round().max(1.0) as usize;
    let stride = ((snapshot_every / dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    let record_loss = spec.dim_mu == 1 && matches!(carrier.mu(), Measure::Dirac(_));
    let snap = |carrier: &Carrier, traj: &mut Trajectory| -> Result<()> {
        let rho = carrier.rho();
        let mu = carrier.mu().clone();
        let t = carrier.time();
        traj.snapshots.push(Snapshot { time: t, rho: rho.clone(), mu: mu.clone() });
        observers.observe(spec, t, &rho, &mu, traj)?;
        if record_loss {
            if let Measure::Dirac(d) = &mu {
                traj.record(t, "loss", classifier_loss(spec, &rho, d.point()[0])?);
            }
        }
        Ok(())
    };
    snap(&carrier, &mut traj)?;
    for k in 1..=n_steps {
        if frozen_mu {
            carrier.step_frozen_mu(spec, dt)?;
        } else {
            carrier.step_coupled(spec, dt)?;
        }
        if k % stride == 0 || k == n_steps {
            snap(&carrier, &mut traj)?;
        }
    }
    Ok(traj)
}

/// A no-dynamics smoke run: the initial state is snapshotted on the time
/// grid without stepping.
fn run_zero(
    carrier: Carrier,
    t_end: f64,
    snapshot_every: f64,
) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    let n = (t_end / snapshot_every).round().max(1.0) as usize;
    for k in 0..=n {
        let t = (k as f64 * snapshot_every).min(t_end);
        let rho = carrier.rho();
        let mu = carrier.mu().clone();
        traj.snapshots.push(Snapshot { time: t, rho: rho.clone(), mu: mu.clone() });
        traj.record(t, "moment2_rho", rho.moment2());
        traj.record(t, "moment2_mu", mu.moment2());
    }
    Ok(traj)
}

fn realize_pair(cfg: &ScenarioConfig, init: &InitConfig, seed: u64) -> Result<(Measure, Measure)> {
    let n = cfg.solver.n.unwrap_or(1);
    let rho = init.rho.realize(&cfg.solver, n, seed, "init.rho")?;
    // Particle-sampled mu gets an offset seed so it is not correlated with
    // rho's sample; the noise stream itself comes from the solver seed.
    let mu = init.mu.realize(&cfg.solver, n, seed ^ 0x9e37_79b9_7f4a_7c15, "init.mu")?;
    Ok((rho, mu))
}

fn run_dynamics(
    cfg: &ScenarioConfig,
    spec: &EnergySpec,
    init: &InitConfig,
    seed: u64,
) -> Result<Trajectory> {
    let t = &cfg.time;
    match cfg.dynamics.kind.as_str() {
        "coupled" => {
            let (rho, mu) = realize_pair(cfg, init, seed)?;
            run_flow(spec, Carrier::new(rho, mu, seed)?, t.t_end, t.dt, t.snapshot_every, false)
        }
        "fixed_x" => {
            let x = cfg.dynamics.x_value.clone().unwrap();
            let (rho, _) = realize_pair(cfg, init, seed)?;
            let mu = Measure::Dirac(DiracState::new(x)?);
            run_flow(spec, Carrier::new(rho, mu, seed)?, t.t_end, t.dt, t.snapshot_every, true)
        }
        "zero" => {
            let (rho, mu) = realize_pair(cfg, init, seed)?;
            run_zero(Carrier::new(rho, mu, seed)?, t.t_end, t.snapshot_every)
        }
        "fast_x" => {
            let (rho, _) = realize_pair(cfg, init, seed)?;
            let observers = observers_for(spec, &rho, &Measure::Dirac(DiracState::new(
                vec![0.0; spec.dim_mu],
            )?));
            fast_algorithm_flow(spec, rho, t.t_end, t.dt, t.snapshot_every, seed, &observers)
        }
        "fast_rho" => {
            let x0 = match &init.mu.point {
                Some(p) => p.clone(),
                None => {
                    return Err(Error::Config {
                        key: "init.mu".into(),
                        message: "fast_rho needs a dirac initial classifier".into(),
                    })
                }
            };
            fast_population_flow(
                spec,
                &x0,
                t.t_end,
                t.dt,
                cfg.solver.lo.unwrap(),
                cfg.solver.hi.unwrap(),
                cfg.solver.cells.unwrap(),
                t.snapshot_every,
            )
        }
        "mean_shift_baseline" => {
            let (rho, mu) = realize_pair(cfg, init, seed)?;
            let x_init = match &mu {
                Measure::Dirac(d) => d.point()[0],
                other => other.mean()[0],
            };
            let ms = MeanShiftConfig {
                rounds: cfg.dynamics.rounds.unwrap_or(16),
                perturb_scale: cfg.dynamics.perturb_scale.unwrap(),
                inner_steps: cfg.dynamics.inner_steps.unwrap(),
                seed,
            };
            let carrier = Carrier::new(rho, Measure::Dirac(DiracState::new(vec![x_init])?), seed)?;
            mean_shift_baseline(spec, carrier, x_init, t.t_end, t.dt, ms)
        }
        other => Err(Error::Config {
            key: "dynamics.kind".into(),
            message: format!("unknown dynamics kind `{other}`"),
        }),
    }
}

// ---------------------------------------------------------------------------
// Derived channels and references
// ---------------------------------------------------------------------------

type Channels = BTreeMap<String, Vec<(f64, f64)>>;

fn collect_channels(traj: &Trajectory) -> Channels {
    traj.channel_names().into_iter().map(|n| {
        let series = traj.channel(&n);
        (n, series)
    }).collect()
}

/// The reference pair for `w2_*_ref` channels, per the configured kind.
fn compute_reference(
    cfg: &ScenarioConfig,
    spec: &EnergySpec,
    traj: &Trajectory,
) -> Result<Option<(Measure, Measure)>> {
    let last = match traj.snapshots.last() {
        Some(s) => s,
        None => return Ok(None),
    };
    match cfg.reference.kind.as_str() {
        "none" => Ok(None),
        "terminal" => Ok(Some((last.rho.clone(), last.mu.clone()))),
        "gibbs" => {
            let (lo, hi, cells) = match cfg.solver.kind() {
                SolverKind::Fv => (
                    cfg.solver.lo.unwrap(),
                    cfg.solver.hi.unwrap(),
                    cfg.solver.cells.unwrap(),
                ),
                SolverKind::Particles => {
                    return Err(Error::Config {
                        key: "reference.kind".into(),
                        message: "gibbs reference needs the grid backend".into(),
                    })
                }
            };
            match cfg.dynamics.kind.as_str() {
                // Frozen or terminally-frozen classifier: one Gibbs solve.
                "fixed_x" | "fast_x" => {
                    let mu = last.mu.clone();
                    let rho =
                        gibbs_steady_state(spec, Species::Rho, &mu, lo, hi, cells)?.density;
                    Ok(Some((Measure::Grid(rho), mu)))
                }
                // Coupled with a grid classifier: alternate both Gibbs maps.
                "coupled" if matches!(last.mu, Measure::Grid(_)) => {
                    let pair = coupled_gibbs_pair(spec, &last.mu, lo, hi, cells)?;
                    Ok(Some((Measure::Grid(pair.0), Measure::Grid(pair.1))))
                }
                _ => Ok(Some((last.rho.clone(), last.mu.clone()))),
            }
        }
        other => Err(Error::Config {
            key: "reference.kind".into(),
            message: format!("unknown reference kind `{other}`"),
        }),
    }
}

/// Alternating Gibbs fixed point of the coupled steady state.
fn coupled_gibbs_pair(
    spec: &EnergySpec,
    mu_start: &Measure,
    lo: f64,
    hi: f64,
    cells: usize,
) -> Result<(GridDensity, GridDensity)> {
    let mut mu = match mu_start {
        Measure::Grid(g) => g.clone(),
        _ => return Err(Error::invalid("coupled gibbs pair needs a grid classifier")),
    };
    let mut rho = gibbs_steady_state(spec, Species::Rho, &Measure::Grid(mu.clone()), lo, hi, cells)?
        .density;
    for _ in 0..300 {
        let mu_next =
            gibbs_steady_state(spec, Species::Mu, &Measure::Grid(rho.clone()), lo, hi, cells)?
                .density;
        let rho_next =
            gibbs_steady_state(spec, Species::Rho, &Measure::Grid(mu_next.clone()), lo, hi, cells)?
                .density;
        let diff = mu_next
            .values()
            .iter()
            .zip(mu.values())
            .chain(rho_next.values().iter().zip(rho.values()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        mu = mu_next;
        rho = rho_next;
        if diff < 1e-10 {
            return Ok((rho, mu));
        }
    }
    Err(Error::IterationLimit {
        limit: 300,
        residual: f64::NAN,
        context: "coupled Gibbs pair alternation".into(),
    })
}

fn add_reference_channels(
    channels: &mut Channels,
    traj: &Trajectory,
    reference: &(Measure, Measure),
) -> Result<()> {
    let mut wr = Vec::new();
    let mut wm = Vec::new();
    let mut wbar = Vec::new();
    for s in &traj.snapshots {
        let a = w2_auto(&s.rho, &reference.0)?;
        let b = w2_auto(&s.mu, &reference.1)?;
        wr.push((s.time, a));
        wm.push((s.time, b));
        wbar.push((s.time, (a * a + b * b).sqrt()));
    }
    channels.insert("w2_rho_ref".into(), wr);
    channels.insert("w2_mu_ref".into(), wm);
    channels.insert("wbar_ref".into(), wbar);
    Ok(())
}

/// Gap channels: a positive series decaying to zero, suitable for log fits.
fn add_gap_channels(
    channels: &mut Channels,
    spec: &EnergySpec,
    reference: Option<&(Measure, Measure)>,
) -> Result<()> {
    for (src, dst) in [("energy", "energy_gap"), ("g_d", "g_d_gap")] {
        let series = match channels.get(src) {
            Some(s) if !s.is_empty() => s.clone(),
            _ => continue,
        };
        // Subtract the reference energy when a true steady pair is known;
        // otherwise the series' own terminal value.
        let floor_val = match (src, reference) {
            ("energy", Some((r, m))) => eval_energy(spec, r, m)?,
            _ => series.last().unwrap().1,
        };
        let gap: Vec<(f64, f64)> = series.iter().map(|(t, v)| (*t, v - floor_val)).collect();
        channels.insert(dst.into(), gap);
    }
    Ok(())
}

fn add_pair_channel(
    channels: &mut Channels,
    traj: &Trajectory,
    traj2: &Trajectory,
) -> Result<()> {
    let n = traj.snapshots.len().min(traj2.snapshots.len());
    let mut series = Vec::with_capacity(n);
    for (a, b) in traj.snapshots.iter().zip(&traj2.snapshots).take(n) {
        let wr = w2_auto(&a.rho, &b.rho)?;
        let wm = w2_auto(&a.mu, &b.mu)?;
        series.push((a.time, (wr * wr + wm * wm).sqrt()));
    }
    channels.insert("wbar_pair".into(), series);
    Ok(())
}

/// Drops the discretization-limited tail: keeps values at least
/// `rel_floor * max`.
fn floored(series: &[(f64, f64)], rel_floor: f64) -> Vec<(f64, f64)> {
    let max = series.iter().map(|p| p.1).fold(0.0_f64, f64::max);
    series.iter().filter(|(_, v)| *v >= rel_floor * max && *v > 0.0).copied().collect()
}

fn fit_channel(
    channels: &Channels,
    name: &str,
    rel_floor: f64,
) -> Result<RateFit> {
    let series = channels.get(name).ok_or_else(|| {
        Error::InvalidSeries(format!("channel `{name}` not present in this run"))
    })?;
    fit_rate(&floored(series, rel_floor), None)
}

// ---------------------------------------------------------------------------
// Assertions
// ---------------------------------------------------------------------------

fn constant_value(name: &str, rc: &RateConstants, key: &str) -> Result<f64> {
    let v = match name {
        "lambda_a" => rc.lambda_a,
        "lambda_c" => rc.lambda_c,
        "lambda_b" => rc.lambda_b,
        "lambda_d" => rc.lambda_d,
        "two_lambda_a" => rc.lambda_a.map(|v| 2.0 * v),
        "two_lambda_d" => rc.lambda_d.map(|v| 2.0 * v),
        other => {
            return Err(Error::Config {
                key: key.into(),
                message: format!("unknown constant `{other}`"),
            })
        }
    };
    v.ok_or_else(|| Error::InvalidSeries(format!("constant `{name}` unavailable for this spec")))
}

struct AssertionContext<'a> {
    spec: &'a EnergySpec,
    cfg: &'a ScenarioConfig,
    rc: RateConstants,
    channels: &'a Channels,
    traj: &'a Trajectory,
    fit: Option<&'a RateFit>,
    classifier: Option<&'a ClassifierMetrics>,
    classifier_other: Option<&'a ClassifierMetrics>,
    gd: Option<&'a GdComparison>,
}

fn result(name: &str, passed: bool, detail: String) -> AssertionResult {
    AssertionResult { name: name.into(), passed, detail }
}

fn check_assertion(a: &AssertionConfig, ctx: &AssertionContext<'_>) -> AssertionResult {
    match a.kind.as_str() {
        "fitted_rate_between" => {
            let (lo, hi) = (a.lo.unwrap(), a.hi.unwrap());
            match ctx.fit {
                Some(f) => result(
                    &a.kind,
                    f.rate >= lo && f.rate <= hi,
                    format!("fitted rate {:.6} in [{lo}, {hi}]?", f.rate),
                ),
                None => result(&a.kind, false, "no primary fit configured".into()),
            }
        }
        "channel_rate_at_least" => {
            let channel = a.channel.as_deref().unwrap();
            let name = format!("channel_rate_at_least({channel})");
            let rel_floor = a.rel_floor.unwrap_or(1e-3);
            let factor = a.factor.unwrap();
            let constant = a.constant.as_deref().unwrap();
            let cv = match constant_value(constant, &ctx.rc, "assertion.constant") {
                Ok(v) => v,
                Err(e) => return result(&name, false, e.to_string()),
            };
            match fit_channel(ctx.channels, channel, rel_floor) {
                Ok(f) => result(
                    &name,
                    f.rate >= factor * cv,
                    format!(
                        "fitted {:.6} >= {factor} * {constant} = {:.6} (r2 {:.4})",
                        f.rate,
                        factor * cv,
                        f.r_squared
                    ),
                ),
                Err(e) => result(&name, false, e.to_string()),
            }
        }
        "r_squared_above" => {
            let min = a.min.unwrap();
            match ctx.fit {
                Some(f) => result(
                    &a.kind,
                    f.r_squared > min,
                    format!("r2 {:.6} > {min}?", f.r_squared),
                ),
                None => result(&a.kind, false, "no primary fit configured".into()),
            }
        }
        "dissipation_envelope" => {
            let slack = a.slack.unwrap_or(1.1);
            let lambda = match ctx.spec.mode {
                Mode::Competitive => ctx.rc.lambda_c,
                Mode::Cooperative => ctx.rc.lambda_a,
            };
            let lambda = match lambda {
                Some(l) => l,
                None => return result(&a.kind, false, "contraction rate unavailable".into()),
            };
            let series = match ctx.channels.get("dissipation") {
                Some(s) if !s.is_empty() => s,
                _ => return result(&a.kind, false, "dissipation channel missing".into()),
            };
            let d0 = series[0].1;
            let t0 = series[0].0;
            let mut worst: f64 = 0.0;
            for (t, v) in series {
                let bound = slack * (-2.0 * lambda * (t - t0)).exp() * d0;
                worst = worst.max(v / bound);
            }
            result(
                &a.kind,
                worst <= 1.0,
                format!("max dissipation / envelope = {worst:.4} (slack {slack})"),
            )
        }
        "moment_bound" => check_moment_bound(a, ctx),
        "talagrand" => check_talagrand(a, ctx),
        "best_response_bound" => {
            let norm = ctx.channels.get("b_norm_sq");
            let bound = ctx.channels.get("b_bound");
            match (norm, bound) {
                (Some(n), Some(b)) if !n.is_empty() && n.len() == b.len() => {
                    let worst = n
                        .iter()
                        .zip(b)
                        .map(|((_, v), (_, w))| v / w)
                        .fold(0.0_f64, f64::max);
                    result(
                        &a.kind,
                        worst <= 1.0,
                        format!("max |b|^2 / bound = {worst:.4} over {} checks", n.len()),
                    )
                }
                _ => result(
                    &a.kind,
                    false,
                    "best-response bound channels unavailable (a1/a2 missing?)".into(),
                ),
            }
        }
        "gd_beats_baseline" => {
            let margin = a.margin.unwrap();
            match ctx.gd {
                Some(c) => result(
                    &a.kind,
                    c.margin_achieved > margin,
                    format!(
                        "gd {:.4} vs baseline {:.4}; margin {:.4} of range {:.4} (need > {margin})",
                        c.gd_final_loss, c.baseline_final_loss, c.margin_achieved, c.loss_range
                    ),
                ),
                None => result(&a.kind, false, "comparison run unavailable".into()),
            }
        }
        "subgroup_higher_with_other_kernel" => {
            let sg = a.subgroup.as_deref().unwrap();
            let got = |m: Option<&ClassifierMetrics>| {
                m.and_then(|m| m.subgroup_accuracies.get(sg).copied())
            };
            match (got(ctx.classifier), got(ctx.classifier_other)) {
                (Some(primary), Some(other)) => result(
                    &a.kind,
                    other > primary,
                    format!("subgroup `{sg}`: other-kernel {other:.4} > primary {primary:.4}?"),
                ),
                _ => result(&a.kind, false, format!("subgroup `{sg}` metrics unavailable")),
            }
        }
        // No rate may be fabricated for a configuration it does not apply
        // to: the cross-mode contraction constant and (absent application
        // extras) both separated-timescale rates must be None.
        "rates_absent" => {
            let rc = &ctx.rc;
            let cross_mode_absent = match ctx.spec.mode {
                Mode::Cooperative => rc.lambda_c.is_none(),
                Mode::Competitive => rc.lambda_a.is_none(),
            };
            let absent = cross_mode_absent
                && (ctx.spec.application_extras.is_some()
                    || (rc.lambda_b.is_none() && rc.lambda_d.is_none()));
            result(&a.kind, absent, format!("{rc:?}"))
        }
        "trajectory_constant" => {
            let s = &ctx.traj.snapshots;
            if s.len() < 2 {
                return result(&a.kind, false, "need at least two snapshots".into());
            }
            let (first, last) = (&s[0], &s[s.len() - 1]);
            let drho = w2_auto(&first.rho, &last.rho).unwrap_or(f64::NAN);
            let dmu = w2_auto(&first.mu, &last.mu).unwrap_or(f64::NAN);
            result(
                &a.kind,
                drho == 0.0 && dmu == 0.0,
                format!("w2(rho0, rhoT) = {drho:.3e}, w2(mu0, muT) = {dmu:.3e}"),
            )
        }
        other => result(other, false, "unknown assertion kind".into()),
    }
}

fn check_moment_bound(a: &AssertionConfig, ctx: &AssertionContext<'_>) -> AssertionResult {
    let name = "moment_bound";
    let slack = a.slack.unwrap_or(1.1);
    if ctx.spec.mode != Mode::Competitive {
        return result(name, false, "moment bound applies to competitive scenarios".into());
    }
    let lambda_c = ctx.rc.lambda_c.unwrap_or(0.0);
    let (mr, mm) = match (ctx.channels.get("moment2_rho"), ctx.channels.get("moment2_mu")) {
        (Some(a), Some(b)) if !a.is_empty() && a.len() == b.len() => (a, b),
        _ => return result(name, false, "moment channels missing".into()),
    };
    let initial = mr[0].1 + mm[0].1;
    if lambda_c <= 0.0 {
        // 2c/lambda_c is +infinity: the a priori ball is vacuous, but the
        // trajectory is still reported.
        let max = mr.iter().zip(mm).map(|((_, a), (_, b))| a + b).fold(0.0_f64, f64::max);
        return result(
            name,
            true,
            format!("lambda_c <= 0: bound vacuous (max moment sum {max:.4})"),
        );
    }
    let chat = match chat_estimate(ctx.spec, ctx.cfg) {
        Some(c) => c,
        None => {
            return result(
                name,
                false,
                "c-hat estimate unavailable (multi-dimensional scan unsupported)".into(),
            )
        }
    };
    let ball = 2.0 * chat / lambda_c;
    let bound = slack * initial.max(ball);
    let max = mr.iter().zip(mm).map(|((_, a), (_, b))| a + b).fold(0.0_f64, f64::max);
    result(
        name,
        max <= bound,
        format!(
            "max moment sum {max:.4} <= {slack} * max(initial {initial:.4}, 2c/lambda {ball:.4})?"
        ),
    )
}

/// Numeric estimate of `c-hat = c + alpha d1 + beta d2` with
/// `c = V1(0) + V2(0) + max_z (f(z,0) - V1(z)) + max_x (-f(0,x) - V2(x))`,
/// by a 1D scan over the configured (or a default) domain.
fn chat_estimate(spec: &EnergySpec, cfg: &ScenarioConfig) -> Option<f64> {
    if spec.dim_rho != 1 || spec.dim_mu != 1 {
        return None;
    }
    let (lo, hi) = match cfg.solver.kind() {
        SolverKind::Fv => (cfg.solver.lo.unwrap(), cfg.solver.hi.unwrap()),
        SolverKind::Particles => (-10.0, 10.0),
    };
    let scan = |f: &dyn Fn(f64) -> f64| -> f64 {
        (0..=2000)
            .map(|k| lo + (hi - lo) * k as f64 / 2000.0)
            .map(f)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let c = spec.v1.value(&[0.0])
        + spec.v2.value(&[0.0])
        + scan(&|z| spec.coupling.f(&[z], &[0.0]) - spec.v1.value(&[z]))
        + scan(&|x| -spec.coupling.f(&[0.0], &[x]) - spec.v2.value(&[x]));
    Some(c + spec.alpha * spec.dim_rho as f64 + spec.beta * spec.dim_mu as f64)
}

fn check_talagrand(a: &AssertionConfig, ctx: &AssertionContext<'_>) -> AssertionResult {
    let name = "talagrand";
    let slack = a.slack.unwrap_or(1.1);
    let lambda_a = match ctx.rc.lambda_a {
        Some(l) if l > 0.0 => l,
        _ => return result(name, false, "lambda_a unavailable or nonpositive".into()),
    };
    let (wbar, gap) = match (ctx.channels.get("wbar_ref"), ctx.channels.get("energy_gap")) {
        (Some(w), Some(g)) if !w.is_empty() && w.len() == g.len() => (w, g),
        _ => return result(name, false, "wbar_ref / energy_gap channels missing".into()),
    };
    let gap0 = gap[0].1;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for ((_, w), (_, g)) in wbar.iter().zip(gap) {
        // Skip snapshots where the gap has decayed to the discretization
        // floor; both sides are numerical noise there.
        if *g < 1e-8 * gap0 {
            continue;
        }
        worst = worst.max(w * w / (slack * 2.0 / lambda_a * g));
        checked += 1;
    }
    result(
        name,
        checked > 0 && worst <= 1.0,
        format!("max W^2 / ((2/lambda) gap) = {:.4} over {checked} snapshots", worst * slack),
    )
}

// ---------------------------------------------------------------------------
// run_scenario
// ---------------------------------------------------------------------------

/// Runs a scenario end to end: simulate, derive channels, fit rates,
/// evaluate embedded assertions, and (optionally) write artifacts under
/// `out_dir`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    out_dir: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = cfg.energy.to_spec()?;
    let seed = seed_override.or(cfg.solver.seed).unwrap_or(0);

    let traj = run_dynamics(cfg, &spec, &cfg.init, seed)?;
    let mut channels = collect_channels(&traj);

    if let Some(init2) = &cfg.init2 {
        let traj2 = run_dynamics(cfg, &spec, init2, seed)?;
        add_pair_channel(&mut channels, &traj, &traj2)?;
    }

    let reference = compute_reference(cfg, &spec, &traj)?;
    if let Some(r) = &reference {
        add_reference_channels(&mut channels, &traj, r)?;
    }
    add_gap_channels(&mut channels, &spec, reference.as_ref())?;

    let fit = match &cfg.fit {
        Some(f) => Some(fit_channel(&channels, &f.channel, f.rel_floor)?),
        None => None,
    };

    // Classifier metrics for strategic-classification runs: particles
    // against the fixed label-1 ensemble, subgroups frozen at t = 0.
    let (classifier, subgroups) = classifier_summary(&spec, &traj)?;
    let classifier_other = run_other_kernel(cfg, &spec, seed, &subgroups)?;
    let (gd, companion_loss) = run_gd_companion(cfg, &spec, seed, &channels)?;

    let rc = rate_constants(&spec);
    let ctx = AssertionContext {
        spec: &spec,
        cfg,
        rc,
        channels: &channels,
        traj: &traj,
        fit: fit.as_ref(),
        classifier: classifier.as_ref(),
        classifier_other: classifier_other.as_ref(),
        gd: gd.as_ref(),
    };
    let assertions: Vec<AssertionResult> =
        cfg.assertions.iter().map(|a| check_assertion(a, &ctx)).collect();
    let passed = assertions.iter().all(|a| a.passed);

    let mut final_metrics: BTreeMap<String, f64> = channels
        .iter()
        .filter_map(|(n, s)| s.last().map(|(_, v)| (n.clone(), *v)))
        .collect();
    if let Some(s) = traj.snapshots.last() {
        final_metrics.insert("final_time".into(), s.time);
    }

    let summary = Summary {
        schema_version: 1,
        name: cfg.name.clone(),
        mode: cfg.energy.mode.clone(),
        dynamics: cfg.dynamics.kind.clone(),
        solver: cfg.solver.kind_str.clone(),
        seed: if matches!(cfg.solver.kind(), SolverKind::Particles) { Some(seed) } else { None },
        rate_constants: rate_constants(&spec),
        fit_channel: cfg.fit.as_ref().map(|f| f.channel.clone()),
        fitted_rate: fit.as_ref().map(|f| f.rate),
        fit,
        final_metrics,
        classifier,
        classifier_other_kernel: classifier_other,
        gd_comparison: gd,
        choices: documented_choices(cfg),
        assertions,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };

    let outcome = ScenarioOutcome { summary, trajectory: traj, companion_loss, passed };
    if let Some(dir) = resolve_out_dir(cfg, out_dir) {
        write_artifacts(cfg, &outcome, &channels, &dir)?;
    }
    Ok(outcome)
}

fn resolve_out_dir(cfg: &ScenarioConfig, cli: Option<&Path>) -> Option<std::path::PathBuf> {
    cli.map(Path::to_path_buf).or_else(|| cfg.outputs.csv_dir.as_ref().map(Into::into))
}

fn classifier_summary(
    spec: &EnergySpec,
    traj: &Trajectory,
) -> Result<(Option<ClassifierMetrics>, BTreeMap<String, Vec<usize>>)> {
    let extras = match &spec.application_extras {
        Some(e) => e,
        None => return Ok((None, BTreeMap::new())),
    };
    let (first, last) = match (traj.snapshots.first(), traj.snapshots.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Ok((None, BTreeMap::new())),
    };
    let (rho0, rho_t) = match (&first.rho, &last.rho) {
        (Measure::Particles(a), Measure::Particles(b)) => (a, b),
        _ => return Ok((None, BTreeMap::new())),
    };
    let x0 = first.mu.mean();
    let x_t = last.mu.mean();
    // Subgroups frozen at t = 0 against the initial classifier: label-0
    // points that start on the predicted-label-1 side are "initially
    // mislabeled".
    let mut mis = Vec::new();
    let mut ok = Vec::new();
    for i in 0..rho0.len() {
        if predicts_label1(rho0.point(i), &x0) {
            mis.push(i);
        } else {
            ok.push(i);
        }
    }
    let mut subgroups = BTreeMap::new();
    subgroups.insert("initially_mislabeled".to_string(), mis);
    subgroups.insert("initially_correct".to_string(), ok);
    let metrics = classifier_metrics(rho_t, &extras.pi, &x_t, &subgroups)?;
    Ok((Some(metrics), subgroups))
}

/// Reruns the scenario with `w1` swapped for the assertion's comparison
/// kernel and evaluates the same classifier metrics.
fn run_other_kernel(
    cfg: &ScenarioConfig,
    spec: &EnergySpec,
    seed: u64,
    subgroups: &BTreeMap<String, Vec<usize>>,
) -> Result<Option<ClassifierMetrics>> {
    let a = match cfg
        .assertions
        .iter()
        .find(|a| a.kind == "subgroup_higher_with_other_kernel")
    {
        Some(a) => a,
        None => return Ok(None),
    };
    let kernel = a
        .other_kernel
        .as_ref()
        .unwrap()
        .to_family("assertions.other_kernel")?;
    let mut other_spec = spec.clone();
    other_spec.w1 = kernel;
    let traj = run_dynamics(cfg, &other_spec, &cfg.init, seed)?;
    let last = traj.snapshots.last().unwrap();
    let rho_t = match &last.rho {
        Measure::Particles(p) => p,
        _ => return Ok(None),
    };
    let extras = other_spec.application_extras.as_ref().unwrap();
    Ok(Some(classifier_metrics(rho_t, &extras.pi, &last.mu.mean(), subgroups)?))
}

/// Runs the coupled gradient-descent companion when a `gd_beats_baseline`
/// assertion is present, and compares final losses.
fn run_gd_companion(
    cfg: &ScenarioConfig,
    spec: &EnergySpec,
    seed: u64,
    channels: &Channels,
) -> Result<(Option<GdComparison>, Option<Vec<(f64, f64)>>)> {
    if !cfg.assertions.iter().any(|a| a.kind == "gd_beats_baseline") {
        return Ok((None, None));
    }
    let baseline_loss = channels
        .get("loss")
        .ok_or_else(|| Error::InvalidSeries("baseline run recorded no loss channel".into()))?;
    let mut gd_cfg = cfg.clone();
    gd_cfg.dynamics = super::config::DynamicsConfig::coupled();
    let traj = run_dynamics(&gd_cfg, spec, &cfg.init, seed)?;
    let gd_loss = traj.channel("loss");
    if gd_loss.is_empty() {
        return Err(Error::InvalidSeries("companion run recorded no loss channel".into()));
    }
    let all: Vec<f64> =
        baseline_loss.iter().chain(&gd_loss).map(|(_, v)| *v).collect();
    let range = all.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - all.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let gd_final = gd_loss.last().unwrap().1;
    let base_final = baseline_loss.last().unwrap().1;
    let comparison = GdComparison {
        gd_final_loss: gd_final,
        baseline_final_loss: base_final,
        loss_range: range,
        margin_achieved: if range > 0.0 { (base_final - gd_final) / range } else { 0.0 },
    };
    Ok((Some(comparison), Some(gd_loss)))
}

fn documented_choices(cfg: &ScenarioConfig) -> BTreeMap<String, String> {
    let mut c = BTreeMap::new();
    if cfg.dynamics.kind == "mean_shift_baseline" {
        c.insert(
            "baseline_perturbation".into(),
            format!(
                "uniform on [-s, s], s = {}, {} probes per cycle",
                cfg.dynamics.perturb_scale.unwrap_or(0.0),
                cfg.dynamics.rounds.unwrap_or(16)
            ),
        );
        c.insert(
            "baseline_surrogate".into(),
            "initial population translated to the fitted mean c0 + c1 x".into(),
        );
        c.insert(
            "baseline_minimizer".into(),
            "golden-section on a bracket around the running classifier".into(),
        );
    }
    c
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.display().to_string(), source: e }
}

fn write_measure_csv(m: &Measure, path: &Path) -> Result<()> {
    let text = match m {
        Measure::Grid(g) => g.to_csv(),
        Measure::Particles(p) => p.to_csv(),
        Measure::Dirac(_) => return Ok(()), // a point needs no file
    };
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_artifacts(
    cfg: &ScenarioConfig,
    outcome: &ScenarioOutcome,
    channels: &Channels,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let traj = &outcome.trajectory;
    // Diagnostics: recorded channels plus derived ones, in one long CSV.
    let mut full = Trajectory::default();
    for (name, series) in channels {
        for (t, v) in series {
            full.record(*t, name, *v);
        }
    }
    std::fs::write(dir.join("diagnostics.csv"), full.diagnostics_csv())
        .map_err(io_err(&dir.join("diagnostics.csv")))?;
    if let (Some(first), Some(last)) = (traj.snapshots.first(), traj.snapshots.last()) {
        write_measure_csv(&first.rho, &dir.join("rho_initial.csv"))?;
        write_measure_csv(&last.rho, &dir.join("rho_final.csv"))?;
        write_measure_csv(&last.mu, &dir.join("mu_final.csv"))?;
    }
    std::fs::write(dir.join("summary.json"), outcome.summary_json())
        .map_err(io_err(&dir.join("summary.json")))?;
    if cfg.outputs.svg {
        charts::write_chart(
            &dir.join("density_snapshots.svg"),
            &charts::density_snapshot_chart(traj, &format!("{}: population density", cfg.name)),
        )?;
        if let Some(fc) = &cfg.fit {
            if let Some(series) = channels.get(&fc.channel) {
                charts::write_chart(
                    &dir.join("rate_panel.svg"),
                    &charts::rate_panel_chart(
                        series,
                        outcome.summary.fit.as_ref(),
                        &fc.channel,
                        &format!("{}: {} decay", cfg.name, fc.channel),
                    ),
                )?;
            }
        }
        if let (Some(gd_loss), Some(base_loss)) =
            (&outcome.companion_loss, channels.get("loss"))
        {
            charts::write_chart(
                &dir.join("loss_comparison.svg"),
                &charts::loss_comparison_chart(
                    ("gradient descent", gd_loss),
                    ("mean-shift baseline", base_loss),
                    &format!("{}: classifier loss", cfg.name),
                ),
            )?;
        }
    }
    Ok(())
}
