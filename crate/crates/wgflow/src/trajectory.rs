//! Time-stamped measure-pair snapshots and scalar diagnostic channels.
//!
//! Both solvers (particle and finite-volume) emit a [`Trajectory`]: the
//! states recorded at the snapshot cadence plus long-format diagnostics
//! `(time, channel name, value)`. Which diagnostics are recorded is chosen
//! with an [`Observers`] value, so the time loops stay generic.

use crate::energy::{dissipation, eval_energy, EnergySpec};
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::ot_metrics::w2_auto;

/// One recorded state of the coupled system.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Simulation time.
    pub time: f64,
    /// Population species state.
    pub rho: Measure,
    /// Algorithm species state.
    pub mu: Measure,
}

/// One scalar diagnostic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticPoint {
    /// Simulation time.
    pub time: f64,
    /// Channel name (e.g. `energy`, `w2_rho_ref`).
    pub name: String,
    /// Recorded value.
    pub value: f64,
}

/// Snapshots plus diagnostics of one simulation run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// States at the snapshot cadence (always includes t = 0 and t = t_end).
    pub snapshots: Vec<Snapshot>,
    /// Long-format scalar diagnostics.
    pub diagnostics: Vec<DiagnosticPoint>,
}

impl Trajectory {
    /// Appends a diagnostic sample.
    pub fn record(&mut self, time: f64, name: &str, value: f64) {
        self.diagnostics.push(DiagnosticPoint { time, name: name.to_string(), value });
    }

    /// Extracts one channel as a (t, v) series in recording order.
    pub fn channel(&self, name: &str) -> Vec<(f64, f64)> {
        self.diagnostics
            .iter()
            .filter(|d| d.name == name)
            .map(|d| (d.time, d.value))
            .collect()
    }

    /// Names of all recorded channels, in first-appearance order.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for d in &self.diagnostics {
            if !names.contains(&d.name) {
                names.push(d.name.clone());
            }
        }
        names
    }

    /// Serializes diagnostics to long-format CSV with a `time,name,value`
    /// header. Floats use shortest round-trip formatting.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("time,name,value\n");
        for d in &self.diagnostics {
            out.push_str(&format!("{},{},{}\n", d.time, d.name, d.value));
        }
        out
    }
}

/// Parses a long-format diagnostics CSV (as written by
/// [`Trajectory::diagnostics_csv`]) and extracts one channel.
pub fn parse_channel_csv(text: &str, channel: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.splitn(3, ',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                what: "diagnostics csv".into(),
                message: format!("line {}: expected time,name,value", i + 1),
            });
        }
        if fields[1] != channel {
            continue;
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|e| Error::Parse {
                what: "diagnostics csv".into(),
                message: format!("line {}: {e}", i + 1),
            })
        };
        out.push((parse(fields[0])?, parse(fields[2])?));
    }
    if out.is_empty() {
        return Err(Error::InvalidSeries(format!("channel `{channel}` not found")));
    }
    Ok(out)
}

/// Selection of diagnostics to record at each snapshot.
#[derive(Debug, Clone, Default)]
pub struct Observers {
    /// Record `energy` = eval_energy(spec, rho, mu).
    pub energy: bool,
    /// Record `dissipation`.
    pub dissipation: bool,
    /// Record `moment2_rho` and `moment2_mu`.
    pub moments: bool,
    /// Reference pair: records `w2_rho_ref`, `w2_mu_ref`, and `wbar_ref`.
    pub reference: Option<(Measure, Measure)>,
}

impl Observers {
    /// Records the configured diagnostics for one snapshot.
    pub fn observe(
        &self,
        spec: &EnergySpec,
        time: f64,
        rho: &Measure,
        mu: &Measure,
        traj: &mut Trajectory,
    ) -> Result<()> {
        if self.energy {
            traj.record(time, "energy", eval_energy(spec, rho, mu)?);
        }
        if self.dissipation {
            traj.record(time, "dissipation", dissipation(spec, rho, mu)?);
        }
        if self.moments {
            traj.record(time, "moment2_rho", rho.moment2());
            traj.record(time, "moment2_mu", mu.moment2());
        }
        if let Some((rho_ref, mu_ref)) = &self.reference {
            let wr = w2_auto(rho, rho_ref)?;
            let wm = w2_auto(mu, mu_ref)?;
            traj.record(time, "w2_rho_ref", wr);
            traj.record(time, "w2_mu_ref", wm);
            traj.record(time, "wbar_ref", (wr * wr + wm * wm).sqrt());
        }
        Ok(())
    }
}
