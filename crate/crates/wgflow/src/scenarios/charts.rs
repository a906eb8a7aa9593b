//! Deterministic SVG charts for scenario reports.
//!
//! The charts are static: fixed canvas, fixed-precision coordinates, no
//! timestamps or environment-dependent content, so identical inputs yield
//! byte-identical files.

use std::fmt::Write as _;

use crate::error::Result;
use crate::measures::{GridDensity, Measure};
use crate::ot_metrics::RateFit;
use crate::trajectory::Trajectory;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String) {
    let _ = write!(
        out,
        "<line x1=\"{m:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{m:.1}\" y1=\"{t:.1}\" x2=\"{m:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN,
    );
}

/// Maps data to pixel coordinates inside the margins.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn from_ranges(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        };
        let (x0, x1) = pad(x.0, x.1);
        let (y0, y1) = pad(y.0, y.1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    let _ = write!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    );
}

fn legend(out: &mut String, entries: &[(&str, String)]) {
    for (i, (color, label)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 * (i as f64 + 1.0);
        let _ = write!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            W - MARGIN - 170.0,
            y - 9.0,
            W - MARGIN - 155.0,
            y,
            escape(label)
        );
    }
}

const PALETTE: [&str; 4] = ["#1b6ca8", "#c0392b", "#2e8b57", "#8e44ad"];

/// Density snapshots over z: up to four grid snapshots (first, two interior,
/// last). Non-grid snapshots yield an axes-only chart.
pub fn density_snapshot_chart(traj: &Trajectory, title: &str) -> String {
    let grids: Vec<(f64, &GridDensity)> = traj
        .snapshots
        .iter()
        .filter_map(|s| match &s.rho {
            Measure::Grid(g) => Some((s.time, g)),
            _ => None,
        })
        .collect();
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out);
    if !grids.is_empty() {
        let n = grids.len();
        let picks: Vec<usize> = if n <= 4 {
            (0..n).collect()
        } else {
            vec![0, n / 3, 2 * n / 3, n - 1]
        };
        let ymax = picks
            .iter()
            .flat_map(|&i| grids[i].1.values().iter().copied())
            .fold(0.0_f64, f64::max);
        let g0 = grids[0].1;
        let frame = Frame::from_ranges((g0.lo(), g0.hi()), (0.0, ymax));
        let mut entries = Vec::new();
        for (ci, &i) in picks.iter().enumerate() {
            let (t, g) = grids[i];
            let pts: Vec<(f64, f64)> =
                (0..g.cells()).map(|k| (g.center(k), g.values()[k])).collect();
            polyline(&mut out, &frame, &pts, PALETTE[ci % PALETTE.len()]);
            entries.push((PALETTE[ci % PALETTE.len()], format!("t = {t:.3}")));
        }
        legend(&mut out, &entries);
    }
    out.push_str("</svg>\n");
    out
}

/// Log-scale rate panel: log10 of a positive channel against time, with the
/// fitted line overlaid when a fit is available.
pub fn rate_panel_chart(
    series: &[(f64, f64)],
    fit: Option<&RateFit>,
    channel: &str,
    title: &str,
) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(t, v)| (*t, v.log10()))
        .collect();
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out);
    if !pts.is_empty() {
        let (tmin, tmax) = (pts[0].0, pts[pts.len() - 1].0);
        let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let frame = Frame::from_ranges((tmin, tmax), (ymin, ymax));
        polyline(&mut out, &frame, &pts, PALETTE[0]);
        let mut entries = vec![(PALETTE[0], format!("log10 {channel}"))];
        if let Some(f) = fit {
            let line: Vec<(f64, f64)> = [f.window.0, f.window.1]
                .iter()
                .map(|&t| (t, (f.intercept - f.rate * t) / std::f64::consts::LN_10))
                .collect();
            polyline(&mut out, &frame, &line, PALETTE[1]);
            entries.push((PALETTE[1], format!("fit rate {:.4}", f.rate)));
        }
        legend(&mut out, &entries);
    }
    out.push_str("</svg>\n");
    out
}

/// Two-line loss-versus-time comparison.
pub fn loss_comparison_chart(
    a: (&str, &[(f64, f64)]),
    b: (&str, &[(f64, f64)]),
    title: &str,
) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out);
    let all: Vec<(f64, f64)> = a.1.iter().chain(b.1.iter()).copied().collect();
    if !all.is_empty() {
        let tmin = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let tmax = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymin = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let frame = Frame::from_ranges((tmin, tmax), (ymin, ymax));
        polyline(&mut out, &frame, a.1, PALETTE[0]);
        polyline(&mut out, &frame, b.1, PALETTE[1]);
        legend(&mut out, &[(PALETTE[0], a.0.to_string()), (PALETTE[1], b.0.to_string())]);
    }
    out.push_str("</svg>\n");
    out
}

/// Writes a chart file, surfacing the path on I/O errors.
pub fn write_chart(path: &std::path::Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| crate::error::Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiracState;
    use crate::trajectory::Snapshot;

    #[test]
    fn empty_diagnostics_yield_axes_only_chart() {
        let traj = Trajectory::default();
        let svg = density_snapshot_chart(&traj, "empty");
        assert!(svg.contains("<line"));
        assert!(!svg.contains("<polyline"));
        let panel = rate_panel_chart(&[], None, "w2", "empty");
        assert!(panel.contains("<line") && !panel.contains("<polyline"));
    }

    #[test]
    fn charts_are_deterministic() {
        let mut traj = Trajectory::default();
        let g = GridDensity::gaussian(0.0, 1.0, -4.0, 4.0, 64).unwrap();
        traj.snapshots.push(Snapshot {
            time: 0.0,
            rho: Measure::Grid(g),
            mu: Measure::Dirac(DiracState::new(vec![0.0]).unwrap()),
        });
        let a = density_snapshot_chart(&traj, "density");
        let b = density_snapshot_chart(&traj, "density");
        assert_eq!(a, b);
        assert!(a.contains("<polyline"));
    }

    #[test]
    fn rate_panel_overlays_fit_line() {
        let series: Vec<(f64, f64)> = (0..20).map(|i| {
            let t = i as f64 * 0.1;
            (t, (-2.0 * t).exp())
        }).collect();
        let fit = crate::ot_metrics::fit_rate(&series, None).unwrap();
        let svg = rate_panel_chart(&series, Some(&fit), "w2_rho_ref", "rates");
        assert!(svg.matches("<polyline").count() == 2);
        assert!(svg.contains("fit rate 2.0000"));
    }
}
