use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{ControlReport, EpisodeRecord};
use super::metrics::MetricsReport;
use super::HarnessError;
use crate::planner::Difficulty;

pub const METRICS_HEADER: &str = "model,object,trans_pct,pos_mm,rot_deg";

/// Everything an evaluation produced, with the configuration and the
/// hashes of the inputs that produced it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: serde_json::Value,
    /// Input file path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub prediction: Vec<MetricsReport>,
    pub control: Vec<ControlReport>,
}

impl Report {
    /// Union of two reports; entries of `other` are appended.
    pub fn merge(mut self, other: Report) -> Self {
        if self.config.is_null() {
            self.config = other.config;
        }
        self.inputs.extend(other.inputs);
        self.prediction.extend(other.prediction);
        self.control.extend(other.control);
        self
    }
}

/// One CSV per dataset, in first-seen order.
pub fn metrics_csv(reports: &[MetricsReport]) -> Vec<(String, String)> {
    let mut order: Vec<String> = Vec::new();
    for r in reports {
        if !order.contains(&r.dataset) {
            order.push(r.dataset.clone());
        }
    }
    order
        .into_iter()
        .map(|ds| {
            let mut csv = String::from(METRICS_HEADER);
            csv.push('\n');
            for r in reports.iter().filter(|r| r.dataset == ds) {
                for o in &r.objects {
                    let trans = o.trans_pct.map_or_else(|| "NA".to_string(), |t| format!("{t:.6}"));
                    let _ = writeln!(csv, "{},{},{},{:.6},{:.6}", r.model, o.object + 1, trans, o.pos_mm, o.rot_deg);
                }
            }
            (format!("metrics_{ds}.csv"), csv)
        })
        .collect()
}

pub fn control_csv(reports: &[ControlReport]) -> String {
    let mut csv = String::from("model,easy_success,hard_success,episodes\n");
    for r in reports {
        let _ = writeln!(csv, "{},{:.4},{:.4},{}", r.model, r.easy_success, r.hard_success, r.episodes.len());
    }
    csv
}

pub fn episode_file_stem(e: &EpisodeRecord) -> String {
    format!("episode_{}_{}", e.index, e.difficulty.name())
}

/// Overhead view: disk outlines at the start (dashed) and end, the goal
/// with its tolerance, and the path of disk 2.
pub fn episode_svg(e: &EpisodeRecord, radii: &[f64]) -> String {
    const SCALE: f64 = 2000.0;
    const MARGIN: f64 = 0.03;
    let frames = &e.outcome.trajectory;
    let goal = e.outcome.goal.position;
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let mut lo = [goal[0], goal[1]];
    let mut hi = lo;
    for f in frames {
        for d in &f.disks {
            for k in 0..2 {
                lo[k] = lo[k].min(d[k]);
                hi[k] = hi[k].max(d[k]);
            }
        }
    }
    let pad = rmax + MARGIN;
    let (x0, y0) = (lo[0] - pad, lo[1] - pad);
    let (w, h) = ((hi[0] - lo[0] + 2.0 * pad) * SCALE, (hi[1] - lo[1] + 2.0 * pad) * SCALE);
    // y axis points up in the world and down in SVG
    let px = |x: f64| (x - x0) * SCALE;
    let py = |y: f64| h - (y - y0) * SCALE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let colors = ["#1f77b4", "#d62728", "#2ca02c"];
    let g = e.outcome.goal;
    let _ = writeln!(
        s,
        r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#ffd70066" stroke="#b8860b"/>"##,
        px(g.position[0]),
        py(g.position[1]),
        (g.tolerance * SCALE).max(2.0)
    );
    if let (Some(first), Some(last)) = (frames.first(), frames.last()) {
        for (i, (a, b)) in first.disks.iter().zip(&last.disks).enumerate() {
            let c = colors[i % colors.len()];
            let r = radii.get(i).copied().unwrap_or(rmax) * SCALE;
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="none" stroke="{c}" stroke-dasharray="6 4"/>"#,
                px(a[0]),
                py(a[1])
            );
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="{c}33" stroke="{c}" stroke-width="2"/>"#,
                px(b[0]),
                py(b[1])
            );
        }
    }
    let path: Vec<String> = frames
        .iter()
        .filter_map(|f| f.disks.get(1))
        .map(|d| format!("{:.2},{:.2}", px(d[0]), py(d[1])))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, path.join(" "));
    let label = match e.difficulty {
        Difficulty::Easy => "easy",
        Difficulty::Hard => "hard",
    };
    let _ = writeln!(
        s,
        r##"<text x="8" y="20" font-family="sans-serif" font-size="14" fill="#333">{} {} | {} pushes | {:.1} mm</text>"##,
        label,
        if e.outcome.success { "success" } else { "failure" },
        e.outcome.steps,
        e.outcome.final_distance * 1e3
    );
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Write { path: parent.into(), source: e })?;
    }
    std::fs::write(&path, bytes).map_err(|e| HarnessError::Write { path: path.clone(), source: e })?;
    Ok(path)
}

/// Writes `<stem>.json`, one metrics CSV per dataset, `control.csv` and one
/// SVG plus one JSON log per control episode under `episodes/<model>/`.
/// Returns the written paths in a fixed order.
pub fn emit_report(report: &Report, stem: &str, radii_of: impl Fn(&EpisodeRecord) -> Vec<f64>, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let json = serde_json::to_vec_pretty(report).map_err(|e| HarnessError::Config(e.to_string()))?;
    written.push(write(out_dir.join(format!("{stem}.json")), &json)?);
    for (name, csv) in metrics_csv(&report.prediction) {
        written.push(write(out_dir.join(name), csv.as_bytes())?);
    }
    if !report.control.is_empty() {
        written.push(write(out_dir.join("control.csv"), control_csv(&report.control).as_bytes())?);
    }
    for c in &report.control {
        let dir = out_dir.join("episodes").join(&c.model);
        for e in &c.episodes {
            let stem = episode_file_stem(e);
            written.push(write(dir.join(format!("{stem}.svg")), episode_svg(e, &radii_of(e)).as_bytes())?);
            let log = serde_json::to_vec(e).map_err(|e| HarnessError::Config(e.to_string()))?;
            written.push(write(dir.join(format!("{stem}.json")), &log)?);
        }
    }
    Ok(written)
}
