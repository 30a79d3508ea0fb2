//! Stable output formats: trajectory CSV (17 significant digits, LF
//! newlines) and JSON check reports with deterministic key order.

use std::collections::BTreeMap;

use anyhow::Result;
use descartes::dynamics::Trajectory;
use descartes::exprlang::{Env, Expr};
use serde::Serialize;

/// One verification check: worst residual seen, the tolerance it was held
/// to, how many samples were inspected, and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

impl Check {
    pub fn new(max_residual: f64, tolerance: f64, samples: usize) -> Self {
        // Non-finite residuals (a gate that blew up mid-scan) fail the check
        // and are clamped so the JSON stays numeric.
        let finite = if max_residual.is_finite() {
            max_residual
        } else {
            f64::MAX
        };
        Check {
            max_residual: finite,
            tolerance,
            samples,
            pass: max_residual.is_finite() && max_residual <= tolerance,
        }
    }
}

/// A named battery of checks; BTreeMap keys give the stable ordering the
/// output contract requires.
pub type Report = BTreeMap<String, Check>;

pub fn all_pass(report: &Report) -> bool {
    report.values().all(|c| c.pass)
}

pub fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// 17 significant digits: enough to round-trip any f64 bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trajectory CSV: `t,x1..xN,v1..vN[,mu1..muM][,monitor:<name>...]`,
/// one row per sample, LF newlines.
pub fn trajectory_csv(
    traj: &Trajectory,
    dim: usize,
    monitors: &[(String, Expr)],
) -> Result<String> {
    let n_mu = traj.samples.first().map(|s| s.mu.len()).unwrap_or(0);
    let mut head = vec!["t".to_string()];
    head.extend((1..=dim).map(|k| format!("x{k}")));
    head.extend((1..=dim).map(|k| format!("v{k}")));
    head.extend((1..=n_mu).map(|j| format!("mu{j}")));
    head.extend(monitors.iter().map(|(name, _)| format!("monitor:{name}")));
    let mut out = head.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row = Vec::with_capacity(1 + 2 * dim + n_mu + monitors.len());
        row.push(fmt_f64(s.t));
        row.extend(s.x.iter().map(|v| fmt_f64(*v)));
        row.extend(s.v.iter().map(|v| fmt_f64(*v)));
        row.extend(s.mu.iter().map(|v| fmt_f64(*v)));
        if !monitors.is_empty() {
            let env = Env::extended(&s.x, &s.v, &[]);
            for (_, e) in monitors {
                row.push(fmt_f64(e.eval(&env)?));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Tidy long-format data for external plotting: `t,series,value`.
pub fn plot_csv(traj: &Trajectory, dim: usize) -> String {
    let mut out = String::from("t,series,value\n");
    for s in &traj.samples {
        for k in 0..dim {
            out.push_str(&format!("{},x{},{}\n", fmt_f64(s.t), k + 1, fmt_f64(s.x[k])));
        }
        for k in 0..dim {
            out.push_str(&format!("{},v{},{}\n", fmt_f64(s.t), k + 1, fmt_f64(s.v[k])));
        }
    }
    out
}
