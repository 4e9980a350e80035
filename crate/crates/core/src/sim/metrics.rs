//! Scalar summaries of a run.

use std::fmt::Write as _;

use super::{Disturbance, LogRecord};
use crate::mathcore::rotation_from_euler;

/// Maximum of `f(record)` over records with `t` in `[from, to]`.
pub fn peak(log: &[LogRecord], from: f64, to: f64, f: impl Fn(&LogRecord) -> f64) -> f64 {
    log.iter().filter(|r| r.t >= from && r.t <= to).map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest power flow over all DoFs.
pub fn peak_power(log: &[LogRecord]) -> f64 {
    peak(log, f64::NEG_INFINITY, f64::INFINITY, |r| r.p_flow.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Largest `|e_v|` over all DoFs.
pub fn peak_velocity_error(log: &[LogRecord]) -> f64 {
    peak(log, f64::NEG_INFINITY, f64::INFINITY, |r| r.e_v.max_abs())
}

/// Times where `f` changes sign, linearly interpolated between records.
/// A zero sample counts as the non-negative side.
pub fn zero_crossings(log: &[LogRecord], f: impl Fn(&LogRecord) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for w in log.windows(2) {
        let (a, b) = (f(&w[0]), f(&w[1]));
        if (a < 0.0) != (b < 0.0) {
            let s = if b != a { a / (a - b) } else { 0.0 };
            out.push(w[0].t + s * (w[1].t - w[0].t));
        }
    }
    out
}

/// First time at or after `from` after which `|f| < threshold` for the rest
/// of the log. `None` if the last sample is still above.
pub fn settling_time(log: &[LogRecord], from: f64, threshold: f64, f: impl Fn(&LogRecord) -> f64) -> Option<f64> {
    let tail: Vec<&LogRecord> = log.iter().filter(|r| r.t >= from).collect();
    let last_above = tail.iter().rposition(|r| !(f(r).abs() < threshold));
    match last_above {
        None => tail.first().map(|r| r.t),
        Some(i) if i + 1 < tail.len() => Some(tail[i + 1].t),
        Some(_) => None,
    }
}

/// Maximal runs of consecutive records where `pred` holds, as `(start, end)`.
pub fn intervals(log: &[LogRecord], pred: impl Fn(&LogRecord) -> bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for r in log {
        if pred(r) {
            start.get_or_insert(r.t);
            last = r.t;
        } else if let Some(s) = start.take() {
            out.push((s, last));
        }
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

/// Peak translational velocity error against the push direction of `d` after
/// the push ends, i.e. the overshoot on release. Zero for a pure torque.
pub fn rebound(log: &[LogRecord], d: &Disturbance) -> f64 {
    let f = d.wrench_world.linear();
    let n = f.norm();
    if n == 0.0 {
        return 0.0;
    }
    let dir = f * (1.0 / n);
    let end = d.start + d.duration;
    peak(log, end, f64::INFINITY, |r| {
        let rot = rotation_from_euler(r.pose[3], r.pose[4], r.pose[5]);
        -rot.mul_vec(&r.e_v.linear()).dot(&dir)
    })
    .max(0.0)
}

/// Time after `from` from which the speed along body `axis` stays below
/// `threshold`.
pub fn stop_time(log: &[LogRecord], from: f64, axis: usize, threshold: f64) -> Option<f64> {
    settling_time(log, from, threshold, |r| r.twist[axis])
}

/// Power flow above the limit by more than `tol` on DoF `i`.
pub fn power_violated(r: &LogRecord, i: usize, tol: f64) -> bool {
    r.p_flow[i] > r.p_bar[i] + tol
}

/// Any QP row of DoF `i` relaxed by its slack.
pub fn slack_active(r: &LogRecord, i: usize, tol: f64) -> bool {
    r.power_slack[i].abs() > tol || r.input_slack[i].abs() > tol
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub duration: f64,
    pub records: usize,
    pub peak_power: f64,
    pub peak_velocity_error: f64,
    /// Per DoF, crossings of the LLE of the loop active at each record.
    pub lle_zero_crossings: [Vec<f64>; 6],
    /// Per DoF, total time with a relaxed power or input row.
    pub qp_violation_time: [f64; 6],
    pub qp_fallbacks: usize,
}

/// Slack magnitude treated as a real relaxation rather than round-off.
pub const SLACK_TOL: f64 = 1e-6;

impl Summary {
    pub fn from_log(log: &[LogRecord]) -> Self {
        let dt = if log.len() > 1 { log[1].t - log[0].t } else { 0.0 };
        let active_lle = |r: &LogRecord, i: usize| if r.wrench_mode[i] { r.lle_wrench[i] } else { r.lle_pose[i] };
        Self {
            duration: log.last().map_or(0.0, |r| r.t),
            records: log.len(),
            peak_power: peak_power(log),
            peak_velocity_error: peak_velocity_error(log),
            lle_zero_crossings: std::array::from_fn(|i| zero_crossings(log, |r| active_lle(r, i))),
            qp_violation_time: std::array::from_fn(|i| log.iter().filter(|r| slack_active(r, i, SLACK_TOL)).count() as f64 * dt),
            qp_fallbacks: log.iter().filter(|r| r.qp_fallback).count(),
        }
    }

    pub fn to_text(&self) -> String {
        const DOF: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];
        let mut s = String::new();
        let _ = writeln!(s, "duration_s = {:.6}", self.duration);
        let _ = writeln!(s, "records = {}", self.records);
        let _ = writeln!(s, "peak_power_W = {:.9e}", self.peak_power);
        let _ = writeln!(s, "peak_velocity_error = {:.9e}", self.peak_velocity_error);
        let _ = writeln!(s, "qp_fallbacks = {}", self.qp_fallbacks);
        for (i, name) in DOF.iter().enumerate() {
            let times: Vec<String> = self.lle_zero_crossings[i].iter().map(|t| format!("{t:.4}")).collect();
            let _ = writeln!(s, "lle_zero_crossings_{name}_s = [{}]", times.join(", "));
        }
        for (i, name) in DOF.iter().enumerate() {
            let _ = writeln!(s, "qp_violation_time_{name}_s = {:.4}", self.qp_violation_time[i]);
        }
        s
    }
}
