//! Self-rendered SVG figures.

use std::fmt::Write as _;

use crate::lle::{nominal_lle, pose_jacobian};
use crate::safety::safeset::{sample_boundary, PosePlane, PoseSetKind, WrenchPlane};
use crate::sim::LogRecord;

use super::log_csv::CsvError;
use super::scenario_file::DOF_NAMES;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 150.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 30.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    /// Unconnected markers instead of a polyline.
    pub scatter: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, dashed: false, scatter: false }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed ranges; autoscaled from the data when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new(), x_range: None, y_range: None }
    }
}

fn range(series: &[Series], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let (lo, hi) = series
        .iter()
        .flat_map(|s| s.points.iter().map(&pick))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// About five round tick values inside `(lo, hi)`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, p: &Panel, y0: f64) {
    let x_range = p.x_range.unwrap_or_else(|| range(&p.series, |q| q.0));
    let y_range = p.y_range.unwrap_or_else(|| range(&p.series, |q| q.1));
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let h = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_range.0) / (x_range.1 - x_range.0) * w;
    let sy = |y: f64| y0 + MARGIN_T + h - (y - y_range.0) / (y_range.1 - y_range.0) * h;
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ =
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" font-weight="bold">{}</text>"#, MARGIN_L, y0 + 16.0, escape(&p.title));
    let _ =
        writeln!(out, r##"<rect x="{MARGIN_L:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##, y0 + MARGIN_T);
    for t in ticks(x_range.0, x_range.1) {
        let x = sx(t);
        let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, y0 + MARGIN_T, y0 + MARGIN_T + h);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
            y0 + MARGIN_T + h + 11.0,
            tick_label(t)
        );
    }
    for t in ticks(y_range.0, y_range.1) {
        let y = sy(t);
        let _ = writeln!(out, r##"<line x1="{MARGIN_L:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, MARGIN_L + w);
        let _ =
            writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#, MARGIN_L - 4.0, y + 3.0, tick_label(t));
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
        MARGIN_L + w / 2.0,
        y0 + PANEL_H - 4.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" font-size="10" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        y0 + MARGIN_T + h / 2.0,
        y0 + MARGIN_T + h / 2.0,
        escape(&p.y_label)
    );
    let clip = format!("clip{}", y0 as i64);
    let _ = writeln!(
        out,
        r#"<clipPath id="{clip}"><rect x="{MARGIN_L:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}"/></clipPath>"#,
        y0 + MARGIN_T
    );
    for (k, s) in p.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|q| q.0.is_finite() && q.1.is_finite()).map(|q| (sx(q.0), sy(q.1))).collect();
        if s.scatter {
            let _ = write!(out, r#"<g clip-path="url(#{clip})" fill="{color}">"#);
            for (x, y) in &pts {
                let _ = write!(out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="1.2"/>"#);
            }
            let _ = writeln!(out, "</g>");
        } else {
            let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let dash = if s.dashed { r#" stroke-dasharray="4 3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline clip-path="url(#{clip})" fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{}"/>"#,
                d.join(" ")
            );
        }
        let ly = y0 + MARGIN_T + 10.0 + 13.0 * k as f64;
        let lx = MARGIN_L + w + 8.0;
        let _ = writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 14.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#, lx + 18.0, ly + 3.0, escape(&s.label));
    }
    let _ = writeln!(out, "</g>");
}

/// Panels stacked vertically in one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_H * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Element names and attribute names in document order, without any
/// coordinates or text. Two figures with the same layout and series count
/// share a signature.
pub fn structure(svg: &str) -> String {
    let mut sig = String::new();
    for tag in svg.split('<').skip(1) {
        let tag = tag.split('>').next().unwrap_or_default();
        if tag.starts_with('/') {
            continue;
        }
        let name = tag.split_whitespace().next().unwrap_or_default().trim_end_matches('/');
        sig.push_str(name);
        for attr in tag.split_whitespace().skip(1) {
            if let Some((k, _)) = attr.split_once('=') {
                sig.push(' ');
                sig.push_str(k);
            }
        }
        sig.push('\n');
    }
    sig
}

fn series_of(log: &[LogRecord], label: String, f: impl Fn(&LogRecord) -> f64) -> Series {
    Series::line(label, log.iter().map(|r| (r.t, f(r))).collect())
}

/// DoFs that leave zero anywhere in the log, falling back to x.
pub fn active_dofs(log: &[LogRecord]) -> Vec<usize> {
    let dofs: Vec<usize> = (0..6).filter(|&i| log.iter().any(|r| r.e_p[i] != 0.0 || r.e_v[i] != 0.0 || r.tau_c[i] != 0.0)).collect();
    if dofs.is_empty() {
        vec![0]
    } else {
        dofs
    }
}

/// Five rows: pose error, velocity error, commanded and applied wrench,
/// power flow against its limit, and the LLE of the loop in charge.
pub fn timeseries(log: &[LogRecord], dofs: &[usize]) -> Result<String, CsvError> {
    if log.is_empty() {
        return Err(CsvError::SchemaMismatch("log has no records".into()));
    }
    let mut e_p = Panel::new("pose error", "t [s]", "e_p [m, rad]");
    let mut e_v = Panel::new("velocity error", "t [s]", "e_v [m/s, rad/s]");
    let mut tau = Panel::new("commanded / applied wrench", "t [s]", "tau [N, N m]");
    let mut power = Panel::new("power flow / limit", "t [s]", "P [W]");
    let mut lle = Panel::new("largest Lyapunov exponent", "t [s]", "lambda [1/s]");
    for &i in dofs {
        let n = DOF_NAMES[i];
        e_p.series.push(series_of(log, n.to_string(), |r| r.e_p[i]));
        e_v.series.push(series_of(log, n.to_string(), |r| r.e_v[i]));
        tau.series.push(series_of(log, format!("{n} cmd"), |r| r.tau_c[i]));
        tau.series.push(Series { dashed: true, ..series_of(log, format!("{n} applied"), |r| r.tau_a[i]) });
        power.series.push(series_of(log, format!("{n} flow"), |r| r.p_flow[i]));
        power.series.push(Series { dashed: true, ..series_of(log, format!("{n} limit"), |r| r.p_bar[i]) });
        lle.series.push(series_of(log, n.to_string(), |r| if r.wrench_mode[i] { r.lle_wrench[i] } else { r.lle_pose[i] }));
    }
    Ok(render(&[e_p, e_v, tau, power, lle]))
}

/// Regulation-case parameters of the pose safe set on one DoF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSetParams {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub k_lambda: f64,
}

impl PoseSetParams {
    pub fn nominal_lle(&self) -> f64 {
        nominal_lle(&pose_jacobian(self.mass, self.damping, self.stiffness))
    }

    pub fn plane(&self) -> PosePlane<f64> {
        PosePlane { damping: self.damping, stiffness: self.stiffness, k_lambda: self.k_lambda }
    }

    /// Boundary of the set at the nominal LLE over a square of half-width `half`.
    pub fn nominal_boundary(&self, half: f64, n: usize) -> Vec<(f64, f64)> {
        let plane = self.plane();
        let kind = PoseSetKind::Nominal { lambda: self.nominal_lle() };
        sample_boundary(|x, y| plane.margin(kind, x, y), (-half, half), (-half, half), n, n)
    }
}

/// `(e_p, e_v)` trajectory of `dof` over the pose safe-set boundary.
pub fn phase_portrait(log: &[LogRecord], dof: usize, set: &PoseSetParams) -> Result<String, CsvError> {
    if log.is_empty() {
        return Err(CsvError::SchemaMismatch("log has no records".into()));
    }
    let traj: Vec<(f64, f64)> = log.iter().map(|r| (r.e_p[dof], r.e_v[dof])).collect();
    let extent = traj.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max).max(1e-3) * 1.2;
    let name = DOF_NAMES[dof];
    let mut p = Panel::new(&format!("safe set and error trajectory ({name})"), "e_p", "e_v");
    p.x_range = Some((-extent, extent));
    p.y_range = Some((-extent, extent));
    p.series.push(Series { scatter: true, ..Series::line("set boundary", set.nominal_boundary(extent, 201)) });
    p.series.push(Series::line("trajectory", traj));
    Ok(render(&[p]))
}

/// Pose sets (nominal, zero-acceleration, scaled) in one panel.
/// Named boundary curves.
pub type NamedCurves = Vec<(String, Vec<(f64, f64)>)>;

pub fn pose_sets(set: &PoseSetParams, c1: f64, half: f64, n: usize) -> (NamedCurves, String) {
    let plane = set.plane();
    let lambda = set.nominal_lle();
    let kinds = [
        ("nominal", PoseSetKind::Nominal { lambda }),
        ("zero_accel", PoseSetKind::ZeroAccel),
        ("scaled", PoseSetKind::Scaled { lambda, c1 }),
    ];
    let curves: NamedCurves = kinds
        .iter()
        .map(|(name, kind)| (name.to_string(), sample_boundary(|x, y| plane.margin(*kind, x, y), (-half, half), (-half, half), n, n)))
        .collect();
    let mut p = Panel::new("pose safe sets", "e_p [m]", "e_v [m/s]");
    p.x_range = Some((-half, half));
    p.y_range = Some((-half, half));
    p.series = curves.iter().map(|(name, pts)| Series { scatter: true, ..Series::line(name.clone(), pts.clone()) }).collect();
    let svg = render(&[p]);
    (curves, svg)
}

/// Wrench sets in the (penetration, velocity) plane, one per surface.
pub fn wrench_sets(planes: &[(String, WrenchPlane<f64>)], x_range: (f64, f64), y_range: (f64, f64), n: usize) -> (NamedCurves, String) {
    let curves: NamedCurves =
        planes.iter().map(|(name, w)| (name.clone(), sample_boundary(|x, y| w.margin(x, y), x_range, y_range, n, n))).collect();
    let mut p = Panel::new("wrench safe sets", "penetration [m]", "velocity [m/s]");
    p.x_range = Some(x_range);
    p.y_range = Some(y_range);
    p.series = curves.iter().map(|(name, pts)| Series { scatter: true, ..Series::line(name.clone(), pts.clone()) }).collect();
    let svg = render(&[p]);
    (curves, svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, Scenario};

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(ticks(-0.013, 0.021).iter().all(|t| (t / 0.01).fract().abs() < 1e-9 || (t / 0.005).fract().abs() < 1e-9));
    }

    #[test]
    fn empty_log_is_schema_mismatch() {
        assert!(matches!(timeseries(&[], &[0]), Err(CsvError::SchemaMismatch(_))));
        let set = PoseSetParams { mass: 1.0, damping: 5.0, stiffness: 20.0, k_lambda: 1.0 };
        assert!(matches!(phase_portrait(&[], 0, &set), Err(CsvError::SchemaMismatch(_))));
    }

    #[test]
    fn five_panels_one_series_group_per_dof() {
        let log = run(&Scenario { duration: 0.5, ..Default::default() }).unwrap();
        let svg = timeseries(&log, &[0, 1]).unwrap();
        assert_eq!(svg.matches(r#"<g class="panel">"#).count(), 5);
        // 1 + 1 + 2 + 2 + 1 lines per DoF.
        assert_eq!(svg.matches("<polyline").count(), 14);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn structure_ignores_values() {
        let a = render(&[Panel { series: vec![Series::line("a", vec![(0.0, 1.0), (1.0, 2.0)])], ..Panel::new("t", "x", "y") }]);
        let b = render(&[Panel { series: vec![Series::line("b", vec![(0.0, 1.0), (1.0, 2.0)])], ..Panel::new("u", "x", "y") }]);
        assert_eq!(structure(&a), structure(&b));
        let c =
            render(&[Panel { series: vec![Series::line("a", vec![(0.0, 1.0)]), Series::line("b", vec![])], ..Panel::new("t", "x", "y") }]);
        assert_ne!(structure(&a), structure(&c));
    }

    #[test]
    fn overlay_has_asymptotes_zero_and_minus_four() {
        // d = 5, k = 20: asymptote slopes 0 and −k/d = −4.
        let set = PoseSetParams { mass: 1.0, damping: 5.0, stiffness: 20.0, k_lambda: 1.0 };
        let pts = set.nominal_boundary(40.0, 801);
        let far: Vec<&(f64, f64)> = pts.iter().filter(|(x, _)| x.abs() > 30.0).collect();
        assert!(!far.is_empty());
        for (x, y) in far {
            let slope = y / x;
            assert!(slope.abs() < 0.05 || (slope + 4.0).abs() < 0.05, "({x}, {y}) slope {slope}");
        }
    }
}
