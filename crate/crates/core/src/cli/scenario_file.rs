//! TOML scenario files.
//!
//! Every physical key carries its SI unit in the name. Missing keys take the
//! library defaults, unknown keys are rejected. Six-vectors are ordered
//! `[x, y, z, roll, pitch, yaw]`; where a key is split into translational and
//! rotational halves each half has three entries.

// Field names carry SI unit symbols.
#![allow(non_snake_case)]

use serde::{Deserialize, Serialize};

use crate::dynamics::InertialParams;
use crate::lle::{AccelSource, LleConfig};
use crate::mathcore::{Vec3, Vec6};
use crate::safety::SafetyConfig;
use crate::sim::{Disturbance, Environment, Gains, InitialState, MeasurementModel, Ramp, Scenario, Setpoint, Surface, Trajectory};

pub const DOF_NAMES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ScenarioFileError {
    pub line: Option<usize>,
    pub message: String,
    /// Key the error is about, used to find `line` in the source text.
    pub key: Option<&'static str>,
}

impl ScenarioFileError {
    fn new(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into(), key: None }
    }

    fn keyed(key: &'static str, message: impl Into<String>) -> Self {
        Self { line: None, message: message.into(), key: Some(key) }
    }
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

/// Settings that only affect how a run is summarized or swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    /// Speed below which the platform counts as stopped.
    pub stop_speed_m_per_s: f64,
    /// Body axis whose speed defines stopping, `"x"`, `"y"` or `"z"`.
    pub stop_axis: String,
    /// A run that has not stopped this long after the event counts as running away.
    pub stop_window_s: f64,
    /// Time after which stopping is looked for; defaults to the surface ramp start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_time_s: Option<f64>,
    #[serde(rename = "sweep_k_lambda_W_s", skip_serializing_if = "Vec::is_empty")]
    pub sweep_k_lambda: Vec<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { stop_speed_m_per_s: 0.05, stop_axis: "x".into(), stop_window_s: 5.0, event_time_s: None, sweep_k_lambda: Vec::new() }
    }
}

impl AnalysisOptions {
    pub fn stop_axis_index(&self) -> Result<usize, ScenarioFileError> {
        axis_index(&self.stop_axis)
            .filter(|i| *i < 3)
            .ok_or_else(|| ScenarioFileError::keyed("stop_axis", format!("stop_axis must be x, y or z, got {:?}", self.stop_axis)))
    }

    /// Start of the stopping window for `sc`.
    pub fn event_time(&self, sc: &Scenario) -> f64 {
        self.event_time_s.or_else(|| sc.environment.surface.and_then(|s| s.ramp).map(|r| r.start)).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub name: String,
    pub duration_s: f64,
    pub dt_s: f64,
    pub control_decimation: usize,
    pub seed: u64,
    pub safety_enabled: bool,
    pub anti_windup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub inertia_kg_m2: [f64; 3],
    pub gravity_m_per_s2: f64,
    pub initial_position_m: [f64; 3],
    pub initial_rpy_rad: [f64; 3],
    pub initial_velocity_m_per_s: [f64; 3],
    pub initial_angular_velocity_rad_per_s: [f64; 3],
    pub initial_force_N: [f64; 3],
    pub initial_torque_N_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub d_v_N_s_per_m: [f64; 3],
    pub d_omega_N_m_s_per_rad: [f64; 3],
    pub k_p_N_per_m: [f64; 3],
    pub k_r_N_m_per_rad: [f64; 3],
    pub k_f: [f64; 6],
    pub k_i_per_s: [f64; 6],
    pub k_tau_per_s: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LleSection {
    pub filter_cutoff_rad_per_s: f64,
    pub eps_norm: f64,
    /// `"assume_zero"` or `"finite_difference"`.
    pub accel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_cutoff_rad_per_s: Option<f64>,
    pub state_scale: [f64; 2],
    pub initial_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetySection {
    pub k_lambda_W_s: f64,
    pub gamma_p_per_s: [f64; 6],
    pub gamma_tau_per_s: [f64; 6],
    pub force_limit_N: [f64; 3],
    pub torque_limit_N_m: [f64; 3],
    pub force_rate_limit_N_per_s: [f64; 3],
    pub torque_rate_limit_N_m_per_s: [f64; 3],
    pub slack_weight: f64,
    pub enable_set_scaling: bool,
    pub p_bar_dot_cutoff_rad_per_s: f64,
    pub lle: LleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub axis: String,
    pub normal_sign: i8,
    pub position_m: f64,
    pub stiffness_N_per_m: f64,
    pub damping_N_s_per_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp_start_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp_duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub start_s: f64,
    pub duration_s: f64,
    /// World frame.
    pub force_N: [f64; 3],
    /// World frame.
    pub torque_N_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    pub rate_Hz: f64,
    pub cutoff_rad_per_s: f64,
    pub noise_std_N: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub sensor: SensorSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbance: Vec<DisturbanceSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSection {
    pub t_s: f64,
    pub position_m: [f64; 3],
    pub rpy_rad: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchReferenceSection {
    pub t_s: f64,
    /// Body frame, as applied by the environment on the vehicle.
    pub force_N: [f64; 3],
    pub torque_N_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub t_s: f64,
    /// DoFs under wrench control from `t_s` on; the rest track pose.
    pub wrench_axes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    /// `"setpoints"` or `"figure_eight"`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_m: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_x_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_y_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_rad_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpy_rad: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub setpoint: Vec<SetpointSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selection: Vec<SelectionSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wrench_reference: Vec<WrenchReferenceSection>,
}

/// Whole scenario document. Sections default to the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub run: RunSection,
    pub analysis: AnalysisOptions,
    pub vehicle: VehicleSection,
    pub gains: GainsSection,
    pub safety: SafetySection,
    pub environment: EnvironmentSection,
    pub trajectory: TrajectorySection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let mut f = Self::from_scenario(&Scenario::default(), &AnalysisOptions::default());
        // A document that picks its own trajectory kind starts from nothing.
        f.trajectory = TrajectorySection {
            kind: "setpoints".into(),
            center_m: None,
            amplitude_x_m: None,
            amplitude_y_m: None,
            omega_rad_per_s: None,
            rpy_rad: None,
            setpoint: Vec::new(),
            selection: Vec::new(),
            wrench_reference: Vec::new(),
        };
        f
    }
}

macro_rules! default_from_file {
    ($($ty:ty => $($field:ident).+;)*) => {$(
        impl Default for $ty {
            fn default() -> Self {
                ScenarioFile::default().$($field).+
            }
        }
    )*};
}

default_from_file! {
    RunSection => run;
    VehicleSection => vehicle;
    GainsSection => gains;
    SafetySection => safety;
    LleSection => safety.lle;
    EnvironmentSection => environment;
    SensorSection => environment.sensor;
    TrajectorySection => trajectory;
}

fn axis_index(name: &str) -> Option<usize> {
    DOF_NAMES.iter().position(|n| *n == name)
}

fn split3(v: Vec6<f64>) -> ([f64; 3], [f64; 3]) {
    ([v[0], v[1], v[2]], [v[3], v[4], v[5]])
}

fn join3(a: [f64; 3], b: [f64; 3]) -> Vec6<f64> {
    Vec6([a[0], a[1], a[2], b[0], b[1], b[2]])
}

impl ScenarioFile {
    pub fn from_scenario(sc: &Scenario, analysis: &AnalysisOptions) -> Self {
        let (init_v, init_w) = split3(sc.initial.twist);
        let (init_f, init_t) = split3(sc.initial.tau_a);
        let (d_v, d_w) = split3(sc.gains.damping);
        let (k_p, k_r) = split3(sc.gains.stiffness);
        let (f_lim, t_lim) = split3(sc.safety.tau_bar);
        let (f_rate, t_rate) = split3(sc.safety.jerk_bar);
        let (accel, accel_cutoff) = match sc.lle.accel {
            AccelSource::AssumeZero => ("assume_zero", None),
            AccelSource::FiniteDifference { cutoff } => ("finite_difference", Some(cutoff)),
        };
        let surface = sc.environment.surface.map(|s| SurfaceSection {
            axis: DOF_NAMES[s.axis].into(),
            normal_sign: if s.normal_sign < 0.0 { -1 } else { 1 },
            position_m: s.position,
            stiffness_N_per_m: s.stiffness,
            damping_N_s_per_m: s.damping,
            ramp_start_s: s.ramp.map(|r| r.start),
            ramp_duration_s: s.ramp.map(|r| r.duration),
            ramp_distance_m: s.ramp.map(|r| r.distance),
        });
        let disturbance = sc
            .environment
            .disturbances
            .iter()
            .map(|d| {
                let (f, t) = split3(d.wrench_world);
                DisturbanceSection { start_s: d.start, duration_s: d.duration, force_N: f, torque_N_m: t }
            })
            .collect();
        let mut trajectory = TrajectorySection {
            kind: String::new(),
            center_m: None,
            amplitude_x_m: None,
            amplitude_y_m: None,
            omega_rad_per_s: None,
            rpy_rad: None,
            setpoint: Vec::new(),
            selection: sc
                .selection
                .iter()
                .map(|(t, s)| SelectionSection {
                    t_s: *t,
                    wrench_axes: (0..6).filter(|i| s[*i]).map(|i| DOF_NAMES[i].to_string()).collect(),
                })
                .collect(),
            wrench_reference: sc
                .wrench_reference
                .iter()
                .map(|(t, w)| {
                    let (f, m) = split3(*w);
                    WrenchReferenceSection { t_s: *t, force_N: f, torque_N_m: m }
                })
                .collect(),
        };
        match &sc.trajectory {
            Trajectory::Setpoints(list) => {
                trajectory.kind = "setpoints".into();
                trajectory.setpoint =
                    list.iter().map(|s| SetpointSection { t_s: s.t, position_m: s.position.0, rpy_rad: s.rpy.0 }).collect();
            }
            Trajectory::FigureEight { center, amplitude_x, amplitude_y, omega, rpy } => {
                trajectory.kind = "figure_eight".into();
                trajectory.center_m = Some(center.0);
                trajectory.amplitude_x_m = Some(*amplitude_x);
                trajectory.amplitude_y_m = Some(*amplitude_y);
                trajectory.omega_rad_per_s = Some(*omega);
                trajectory.rpy_rad = Some(rpy.0);
            }
        }
        Self {
            run: RunSection {
                name: sc.name.clone(),
                duration_s: sc.duration,
                dt_s: sc.dt,
                control_decimation: sc.control_decimation,
                seed: sc.seed,
                safety_enabled: sc.safety_enabled,
                anti_windup: sc.anti_windup,
            },
            analysis: analysis.clone(),
            vehicle: VehicleSection {
                mass_kg: sc.vehicle.mass,
                inertia_kg_m2: sc.vehicle.inertia.0,
                gravity_m_per_s2: sc.vehicle.gravity,
                initial_position_m: sc.initial.position.0,
                initial_rpy_rad: sc.initial.rpy.0,
                initial_velocity_m_per_s: init_v,
                initial_angular_velocity_rad_per_s: init_w,
                initial_force_N: init_f,
                initial_torque_N_m: init_t,
            },
            gains: GainsSection {
                d_v_N_s_per_m: d_v,
                d_omega_N_m_s_per_rad: d_w,
                k_p_N_per_m: k_p,
                k_r_N_m_per_rad: k_r,
                k_f: sc.gains.k_f.0,
                k_i_per_s: sc.gains.k_i.0,
                k_tau_per_s: sc.gains.k_tau.0,
            },
            safety: SafetySection {
                k_lambda_W_s: sc.safety.k_lambda,
                gamma_p_per_s: sc.safety.gamma_p.0,
                gamma_tau_per_s: sc.safety.gamma_tau.0,
                force_limit_N: f_lim,
                torque_limit_N_m: t_lim,
                force_rate_limit_N_per_s: f_rate,
                torque_rate_limit_N_m_per_s: t_rate,
                slack_weight: sc.safety.slack_weight,
                enable_set_scaling: sc.safety.enable_set_scaling,
                p_bar_dot_cutoff_rad_per_s: sc.safety.p_bar_dot_cutoff,
                lle: LleSection {
                    filter_cutoff_rad_per_s: sc.lle.filter_cutoff,
                    eps_norm: sc.lle.eps_norm,
                    accel: accel.into(),
                    accel_cutoff_rad_per_s: accel_cutoff,
                    state_scale: [sc.lle.state_scale.0, sc.lle.state_scale.1],
                    initial_per_s: sc.lle.initial,
                },
            },
            environment: EnvironmentSection {
                sensor: SensorSection {
                    rate_Hz: sc.measurement.rate_hz,
                    cutoff_rad_per_s: sc.measurement.cutoff_rad_s,
                    noise_std_N: sc.measurement.noise_std,
                },
                surface,
                disturbance,
            },
            trajectory,
        }
    }

    pub fn to_scenario(&self) -> Result<(Scenario, AnalysisOptions), ScenarioFileError> {
        let v = &self.vehicle;
        let g = &self.gains;
        let s = &self.safety;
        let accel = match s.lle.accel.as_str() {
            "assume_zero" => {
                if s.lle.accel_cutoff_rad_per_s.is_some() {
                    return Err(ScenarioFileError::keyed(
                        "accel_cutoff_rad_per_s",
                        "accel_cutoff_rad_per_s only applies to accel = \"finite_difference\"",
                    ));
                }
                AccelSource::AssumeZero
            }
            "finite_difference" => AccelSource::FiniteDifference {
                cutoff: s
                    .lle
                    .accel_cutoff_rad_per_s
                    .ok_or_else(|| ScenarioFileError::keyed("accel", "finite_difference needs accel_cutoff_rad_per_s"))?,
            },
            other => return Err(ScenarioFileError::keyed("accel", format!("unknown accel source {other:?}"))),
        };
        let surface = match &self.environment.surface {
            None => None,
            Some(sf) => {
                let axis = axis_index(&sf.axis)
                    .filter(|i| *i < 3)
                    .ok_or_else(|| ScenarioFileError::keyed("axis", format!("surface axis must be x, y or z, got {:?}", sf.axis)))?;
                if sf.normal_sign != 1 && sf.normal_sign != -1 {
                    return Err(ScenarioFileError::keyed("normal_sign", "normal_sign must be 1 or -1"));
                }
                let ramp = match (sf.ramp_start_s, sf.ramp_duration_s, sf.ramp_distance_m) {
                    (None, None, None) => None,
                    (Some(start), Some(duration), Some(distance)) => Some(Ramp { start, duration, distance }),
                    _ => {
                        return Err(ScenarioFileError::keyed(
                            "ramp_start_s",
                            "ramp_start_s, ramp_duration_s and ramp_distance_m go together",
                        ))
                    }
                };
                Some(Surface {
                    axis,
                    normal_sign: f64::from(sf.normal_sign),
                    position: sf.position_m,
                    stiffness: sf.stiffness_N_per_m,
                    damping: sf.damping_N_s_per_m,
                    ramp,
                })
            }
        };
        let t = &self.trajectory;
        let trajectory = match t.kind.as_str() {
            "setpoints" => {
                if t.center_m.is_some()
                    || t.amplitude_x_m.is_some()
                    || t.amplitude_y_m.is_some()
                    || t.omega_rad_per_s.is_some()
                    || t.rpy_rad.is_some()
                {
                    return Err(ScenarioFileError::keyed("kind", "figure-eight keys given for a setpoints trajectory"));
                }
                if t.setpoint.is_empty() {
                    Trajectory::hold(Vec3::zeros())
                } else {
                    Trajectory::Setpoints(
                        t.setpoint.iter().map(|p| Setpoint { t: p.t_s, position: Vec3(p.position_m), rpy: Vec3(p.rpy_rad) }).collect(),
                    )
                }
            }
            "figure_eight" => {
                if !t.setpoint.is_empty() {
                    return Err(ScenarioFileError::keyed("kind", "setpoints given for a figure_eight trajectory"));
                }
                let need = |o: Option<f64>, k: &str| o.ok_or_else(|| ScenarioFileError::keyed("kind", format!("figure_eight needs {k}")));
                Trajectory::FigureEight {
                    center: Vec3(t.center_m.unwrap_or([0.0; 3])),
                    amplitude_x: need(t.amplitude_x_m, "amplitude_x_m")?,
                    amplitude_y: need(t.amplitude_y_m, "amplitude_y_m")?,
                    omega: need(t.omega_rad_per_s, "omega_rad_per_s")?,
                    rpy: Vec3(t.rpy_rad.unwrap_or([0.0; 3])),
                }
            }
            other => return Err(ScenarioFileError::keyed("kind", format!("unknown trajectory kind {other:?}"))),
        };
        let mut selection = Vec::new();
        for entry in &t.selection {
            let mut mask = [false; 6];
            for a in &entry.wrench_axes {
                let i =
                    axis_index(a).ok_or_else(|| ScenarioFileError::keyed("wrench_axes", format!("unknown axis {a:?} in wrench_axes")))?;
                mask[i] = true;
            }
            selection.push((entry.t_s, mask));
        }
        let sc = Scenario {
            name: self.run.name.clone(),
            duration: self.run.duration_s,
            dt: self.run.dt_s,
            control_decimation: self.run.control_decimation,
            vehicle: InertialParams { mass: v.mass_kg, inertia: Vec3(v.inertia_kg_m2), gravity: v.gravity_m_per_s2 },
            initial: InitialState {
                position: Vec3(v.initial_position_m),
                rpy: Vec3(v.initial_rpy_rad),
                twist: join3(v.initial_velocity_m_per_s, v.initial_angular_velocity_rad_per_s),
                tau_a: join3(v.initial_force_N, v.initial_torque_N_m),
            },
            gains: Gains {
                damping: join3(g.d_v_N_s_per_m, g.d_omega_N_m_s_per_rad),
                stiffness: join3(g.k_p_N_per_m, g.k_r_N_m_per_rad),
                k_f: Vec6(g.k_f),
                k_i: Vec6(g.k_i_per_s),
                k_tau: Vec6(g.k_tau_per_s),
            },
            lle: LleConfig {
                filter_cutoff: s.lle.filter_cutoff_rad_per_s,
                eps_norm: s.lle.eps_norm,
                accel,
                state_scale: (s.lle.state_scale[0], s.lle.state_scale[1]),
                initial: s.lle.initial_per_s,
            },
            safety: SafetyConfig {
                k_lambda: s.k_lambda_W_s,
                gamma_p: Vec6(s.gamma_p_per_s),
                gamma_tau: Vec6(s.gamma_tau_per_s),
                tau_bar: join3(s.force_limit_N, s.torque_limit_N_m),
                jerk_bar: join3(s.force_rate_limit_N_per_s, s.torque_rate_limit_N_m_per_s),
                slack_weight: s.slack_weight,
                power_enabled: true,
                enable_set_scaling: s.enable_set_scaling,
                p_bar_dot_cutoff: s.p_bar_dot_cutoff_rad_per_s,
            },
            safety_enabled: self.run.safety_enabled,
            anti_windup: self.run.anti_windup,
            environment: Environment {
                surface,
                disturbances: self
                    .environment
                    .disturbance
                    .iter()
                    .map(|d| Disturbance { start: d.start_s, duration: d.duration_s, wrench_world: join3(d.force_N, d.torque_N_m) })
                    .collect(),
            },
            measurement: MeasurementModel {
                rate_hz: self.environment.sensor.rate_Hz,
                cutoff_rad_s: self.environment.sensor.cutoff_rad_per_s,
                noise_std: self.environment.sensor.noise_std_N,
            },
            trajectory,
            wrench_reference: t.wrench_reference.iter().map(|w| (w.t_s, join3(w.force_N, w.torque_N_m))).collect(),
            selection,
            seed: self.run.seed,
        };
        self.analysis.stop_axis_index()?;
        Ok((sc, self.analysis.clone()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> ScenarioFileError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    ScenarioFileError { line, message: e.message().trim_end().to_string(), key: None }
}

/// Parses a scenario document, filling missing keys from the defaults.
/// Errors carry the 1-based line of the offending key where it is known.
pub fn parse_scenario(text: &str) -> Result<(Scenario, AnalysisOptions), ScenarioFileError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let (sc, analysis) = file.to_scenario().map_err(|mut e| {
        e.line = e.key.and_then(|k| line_of_key(text, k));
        e
    })?;
    sc.validate().map_err(|e| ScenarioFileError::new(e.to_string()))?;
    Ok((sc, analysis))
}

/// Canonical text of a scenario.
pub fn write_scenario(sc: &Scenario, analysis: &AnalysisOptions) -> String {
    ScenarioFile::from_scenario(sc, analysis).to_toml()
}
