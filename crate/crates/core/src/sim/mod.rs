//! Deterministic closed-loop simulator.
//!
//! Physics runs on fixed-step RK4 at `dt`; measurement, control, the LLE
//! update and the safety filter run every `control_decimation` physics steps
//! with the filtered jerk held in between. One [`LogRecord`] is produced per
//! control tick, starting at `t = 0`.

pub mod environment;
pub mod metrics;
pub mod sensor;
pub mod trajectory;

use thiserror::Error;

use crate::controllers::{
    mix, pose_control, pose_control_rate, pose_errors, selection_matrix, wrench_control, ControlError, PoseGains, PoseReference,
    WrenchGains, WrenchIntegrator,
};
use crate::dynamics::{rk4_step, InertialParams, RigidBodyState, Wrench};
use crate::lle::{LleConfig, LleEstimator};
use crate::mathcore::{euler_from_rotation, rotation_from_euler, Vec3, Vec6};
use crate::safety::{safeset::scaling_c1, FilterInput, SafetyConfig, SafetyFilter};

pub use environment::{contact_wrench, Disturbance, Environment, Ramp, Surface};
pub use sensor::{Butterworth2, FtSensor, MeasurementModel};
pub use trajectory::{schedule_at, ReferenceSample, Setpoint, Trajectory};

/// Any state magnitude above this aborts the run.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("numerical divergence at t = {t} s")]
    NumericalDivergence { t: f64, log: Vec<LogRecord> },
}

impl From<ControlError> for SimError {
    fn from(e: ControlError) -> Self {
        SimError::InvalidScenario(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub position: Vec3<f64>,
    pub rpy: Vec3<f64>,
    /// Body twist.
    pub twist: Vec6<f64>,
    /// Applied control wrench, e.g. to start in a steady push.
    pub tau_a: Vec6<f64>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self { position: Vec3::zeros(), rpy: Vec3::zeros(), twist: Vec6::zeros(), tau_a: Vec6::zeros() }
    }
}

/// Diagonal gains of both tracking loops and the applied-wrench servo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub damping: Vec6<f64>,
    pub stiffness: Vec6<f64>,
    pub k_f: Vec6<f64>,
    pub k_i: Vec6<f64>,
    /// Rate at which `τ_a` is pulled towards `τ_c`, 1/s.
    pub k_tau: Vec6<f64>,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            damping: Vec6([5.0, 5.0, 5.0, 1.0, 1.0, 1.0]),
            stiffness: Vec6([20.0, 20.0, 20.0, 4.0, 4.0, 4.0]),
            k_f: Vec6::splat(1.0),
            k_i: Vec6::splat(0.4),
            k_tau: Vec6::splat(50.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    /// Physics step, s.
    pub dt: f64,
    pub control_decimation: usize,
    pub vehicle: InertialParams<f64>,
    pub initial: InitialState,
    pub gains: Gains,
    pub lle: LleConfig<f64>,
    pub safety: SafetyConfig<f64>,
    /// Power rows on. The input barrier and jerk box stay in force either way.
    pub safety_enabled: bool,
    /// Freeze the wrench integral on DoFs whose input row binds or whose
    /// power row binds while dissipation is demanded.
    pub anti_windup: bool,
    pub environment: Environment,
    pub measurement: MeasurementModel,
    pub trajectory: Trajectory,
    /// Piecewise-constant body-frame wrench reference `(t, τ_ref)`.
    pub wrench_reference: Vec<(f64, Vec6<f64>)>,
    /// Piecewise-constant wrench-mode flags `(t, S)`; pose mode before the first entry.
    pub selection: Vec<(f64, [bool; 6])>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "hover".into(),
            duration: 10.0,
            dt: 1.0 / 400.0,
            control_decimation: 2,
            vehicle: InertialParams { mass: 4.58, inertia: Vec3::new(0.1, 0.12, 0.2), gravity: 9.81 },
            initial: InitialState::default(),
            gains: Gains::default(),
            lle: LleConfig::default(),
            safety: SafetyConfig::default(),
            safety_enabled: true,
            anti_windup: true,
            environment: Environment::default(),
            measurement: MeasurementModel::default(),
            trajectory: Trajectory::hold(Vec3::zeros()),
            wrench_reference: Vec::new(),
            selection: Vec::new(),
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_decimation as f64
    }

    /// Number of control ticks after `t = 0`.
    pub fn ticks(&self) -> usize {
        // The small slack keeps e.g. 10 s / 5 ms from rounding down.
        (self.duration / self.control_dt() + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad("duration must be non-negative");
        }
        if self.control_decimation == 0 {
            return bad("control decimation must be at least 1");
        }
        InertialParams::new(self.vehicle.mass, self.vehicle.inertia, self.vehicle.gravity)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        PoseGains::new(self.gains.damping, self.gains.stiffness)?;
        WrenchGains::new(self.gains.k_f, self.gains.k_i)?;
        if !self.gains.k_tau.0.iter().all(|k| *k > 0.0 && k.is_finite()) {
            return bad("k_tau must be positive");
        }
        self.lle.validate().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.safety.validate().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.environment.validate().map_err(|e| SimError::InvalidScenario(e.into()))?;
        self.measurement.validate().map_err(|e| SimError::InvalidScenario(e.into()))?;
        self.trajectory.validate().map_err(|e| SimError::InvalidScenario(e.into()))?;
        if self.wrench_reference.windows(2).any(|w| !(w[1].0 >= w[0].0)) || self.selection.windows(2).any(|w| !(w[1].0 >= w[0].0)) {
            return bad("schedules must be sorted by time");
        }
        if !self.initial.position.is_finite()
            || !self.initial.rpy.is_finite()
            || !self.initial.twist.is_finite()
            || !self.initial.tau_a.is_finite()
        {
            return bad("initial state must be finite");
        }
        Ok(())
    }

    pub fn wrench_mode_at(&self, t: f64) -> [bool; 6] {
        schedule_at(&self.selection, t, [false; 6])
    }

    pub fn wrench_reference_at(&self, t: f64) -> Vec6<f64> {
        schedule_at(&self.wrench_reference, t, Vec6::zeros())
    }
}

/// One control tick. Vectors are per DoF `[x, y, z, roll, pitch, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    /// World position and ZYX Euler angles.
    pub pose: Vec6<f64>,
    /// Body twist.
    pub twist: Vec6<f64>,
    pub e_p: Vec6<f64>,
    pub e_v: Vec6<f64>,
    pub tau_c: Vec6<f64>,
    pub tau_a: Vec6<f64>,
    /// Power flow of each DoF's active loop (velocity entering the power row times `τ_a`).
    pub p_flow: Vec6<f64>,
    pub p_bar: Vec6<f64>,
    pub lle_pose: Vec6<f64>,
    pub lle_wrench: Vec6<f64>,
    pub power_slack: Vec6<f64>,
    /// External wrench estimate used by the filter, body frame.
    pub tau_ext: Vec6<f64>,
    pub input_slack: Vec6<f64>,
    pub u_ref: Vec6<f64>,
    pub u: Vec6<f64>,
    pub e_tau: Vec6<f64>,
    pub wrench_mode: [bool; 6],
    pub input_active: [bool; 6],
    pub jerk_active: [bool; 6],
    pub qp_iterations: usize,
    pub qp_fallback: bool,
}

/// Closed-loop world. [`Simulation::evaluate`] runs the controller at the
/// current time, [`Simulation::advance`] integrates one control period.
pub struct Simulation {
    scenario: Scenario,
    state: RigidBodyState<f64>,
    pose_gains: PoseGains<f64>,
    wrench_gains: WrenchGains<f64>,
    integrator: WrenchIntegrator<f64>,
    lle: LleEstimator<f64>,
    filter: SafetyFilter<f64>,
    sensor: FtSensor,
    frozen: [bool; 6],
    prev_measured: Option<Vec6<f64>>,
    held_jerk: Vec6<f64>,
    k: usize,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let init = scenario.initial;
        let mut state = RigidBodyState::at_rest(init.position, rotation_from_euler(init.rpy[0], init.rpy[1], init.rpy[2]));
        state.twist = init.twist;
        state.tau_a = init.tau_a;
        let mut safety = scenario.safety;
        safety.power_enabled = scenario.safety_enabled;
        let mut sensor = FtSensor::new(scenario.measurement, scenario.seed).map_err(|e| SimError::InvalidScenario(e.into()))?;
        sensor.measure(&contact_wrench(&scenario.environment, &state, 0.0), 0.0);
        Ok(Self {
            pose_gains: PoseGains::new(scenario.gains.damping, scenario.gains.stiffness)?,
            wrench_gains: WrenchGains::new(scenario.gains.k_f, scenario.gains.k_i)?,
            integrator: WrenchIntegrator::default(),
            lle: LleEstimator::new(scenario.lle).map_err(|e| SimError::InvalidScenario(e.to_string()))?,
            filter: SafetyFilter::new(safety).map_err(|e| SimError::InvalidScenario(e.to_string()))?,
            sensor,
            frozen: [false; 6],
            prev_measured: None,
            held_jerk: Vec6::zeros(),
            k: 0,
            state,
            scenario,
        })
    }

    pub fn state(&self) -> &RigidBodyState<f64> {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.scenario.control_dt()
    }

    /// Runs measurement, control and the safety filter at the current time.
    /// The filtered jerk is held for the next [`Simulation::advance`].
    pub fn evaluate(&mut self) -> Result<LogRecord, SimError> {
        let sc = &self.scenario;
        let t = self.time();
        let dt_c = sc.control_dt();
        let mass = sc.vehicle.mass_diagonal();
        let rot = self.state.rotation;

        let sample = sc.trajectory.sample(t);
        // Reference terms are mapped into the error frame the same way as the
        // velocity reference inside `pose_errors`.
        let reference = PoseReference {
            position: sample.position,
            rotation: sample.rotation,
            velocity: sample.velocity,
            omega: Vec3::zeros(),
            accel: Vec6::from_parts(rot.mul_vec(&sample.accel), Vec3::zeros()),
            jerk: Vec6::from_parts(rot.mul_vec(&sample.jerk), Vec3::zeros()),
        };
        let mut errors = pose_errors(&self.state, &reference);
        let wrench_mode = sc.wrench_mode_at(t);
        let pose_mode = wrench_mode.map(|w| !w);
        let tau_ref = Wrench::body(sc.wrench_reference_at(t));
        let measured = self.sensor.output();
        self.integrator.update(&measured, &tau_ref, dt_c, wrench_mode, self.frozen, &mut errors)?;
        self.lle.update_pose(&errors, dt_c, pose_mode);
        self.lle.update_wrench(&errors, dt_c, wrench_mode);
        let est = *self.lle.estimate();

        let tau_ext = measured.to_vec6() + sc.environment.disturbance_wrench(&self.state, t).to_vec6();
        let accel = Vec6::from_fn(|i| (self.state.tau_a[i] + tau_ext[i]) / mass[i]);
        let sel = selection_matrix(wrench_mode);
        let tau_p = pose_control(&sc.vehicle, &self.pose_gains, &errors, &reference);
        let tau_f = wrench_control(&self.wrench_gains, &errors, &tau_ref);
        let tau_c = mix(&tau_p, &tau_f, &sel)?.to_vec6();
        let tau_p_dot = pose_control_rate(&sc.vehicle, &self.pose_gains, &errors, &reference, &accel);
        let meas_rate = match self.prev_measured {
            Some(prev) => Vec6::from_fn(|i| (measured.to_vec6()[i] - prev[i]) / dt_c),
            None => Vec6::zeros(),
        };
        self.prev_measured = Some(measured.to_vec6());
        let tau_f_dot = self.wrench_gains.k_f.mul_vec(&meas_rate) + self.wrench_gains.k_i.mul_vec(&errors.e_tau_dot);
        let tau_c_dot = Vec6::from_fn(|i| if wrench_mode[i] { tau_f_dot[i] } else { tau_p_dot[i] });
        let u_ref = Vec6::from_fn(|i| tau_c_dot[i] + sc.gains.k_tau[i] * (tau_c[i] - self.state.tau_a[i]));

        let e_v = errors.velocity();
        let input = FilterInput {
            u_ref,
            velocity: Vec6::from_fn(|i| if wrench_mode[i] { self.state.twist[i] } else { e_v[i] }),
            accel_ref: Vec6::from_fn(|i| if wrench_mode[i] { 0.0 } else { reference.accel[i] }),
            tau_a: self.state.tau_a,
            tau_ext,
            mass,
            lambda_hat: Vec6::from_fn(|i| if wrench_mode[i] { est.wrench_hat[i] } else { est.pose_hat[i] }),
            scaling_c1: Some(Vec6::from_fn(|i| scaling_c1(mass[i], sc.gains.damping[i], sc.gains.stiffness[i]))),
        };
        let out = self.filter.filter(&input, dt_c).map_err(|_| SimError::NumericalDivergence { t, log: Vec::new() })?;

        if sc.anti_windup {
            let power_rows = sc.safety_enabled;
            self.frozen = std::array::from_fn(|i| {
                let dissipating = power_rows && out.power.p_bar[i] < 0.0 && out.qp.active_set.contains(&i);
                out.input_active[i] || dissipating
            });
        }

        let record = LogRecord {
            t,
            pose: Vec6::from_parts(self.state.position, euler_from_rotation(&self.state.rotation)),
            twist: self.state.twist,
            e_p: errors.pose(),
            e_v,
            tau_c,
            tau_a: self.state.tau_a,
            p_flow: out.power.p_flow,
            p_bar: out.power.p_bar,
            lle_pose: Vec6(est.pose_hat),
            lle_wrench: Vec6(est.wrench_hat),
            power_slack: out.power_slack,
            tau_ext,
            input_slack: out.input_slack,
            u_ref,
            u: out.u,
            e_tau: errors.e_tau,
            wrench_mode,
            input_active: out.input_active,
            jerk_active: out.jerk_active,
            qp_iterations: out.qp.iterations,
            qp_fallback: out.fallback,
        };

        self.held_jerk = out.u;
        Ok(record)
    }

    /// Integrates one control period with the held jerk.
    pub fn advance(&mut self) -> Result<(), SimError> {
        let u = self.held_jerk;
        let sc = &self.scenario;
        let env = &sc.environment;
        let dt = sc.dt;
        let base = self.k * sc.control_decimation;
        for j in 0..sc.control_decimation {
            let t = (base + j) as f64 * dt;
            let w0 = contact_wrench(env, &self.state, t).to_vec6();
            let next = rk4_step(
                &sc.vehicle,
                &self.state,
                t,
                dt,
                |_| u,
                |tau, s| {
                    let c = contact_wrench(env, s, tau).to_vec6();
                    let d = env.disturbance_wrench(s, tau).to_vec6();
                    Wrench::body(c + d)
                },
            );
            if !next.is_valid() || next.max_magnitude() > DIVERGENCE_BOUND {
                return Err(SimError::NumericalDivergence { t: t + dt, log: Vec::new() });
            }
            self.state = next;
            let t1 = (base + j + 1) as f64 * dt;
            let w1 = contact_wrench(env, &self.state, t1).to_vec6();
            // Sensor instants inside the step see the linearly interpolated wrench.
            while self.sensor.next_sample_time() <= t1 + 1e-12 {
                let ts = self.sensor.next_sample_time();
                let a = ((ts - t) / dt).clamp(0.0, 1.0);
                let w = w0 + (w1 - w0) * a;
                self.sensor.measure(&Wrench::body(w), ts);
            }
        }
        self.k += 1;
        Ok(())
    }
}

/// Full rollout: one record per control tick including `t = 0`.
pub fn run(scenario: &Scenario) -> Result<Vec<LogRecord>, SimError> {
    let mut sim = Simulation::new(scenario.clone())?;
    let n = scenario.ticks();
    let mut log = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let step = sim.evaluate().map(|r| log.push(r)).and_then(|_| if k < n { sim.advance() } else { Ok(()) });
        match step {
            Ok(()) => {}
            Err(SimError::NumericalDivergence { t, .. }) => return Err(SimError::NumericalDivergence { t, log }),
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}
