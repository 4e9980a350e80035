//! CBF safety filter on the jerk of the applied wrench.
//!
//! Per DoF, the power flow `e_v,i τ_a,i` is kept below an adaptive limit
//! `p̄_i` driven by the LLE estimate, and `|τ_a,i|` is kept below `τ̄_i`.
//! Both barriers become linear rows on the jerk `u = τ̇_a`, relaxed by a
//! heavily penalized slack, and solved together with the jerk box.

pub mod safeset;

use thiserror::Error;

use crate::lle::lowpass_update;
use crate::mathcore::Vec6;
use crate::qp::{QpError, QpProblem, QpSolution, QpSolver, QpStatus};
use crate::Real;

pub use safeset::{safeset_membership, set_scaling, Membership, SafeSetGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("invalid safety configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("filter input is not finite")]
    NonFinite,
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConfig<T> {
    /// Gain of the power adaptation law, W·s.
    pub k_lambda: T,
    /// Class-K gain of the power barrier, 1/s.
    pub gamma_p: Vec6<T>,
    /// Class-K gain of the input barrier, 1/s.
    pub gamma_tau: Vec6<T>,
    /// Input limits on `|τ_a,i|`.
    pub tau_bar: Vec6<T>,
    /// Jerk box `|u_i| ≤ jerk_bar_i`.
    pub jerk_bar: Vec6<T>,
    pub slack_weight: T,
    /// Include the power rows. With this off only the input rows and the
    /// jerk box remain.
    pub power_enabled: bool,
    /// Scale `p̄` to match the nominal set along its bisector (negative LLE only).
    pub enable_set_scaling: bool,
    /// Cutoff of the low-pass on the backward difference of `p̄`, rad/s.
    pub p_bar_dot_cutoff: T,
}

impl<T: Real> Default for SafetyConfig<T> {
    fn default() -> Self {
        Self {
            k_lambda: T::one(),
            gamma_p: Vec6::splat(T::lit(5.0)),
            gamma_tau: Vec6::splat(T::lit(5.0)),
            tau_bar: Vec6::splat(T::lit(10.0)),
            jerk_bar: Vec6::splat(T::lit(100.0)),
            slack_weight: T::lit(1e6),
            power_enabled: true,
            enable_set_scaling: false,
            p_bar_dot_cutoff: T::lit(10.0),
        }
    }
}

impl<T: Real> SafetyConfig<T> {
    pub fn validate(&self) -> Result<(), SafetyError> {
        let pos = |v: &Vec6<T>| v.0.iter().all(|x| *x > T::zero() && x.is_finite());
        if !(self.k_lambda > T::zero()) || !self.k_lambda.is_finite() {
            return Err(SafetyError::InvalidConfig("k_lambda must be positive"));
        }
        if !pos(&self.gamma_p) || !pos(&self.gamma_tau) {
            return Err(SafetyError::InvalidConfig("barrier gains must be positive"));
        }
        if !pos(&self.tau_bar) {
            return Err(SafetyError::InvalidConfig("input limits must be positive"));
        }
        if !self.jerk_bar.0.iter().all(|x| *x >= T::zero() && x.is_finite()) {
            return Err(SafetyError::InvalidConfig("jerk limits must be non-negative"));
        }
        if !(self.slack_weight > T::zero()) {
            return Err(SafetyError::InvalidConfig("slack weight must be positive"));
        }
        if !(self.p_bar_dot_cutoff > T::zero()) {
            return Err(SafetyError::InvalidConfig("p_bar_dot cutoff must be positive"));
        }
        Ok(())
    }
}

/// Power-flow limit: `−k_λ λ̂` for a contracting estimate, `−k_λ λ̂ e_v²`
/// for an expanding one. Zero at `λ̂ = 0` from both sides.
pub fn power_limit<T: Real>(lambda_hat: T, e_v: T, k_lambda: T) -> T {
    if lambda_hat < T::zero() {
        -k_lambda * lambda_hat
    } else if lambda_hat > T::zero() {
        -k_lambda * lambda_hat * e_v * e_v
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerState<T> {
    pub p_bar: Vec6<T>,
    pub p_bar_dot: Vec6<T>,
    /// Realized power flow `e_v,i τ_a,i`.
    pub p_flow: Vec6<T>,
}

impl<T: Real> Default for PowerState<T> {
    fn default() -> Self {
        Self { p_bar: Vec6::zeros(), p_bar_dot: Vec6::zeros(), p_flow: Vec6::zeros() }
    }
}

/// Per-DoF quantities entering one power row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRowInput<T> {
    /// Velocity error (pose DoF) or body velocity (wrench DoF).
    pub velocity: T,
    pub tau_a: T,
    pub tau_ext: T,
    pub mass: T,
    /// Reference acceleration of the DoF (zero in wrench mode).
    pub accel_ref: T,
    pub p_bar: T,
    pub p_bar_dot: T,
    pub gamma: T,
}

/// Power barrier row on DoF `i`: `e_v,i u_i ≤ γ h + ṗ̄ − τ_a,i ė_v,i` with
/// `h = p̄ − e_v,i τ_a,i` and `ė_v,i = (τ_a,i + τ_ext,i)/m_i − a_ref,i`.
pub fn assemble_power_constraint<T: Real>(inp: &PowerRowInput<T>, i: usize) -> (Vec6<T>, T) {
    let h = inp.p_bar - inp.velocity * inp.tau_a;
    let e_v_dot = (inp.tau_a + inp.tau_ext) / inp.mass - inp.accel_ref;
    let mut row = Vec6::zeros();
    row[i] = inp.velocity;
    (row, inp.gamma * h + inp.p_bar_dot - inp.tau_a * e_v_dot)
}

/// Input barrier row on DoF `i`: `2τ_a,i u_i ≤ γ (τ̄² − τ_a,i²)`.
pub fn assemble_input_constraint<T: Real>(tau_a: T, tau_bar: T, gamma: T, i: usize) -> (Vec6<T>, T) {
    let mut row = Vec6::zeros();
    row[i] = T::two() * tau_a;
    (row, gamma * (tau_bar * tau_bar - tau_a * tau_a))
}

/// Smallest row scale used when normalizing a barrier row.
pub const ROW_SCALE_FLOOR: f64 = 1e-3;

/// Pushes the power row `row·u ≤ b` divided by `max(|row_i|, floor)`, so
/// its slack is priced in jerk units however small the velocity gets.
/// Returns the scale.
fn push_normalized<T: Real>(qp: &mut QpProblem<T>, row: Vec6<T>, b: T, i: usize) -> T {
    let scale = row[i].abs().max(T::lit(ROW_SCALE_FLOOR));
    qp.push_row(row * (T::one() / scale), b / scale);
    scale
}

/// Everything the filter needs from one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterInput<T> {
    pub u_ref: Vec6<T>,
    pub velocity: Vec6<T>,
    pub accel_ref: Vec6<T>,
    pub tau_a: Vec6<T>,
    /// External wrench estimate in the body frame.
    pub tau_ext: Vec6<T>,
    /// Diagonal of the inertia matrix.
    pub mass: Vec6<T>,
    /// Filtered LLE per DoF (pose or wrench, according to the DoF's mode).
    pub lambda_hat: Vec6<T>,
    /// `c₁` per DoF, used only when set scaling is enabled.
    pub scaling_c1: Option<Vec6<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<T> {
    pub u: Vec6<T>,
    pub power: PowerState<T>,
    pub qp: QpSolution<T>,
    /// Slack on the power row of each DoF (zero when the row is absent).
    pub power_slack: Vec6<T>,
    pub input_slack: Vec6<T>,
    /// Input-barrier row in the active set.
    pub input_active: [bool; 6],
    /// Jerk box bound in the active set.
    pub jerk_active: [bool; 6],
    /// Solver hit its iteration cap and the iterate was clamped to the box.
    pub fallback: bool,
}

/// Stateful filter: keeps the QP warm start and the `ṗ̄` filter.
#[derive(Debug, Clone)]
pub struct SafetyFilter<T> {
    cfg: SafetyConfig<T>,
    solver: QpSolver,
    p_bar_prev: Option<Vec6<T>>,
    p_bar_dot: Vec6<T>,
}

impl<T: Real> SafetyFilter<T> {
    pub fn new(cfg: SafetyConfig<T>) -> Result<Self, SafetyError> {
        cfg.validate()?;
        Ok(Self { cfg, solver: QpSolver::new(), p_bar_prev: None, p_bar_dot: Vec6::zeros() })
    }

    pub fn config(&self) -> &SafetyConfig<T> {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.solver.reset();
        self.p_bar_prev = None;
        self.p_bar_dot = Vec6::zeros();
    }

    /// Current power limits without advancing the filter state.
    pub fn power_limits(&self, inp: &FilterInput<T>) -> Vec6<T> {
        Vec6::from_fn(|i| {
            let p = power_limit(inp.lambda_hat[i], inp.velocity[i], self.cfg.k_lambda);
            match inp.scaling_c1 {
                Some(c1) if self.cfg.enable_set_scaling && inp.lambda_hat[i] < T::zero() => p * set_scaling(inp.lambda_hat[i], c1[i]),
                _ => p,
            }
        })
    }

    /// Filters the nominal jerk `u_ref` for one control tick of length `dt`.
    pub fn filter(&mut self, inp: &FilterInput<T>, dt: T) -> Result<FilterOutput<T>, SafetyError> {
        let finite = [inp.u_ref, inp.velocity, inp.accel_ref, inp.tau_a, inp.tau_ext, inp.lambda_hat].iter().all(|v| v.is_finite());
        if !finite {
            return Err(SafetyError::NonFinite);
        }
        let cfg = self.cfg;
        let p_bar = self.power_limits(inp);
        if let Some(prev) = self.p_bar_prev {
            for i in 0..6 {
                let raw = (p_bar[i] - prev[i]) / dt;
                self.p_bar_dot[i] = lowpass_update(self.p_bar_dot[i], raw, dt, cfg.p_bar_dot_cutoff);
            }
        }
        self.p_bar_prev = Some(p_bar);
        let power = PowerState { p_bar, p_bar_dot: self.p_bar_dot, p_flow: inp.velocity.hadamard(&inp.tau_a) };

        let mut qp = QpProblem::new(inp.u_ref, cfg.jerk_bar, cfg.slack_weight);
        let mut scales = Vec6::splat(T::one());
        let n_power = if cfg.power_enabled { 6 } else { 0 };
        if cfg.power_enabled {
            for i in 0..6 {
                let (row, b) = assemble_power_constraint(
                    &PowerRowInput {
                        velocity: inp.velocity[i],
                        tau_a: inp.tau_a[i],
                        tau_ext: inp.tau_ext[i],
                        mass: inp.mass[i],
                        accel_ref: inp.accel_ref[i],
                        p_bar: p_bar[i],
                        p_bar_dot: self.p_bar_dot[i],
                        gamma: cfg.gamma_p[i],
                    },
                    i,
                );
                scales[i] = push_normalized(&mut qp, row, b, i);
            }
        }
        for i in 0..6 {
            let (row, b) = assemble_input_constraint(inp.tau_a[i], cfg.tau_bar[i], cfg.gamma_tau[i], i);
            qp.push_row(row, b);
        }

        let mut sol = self.solver.solve(&qp)?;
        let fallback = sol.status == QpStatus::MaxIterations;
        if fallback {
            sol.u = Vec6::from_fn(|j| sol.u[j].max(-cfg.jerk_bar[j]).min(cfg.jerk_bar[j]));
        }
        let m = qp.rows.len();
        let power_slack = Vec6::from_fn(|i| if i < n_power { sol.delta[i] * scales[i] } else { T::zero() });
        let input_slack = Vec6::from_fn(|i| sol.delta[n_power + i]);
        let input_active = std::array::from_fn(|i| sol.active_set.contains(&(n_power + i)));
        let jerk_active = std::array::from_fn(|i| sol.active_set.contains(&(m + i)) || sol.active_set.contains(&(m + 6 + i)));
        Ok(FilterOutput { u: sol.u, power, qp: sol, power_slack, input_slack, input_active, jerk_active, fallback })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_limit_examples() {
        assert_eq!(power_limit(-0.5, 0.7, 1.0), 0.5);
        assert!((power_limit(0.5f64, 0.2, 1.0) + 0.02).abs() < 1e-15);
        assert_eq!(power_limit(0.0, 3.0, 1.0), 0.0);
        assert_eq!(power_limit(0.5, 0.0, 1.0), 0.0);
    }

    fn row_input(velocity: f64, tau_a: f64, p_bar: f64) -> PowerRowInput<f64> {
        PowerRowInput { velocity, tau_a, tau_ext: 0.0, mass: 4.58, accel_ref: 0.0, p_bar, p_bar_dot: 0.0, gamma: 5.0 }
    }

    #[test]
    fn power_row_examples() {
        let (row, b) = assemble_power_constraint(&row_input(0.0, 2.0, 0.5), 1);
        assert_eq!(row, Vec6::zeros());
        // b = γ h − τ_a²/m
        assert!((b - (5.0 * 0.5 - 4.0 / 4.58)).abs() < 1e-12);
        let (row, b) = assemble_power_constraint(&row_input(0.3, -1.0, 0.5), 2);
        assert_eq!(row[2], 0.3);
        assert!((b - (5.0 * (0.5 + 0.3) - 1.0 / 4.58)).abs() < 1e-12);
    }

    #[test]
    fn input_row_examples() {
        let (row, b) = assemble_input_constraint(0.0, 10.0, 5.0, 0);
        assert_eq!(row, Vec6::zeros());
        assert_eq!(b, 500.0);
        let (row, b) = assemble_input_constraint(10.0, 10.0, 5.0, 3);
        assert_eq!(row[3], 20.0);
        assert_eq!(b, 0.0);
    }

    fn hover_input() -> FilterInput<f64> {
        FilterInput {
            u_ref: Vec6([1.0, -2.0, 0.5, 0.1, 0.0, -0.3]),
            velocity: Vec6::splat(0.01),
            accel_ref: Vec6::zeros(),
            tau_a: Vec6::splat(0.05),
            tau_ext: Vec6::zeros(),
            mass: Vec6([4.58, 4.58, 4.58, 0.1, 0.12, 0.2]),
            lambda_hat: Vec6::splat(-0.546),
            scaling_c1: None,
        }
    }

    #[test]
    fn transparent_at_nominal_lle() {
        let mut f = SafetyFilter::new(SafetyConfig::default()).unwrap();
        let inp = hover_input();
        let out = f.filter(&inp, 0.005).unwrap();
        assert!((out.u - inp.u_ref).norm() < 1e-12);
        assert!(!out.qp.slack_active());
    }

    #[test]
    fn zero_jerk_box_gives_zero() {
        let cfg = SafetyConfig { jerk_bar: Vec6::zeros(), ..SafetyConfig::default() };
        let mut f = SafetyFilter::new(cfg).unwrap();
        let out = f.filter(&hover_input(), 0.005).unwrap();
        assert_eq!(out.u, Vec6::zeros());
        assert!(out.jerk_active.iter().any(|a| *a));
    }

    #[test]
    fn expanding_lle_brakes_power() {
        let mut f = SafetyFilter::new(SafetyConfig::default()).unwrap();
        let mut inp = hover_input();
        inp.lambda_hat = Vec6::splat(0.5);
        inp.velocity = Vec6::splat(0.2);
        inp.tau_a = Vec6::splat(2.0);
        // Nominal keeps pushing forward.
        inp.u_ref = Vec6::splat(50.0);
        let out = f.filter(&inp, 0.005).unwrap();
        for i in 0..6 {
            assert!(out.power.p_bar[i] < 0.0);
            assert!(out.u[i] < 0.0, "dof {i}: {}", out.u[i]);
        }
    }

    #[test]
    fn slow_motion_does_not_cheapen_slack() {
        let mut f = SafetyFilter::new(SafetyConfig::default()).unwrap();
        let mut inp = hover_input();
        inp.lambda_hat = Vec6::splat(0.3);
        inp.velocity = Vec6::splat(0.01);
        inp.tau_a = Vec6::zeros();
        inp.u_ref = Vec6::splat(400.0);
        let out = f.filter(&inp, 0.005).unwrap();
        for i in 0..3 {
            let (row, b) = assemble_power_constraint(
                &PowerRowInput {
                    velocity: 0.01,
                    tau_a: 0.0,
                    tau_ext: 0.0,
                    mass: inp.mass[i],
                    accel_ref: 0.0,
                    p_bar: out.power.p_bar[i],
                    p_bar_dot: 0.0,
                    gamma: 5.0,
                },
                i,
            );
            assert!(row.dot(&out.u) - b < 1e-5, "dof {i}");
            assert!((out.power_slack[i] + row.dot(&out.u) - b).abs() < 1e-9);
        }
    }

    #[test]
    fn disabling_power_keeps_input_rows() {
        let cfg = SafetyConfig { power_enabled: false, ..SafetyConfig::default() };
        let mut f = SafetyFilter::new(cfg).unwrap();
        let mut inp = hover_input();
        inp.lambda_hat = Vec6::splat(0.5);
        inp.velocity = Vec6::splat(0.2);
        inp.tau_a = Vec6::splat(10.0);
        inp.u_ref = Vec6::splat(50.0);
        let out = f.filter(&inp, 0.005).unwrap();
        assert_eq!(out.qp.delta.len(), 6);
        for i in 0..6 {
            // Only the penalized slack lets a sliver of outward jerk through.
            assert!(out.u[i] <= 1e-6);
            assert!(out.input_active[i]);
        }
    }

    #[test]
    fn scaling_tightens_contracting_limit() {
        let cfg = SafetyConfig { enable_set_scaling: true, ..SafetyConfig::default() };
        let f = SafetyFilter::new(cfg).unwrap();
        let mut inp = hover_input();
        let plain = f.power_limits(&inp);
        inp.scaling_c1 = Some(Vec6::splat(2.796));
        let scaled = f.power_limits(&inp);
        assert!((scaled[0] / plain[0] - 0.546 / (2.796 + 0.546)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SafetyFilter::new(SafetyConfig { k_lambda: 0.0, ..SafetyConfig::<f64>::default() }).is_err());
        assert!(SafetyFilter::new(SafetyConfig { gamma_p: Vec6::zeros(), ..SafetyConfig::<f64>::default() }).is_err());
        assert!(SafetyFilter::new(SafetyConfig { jerk_bar: Vec6::splat(-1.0), ..SafetyConfig::<f64>::default() }).is_err());
    }

    proptest! {
        #[test]
        fn power_limit_continuous_at_zero(e_v in -5.0f64..5.0, k in 0.1f64..10.0) {
            let eps = 1e-12;
            let tol = 2.0 * k * eps * (1.0 + e_v * e_v);
            prop_assert!(power_limit(eps, e_v, k).abs() < tol);
            prop_assert!(power_limit(-eps, e_v, k).abs() < tol);
            prop_assert_eq!(power_limit(0.0, e_v, k), 0.0);
        }

        #[test]
        fn dissipation_vanishes_at_rest(lam in 0.01f64..5.0, k in 0.1f64..10.0) {
            prop_assert_eq!(power_limit(lam, 0.0, k), 0.0);
            prop_assert!(power_limit(lam, 1e-4, k).abs() <= 1.001 * k * lam * 1e-8);
        }

        /// The filtered command never violates a row by more than its slack.
        #[test]
        fn rows_hold_up_to_slack(
            u in prop::array::uniform6(-200.0f64..200.0),
            v in prop::array::uniform6(-1.0f64..1.0),
            tau in prop::array::uniform6(-12.0f64..12.0),
            lam in prop::array::uniform6(-1.0f64..1.0),
        ) {
            let mut f = SafetyFilter::new(SafetyConfig::default()).unwrap();
            let mut inp = hover_input();
            inp.u_ref = Vec6(u);
            inp.velocity = Vec6(v);
            inp.tau_a = Vec6(tau);
            inp.lambda_hat = Vec6(lam);
            let out = f.filter(&inp, 0.005).unwrap();
            let p_bar = out.power.p_bar;
            for i in 0..6 {
                let (row, b) = assemble_power_constraint(&PowerRowInput {
                    velocity: v[i], tau_a: tau[i], tau_ext: 0.0, mass: inp.mass[i], accel_ref: 0.0,
                    p_bar: p_bar[i], p_bar_dot: 0.0, gamma: 5.0 }, i);
                prop_assert!(row.dot(&out.u) + out.power_slack[i] <= b + 1e-8);
                let (row, b) = assemble_input_constraint(tau[i], 10.0, 5.0, i);
                prop_assert!(row.dot(&out.u) + out.input_slack[i] <= b + 1e-8);
                prop_assert!(out.u[i].abs() <= 100.0 + 1e-12);
            }
        }
    }
}
