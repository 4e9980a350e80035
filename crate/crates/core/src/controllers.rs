//! Pose and wrench tracking controllers and selection-matrix mixing.
//!
//! Errors are `actual − reference`. The pose law is written so that the
//! decoupled closed loop reads `M ė_v + D_v e_v + K_p e_p = τ_ext`, i.e. the
//! damping and stiffness terms enter with a restoring (negative) sign.

use thiserror::Error;

use crate::dynamics::{InertialParams, RigidBodyState, Wrench};
use crate::mathcore::{vee, Mat3, Mat6, Vec3, Vec6};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("selection matrix must be diagonal with entries in {{0, 1}}")]
    InvalidSelection,
    #[error("gain matrices must be diagonal with strictly positive entries")]
    InvalidGains,
    #[error("time step must be positive")]
    InvalidStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseReference<T> {
    pub position: Vec3<T>,
    pub rotation: Mat3<T>,
    /// World-frame linear velocity.
    pub velocity: Vec3<T>,
    /// World-frame angular velocity.
    pub omega: Vec3<T>,
    /// Body-frame reference acceleration `[a; α]`.
    pub accel: Vec6<T>,
    /// Body-frame reference jerk, used for the analytic `τ̇_p`.
    pub jerk: Vec6<T>,
}

impl<T: Real> PoseReference<T> {
    pub fn hold(position: Vec3<T>, rotation: Mat3<T>) -> Self {
        Self { position, rotation, velocity: Vec3::zeros(), omega: Vec3::zeros(), accel: Vec6::zeros(), jerk: Vec6::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGains<T> {
    /// `D_v`, N·s/m and N·m·s/rad.
    pub damping: Mat6<T>,
    /// `K_p`, N/m and N·m/rad.
    pub stiffness: Mat6<T>,
}

impl<T: Real> PoseGains<T> {
    pub fn new(damping: Vec6<T>, stiffness: Vec6<T>) -> Result<Self, ControlError> {
        let g = Self { damping: Mat6::from_diagonal(&damping), stiffness: Mat6::from_diagonal(&stiffness) };
        if g.damping.is_positive_diagonal() && g.stiffness.is_positive_diagonal() {
            Ok(g)
        } else {
            Err(ControlError::InvalidGains)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchGains<T> {
    pub k_f: Mat6<T>,
    pub k_i: Mat6<T>,
}

impl<T: Real> WrenchGains<T> {
    pub fn new(k_f: Vec6<T>, k_i: Vec6<T>) -> Result<Self, ControlError> {
        let g = Self { k_f: Mat6::from_diagonal(&k_f), k_i: Mat6::from_diagonal(&k_i) };
        if g.k_f.is_positive_diagonal() && g.k_i.is_positive_diagonal() {
            Ok(g)
        } else {
            Err(ControlError::InvalidGains)
        }
    }

    /// Scalar Jacobian `−k_I/(k_f + 1)` of the decoupled wrench loop per DoF.
    pub fn nominal_rate(&self) -> Vec6<T> {
        let (kf, ki) = (self.k_f.diagonal(), self.k_i.diagonal());
        Vec6::from_fn(|i| -ki[i] / (kf[i] + T::one()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrors<T> {
    pub e_p: Vec3<T>,
    pub e_r: Vec3<T>,
    pub e_v: Vec3<T>,
    pub e_omega: Vec3<T>,
    /// Integral wrench error, N·s.
    pub e_tau: Vec6<T>,
    /// Wrench error `τ_meas − τ_ref`, N.
    pub e_tau_dot: Vec6<T>,
}

impl<T: Real> TrackingErrors<T> {
    /// Stacked `ẽ_p = [e_p; e_R]`.
    pub fn pose(&self) -> Vec6<T> {
        Vec6::from_parts(self.e_p, self.e_r)
    }

    /// Stacked `ẽ_v = [e_v; e_ω]`.
    pub fn velocity(&self) -> Vec6<T> {
        Vec6::from_parts(self.e_v, self.e_omega)
    }
}

/// Pose and velocity tracking errors. Wrench fields are left at zero.
pub fn pose_errors<T: Real>(state: &RigidBodyState<T>, reference: &PoseReference<T>) -> TrackingErrors<T> {
    let r = &state.rotation;
    let rr = &reference.rotation;
    let e_p = r.mul_vec(&(state.position - reference.position));
    let e_v = state.twist.linear() - r.mul_vec(&reference.velocity);
    let diff = (rr.transpose().mul_mat(r) - r.transpose().mul_mat(rr)) * T::half();
    // The difference of a matrix and its transpose is skew by construction.
    let e_r = vee(&diff).unwrap_or_else(|_| Vec3::zeros());
    let e_omega = state.twist.angular() - r.mul_vec(&reference.omega);
    TrackingErrors { e_p, e_r, e_v, e_omega, ..Default::default() }
}

/// `τ_p = M a_ref − D_v ẽ_v − K_p ẽ_p`.
pub fn pose_control<T: Real>(
    params: &InertialParams<T>,
    gains: &PoseGains<T>,
    errors: &TrackingErrors<T>,
    reference: &PoseReference<T>,
) -> Wrench<T> {
    let m = params.mass_diagonal();
    let ff = reference.accel.hadamard(&m);
    Wrench::body(ff - gains.damping.mul_vec(&errors.velocity()) - gains.stiffness.mul_vec(&errors.pose()))
}

/// Analytic `τ̇_p` given the current body acceleration estimate `v̇`.
///
/// Uses `ė_v = v̇ − a_ref` and the small-rotation approximation `ė_p ≈ ẽ_v`.
pub fn pose_control_rate<T: Real>(
    params: &InertialParams<T>,
    gains: &PoseGains<T>,
    errors: &TrackingErrors<T>,
    reference: &PoseReference<T>,
    accel: &Vec6<T>,
) -> Vec6<T> {
    let m = params.mass_diagonal();
    let e_v_dot = *accel - reference.accel;
    reference.jerk.hadamard(&m) - gains.damping.mul_vec(&e_v_dot) - gains.stiffness.mul_vec(&errors.velocity())
}

/// `τ_f = −τ_ref + K_f ė_τ + K_I e_τ` from already-updated wrench errors.
pub fn wrench_control<T: Real>(gains: &WrenchGains<T>, errors: &TrackingErrors<T>, reference: &Wrench<T>) -> Wrench<T> {
    Wrench::body(-reference.to_vec6() + gains.k_f.mul_vec(&errors.e_tau_dot) + gains.k_i.mul_vec(&errors.e_tau))
}

/// Wrench-loop integral state.
#[derive(Debug, Clone)]
pub struct WrenchIntegrator<T> {
    e_tau: Vec6<T>,
    last: Option<Vec6<T>>,
}

impl<T: Real> Default for WrenchIntegrator<T> {
    fn default() -> Self {
        Self { e_tau: Vec6::zeros(), last: None }
    }
}

impl<T: Real> WrenchIntegrator<T> {
    pub fn integral(&self) -> Vec6<T> {
        self.e_tau
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Advances `e_τ` by trapezoidal integration of `ė_τ = meas − ref` over
    /// `dt`. DoFs that are inactive or `frozen` keep their integral. Writes
    /// `e_τ` and `ė_τ` into `errors`.
    pub fn update(
        &mut self,
        measured: &Wrench<T>,
        reference: &Wrench<T>,
        dt: T,
        active: [bool; 6],
        frozen: [bool; 6],
        errors: &mut TrackingErrors<T>,
    ) -> Result<(), ControlError> {
        if !(dt > T::zero()) {
            return Err(ControlError::InvalidStep);
        }
        let err = measured.to_vec6() - reference.to_vec6();
        if let Some(prev) = self.last {
            for i in 0..6 {
                if active[i] && !frozen[i] {
                    self.e_tau[i] += (prev[i] + err[i]) * T::half() * dt;
                }
            }
        }
        self.last = Some(err);
        errors.e_tau = self.e_tau;
        errors.e_tau_dot = err;
        Ok(())
    }
}

/// Checks that `s` is a diagonal binary selection matrix.
pub fn validate_selection<T: Real>(s: &Mat6<T>) -> Result<[bool; 6], ControlError> {
    if !s.is_diagonal() {
        return Err(ControlError::InvalidSelection);
    }
    let mut out = [false; 6];
    for (i, o) in out.iter_mut().enumerate() {
        let v = s.0[i][i];
        if v == T::one() {
            *o = true;
        } else if v != T::zero() {
            return Err(ControlError::InvalidSelection);
        }
    }
    Ok(out)
}

/// `τ_c = (I − S) τ_p + S τ_f`.
pub fn mix<T: Real>(tau_p: &Wrench<T>, tau_f: &Wrench<T>, s: &Mat6<T>) -> Result<Wrench<T>, ControlError> {
    let sel = validate_selection(s)?;
    let (p, f) = (tau_p.to_vec6(), tau_f.to_vec6());
    Ok(Wrench::body(Vec6::from_fn(|i| if sel[i] { f[i] } else { p[i] })))
}

/// Diagonal selection matrix from per-DoF wrench flags.
pub fn selection_matrix<T: Real>(wrench_dofs: [bool; 6]) -> Mat6<T> {
    Mat6::from_diagonal(&Vec6::from_fn(|i| if wrench_dofs[i] { T::one() } else { T::zero() }))
}
