//! Rigid-body model with feedback linearization and the jerk-level
//! augmented control-wrench state.
//!
//! The plant is `M v̇ + C(ω) + g(R) = τ'_c + τ_ext` with all wrenches and the
//! twist in the body frame. Applying `τ'_c = C(ω) + g(R) + τ_a` reduces it to
//! `M v̇ = τ_a + τ_ext`, where `τ_a` is itself a state driven by the jerk
//! command `τ̇_a`.

use thiserror::Error;

use crate::mathcore::{exp_so3, Mat3, Vec3, Vec6};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("inertial parameters must be finite and strictly positive")]
    InvalidInertia,
    #[error("gain matrix must be diagonal positive definite")]
    InvalidGain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams<T> {
    /// kg
    pub mass: T,
    /// Principal moments, kg·m².
    pub inertia: Vec3<T>,
    /// m/s²
    pub gravity: T,
}

impl<T: Real> InertialParams<T> {
    pub fn new(mass: T, inertia: Vec3<T>, gravity: T) -> Result<Self, DynamicsError> {
        let ok =
            mass.is_finite() && mass > T::zero() && inertia.is_finite() && inertia.0.iter().all(|j| *j > T::zero()) && gravity.is_finite();
        if ok {
            Ok(Self { mass, inertia, gravity })
        } else {
            Err(DynamicsError::InvalidInertia)
        }
    }

    /// Diagonal of `M`: `(m, m, m, Jx, Jy, Jz)`.
    pub fn mass_diagonal(&self) -> Vec6<T> {
        Vec6::from_parts(Vec3::splat(self.mass), self.inertia)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    Body,
    World,
}

/// Force (N) and torque (N·m) tagged with the frame they are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench<T> {
    pub force: Vec3<T>,
    pub torque: Vec3<T>,
    pub frame: Frame,
}

impl<T: Real> Wrench<T> {
    pub fn zero(frame: Frame) -> Self {
        Self { force: Vec3::zeros(), torque: Vec3::zeros(), frame }
    }

    pub fn body(v: Vec6<T>) -> Self {
        Self { force: v.linear(), torque: v.angular(), frame: Frame::Body }
    }

    pub fn world(v: Vec6<T>) -> Self {
        Self { force: v.linear(), torque: v.angular(), frame: Frame::World }
    }

    pub fn to_vec6(&self) -> Vec6<T> {
        Vec6::from_parts(self.force, self.torque)
    }

    /// Re-expresses the wrench in the body frame given `R_WB`.
    pub fn in_body(&self, r_wb: &Mat3<T>) -> Self {
        match self.frame {
            Frame::Body => *self,
            Frame::World => {
                let rt = r_wb.transpose();
                Self { force: rt.mul_vec(&self.force), torque: rt.mul_vec(&self.torque), frame: Frame::Body }
            }
        }
    }
}

/// Vehicle state: world position, attitude, body twist and applied control wrench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState<T> {
    pub position: Vec3<T>,
    pub rotation: Mat3<T>,
    /// `[v_p; ω]` in the body frame.
    pub twist: Vec6<T>,
    /// Augmented control wrench `τ_a` (body frame).
    pub tau_a: Vec6<T>,
}

impl<T: Real> RigidBodyState<T> {
    pub fn at_rest(position: Vec3<T>, rotation: Mat3<T>) -> Self {
        Self { position, rotation, twist: Vec6::zeros(), tau_a: Vec6::zeros() }
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite() && self.twist.is_finite() && self.tau_a.is_finite() && self.rotation.is_rotation(T::lit(1e-6))
    }

    /// Largest absolute component over position, twist and control wrench.
    pub fn max_magnitude(&self) -> T {
        self.position.max_abs().max(self.twist.max_abs()).max(self.tau_a.max_abs())
    }

    pub fn kinetic_energy(&self, params: &InertialParams<T>) -> T {
        let m = params.mass_diagonal();
        T::half() * self.twist.hadamard(&self.twist).dot(&m)
    }
}

/// `(0; ω × Jω)`.
pub fn coriolis_wrench<T: Real>(params: &InertialParams<T>, omega: &Vec3<T>) -> Wrench<T> {
    let jw = omega.hadamard(&params.inertia);
    Wrench { force: Vec3::zeros(), torque: omega.cross(&jw), frame: Frame::Body }
}

/// Gravity term of the body-frame model: `−R_WBᵀ (0, 0, −m g)`, so that it
/// sits on the left-hand side next to `M v̇`.
pub fn gravity_wrench<T: Real>(params: &InertialParams<T>, r_wb: &Mat3<T>) -> Wrench<T> {
    let weight_w = Vec3::new(T::zero(), T::zero(), -params.mass * params.gravity);
    Wrench { force: -r_wb.transpose().mul_vec(&weight_w), torque: Vec3::zeros(), frame: Frame::Body }
}

/// Body-frame weight force `R_WBᵀ (0, 0, −m g)` acting on the vehicle.
pub fn weight_in_body<T: Real>(params: &InertialParams<T>, r_wb: &Mat3<T>) -> Vec3<T> {
    -gravity_wrench(params, r_wb).force
}

/// `τ'_c = C(ω) + g(R) + τ_c`.
pub fn feedback_linearize<T: Real>(params: &InertialParams<T>, state: &RigidBodyState<T>, tau_c: &Wrench<T>) -> Wrench<T> {
    let c = coriolis_wrench(params, &state.twist.angular());
    let g = gravity_wrench(params, &state.rotation);
    Wrench::body(c.to_vec6() + g.to_vec6() + tau_c.in_body(&state.rotation).to_vec6())
}

/// Nominal jerk reference `τ̇_a = τ̇_c + K_τ (τ_c − τ_a)` for a diagonal `K_τ`.
pub fn augmented_wrench_derivative<T: Real>(tau_a: &Vec6<T>, tau_c: &Vec6<T>, tau_c_dot: &Vec6<T>, k_tau: &Vec6<T>) -> Vec6<T> {
    *tau_c_dot + k_tau.hadamard(&(*tau_c - *tau_a))
}

/// `v̇ = M⁻¹ (τ_a + τ_ext)` for the linearized plant.
pub fn accelerate<T: Real>(params: &InertialParams<T>, state: &RigidBodyState<T>, tau_ext: &Wrench<T>) -> Vec6<T> {
    let m = params.mass_diagonal();
    let f = state.tau_a + tau_ext.in_body(&state.rotation).to_vec6();
    Vec6::from_fn(|i| f[i] / m[i])
}

/// Twist derivative of the full model `M v̇ = τ'_c + τ_ext − C(ω) − g(R)`.
pub fn full_model_acceleration<T: Real>(
    params: &InertialParams<T>,
    state: &RigidBodyState<T>,
    tau_c_prime: &Wrench<T>,
    tau_ext: &Wrench<T>,
) -> Vec6<T> {
    let m = params.mass_diagonal();
    let c = coriolis_wrench(params, &state.twist.angular()).to_vec6();
    let g = gravity_wrench(params, &state.rotation).to_vec6();
    let f = tau_c_prime.to_vec6() + tau_ext.in_body(&state.rotation).to_vec6() - c - g;
    Vec6::from_fn(|i| f[i] / m[i])
}

/// Time derivative of the non-rotational part of the state.
#[derive(Debug, Clone, Copy)]
struct Rates<T> {
    position: Vec3<T>,
    omega: Vec3<T>,
    twist: Vec6<T>,
    tau_a: Vec6<T>,
}

fn rates<T: Real>(params: &InertialParams<T>, s: &RigidBodyState<T>, jerk: &Vec6<T>, ext: &Wrench<T>) -> Rates<T> {
    let tau_c_prime = feedback_linearize(params, s, &Wrench::body(s.tau_a));
    Rates {
        position: s.rotation.mul_vec(&s.twist.linear()),
        omega: s.twist.angular(),
        twist: full_model_acceleration(params, s, &tau_c_prime, ext),
        tau_a: *jerk,
    }
}

/// Inverse right-trivialized exponential differential, truncated after the
/// second-order term (sufficient for a fourth-order method).
fn dexp_inv<T: Real>(phi: &Vec3<T>, omega: &Vec3<T>) -> Vec3<T> {
    let c1 = phi.cross(omega);
    let c2 = phi.cross(&c1);
    *omega + c1 * T::half() + c2 * T::lit(1.0 / 12.0)
}

/// One fixed-step Runge–Kutta–Munthe-Kaas (RK4) step of the feedback-linearized
/// plant. `jerk(t)` drives `τ_a`; `ext(t, state)` returns the external wrench.
/// The rotation is advanced through the exponential map and re-orthonormalized.
pub fn rk4_step<T, J, E>(params: &InertialParams<T>, state: &RigidBodyState<T>, t: T, dt: T, jerk: J, ext: E) -> RigidBodyState<T>
where
    T: Real,
    J: Fn(T) -> Vec6<T>,
    E: Fn(T, &RigidBodyState<T>) -> Wrench<T>,
{
    let half = T::half();
    let stage = |tau: T, phi: &Vec3<T>, k: Option<(&Rates<T>, T)>| -> (RigidBodyState<T>, Rates<T>) {
        let mut s = *state;
        if let Some((r, h)) = k {
            s.position += r.position * h;
            s.twist += r.twist * h;
            s.tau_a += r.tau_a * h;
            s.rotation = state.rotation.mul_mat(&exp_so3(phi));
        }
        let r = rates(params, &s, &jerk(tau), &ext(tau, &s));
        (s, r)
    };

    let (_, k1) = stage(t, &Vec3::zeros(), None);
    let w1 = k1.omega;

    let phi2 = w1 * (dt * half);
    let (_, mut k2) = stage(t + dt * half, &phi2, Some((&k1, dt * half)));
    let w2 = dexp_inv(&phi2, &k2.omega);
    k2.omega = w2;

    let phi3 = w2 * (dt * half);
    let (_, mut k3) = stage(t + dt * half, &phi3, Some((&k2, dt * half)));
    let w3 = dexp_inv(&phi3, &k3.omega);
    k3.omega = w3;

    let phi4 = w3 * dt;
    let (_, mut k4) = stage(t + dt, &phi4, Some((&k3, dt)));
    let w4 = dexp_inv(&phi4, &k4.omega);
    k4.omega = w4;

    let sixth = dt / T::lit(6.0);
    let two = T::two();
    let comb3 = |a: Vec3<T>, b: Vec3<T>, c: Vec3<T>, d: Vec3<T>| (a + b * two + c * two + d) * sixth;
    let comb6 = |a: Vec6<T>, b: Vec6<T>, c: Vec6<T>, d: Vec6<T>| (a + b * two + c * two + d) * sixth;

    let phi = comb3(w1, w2, w3, w4);
    RigidBodyState {
        position: state.position + comb3(k1.position, k2.position, k3.position, k4.position),
        rotation: state.rotation.mul_mat(&exp_so3(&phi)).orthonormalized(),
        twist: state.twist + comb6(k1.twist, k2.twist, k3.twist, k4.twist),
        tau_a: state.tau_a + comb6(k1.tau_a, k2.tau_a, k3.tau_a, k4.tau_a),
    }
}
