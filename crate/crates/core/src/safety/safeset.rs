//! Geometry of the power-flow safe sets in the per-DoF phase plane.
//!
//! For a regulated DoF with damping `d` and stiffness `k`, the pose wrench is
//! `τ_p = −(d e_v + k e_p)` and the set `{e_v τ_p ≤ p̄}` is bounded by a
//! hyperbola with asymptotes `e_v = 0` and `e_v = −(k/d) e_p`. With a
//! positive limit it contains the origin and cuts a wedge out of the
//! quadrants where `e_p` and `e_v` have opposite signs.

use crate::safety::power_limit;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership<T> {
    pub member: bool,
    /// `p̄ − e_v τ_p`; non-negative inside the set.
    pub margin: T,
}

/// Membership of `(e_p, e_v)` given the pose wrench `τ_p` and the limit `p̄`.
/// The position error enters only through `τ_p`.
pub fn safeset_membership<T: Real>(_e_p: T, e_v: T, tau_p: T, p_bar: T) -> Membership<T> {
    let margin = p_bar - e_v * tau_p;
    Membership { member: margin >= T::zero(), margin }
}

/// `c₁ = (d + √(d² + k²)) / 2m`.
pub fn scaling_c1<T: Real>(mass: T, damping: T, stiffness: T) -> T {
    (damping + (damping * damping + stiffness * stiffness).sqrt()) / (T::two() * mass)
}

/// Factor `k′ = −λ̂ / (c₁ − λ̂)` matching the zero-acceleration set to the
/// nominal one along the bisector, clamped to `[0, 1]`.
pub fn set_scaling<T: Real>(lambda_hat: T, c1: T) -> T {
    let k = -lambda_hat / (c1 - lambda_hat);
    if k.is_finite() {
        k.max(T::zero()).min(T::one())
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeSetGeometry<T> {
    /// Slopes `de_v/de_p` of the two asymptotes: `0` and `−k/d`.
    pub asymptote_slopes: [T; 2],
    /// Slope of the bisector between the asymptotes, `(d − √(d² + k²))/k`.
    pub bisector_slope: T,
    pub c1: T,
    pub k_lambda_prime: T,
}

impl<T: Real> SafeSetGeometry<T> {
    pub fn new(mass: T, damping: T, stiffness: T, lambda_hat: T) -> Self {
        let c1 = scaling_c1(mass, damping, stiffness);
        let root = (damping * damping + stiffness * stiffness).sqrt();
        Self {
            asymptote_slopes: [T::zero(), -stiffness / damping],
            bisector_slope: (damping - root) / stiffness,
            c1,
            k_lambda_prime: set_scaling(lambda_hat, c1),
        }
    }
}

/// Which limit defines the pose set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseSetKind<T> {
    /// Constant LLE, typically the nominal closed-loop value.
    Nominal { lambda: T },
    /// LLE evaluated from the state with zero acceleration, `e_p e_v / r²`.
    ZeroAccel,
    /// Constant LLE with the limit scaled by `k′`.
    Scaled { lambda: T, c1: T },
}

/// Regulation-case pose set parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePlane<T> {
    pub damping: T,
    pub stiffness: T,
    pub k_lambda: T,
}

impl<T: Real> PosePlane<T> {
    pub fn tau_p(&self, e_p: T, e_v: T) -> T {
        -(self.damping * e_v + self.stiffness * e_p)
    }

    pub fn p_bar(&self, kind: PoseSetKind<T>, e_p: T, e_v: T) -> T {
        match kind {
            PoseSetKind::Nominal { lambda } => power_limit(lambda, e_v, self.k_lambda),
            PoseSetKind::ZeroAccel => {
                let r2 = e_p * e_p + e_v * e_v;
                let lambda = if r2 > T::zero() { e_p * e_v / r2 } else { T::zero() };
                power_limit(lambda, e_v, self.k_lambda)
            }
            PoseSetKind::Scaled { lambda, c1 } => {
                let p = power_limit(lambda, e_v, self.k_lambda);
                if lambda < T::zero() {
                    p * set_scaling(lambda, c1)
                } else {
                    p
                }
            }
        }
    }

    pub fn margin(&self, kind: PoseSetKind<T>, e_p: T, e_v: T) -> T {
        safeset_membership(e_p, e_v, self.tau_p(e_p, e_v), self.p_bar(kind, e_p, e_v)).margin
    }
}

/// Wrench-mode set in the (penetration, approach velocity) plane against a
/// spring-damper surface: `v·max(0, k_s δ + d_s v) ≤ p̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchPlane<T> {
    pub k_s: T,
    pub d_s: T,
    pub k_lambda: T,
    pub lambda: T,
}

impl<T: Real> WrenchPlane<T> {
    pub fn contact_force(&self, penetration: T, v: T) -> T {
        (self.k_s * penetration + self.d_s * v).max(T::zero())
    }

    pub fn margin(&self, penetration: T, v: T) -> T {
        power_limit(self.lambda, v, self.k_lambda) - v * self.contact_force(penetration, v)
    }
}

/// Points on the zero level set of `margin(x, y)` over a rectangle, found by
/// scanning each of `nx` columns at `ny` rows and bisecting sign changes.
pub fn sample_boundary<T: Real>(margin: impl Fn(T, T) -> T, x_range: (T, T), y_range: (T, T), nx: usize, ny: usize) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let step = |r: (T, T), n: usize, i: usize| {
        r.0 + (r.1 - r.0) * T::from_usize(i).unwrap_or_else(T::zero) / T::from_usize(n.max(2) - 1).unwrap_or_else(T::one)
    };
    for ix in 0..nx {
        let x = step(x_range, nx, ix);
        let mut y_prev = y_range.0;
        let mut m_prev = margin(x, y_prev);
        for iy in 1..ny {
            let y = step(y_range, ny, iy);
            let m = margin(x, y);
            if (m_prev >= T::zero()) != (m >= T::zero()) {
                let (mut lo, mut hi) = (y_prev, y);
                for _ in 0..60 {
                    let mid = (lo + hi) * T::half();
                    if (margin(x, mid) >= T::zero()) == (m_prev >= T::zero()) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push((x, (lo + hi) * T::half()));
            }
            y_prev = y;
            m_prev = m;
        }
    }
    out
}
