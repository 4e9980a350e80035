//! Streaming finite-time estimate of the largest Lyapunov exponent (LLE) of
//! the per-DoF closed-loop error dynamics.
//!
//! The punctual value is the log-derivative of the error-state norm,
//! `λ* = xᵀẋ / ‖x‖²`, which is exact for a single exponential mode. It is
//! passed through a first-order low-pass to obtain `λ̂*`. When the state norm
//! falls below a floor the estimate is held.

use thiserror::Error;

use crate::controllers::TrackingErrors;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LleError {
    #[error("error state norm below floor; estimate held")]
    DegenerateState,
    #[error("state and derivative lengths differ")]
    LengthMismatch,
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Source of `ė_v` in the pose LLE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccelSource<T> {
    /// Treat the velocity-error derivative as zero.
    AssumeZero,
    /// Backward difference of `ẽ_v`, low-passed at the given cutoff (rad/s).
    FiniteDifference { cutoff: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LleConfig<T> {
    /// Low-pass cutoff for `λ̂*`, rad/s.
    pub filter_cutoff: T,
    /// Floor on `‖x‖²` below which the estimate is held.
    pub eps_norm: T,
    pub accel: AccelSource<T>,
    /// Weights `(w_v, w_p)` applied to the pose state `[ẽ_v, ẽ_p]`. Identity by default.
    pub state_scale: (T, T),
    /// Value of `λ̂*` before the first non-degenerate sample.
    pub initial: T,
}

impl<T: Real> Default for LleConfig<T> {
    fn default() -> Self {
        Self {
            filter_cutoff: T::lit(10.0),
            eps_norm: T::lit(1e-6),
            accel: AccelSource::AssumeZero,
            state_scale: (T::one(), T::one()),
            initial: T::zero(),
        }
    }
}

impl<T: Real> LleConfig<T> {
    pub fn validate(&self) -> Result<(), LleError> {
        if !(self.filter_cutoff > T::zero()) {
            return Err(LleError::InvalidConfig("filter cutoff must be positive"));
        }
        if !(self.eps_norm > T::zero()) {
            return Err(LleError::InvalidConfig("eps_norm must be positive"));
        }
        if let AccelSource::FiniteDifference { cutoff } = self.accel {
            if !(cutoff > T::zero()) {
                return Err(LleError::InvalidConfig("acceleration cutoff must be positive"));
            }
        }
        if !(self.state_scale.0 > T::zero() && self.state_scale.1 > T::zero()) {
            return Err(LleError::InvalidConfig("state scale must be positive"));
        }
        Ok(())
    }

    pub fn assumes_zero_accel(&self) -> bool {
        matches!(self.accel, AccelSource::AssumeZero)
    }
}

/// `λ* = xᵀẋ / ‖x‖²`.
pub fn lle_punctual<T: Real>(x: &[T], x_dot: &[T], eps_norm: T) -> Result<T, LleError> {
    if x.len() != x_dot.len() {
        return Err(LleError::LengthMismatch);
    }
    let n2: T = x.iter().map(|v| *v * *v).sum();
    if !(n2 >= eps_norm) {
        return Err(LleError::DegenerateState);
    }
    let num: T = x.iter().zip(x_dot).map(|(a, b)| *a * *b).sum();
    Ok(num / n2)
}

/// Pose LLE of one DoF from the state `[ẽ_v, ẽ_p]` and its derivative
/// `[ė_v, ẽ_v]`. `e_v_dot = None` means the acceleration is taken as zero.
pub fn pose_lle<T: Real>(e_p: T, e_v: T, e_v_dot: Option<T>, cfg: &LleConfig<T>) -> Result<T, LleError> {
    let (wv, wp) = cfg.state_scale;
    let acc = e_v_dot.unwrap_or_else(T::zero);
    lle_punctual(&[wv * e_v, wp * e_p], &[wv * acc, wp * e_v], cfg.eps_norm)
}

/// Wrench LLE of one DoF: `ė_τ / e_τ`, defined while `|e_τ| ≥ √eps`.
pub fn wrench_lle<T: Real>(e_tau: T, e_tau_dot: T, eps_norm: T) -> Result<T, LleError> {
    lle_punctual(&[e_tau], &[e_tau_dot], eps_norm)
}

/// First-order low-pass step: `λ̂ ← λ̂ + (1 − e^{−ω_c dt})(λ* − λ̂)`.
pub fn lowpass_update<T: Real>(lambda_hat: T, lambda_raw: T, dt: T, cutoff: T) -> T {
    let alpha = T::one() - (-cutoff * dt).exp();
    lambda_hat + alpha * (lambda_raw - lambda_hat)
}

/// Largest real part among the eigenvalues of a square matrix.
///
/// 1×1 and 2×2 use closed forms; larger matrices go through the
/// characteristic polynomial (Faddeev–LeVerrier) and Durand–Kerner roots,
/// which is adequate for the small, well-scaled Jacobians used here.
pub fn nominal_lle<T: Real, const N: usize>(jacobian: &[[T; N]; N]) -> T {
    match N {
        0 => T::neg_infinity(),
        1 => jacobian[0][0],
        2 => eig2(jacobian[0][0], jacobian[0][1], jacobian[1][0], jacobian[1][1]).0,
        _ => {
            let a: Vec<Vec<f64>> = jacobian.iter().map(|r| r.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()).collect();
            let roots = poly_roots(&char_poly(&a));
            T::lit(roots.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// Dominant eigenvalue `(re, |im|)` of a 2×2 matrix.
pub fn eig2<T: Real>(a: T, b: T, c: T, d: T) -> (T, T) {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr / T::lit(4.0) - det;
    let half_tr = tr * T::half();
    if disc >= T::zero() {
        (half_tr + disc.sqrt(), T::zero())
    } else {
        (half_tr, (-disc).sqrt())
    }
}

/// Jacobian of the decoupled pose loop `[[0, 1], [−k/m, −d/m]]`.
pub fn pose_jacobian<T: Real>(mass: T, damping: T, stiffness: T) -> [[T; 2]; 2] {
    [[T::zero(), T::one()], [-stiffness / mass, -damping / mass]]
}

fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    // Coefficients c_0..c_n of det(λI − A) = λ^n + c_1 λ^{n−1} + ... + c_n.
    let n = a.len();
    let mut coeffs = vec![1.0];
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A M_{k−1} + c_{k−1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| a[i][l] * m[l][j]).sum::<f64>();
            }
            next[i][i] += coeffs[k - 1];
        }
        m = next;
        let am_trace: f64 = (0..n).map(|i| (0..n).map(|l| a[i][l] * m[l][i]).sum::<f64>()).sum();
        coeffs.push(-am_trace / k as f64);
    }
    coeffs
}

fn poly_roots(c: &[f64]) -> Vec<(f64, f64)> {
    let n = c.len() - 1;
    let eval = |z: (f64, f64)| {
        let mut acc = (1.0, 0.0);
        for &ck in &c[1..] {
            acc = (acc.0 * z.0 - acc.1 * z.1 + ck, acc.0 * z.1 + acc.1 * z.0);
        }
        acc
    };
    let scale = 1.0 + c.iter().skip(1).fold(0.0f64, |m, x| m.max(x.abs()));
    let mut z: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let ang = 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (scale * ang.cos(), scale * ang.sin())
        })
        .collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let num = eval(z[i]);
            let mut den = (1.0, 0.0);
            for j in 0..n {
                if i != j {
                    let d = (z[i].0 - z[j].0, z[i].1 - z[j].1);
                    den = (den.0 * d.0 - den.1 * d.1, den.0 * d.1 + den.1 * d.0);
                }
            }
            let dd = den.0 * den.0 + den.1 * den.1;
            if dd == 0.0 {
                continue;
            }
            let q = ((num.0 * den.0 + num.1 * den.1) / dd, (num.1 * den.0 - num.0 * den.1) / dd);
            z[i] = (z[i].0 - q.0, z[i].1 - q.1);
            delta = delta.max(q.0.abs() + q.1.abs());
        }
        if delta < 1e-14 * scale {
            break;
        }
    }
    z
}

/// Per-DoF LLE values for the pose and wrench loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LleEstimate<T> {
    pub pose_raw: [T; 6],
    pub pose_hat: [T; 6],
    pub wrench_raw: [T; 6],
    pub wrench_hat: [T; 6],
    /// True on DoFs whose last update hit the norm floor.
    pub pose_held: [bool; 6],
    pub wrench_held: [bool; 6],
}

impl<T: Real> LleEstimate<T> {
    fn new(initial: T) -> Self {
        Self {
            pose_raw: [initial; 6],
            pose_hat: [initial; 6],
            wrench_raw: [initial; 6],
            wrench_hat: [initial; 6],
            pose_held: [true; 6],
            wrench_held: [true; 6],
        }
    }
}

/// Filtered LLE estimator for all six DoFs of both loops.
#[derive(Debug, Clone)]
pub struct LleEstimator<T> {
    cfg: LleConfig<T>,
    est: LleEstimate<T>,
    prev_e_v: Option<[T; 6]>,
    accel: [T; 6],
}

impl<T: Real> LleEstimator<T> {
    pub fn new(cfg: LleConfig<T>) -> Result<Self, LleError> {
        cfg.validate()?;
        Ok(Self { est: LleEstimate::new(cfg.initial), cfg, prev_e_v: None, accel: [T::zero(); 6] })
    }

    pub fn config(&self) -> &LleConfig<T> {
        &self.cfg
    }

    pub fn estimate(&self) -> &LleEstimate<T> {
        &self.est
    }

    /// Current `ė_v` estimate used by the pose LLE (zero when assumed).
    pub fn accel_estimate(&self) -> [T; 6] {
        self.accel
    }

    /// Updates the pose LLE on the DoFs where `mask[i]` is set.
    pub fn update_pose(&mut self, errors: &TrackingErrors<T>, dt: T, mask: [bool; 6]) {
        let e_p = errors.pose();
        let e_v = errors.velocity();
        if let AccelSource::FiniteDifference { cutoff } = self.cfg.accel {
            if let Some(prev) = self.prev_e_v {
                for i in 0..6 {
                    let fd = (e_v[i] - prev[i]) / dt;
                    self.accel[i] = lowpass_update(self.accel[i], fd, dt, cutoff);
                }
            }
            self.prev_e_v = Some(e_v.0);
        }
        for i in 0..6 {
            if !mask[i] {
                continue;
            }
            let acc = match self.cfg.accel {
                AccelSource::AssumeZero => None,
                AccelSource::FiniteDifference { .. } => Some(self.accel[i]),
            };
            match pose_lle(e_p[i], e_v[i], acc, &self.cfg) {
                Ok(raw) => {
                    self.est.pose_raw[i] = raw;
                    self.est.pose_hat[i] = lowpass_update(self.est.pose_hat[i], raw, dt, self.cfg.filter_cutoff);
                    self.est.pose_held[i] = false;
                }
                Err(_) => self.est.pose_held[i] = true,
            }
        }
    }

    /// Updates the wrench LLE on the DoFs where `mask[i]` is set.
    pub fn update_wrench(&mut self, errors: &TrackingErrors<T>, dt: T, mask: [bool; 6]) {
        for i in 0..6 {
            if !mask[i] {
                continue;
            }
            match wrench_lle(errors.e_tau[i], errors.e_tau_dot[i], self.cfg.eps_norm) {
                Ok(raw) => {
                    self.est.wrench_raw[i] = raw;
                    self.est.wrench_hat[i] = lowpass_update(self.est.wrench_hat[i], raw, dt, self.cfg.filter_cutoff);
                    self.est.wrench_held[i] = false;
                }
                Err(_) => self.est.wrench_held[i] = true,
            }
        }
    }
}
