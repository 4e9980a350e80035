//! Fixed-size vectors, matrices and rotation helpers.
//!
//! Everything in the crate is dimension 3 or 6, so these are plain stack
//! arrays with the handful of operations the controllers need. Rotations use
//! the ZYX (yaw-pitch-roll) Euler convention: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("matrix is not skew-symmetric (residual {residual:e})")]
    NonSkewInput { residual: f64 },
    #[error("non-finite component")]
    NonFinite,
}

/// Tolerance on the symmetric part accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T>(pub [T; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec6<T>(pub [T; 6]);

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

/// Row-major 6x6 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat6<T>(pub [[T; 6]; 6]);

macro_rules! impl_vec {
    ($name:ident, $n:expr) => {
        impl<T: Real> $name<T> {
            pub fn zeros() -> Self {
                Self([T::zero(); $n])
            }

            pub fn splat(v: T) -> Self {
                Self([v; $n])
            }

            pub fn checked(v: [T; $n]) -> Result<Self, MathError> {
                let out = Self(v);
                if out.is_finite() {
                    Ok(out)
                } else {
                    Err(MathError::NonFinite)
                }
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }

            pub fn dot(&self, other: &Self) -> T {
                self.0.iter().zip(other.0.iter()).map(|(a, b)| *a * *b).sum()
            }

            pub fn norm_squared(&self) -> T {
                self.dot(self)
            }

            pub fn norm(&self) -> T {
                self.norm_squared().sqrt()
            }

            pub fn max_abs(&self) -> T {
                self.0.iter().fold(T::zero(), |m, x| m.max(x.abs()))
            }

            pub fn map(&self, f: impl Fn(T) -> T) -> Self {
                let mut out = *self;
                out.0.iter_mut().for_each(|x| *x = f(*x));
                out
            }

            /// Component-wise product.
            pub fn hadamard(&self, other: &Self) -> Self {
                let mut out = *self;
                for (o, b) in out.0.iter_mut().zip(other.0.iter()) {
                    *o *= *b;
                }
                out
            }

            pub fn cast<U: Real>(&self) -> $name<U> {
                let mut out = $name::<U>::zeros();
                for (o, x) in out.0.iter_mut().zip(self.0.iter()) {
                    *o = U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan());
                }
                out
            }
        }

        impl<T> Index<usize> for $name<T> {
            type Output = T;
            fn index(&self, i: usize) -> &T {
                &self.0[i]
            }
        }

        impl<T> IndexMut<usize> for $name<T> {
            fn index_mut(&mut self, i: usize) -> &mut T {
                &mut self.0[i]
            }
        }

        impl<T: Real> Add for $name<T> {
            type Output = Self;
            fn add(mut self, rhs: Self) -> Self {
                self += rhs;
                self
            }
        }

        impl<T: Real> AddAssign for $name<T> {
            fn add_assign(&mut self, rhs: Self) {
                for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
                    *a += *b;
                }
            }
        }

        impl<T: Real> Sub for $name<T> {
            type Output = Self;
            fn sub(mut self, rhs: Self) -> Self {
                self -= rhs;
                self
            }
        }

        impl<T: Real> SubAssign for $name<T> {
            fn sub_assign(&mut self, rhs: Self) {
                for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
                    *a -= *b;
                }
            }
        }

        impl<T: Real> Mul<T> for $name<T> {
            type Output = Self;
            fn mul(self, s: T) -> Self {
                self.map(|x| x * s)
            }
        }

        impl<T: Real> Neg for $name<T> {
            type Output = Self;
            fn neg(self) -> Self {
                self.map(|x| -x)
            }
        }
    };
}

impl_vec!(Vec3, 3);
impl_vec!(Vec6, 6);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Self([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn unit(axis: usize) -> Self {
        let mut v = Self::zeros();
        v.0[axis] = T::one();
        v
    }
}

impl<T: Real> Vec6<T> {
    /// Stacks `[linear; angular]`.
    pub fn from_parts(lin: Vec3<T>, ang: Vec3<T>) -> Self {
        let (l, a) = (lin.0, ang.0);
        Self([l[0], l[1], l[2], a[0], a[1], a[2]])
    }

    pub fn linear(&self) -> Vec3<T> {
        Vec3([self.0[0], self.0[1], self.0[2]])
    }

    pub fn angular(&self) -> Vec3<T> {
        Vec3([self.0[3], self.0[4], self.0[5]])
    }

    pub fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        let mut v = Self::zeros();
        for (i, x) in v.0.iter_mut().enumerate() {
            *x = f(i);
        }
        v
    }
}

impl<T: Real> Mat3<T> {
    pub fn zeros() -> Self {
        Self([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        Self::from_diagonal(&Vec3::splat(T::one()))
    }

    pub fn from_diagonal(d: &Vec3<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                t.0[i][j] = self.0[j][i];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let mut out = Vec3::zeros();
        for i in 0..3 {
            out.0[i] = (0..3).map(|j| self.0[i][j] * v.0[j]).sum();
        }
        out
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        out
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    fn set_column(&mut self, j: usize, c: &Vec3<T>) {
        for i in 0..3 {
            self.0[i][j] = c[i];
        }
    }

    /// `max |RᵀR − I|`.
    pub fn orthonormality_error(&self) -> T {
        let rtr = self.transpose().mul_mat(self);
        let mut e = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { T::one() } else { T::zero() };
                e = e.max((rtr.0[i][j] - id).abs());
            }
        }
        e
    }

    /// Orthonormality and unit determinant within `tol`.
    pub fn is_rotation(&self, tol: T) -> bool {
        self.is_finite() && self.orthonormality_error() <= tol && (self.determinant() - T::one()).abs() <= tol
    }

    /// Gram-Schmidt on the columns, keeping the first column's direction.
    pub fn orthonormalized(&self) -> Self {
        let c0 = self.column(0);
        let c0 = c0 * (T::one() / c0.norm());
        let c1 = self.column(1);
        let c1 = c1 - c0 * c0.dot(&c1);
        let c1 = c1 * (T::one() / c1.norm());
        let c2 = c0.cross(&c1);
        let mut out = Self::zeros();
        out.set_column(0, &c0);
        out.set_column(1, &c1);
        out.set_column(2, &c2);
        out
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *a += *b;
        }
        self
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *a -= *b;
        }
        self
    }
}

impl<T: Real> Mul<T> for Mat3<T> {
    type Output = Self;
    fn mul(mut self, s: T) -> Self {
        self.0.iter_mut().flatten().for_each(|x| *x *= s);
        self
    }
}

impl<T: Real> Mat6<T> {
    pub fn zeros() -> Self {
        Self([[T::zero(); 6]; 6])
    }

    pub fn identity() -> Self {
        Self::from_diagonal(&Vec6::splat(T::one()))
    }

    pub fn from_diagonal(d: &Vec6<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..6 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn diagonal(&self) -> Vec6<T> {
        Vec6::from_fn(|i| self.0[i][i])
    }

    pub fn is_diagonal(&self) -> bool {
        (0..6).all(|i| (0..6).all(|j| i == j || self.0[i][j] == T::zero()))
    }

    /// Diagonal with strictly positive, finite entries.
    pub fn is_positive_diagonal(&self) -> bool {
        self.is_diagonal() && self.diagonal().0.iter().all(|d| d.is_finite() && *d > T::zero())
    }

    pub fn mul_vec(&self, v: &Vec6<T>) -> Vec6<T> {
        Vec6::from_fn(|i| (0..6).map(|j| self.0[i][j] * v.0[j]).sum())
    }
}

/// Skew-symmetric matrix such that `skew(v) * w = v × w`.
pub fn skew<T: Real>(v: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    let [x, y, w] = v.0;
    Mat3([[z, -w, y], [w, z, -x], [-y, x, z]])
}

/// Inverse of [`skew`].
pub fn vee<T: Real>(m: &Mat3<T>) -> Result<Vec3<T>, MathError> {
    let sym = *m + m.transpose();
    let residual = sym.max_abs();
    if !(residual <= T::lit(SKEW_TOL)) {
        return Err(MathError::NonSkewInput { residual: residual.to_f64().unwrap_or(f64::NAN) });
    }
    let h = T::half();
    Ok(Vec3([h * (m.0[2][1] - m.0[1][2]), h * (m.0[0][2] - m.0[2][0]), h * (m.0[1][0] - m.0[0][1])]))
}

/// ZYX Euler angles (rad) to rotation matrix.
pub fn rotation_from_euler<T: Real>(roll: T, pitch: T, yaw: T) -> Mat3<T> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Mat3([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])
}

/// ZYX Euler angles `(roll, pitch, yaw)` of a rotation matrix.
pub fn euler_from_rotation<T: Real>(r: &Mat3<T>) -> Vec3<T> {
    let m = &r.0;
    let pitch = (-m[2][0]).max(-T::one()).min(T::one()).asin();
    let roll = m[2][1].atan2(m[2][2]);
    let yaw = m[1][0].atan2(m[0][0]);
    Vec3([roll, pitch, yaw])
}

/// Rodrigues' formula: `exp(skew(phi))`.
pub fn exp_so3<T: Real>(phi: &Vec3<T>) -> Mat3<T> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let k2 = k.mul_mat(&k);
    let (a, b) = if theta2 < T::lit(1e-8) {
        // Taylor terms keep the small-angle case exact to roundoff.
        (T::one() - theta2 / T::lit(6.0), T::half() - theta2 / T::lit(24.0))
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k2 * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vec3::<f64>::zeros()), Mat3::zeros());
        assert_eq!(skew(&Vec3::new(0.0, 0.0, 1.0)).0, [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn vee_examples() {
        let v = vee(&skew(&Vec3::new(1.0, 2.0, 3.0))).unwrap();
        assert_eq!(v, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(vee(&Mat3::<f64>::zeros()).unwrap(), Vec3::zeros());
        let sym = Mat3([[1.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(vee(&sym), Err(MathError::NonSkewInput { .. })));
    }

    #[test]
    fn euler_examples() {
        let id: Mat3<f64> = rotation_from_euler(0.0, 0.0, 0.0);
        assert_eq!(id, Mat3::identity());
        let yaw = rotation_from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let expect = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((yaw.0[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let r: Mat3<f32> = rotation_from_euler(0.3, -0.2, 1.1);
        assert!(r.is_rotation(1e-5));
        let v = vee(&skew(&Vec3::new(1.0f32, -2.0, 0.5))).unwrap();
        assert_eq!(v, Vec3::new(1.0, -2.0, 0.5));
    }

    #[test]
    fn checked_rejects_nan() {
        assert_eq!(Vec6::checked([0.0, 1.0, f64::NAN, 0.0, 0.0, 0.0]), Err(MathError::NonFinite));
        assert!(Vec3::checked([0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn exp_matches_small_and_large_angles() {
        let r = exp_so3(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let yaw = rotation_from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        assert!((r - yaw).max_abs() < 1e-15);
        let tiny = exp_so3(&Vec3::new(1e-6, -2e-6, 3e-7));
        assert!(tiny.is_rotation(1e-12));
    }

    proptest! {
        #[test]
        fn skew_is_antisymmetric_and_cross(a in prop::array::uniform3(-1e3f64..1e3), b in prop::array::uniform3(-1e3f64..1e3)) {
            let (va, vb) = (Vec3(a), Vec3(b));
            let s = skew(&va);
            prop_assert_eq!((s + s.transpose()).max_abs(), 0.0);
            let d = s.mul_vec(&vb) - va.cross(&vb);
            prop_assert!(d.max_abs() <= 1e-9 * (1.0 + va.norm() * vb.norm()));
        }

        #[test]
        fn vee_inverts_skew(a in prop::array::uniform3(-1e3f64..1e3)) {
            let back = vee(&skew(&Vec3(a))).unwrap();
            prop_assert!((back - Vec3(a)).max_abs() <= 1e-12 * (1.0 + Vec3(a).max_abs()));
        }

        #[test]
        fn euler_gives_rotation(r in -3.2f64..3.2, p in -1.6f64..1.6, y in -3.2f64..3.2) {
            let m = rotation_from_euler(r, p, y);
            prop_assert!(m.is_rotation(1e-9));
            prop_assert!(exp_so3(&Vec3::new(r, p, y)).is_rotation(1e-9));
        }

        #[test]
        fn euler_roundtrip(r in -3.0f64..3.0, p in -1.5f64..1.5, y in -3.0f64..3.0) {
            let e = euler_from_rotation(&rotation_from_euler(r, p, y));
            prop_assert!((e - Vec3::new(r, p, y)).max_abs() < 1e-9);
        }
    }
}
