//! Pose references and piecewise-constant schedules.

use crate::mathcore::{rotation_from_euler, Mat3, Vec3};

/// World-frame reference sample. Attitude references are constant in every
/// trajectory, so only the translational derivatives are carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub position: Vec3<f64>,
    pub rotation: Mat3<f64>,
    pub velocity: Vec3<f64>,
    pub accel: Vec3<f64>,
    pub jerk: Vec3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub t: f64,
    pub position: Vec3<f64>,
    /// Roll, pitch, yaw in rad.
    pub rpy: Vec3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// Step changes between held poses. The first setpoint applies from `t = 0`.
    Setpoints(Vec<Setpoint>),
    /// `x = x₀ + A sin(ωt)`, `y = y₀ + B sin(2ωt)` at constant height and attitude.
    FigureEight { center: Vec3<f64>, amplitude_x: f64, amplitude_y: f64, omega: f64, rpy: Vec3<f64> },
}

impl Trajectory {
    pub fn hold(position: Vec3<f64>) -> Self {
        Self::Setpoints(vec![Setpoint { t: 0.0, position, rpy: Vec3::zeros() }])
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        match self {
            Self::Setpoints(list) => {
                if list.is_empty() {
                    return Err("trajectory needs at least one setpoint");
                }
                if list.windows(2).any(|w| !(w[1].t >= w[0].t)) {
                    return Err("setpoints must be sorted by time");
                }
                if list.iter().any(|s| !s.position.is_finite() || !s.rpy.is_finite() || !s.t.is_finite()) {
                    return Err("setpoints must be finite");
                }
            }
            Self::FigureEight { center, amplitude_x, amplitude_y, omega, rpy } => {
                if !center.is_finite() || !rpy.is_finite() || !amplitude_x.is_finite() || !amplitude_y.is_finite() {
                    return Err("figure-eight parameters must be finite");
                }
                if !(*omega >= 0.0) || !omega.is_finite() {
                    return Err("figure-eight frequency must be non-negative");
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Self::Setpoints(list) => {
                let sp = list.iter().rev().find(|s| s.t <= t).unwrap_or(&list[0]);
                ReferenceSample {
                    position: sp.position,
                    rotation: rotation_from_euler(sp.rpy[0], sp.rpy[1], sp.rpy[2]),
                    velocity: Vec3::zeros(),
                    accel: Vec3::zeros(),
                    jerk: Vec3::zeros(),
                }
            }
            Self::FigureEight { center, amplitude_x: a, amplitude_y: b, omega: w, rpy } => {
                let (s1, c1) = (w * t).sin_cos();
                let (s2, c2) = (2.0 * w * t).sin_cos();
                let w2 = 2.0 * w;
                ReferenceSample {
                    position: *center + Vec3::new(a * s1, b * s2, 0.0),
                    rotation: rotation_from_euler(rpy[0], rpy[1], rpy[2]),
                    velocity: Vec3::new(a * w * c1, b * w2 * c2, 0.0),
                    accel: Vec3::new(-a * w * w * s1, -b * w2 * w2 * s2, 0.0),
                    jerk: Vec3::new(-a * w.powi(3) * c1, -b * w2.powi(3) * c2, 0.0),
                }
            }
        }
    }
}

/// Value of a piecewise-constant schedule at `t`; `default` before the first entry.
pub fn schedule_at<V: Copy>(schedule: &[(f64, V)], t: f64, default: V) -> V {
    schedule.iter().rev().find(|(ts, _)| *ts <= t).map(|(_, v)| *v).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_eight_derivatives_match_differences() {
        let tr = Trajectory::FigureEight {
            center: Vec3::new(0.0, 0.0, 1.0),
            amplitude_x: 1.0,
            amplitude_y: 0.5,
            omega: 0.5,
            rpy: Vec3::zeros(),
        };
        let h = 1e-5;
        for &t in &[0.0, 0.7, 3.1, 11.0] {
            let (a, b, c) = (tr.sample(t - h), tr.sample(t), tr.sample(t + h));
            for i in 0..3 {
                assert!(((c.position[i] - a.position[i]) / (2.0 * h) - b.velocity[i]).abs() < 1e-8);
                assert!(((c.velocity[i] - a.velocity[i]) / (2.0 * h) - b.accel[i]).abs() < 1e-8);
                assert!(((c.accel[i] - a.accel[i]) / (2.0 * h) - b.jerk[i]).abs() < 1e-8);
            }
        }
        let s = tr.sample(std::f64::consts::PI);
        assert!((s.position[0] - 1.0).abs() < 1e-12);
        assert!(s.position[1].abs() < 1e-12);
    }

    #[test]
    fn setpoints_step() {
        let tr = Trajectory::Setpoints(vec![
            Setpoint { t: 0.0, position: Vec3::zeros(), rpy: Vec3::zeros() },
            Setpoint { t: 2.0, position: Vec3::new(1.0, 0.0, 0.0), rpy: Vec3::zeros() },
        ]);
        assert_eq!(tr.sample(1.999).position[0], 0.0);
        assert_eq!(tr.sample(2.0).position[0], 1.0);
        assert_eq!(tr.sample(2.0).velocity, Vec3::zeros());
        assert!(tr.validate().is_ok());
        assert!(Trajectory::Setpoints(vec![]).validate().is_err());
    }

    #[test]
    fn schedule_lookup() {
        let s = [(1.0, 3), (2.0, 5)];
        assert_eq!(schedule_at(&s, 0.5, 0), 0);
        assert_eq!(schedule_at(&s, 1.0, 0), 3);
        assert_eq!(schedule_at(&s, 7.0, 0), 5);
    }
}
