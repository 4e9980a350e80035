//! Contact surface and scripted disturbances.

use crate::dynamics::{RigidBodyState, Wrench};
use crate::mathcore::{Vec3, Vec6};

/// Linear motion of the surface rest position over `[start, start + duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub duration: f64,
    /// Signed displacement along the world axis, m.
    pub distance: f64,
}

/// Planar spring-damper surface orthogonal to a world axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    /// World axis of the surface normal (0, 1, 2).
    pub axis: usize,
    /// Sign of the outward normal along `axis`; free space is on this side.
    pub normal_sign: f64,
    /// Rest position along `axis` at `t = 0`, m.
    pub position: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub ramp: Option<Ramp>,
}

impl Surface {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.axis > 2 {
            return Err("surface axis must be 0, 1 or 2");
        }
        if self.normal_sign != 1.0 && self.normal_sign != -1.0 {
            return Err("surface normal sign must be +1 or -1");
        }
        if !(self.stiffness >= 0.0) || !(self.damping >= 0.0) || !self.position.is_finite() {
            return Err("surface stiffness and damping must be non-negative");
        }
        if let Some(r) = self.ramp {
            if !(r.duration > 0.0) || !r.start.is_finite() || !r.distance.is_finite() {
                return Err("surface ramp needs a positive duration");
            }
        }
        Ok(())
    }

    /// Rest position and its rate at time `t`.
    pub fn rest(&self, t: f64) -> (f64, f64) {
        match self.ramp {
            Some(r) if t >= r.start + r.duration => (self.position + r.distance, 0.0),
            Some(r) if t >= r.start => (self.position + r.distance * (t - r.start) / r.duration, r.distance / r.duration),
            _ => (self.position, 0.0),
        }
    }

    /// Signed distance of `point` from the surface along the outward normal;
    /// negative when penetrating.
    pub fn gap(&self, point: &Vec3<f64>, t: f64) -> f64 {
        self.normal_sign * (point[self.axis] - self.rest(t).0)
    }

    /// Surface force on a point with world velocity `velocity`, world frame.
    pub fn force(&self, point: &Vec3<f64>, velocity: &Vec3<f64>, t: f64) -> Vec3<f64> {
        let (s, s_dot) = self.rest(t);
        let gap = self.normal_sign * (point[self.axis] - s);
        if gap >= 0.0 {
            return Vec3::zeros();
        }
        let gap_rate = self.normal_sign * (velocity[self.axis] - s_dot);
        let push = (-self.stiffness * gap - self.damping * gap_rate).max(0.0);
        let mut f = Vec3::zeros();
        f[self.axis] = self.normal_sign * push;
        f
    }
}

/// Step wrench applied at the centre of mass over `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub start: f64,
    pub duration: f64,
    /// `[force; torque]`, world frame.
    pub wrench_world: Vec6<f64>,
}

impl Disturbance {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Environment {
    pub surface: Option<Surface>,
    pub disturbances: Vec<Disturbance>,
}

impl Environment {
    pub fn validate(&self) -> Result<(), &'static str> {
        if let Some(s) = &self.surface {
            s.validate()?;
        }
        for d in &self.disturbances {
            if !(d.duration >= 0.0) || !d.start.is_finite() || !d.wrench_world.is_finite() {
                return Err("disturbance needs a finite start, non-negative duration and finite wrench");
            }
        }
        if self.disturbances.windows(2).any(|w| w[1].start < w[0].start) {
            return Err("disturbances must be sorted by start time");
        }
        Ok(())
    }

    /// Sum of active disturbances, body frame.
    pub fn disturbance_wrench(&self, state: &RigidBodyState<f64>, t: f64) -> Wrench<f64> {
        let mut w = Vec6::zeros();
        for d in self.disturbances.iter().filter(|d| d.active(t)) {
            w += d.wrench_world;
        }
        Wrench::world(w).in_body(&state.rotation)
    }
}

/// Unilateral surface reaction on the tool (the body origin), body frame.
pub fn contact_wrench(env: &Environment, state: &RigidBodyState<f64>, t: f64) -> Wrench<f64> {
    let Some(surface) = &env.surface else {
        return Wrench::zero(crate::dynamics::Frame::Body);
    };
    let v_world = state.rotation.mul_vec(&state.twist.linear());
    let f = surface.force(&state.position, &v_world, t);
    Wrench::world(Vec6::from_parts(f, Vec3::zeros())).in_body(&state.rotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{rotation_from_euler, Mat3};

    fn wall() -> Surface {
        Surface { axis: 0, normal_sign: -1.0, position: 1.0, stiffness: 30.0, damping: 0.0, ramp: None }
    }

    fn at(x: f64, vx: f64) -> RigidBodyState<f64> {
        let mut s = RigidBodyState::at_rest(Vec3::new(x, 0.0, 0.0), Mat3::identity());
        s.twist[0] = vx;
        s
    }

    #[test]
    fn separated_is_zero() {
        let env = Environment { surface: Some(wall()), ..Default::default() };
        assert_eq!(contact_wrench(&env, &at(0.9, 0.0), 0.0).to_vec6(), Vec6::zeros());
        assert_eq!(contact_wrench(&Environment::default(), &at(5.0, 0.0), 0.0).to_vec6(), Vec6::zeros());
    }

    #[test]
    fn restitution_example() {
        // 0.1 m into a 30 N/m surface at rest: 3 N back along the outward normal.
        let env = Environment { surface: Some(wall()), ..Default::default() };
        let w = contact_wrench(&env, &at(1.1, 0.0), 0.0);
        assert!((w.force[0] + 3.0).abs() < 1e-12);
        assert_eq!(w.torque, Vec3::zeros());
    }

    #[test]
    fn push_equilibrium() {
        let env = Environment { surface: Some(wall()), ..Default::default() };
        let w = contact_wrench(&env, &at(1.0 + 4.0 / 30.0, 0.0), 0.0);
        assert!((w.force[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn never_pulls() {
        let mut s = wall();
        s.damping = 20.0;
        let env = Environment { surface: Some(s), ..Default::default() };
        // Fast withdrawal while slightly penetrating: damping would pull.
        let w = contact_wrench(&env, &at(1.01, -1.0), 0.0);
        assert_eq!(w.force[0], 0.0);
    }

    #[test]
    fn ramp_moves_rest_position() {
        let mut s = wall();
        s.ramp = Some(Ramp { start: 2.0, duration: 1.0, distance: 0.5 });
        assert_eq!(s.rest(1.0), (1.0, 0.0));
        assert_eq!(s.rest(2.5), (1.25, 0.5));
        assert_eq!(s.rest(4.0), (1.5, 0.0));
        assert!(s.gap(&Vec3::new(1.1, 0.0, 0.0), 0.0) < 0.0);
        assert!(s.gap(&Vec3::new(1.1, 0.0, 0.0), 4.0) > 0.0);
    }

    #[test]
    fn disturbance_rotates_into_body() {
        let env = Environment {
            surface: None,
            disturbances: vec![Disturbance { start: 1.0, duration: 1.0, wrench_world: Vec6([0.0, 14.0, 0.0, 0.0, 0.0, 0.0]) }],
        };
        let mut s = at(0.0, 0.0);
        assert_eq!(env.disturbance_wrench(&s, 0.5).to_vec6(), Vec6::zeros());
        assert_eq!(env.disturbance_wrench(&s, 2.0).to_vec6(), Vec6::zeros());
        s.rotation = rotation_from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let w = env.disturbance_wrench(&s, 1.5);
        assert!((w.force[0] - 14.0).abs() < 1e-12 && w.force[1].abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut s = wall();
        s.axis = 3;
        assert!(Environment { surface: Some(s), ..Default::default() }.validate().is_err());
        let mut s = wall();
        s.stiffness = -1.0;
        assert!(s.validate().is_err());
    }
}
