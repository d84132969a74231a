//! Force laws for the virtual mechanical elements attached to an end-effector.
//!
//! Every evaluator here is a pure function of kinematic inputs. Gaussian
//! springs follow the sign convention used in the parameter tables: a
//! negative stiffness (and negative peak force) encodes repulsion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

/// `e^{1/2}`, the factor linking a Gaussian spring's stiffness, width and peak force.
pub const SQRT_E: f64 = 1.648_721_270_700_128_1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite and nonzero, got {value}")]
    ZeroOrNonFinite { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("stiffness {stiffness} and peak force {max_force} must share a sign")]
    SignMismatch { stiffness: f64, max_force: f64 },
}

fn nonzero(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value != 0.0 {
        Ok(value)
    } else {
        Err(ParamError::ZeroOrNonFinite { name, value })
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ParamError::Negative { name, value })
    }
}

/// Width at which a Gaussian spring with stiffness `k` peaks at force `f_max`.
pub fn sigma_from_k_fmax(k: f64, f_max: f64) -> Result<f64, ParamError> {
    let k = nonzero("stiffness", k)?;
    let f_max = nonzero("max_force", f_max)?;
    Ok(f_max * SQRT_E / k)
}

/// Stiffness of a Gaussian spring of width `sigma` that peaks at force `f_max`.
pub fn k_from_sigma_fmax(sigma: f64, f_max: f64) -> Result<f64, ParamError> {
    let sigma = nonzero("sigma", sigma)?;
    let f_max = nonzero("max_force", f_max)?;
    Ok(f_max * SQRT_E / sigma)
}

/// Linear spring-damper toward a task target, with the emitted force capped in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpringSpec {
    pub stiffness: f64,
    pub damping: f64,
    pub max_force: f64,
}

impl GoalSpringSpec {
    pub fn new(stiffness: f64, damping: f64, max_force: f64) -> Result<Self, ParamError> {
        Ok(Self {
            stiffness: positive("stiffness", stiffness)?,
            damping: non_negative("damping", damping)?,
            max_force: positive("max_force", max_force)?,
        })
    }

    /// Critically damped spring for a point mass of `mass` kilograms.
    pub fn critically_damped(stiffness: f64, max_force: f64, mass: f64) -> Result<Self, ParamError> {
        let mass = positive("mass", mass)?;
        let stiffness = positive("stiffness", stiffness)?;
        Self::new(stiffness, 2.0 * (stiffness * mass).sqrt(), max_force)
    }
}

/// Spring plus damper pulling the end-effector toward `x_target`.
///
/// The sum of both terms is clamped to `max_force`; clamping rescales and
/// never rotates the force.
pub fn goal_spring_force(
    x_ee: Vec3,
    v_ee: Vec3,
    x_target: Vec3,
    v_target: Vec3,
    spec: &GoalSpringSpec,
) -> Vec3 {
    let raw = (x_target - x_ee) * spec.stiffness + (v_target - v_ee) * spec.damping;
    raw.clamp_norm(spec.max_force)
}

/// Linear time law sliding a goal anchor from `start` to `goal` at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeLawFilter {
    pub start: Vec3,
    pub goal: Vec3,
    pub speed: f64,
    pub start_time: f64,
}

impl TimeLawFilter {
    pub fn new(start: Vec3, goal: Vec3, speed: f64, start_time: f64) -> Result<Self, ParamError> {
        Ok(Self {
            start,
            goal,
            speed: positive("speed", speed)?,
            start_time,
        })
    }

    /// Time at which the anchor arrives at the goal.
    pub fn duration(&self) -> f64 {
        self.start.distance(self.goal) / self.speed
    }

    /// Phase `s(t)` in `[0, 1]`.
    pub fn phase(&self, t: f64) -> f64 {
        let length = self.start.distance(self.goal);
        if length == 0.0 {
            return 1.0;
        }
        let elapsed = (t - self.start_time).max(0.0);
        (self.speed * elapsed / length).min(1.0)
    }

    /// Anchor velocity at time `t` (zero once the goal is reached).
    pub fn velocity(&self, t: f64) -> Vec3 {
        let delta = self.goal - self.start;
        match delta.normalized() {
            Some(dir) if t >= self.start_time && self.phase(t) < 1.0 => dir * self.speed,
            _ => Vec3::ZERO,
        }
    }
}

/// Anchor position of the moving goal at time `t`.
pub fn filtered_goal_position(filter: &TimeLawFilter, t: f64) -> Vec3 {
    let s = filter.phase(t);
    if s >= 1.0 {
        return filter.goal;
    }
    filter.start + (filter.goal - filter.start) * s
}

/// Spring with a Gaussian energy profile. Negative stiffness repels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpringSpec {
    pub stiffness: f64,
    pub sigma: f64,
    pub max_force: f64,
}

impl GaussianSpringSpec {
    pub fn from_stiffness_max_force(stiffness: f64, max_force: f64) -> Result<Self, ParamError> {
        Self::check_signs(stiffness, max_force)?;
        let sigma = sigma_from_k_fmax(stiffness, max_force)?;
        Ok(Self { stiffness, sigma, max_force })
    }

    pub fn from_sigma_max_force(sigma: f64, max_force: f64) -> Result<Self, ParamError> {
        positive("sigma", sigma)?;
        let stiffness = k_from_sigma_fmax(sigma, max_force)?;
        Ok(Self { stiffness, sigma, max_force })
    }

    pub fn from_stiffness_sigma(stiffness: f64, sigma: f64) -> Result<Self, ParamError> {
        nonzero("stiffness", stiffness)?;
        positive("sigma", sigma)?;
        Ok(Self { stiffness, sigma, max_force: stiffness * sigma / SQRT_E })
    }

    fn check_signs(stiffness: f64, max_force: f64) -> Result<(), ParamError> {
        nonzero("stiffness", stiffness)?;
        nonzero("max_force", max_force)?;
        if stiffness.signum() != max_force.signum() {
            return Err(ParamError::SignMismatch { stiffness, max_force });
        }
        Ok(())
    }

    /// Stored energy `-k σ² exp(-|x|²/2σ²)` for displacement `x = x_obj - x_self`.
    pub fn energy(&self, displacement: Vec3) -> f64 {
        let s2 = self.sigma * self.sigma;
        -self.stiffness * s2 * (-displacement.norm_squared() / (2.0 * s2)).exp()
    }
}

/// Force on `x_self` from a Gaussian spring anchored at `x_obj`.
pub fn gaussian_avoidance_force(x_self: Vec3, x_obj: Vec3, spec: &GaussianSpringSpec) -> Vec3 {
    let x = x_obj - x_self;
    let s2 = spec.sigma * spec.sigma;
    x * (spec.stiffness * (-x.norm_squared() / (2.0 * s2)).exp())
}

/// Velocity-dependent brake acting only while a hand approaches within `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnilateralDamperSpec {
    pub base_damping: f64,
    pub radius: f64,
    pub max_force: f64,
}

impl UnilateralDamperSpec {
    pub fn new(base_damping: f64, radius: f64, max_force: f64) -> Result<Self, ParamError> {
        Ok(Self {
            base_damping: positive("base_damping", base_damping)?,
            radius: positive("radius", radius)?,
            max_force: positive("max_force", max_force)?,
        })
    }

    /// Distance-dependent damping coefficient, decaying linearly to zero at the radius.
    pub fn damping_at(&self, distance: f64) -> f64 {
        if distance < self.radius {
            self.base_damping * (1.0 - distance / self.radius)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("hand and end-effector coincide; approach direction undefined")]
pub struct DegenerateGeometry;

/// Brake force on the end-effector, pointing away from the hand.
pub fn unilateral_damper_force(
    x_ee: Vec3,
    v_ee: Vec3,
    x_hand: Vec3,
    v_hand: Vec3,
    spec: &UnilateralDamperSpec,
) -> Result<Vec3, DegenerateGeometry> {
    let d = x_hand - x_ee;
    let dir = d.normalized().ok_or(DegenerateGeometry)?;
    Ok(damper_along(dir, d.norm(), v_hand - v_ee, spec))
}

/// Same as [`unilateral_damper_force`], reusing `previous_direction` when the
/// two points coincide.
pub fn unilateral_damper_force_or(
    x_ee: Vec3,
    v_ee: Vec3,
    x_hand: Vec3,
    v_hand: Vec3,
    spec: &UnilateralDamperSpec,
    previous_direction: Option<Vec3>,
) -> (Vec3, Option<Vec3>) {
    let d = x_hand - x_ee;
    match (d.normalized(), previous_direction) {
        (Some(dir), _) => (damper_along(dir, d.norm(), v_hand - v_ee, spec), Some(dir)),
        (None, Some(dir)) => (damper_along(dir, 0.0, v_hand - v_ee, spec), Some(dir)),
        (None, None) => (Vec3::ZERO, None),
    }
}

fn damper_along(dir: Vec3, distance: f64, relative_velocity: Vec3, spec: &UnilateralDamperSpec) -> Vec3 {
    let r_dot = dir.dot(relative_velocity);
    if r_dot >= 0.0 || distance >= spec.radius {
        return Vec3::ZERO;
    }
    let magnitude = (-spec.damping_at(distance) * r_dot).min(spec.max_force);
    -dir * magnitude
}

/// Gaussian spring pushing the end-effector off a horizontal plane.
///
/// The plane is raised by `grasp_lift` while a block is held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpringSpec {
    pub spring: GaussianSpringSpec,
    pub plane_height: f64,
    pub grasp_lift: f64,
}

impl ObstacleSpringSpec {
    pub fn effective_height(&self, grasping: bool) -> f64 {
        if grasping {
            self.plane_height + self.grasp_lift
        } else {
            self.plane_height
        }
    }
}

pub fn obstacle_force(x_ee: Vec3, grasping: bool, spec: &ObstacleSpringSpec) -> Vec3 {
    let foot = Vec3::new(x_ee.x, x_ee.y, spec.effective_height(grasping));
    gaussian_avoidance_force(x_ee, foot, &spec.spring)
}
