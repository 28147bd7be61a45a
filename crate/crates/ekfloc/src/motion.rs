//! Differential-drive kinematics: odometry increments, the midpoint pose
//! update, and the prediction-side Jacobians and input-noise covariance.
//!
//! The pose update advances the robot along the chord of the tick's motion,
//! evaluated at the mid-tick heading. It is exact for straight motion and a
//! first-order approximation of the true arc otherwise.

use crate::geometry::Pose;
use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2};
use thiserror::Error;

/// Errors from motion-model configuration.
#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    /// A physical parameter that must be strictly positive was not.
    #[error("robot parameter {name} must be strictly positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    /// The wheel-noise proportionality constant was negative.
    #[error("noise proportionality constant must be non-negative, got {0}")]
    NegativeDelta(f64),
}

/// Physical parameters of the differential-drive base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    wheel_radius: f64,
    wheel_base: f64,
    dt: f64,
}

impl RobotParams {
    /// Wheel radius (m), axle length between the driven wheels (m), and
    /// sampling period (s). All must be strictly positive and finite.
    pub fn new(wheel_radius: f64, wheel_base: f64, dt: f64) -> Result<Self, MotionError> {
        for (name, value) in [
            ("wheel_radius", wheel_radius),
            ("wheel_base", wheel_base),
            ("dt", dt),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(MotionError::NonPositiveParam { name, value });
            }
        }
        Ok(RobotParams {
            wheel_radius,
            wheel_base,
            dt,
        })
    }

    /// Driven wheel radius (m).
    pub fn wheel_radius(&self) -> f64 {
        self.wheel_radius
    }

    /// Distance between the driven wheels (m).
    pub fn wheel_base(&self) -> f64 {
        self.wheel_base
    }

    /// Sampling period of one odometry tick (s).
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl Default for RobotParams {
    /// The reference platform used by the bundled scenarios: 10 cm wheel
    /// diameter, 60 cm axle, 100 ms tick.
    fn default() -> Self {
        RobotParams::new(0.05, 0.6, 0.1).unwrap()
    }
}

/// Rotational speeds of the driven wheels (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds {
    /// Left wheel angular speed (rad/s).
    pub omega_l: f64,
    /// Right wheel angular speed (rad/s).
    pub omega_r: f64,
}

impl WheelSpeeds {
    pub fn new(omega_l: f64, omega_r: f64) -> Self {
        WheelSpeeds { omega_l, omega_r }
    }
}

/// Incremental displacement of one odometry tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryDelta {
    /// Linear displacement of the robot center (m).
    pub ds: f64,
    /// Heading change (rad).
    pub dtheta: f64,
    /// Left wheel travel (m).
    pub ds_left: f64,
    /// Right wheel travel (m).
    pub ds_right: f64,
}

/// Wheel-speed noise model: each wheel's speed measurement carries
/// independent zero-mean Gaussian noise with variance `delta · omega²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    delta: f64,
}

impl NoiseModel {
    /// `delta` is the dimensionless proportionality constant; must be ≥ 0.
    pub fn new(delta: f64) -> Result<Self, MotionError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(MotionError::NegativeDelta(delta));
        }
        Ok(NoiseModel { delta })
    }

    /// The proportionality constant.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl Default for NoiseModel {
    /// The reference platform's experimentally calibrated value.
    fn default() -> Self {
        NoiseModel::new(0.01).unwrap()
    }
}

/// Converts one tick of wheel speeds into travel increments.
pub fn odometry_delta(u: &WheelSpeeds, p: &RobotParams) -> OdometryDelta {
    let ds_left = p.dt * p.wheel_radius * u.omega_l;
    let ds_right = p.dt * p.wheel_radius * u.omega_r;
    OdometryDelta {
        ds: 0.5 * (ds_left + ds_right),
        dtheta: (ds_right - ds_left) / p.wheel_base,
        ds_left,
        ds_right,
    }
}

/// Advances a pose by one tick, moving along the chord at the mid-tick
/// heading. Exact for `dtheta == 0`.
pub fn propagate_pose(pose: &Pose, d: &OdometryDelta) -> Pose {
    let mid = pose.theta + 0.5 * d.dtheta;
    Pose::new(
        pose.x + d.ds * mid.cos(),
        pose.y + d.ds * mid.sin(),
        pose.theta + d.dtheta,
    )
}

/// Jacobian of the pose update with respect to the previous pose.
pub fn jacobian_a(pose: &Pose, d: &OdometryDelta) -> Matrix3<f64> {
    let mid = pose.theta + 0.5 * d.dtheta;
    let mut a = Matrix3::identity();
    a[(0, 2)] = -d.ds * mid.sin();
    a[(1, 2)] = d.ds * mid.cos();
    a
}

/// Jacobian of the pose update with respect to additive wheel-speed noise,
/// evaluated at zero noise. Column 0 differentiates along the right wheel,
/// column 1 along the left wheel, matching the ordering of [`build_q`].
pub fn jacobian_w(pose: &Pose, u: &WheelSpeeds, p: &RobotParams) -> Matrix3x2<f64> {
    let d = odometry_delta(u, p);
    let mid = pose.theta + 0.5 * d.dtheta;
    let (sin_m, cos_m) = mid.sin_cos();
    let k = p.dt * p.wheel_radius;
    let l = p.wheel_base;
    let half_turn = d.ds / (2.0 * l);
    Matrix3x2::new(
        k * (0.5 * cos_m - half_turn * sin_m),
        k * (0.5 * cos_m + half_turn * sin_m),
        k * (0.5 * sin_m + half_turn * cos_m),
        k * (0.5 * sin_m - half_turn * cos_m),
        k / l,
        -k / l,
    )
}

/// Input-noise covariance `diag(delta·omega_r², delta·omega_l²)`.
pub fn build_q(u: &WheelSpeeds, nm: &NoiseModel) -> Matrix2<f64> {
    Matrix2::from_diagonal(&Vector2::new(
        nm.delta * u.omega_r * u.omega_r,
        nm.delta * u.omega_l * u.omega_l,
    ))
}
