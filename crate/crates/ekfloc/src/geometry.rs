//! Angle arithmetic, normal-form lines, and the world↔robot frame transform.
//!
//! Lines are stored in Hesse normal form: the locus of points `(x, y)` with
//! `x·cos(angle) + y·sin(angle) = offset` and `offset ≥ 0`. In the world
//! frame the parameters are called `(rho, beta)`, in the robot frame
//! `(r, psi)`. The transform between the two frames is the backbone of the
//! laser measurement model.

use nalgebra::{Matrix2, Point2};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Errors from geometric constructions.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// An input that must be finite was NaN or infinite.
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    /// The inputs do not determine the requested object.
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// Wraps an angle into the canonical interval `(-π, π]`.
///
/// The open/closed convention puts the boundary on the positive side:
/// `wrap_angle(-PI)` returns `PI`. Wrapping is idempotent.
pub fn wrap_angle(a: f64) -> Result<f64, GeometryError> {
    if !a.is_finite() {
        return Err(GeometryError::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible wrap for angles already known to be finite.
#[inline]
pub(crate) fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Wrapped difference `a - b`, in `(-π, π]`.
#[inline]
pub(crate) fn angle_diff(a: f64, b: f64) -> f64 {
    wrap(a - b)
}

/// Robot pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// World-frame x position (m).
    pub x: f64,
    /// World-frame y position (m).
    pub y: f64,
    /// Heading (rad), counter-clockwise from the world x-axis, canonical.
    pub theta: f64,
}

impl Pose {
    /// Builds a pose, wrapping the heading into `(-π, π]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: wrap(theta),
        }
    }

    /// Transforms a world-frame point into this pose's robot frame.
    pub fn world_to_robot(&self, p: &Point2<f64>) -> Point2<f64> {
        let (sin_t, cos_t) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point2::new(cos_t * dx + sin_t * dy, -sin_t * dx + cos_t * dy)
    }

    /// Transforms a robot-frame point into the world frame.
    pub fn robot_to_world(&self, p: &Point2<f64>) -> Point2<f64> {
        let (sin_t, cos_t) = self.theta.sin_cos();
        Point2::new(
            self.x + cos_t * p.x - sin_t * p.y,
            self.y + sin_t * p.x + cos_t * p.y,
        )
    }
}

/// A wall segment in the world frame: normal form plus endpoints.
///
/// Every point of the carrier line satisfies
/// `x·cos(beta) + y·sin(beta) = rho` with `rho ≥ 0`. The endpoints bound
/// the physical segment and are used for ray-casting and visibility only.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLine {
    /// Normal distance of the carrier line from the world origin (m), ≥ 0.
    pub rho: f64,
    /// Direction of the line normal (rad), canonical.
    pub beta: f64,
    /// Segment endpoints in the world frame.
    pub endpoints: [Point2<f64>; 2],
}

impl GlobalLine {
    /// Signed distance of a point from the carrier line.
    pub fn carrier_residual(&self, p: &Point2<f64>) -> f64 {
        p.x * self.beta.cos() + p.y * self.beta.sin() - self.rho
    }
}

/// Builds the wall segment between two distinct points.
///
/// The normal form is canonicalized so that `rho ≥ 0`; coincident points
/// are rejected because they leave the direction undetermined.
pub fn line_through_points(
    p1: Point2<f64>,
    p2: Point2<f64>,
) -> Result<GlobalLine, GeometryError> {
    if !(p1.x.is_finite() && p1.y.is_finite() && p2.x.is_finite() && p2.y.is_finite()) {
        return Err(GeometryError::NonFinite("endpoint"));
    }
    let dx = p2.x - p1.x;
    let dy = p2.y - p1.y;
    let len = dx.hypot(dy);
    if len < 1e-12 {
        return Err(GeometryError::DegenerateInput("coincident points"));
    }
    // Normal is the edge direction rotated by -90°; flip it if needed so
    // that the offset comes out non-negative.
    let mut nx = dy / len;
    let mut ny = -dx / len;
    let mut rho = nx * p1.x + ny * p1.y;
    if rho < 0.0 {
        nx = -nx;
        ny = -ny;
        rho = -rho;
    }
    Ok(GlobalLine {
        rho: rho.abs(),
        beta: wrap(ny.atan2(nx)),
        endpoints: [p1, p2],
    })
}

/// A line measured in the robot frame, in normal form with fit covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLine {
    /// Normal distance of the line from the robot (m), ≥ 0.
    pub r: f64,
    /// Direction of the line normal in the robot frame (rad), canonical.
    pub psi: f64,
    /// 2×2 covariance of `(r, psi)`.
    pub cov: Matrix2<f64>,
}

impl LocalLine {
    /// Builds a local line, canonicalizing so that `r ≥ 0`.
    pub fn new(r: f64, psi: f64, cov: Matrix2<f64>) -> Self {
        if r < 0.0 {
            LocalLine {
                r: -r,
                psi: wrap(psi + PI),
                cov,
            }
        } else {
            LocalLine {
                r,
                psi: wrap(psi),
                cov,
            }
        }
    }
}

/// A global line expressed in the robot frame of a given pose.
///
/// `c` is the signed normal offset of the line relative to the robot; its
/// sign records which side of the carrier the robot stands on, and is what
/// flips the local normal so that `r` stays non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedLine {
    /// Signed offset `rho - x·cos(beta) - y·sin(beta)` (m).
    pub c: f64,
    /// Normal distance of the line in the robot frame (m), ≥ 0.
    pub r: f64,
    /// Direction of the line normal in the robot frame (rad), canonical.
    pub psi: f64,
}

/// Expresses a world-frame line in the robot frame of `pose`.
///
/// `r = |c|` and `psi = beta - theta`, advanced by π when the robot is on
/// the far side of the carrier (`c < 0`) so the normal form stays canonical.
pub fn global_line_to_local(pose: &Pose, line: &GlobalLine) -> ProjectedLine {
    let c = line.rho - pose.x * line.beta.cos() - pose.y * line.beta.sin();
    let psi = if c >= 0.0 {
        wrap(line.beta - pose.theta)
    } else {
        wrap(line.beta - pose.theta + PI)
    };
    ProjectedLine { c, r: c.abs(), psi }
}

/// Inverse of [`global_line_to_local`]: lifts robot-frame normal-form
/// parameters `(r, psi)` at `pose` back to world-frame `(rho, beta)`,
/// canonicalized so that `rho ≥ 0`.
pub fn local_line_to_global(pose: &Pose, r: f64, psi: f64) -> (f64, f64) {
    let mut beta = wrap(psi + pose.theta);
    let mut rho = r + pose.x * beta.cos() + pose.y * beta.sin();
    if rho < 0.0 {
        rho = -rho;
        beta = wrap(beta + PI);
    }
    (rho.abs(), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_angle_identity_and_period() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            wrap_angle(3.0 * PI / 2.0).unwrap(),
            -PI / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn wrap_angle_boundary_maps_to_positive_pi() {
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
    }

    #[test]
    fn wrap_angle_rejects_non_finite() {
        assert_eq!(
            wrap_angle(f64::NAN),
            Err(GeometryError::NonFinite("angle"))
        );
        assert_eq!(
            wrap_angle(f64::INFINITY),
            Err(GeometryError::NonFinite("angle"))
        );
    }

    #[test]
    fn wrap_angle_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = rng.random_range(-50.0..50.0);
            let once = wrap_angle(a).unwrap();
            let twice = wrap_angle(once).unwrap();
            assert_eq!(once, twice, "wrap not idempotent at {a}");
            assert!(once > -PI && once <= PI);
        }
    }

    #[test]
    fn line_through_points_vertical() {
        let line = line_through_points(Point2::new(2.0, -1.0), Point2::new(2.0, 1.0)).unwrap();
        assert_relative_eq!(line.rho, 2.0, epsilon = 1e-12);
        assert_relative_eq!(line.beta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn line_through_points_horizontal() {
        let line = line_through_points(Point2::new(-1.0, 3.0), Point2::new(1.0, 3.0)).unwrap();
        assert_relative_eq!(line.rho, 3.0, epsilon = 1e-12);
        assert_relative_eq!(line.beta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn line_through_points_rejects_coincident() {
        assert_eq!(
            line_through_points(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)),
            Err(GeometryError::DegenerateInput("coincident points"))
        );
    }

    #[test]
    fn line_endpoints_satisfy_normal_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p1 = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let p2 = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            if (p2 - p1).norm() < 1e-6 {
                continue;
            }
            let line = line_through_points(p1, p2).unwrap();
            assert!(line.rho >= 0.0);
            assert!(line.carrier_residual(&p1).abs() <= 1e-9);
            assert!(line.carrier_residual(&p2).abs() <= 1e-9);
        }
    }

    /// Independent oracle for the frame transform: sample points of the
    /// global carrier line, rigidly transform them into the robot frame and
    /// rebuild the normal form from two of them.
    fn local_params_by_sampling(pose: &Pose, line: &GlobalLine) -> (f64, f64) {
        let (sin_b, cos_b) = line.beta.sin_cos();
        // Points rho*n + s*d of the carrier, d orthogonal to the normal n.
        let carrier_point = |s: f64| {
            Point2::new(line.rho * cos_b - s * sin_b, line.rho * sin_b + s * cos_b)
        };
        let q1 = pose.world_to_robot(&carrier_point(-3.0));
        let q2 = pose.world_to_robot(&carrier_point(2.0));
        let dx = q2.x - q1.x;
        let dy = q2.y - q1.y;
        let len = dx.hypot(dy);
        let mut nx = dy / len;
        let mut ny = -dx / len;
        let mut r = nx * q1.x + ny * q1.y;
        if r < 0.0 {
            nx = -nx;
            ny = -ny;
            r = -r;
        }
        (r, ny.atan2(nx))
    }

    fn global(rho: f64, beta: f64) -> GlobalLine {
        let (sin_b, cos_b) = beta.sin_cos();
        let e1 = Point2::new(rho * cos_b - sin_b, rho * sin_b + cos_b);
        let e2 = Point2::new(rho * cos_b + sin_b, rho * sin_b - cos_b);
        GlobalLine {
            rho,
            beta,
            endpoints: [e1, e2],
        }
    }

    #[test]
    fn projection_in_front_of_line() {
        let p = global_line_to_local(&Pose::new(0.0, 0.0, 0.0), &global(1.0, 0.0));
        assert_relative_eq!(p.c, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.psi, 0.0, epsilon = 1e-12);
        let (r, psi) = local_params_by_sampling(&Pose::new(0.0, 0.0, 0.0), &global(1.0, 0.0));
        assert_relative_eq!(p.r, r, epsilon = 1e-9);
        assert!(angle_diff(p.psi, psi).abs() <= 1e-9);
    }

    #[test]
    fn projection_behind_line_flips_normal() {
        let pose = Pose::new(2.0, 0.0, 0.0);
        let line = global(1.0, 0.0);
        let p = global_line_to_local(&pose, &line);
        assert_relative_eq!(p.c, -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.psi, PI, epsilon = 1e-12);
        let (r, psi) = local_params_by_sampling(&pose, &line);
        assert_relative_eq!(p.r, r, epsilon = 1e-9);
        assert!(angle_diff(p.psi, psi).abs() <= 1e-9);
    }

    #[test]
    fn projection_with_rotation() {
        let pose = Pose::new(1.0, 1.0, PI / 2.0);
        let line = global(2.0, PI / 4.0);
        let p = global_line_to_local(&pose, &line);
        assert_relative_eq!(p.c, 2.0 - 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(p.r, 0.5857864376269049, epsilon = 1e-9);
        assert_relative_eq!(p.psi, -PI / 4.0, epsilon = 1e-12);
        let (r, psi) = local_params_by_sampling(&pose, &line);
        assert_relative_eq!(p.r, r, epsilon = 1e-9);
        assert!(angle_diff(p.psi, psi).abs() <= 1e-9);
    }

    #[test]
    fn identity_pose_keeps_world_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let rho = rng.random_range(0.1..10.0);
            let beta = rng.random_range(-PI..PI);
            let p = global_line_to_local(&Pose::new(0.0, 0.0, 0.0), &global(rho, beta));
            assert!(p.c >= 0.0);
            assert_relative_eq!(p.r, rho, epsilon = 1e-12);
            assert!(angle_diff(p.psi, wrap(beta)).abs() <= 1e-12);
        }
    }

    #[test]
    fn projected_points_satisfy_local_normal_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let pose = Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-PI..PI),
            );
            let rho = rng.random_range(0.0..8.0);
            let beta = rng.random_range(-PI..PI);
            let line = global(rho, beta);
            let p = global_line_to_local(&pose, &line);
            assert!(p.r >= 0.0);
            let (sin_b, cos_b) = beta.sin_cos();
            for k in -5..=5 {
                let s = k as f64;
                let world = Point2::new(rho * cos_b - s * sin_b, rho * sin_b + s * cos_b);
                let q = pose.world_to_robot(&world);
                let residual = q.x * p.psi.cos() + q.y * p.psi.sin() - p.r;
                assert!(
                    residual.abs() <= 1e-9,
                    "residual {residual} for pose {pose:?} line ({rho}, {beta})"
                );
            }
        }
    }

    #[test]
    fn local_global_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let pose = Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-PI..PI),
            );
            let rho = rng.random_range(0.0..8.0);
            let beta = rng.random_range(-PI..PI);
            let line = global(rho, beta);
            let p = global_line_to_local(&pose, &line);
            if p.c.abs() < 1e-6 {
                continue; // side of the carrier not well defined
            }
            let (rho_back, beta_back) = local_line_to_global(&pose, p.r, p.psi);
            assert_relative_eq!(rho_back, rho, epsilon = 1e-9);
            assert!(angle_diff(beta_back, wrap(beta)).abs() <= 1e-9);
        }
    }
}
