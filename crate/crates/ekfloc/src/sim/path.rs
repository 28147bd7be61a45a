//! Trajectory programs with closed-form ground truth.
//!
//! Every program compiles to a sequence of constant-twist segments (lines
//! and circular arcs), so the pose at any time and the wheel speeds that
//! realize it are available in closed form. Polygonal paths get their
//! corners rounded by arcs tangent to both edges.

use super::SimError;
use crate::geometry::Pose;
use crate::motion::{RobotParams, WheelSpeeds};
use nalgebra::Point2;

/// A ground-truth trajectory program.
#[derive(Debug, Clone, PartialEq)]
pub enum PathProgram {
    /// Drive along +x from the origin at constant speed (m/s).
    Straight { speed: f64 },
    /// Rotate in place at constant rate (rad/s).
    Spin { rate: f64 },
    /// Loop counter-clockwise around an axis-aligned rectangle centered on
    /// the origin, corners rounded with the given radius.
    RoundedRectangle {
        width: f64,
        height: f64,
        corner_radius: f64,
        speed: f64,
    },
    /// Loop counter-clockwise around an equilateral triangle centered on
    /// the origin, corners rounded with the given radius.
    RoundedTriangle {
        side: f64,
        corner_radius: f64,
        speed: f64,
    },
    /// Follow a waypoint polyline at constant speed, interior corners
    /// rounded with the given radius. A closed path loops forever.
    Waypoints {
        points: Vec<Point2<f64>>,
        corner_radius: f64,
        speed: f64,
        closed: bool,
    },
}

/// One constant-twist piece of the compiled path.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start_time: f64,
    duration: f64,
    v: f64,
    omega: f64,
    start: Pose,
}

impl Segment {
    /// Closed-form pose after driving this segment for `tau` seconds.
    fn pose_after(&self, tau: f64) -> Pose {
        let Pose { x, y, theta } = self.start;
        if self.omega.abs() < 1e-12 {
            Pose::new(
                x + self.v * tau * theta.cos(),
                y + self.v * tau * theta.sin(),
                theta,
            )
        } else {
            let radius = self.v / self.omega;
            let heading = theta + self.omega * tau;
            Pose::new(
                x + radius * (heading.sin() - theta.sin()),
                y - radius * (heading.cos() - theta.cos()),
                heading,
            )
        }
    }
}

/// A path compiled to closed-form segments.
#[derive(Debug, Clone)]
pub struct CompiledPath {
    segments: Vec<Segment>,
    /// Duration of one traversal (one lap for closed paths).
    cycle: f64,
    /// Whether the path repeats after `cycle` seconds.
    loops: bool,
}

impl CompiledPath {
    /// Pose on the path at time `t ≥ 0`.
    pub fn pose_at(&self, t: f64) -> Pose {
        let (segment, tau) = self.locate(t);
        segment.pose_after(tau)
    }

    /// Body twist (v, omega) commanded at time `t`.
    pub fn twist_at(&self, t: f64) -> (f64, f64) {
        let (segment, _) = self.locate(t);
        (segment.v, segment.omega)
    }

    /// Wheel speeds realizing the commanded twist at time `t`.
    pub fn wheel_speeds_at(&self, t: f64, params: &RobotParams) -> WheelSpeeds {
        let (v, omega) = self.twist_at(t);
        let half_base = params.wheel_base() / 2.0;
        WheelSpeeds::new(
            (v - half_base * omega) / params.wheel_radius(),
            (v + half_base * omega) / params.wheel_radius(),
        )
    }

    /// Duration of one traversal.
    pub fn cycle_duration(&self) -> f64 {
        self.cycle
    }

    fn locate(&self, t: f64) -> (&Segment, f64) {
        let t = if self.loops {
            t.rem_euclid(self.cycle)
        } else {
            t.min(self.cycle)
        };
        let idx = self
            .segments
            .partition_point(|s| s.start_time + s.duration <= t)
            .min(self.segments.len() - 1);
        let segment = &self.segments[idx];
        (segment, (t - segment.start_time).max(0.0))
    }
}

/// Compiles a program; `horizon` bounds the time unbounded programs must
/// cover.
pub fn compile(program: &PathProgram, horizon: f64) -> Result<CompiledPath, SimError> {
    match program {
        PathProgram::Straight { speed } => {
            require(speed.is_finite() && *speed > 0.0, "straight path needs speed > 0")?;
            Ok(CompiledPath {
                segments: vec![Segment {
                    start_time: 0.0,
                    duration: horizon,
                    v: *speed,
                    omega: 0.0,
                    start: Pose::new(0.0, 0.0, 0.0),
                }],
                cycle: horizon,
                loops: false,
            })
        }
        PathProgram::Spin { rate } => {
            require(rate.is_finite() && *rate != 0.0, "spin path needs a nonzero rate")?;
            Ok(CompiledPath {
                segments: vec![Segment {
                    start_time: 0.0,
                    duration: horizon,
                    v: 0.0,
                    omega: *rate,
                    start: Pose::new(0.0, 0.0, 0.0),
                }],
                cycle: horizon,
                loops: false,
            })
        }
        PathProgram::RoundedRectangle {
            width,
            height,
            corner_radius,
            speed,
        } => {
            let a = width / 2.0;
            let b = height / 2.0;
            rounded_polygon(
                &[
                    Point2::new(-a, -b),
                    Point2::new(a, -b),
                    Point2::new(a, b),
                    Point2::new(-a, b),
                ],
                *corner_radius,
                *speed,
                true,
            )
        }
        PathProgram::RoundedTriangle {
            side,
            corner_radius,
            speed,
        } => {
            let circumradius = side / 3.0_f64.sqrt();
            let vertices: Vec<Point2<f64>> = [-90.0_f64, 30.0, 150.0]
                .iter()
                .map(|deg| {
                    let rad = deg.to_radians();
                    Point2::new(circumradius * rad.cos(), circumradius * rad.sin())
                })
                .collect();
            rounded_polygon(&vertices, *corner_radius, *speed, true)
        }
        PathProgram::Waypoints {
            points,
            corner_radius,
            speed,
            closed,
        } => rounded_polygon(points, *corner_radius, *speed, *closed),
    }
}

fn require(ok: bool, msg: &str) -> Result<(), SimError> {
    if ok {
        Ok(())
    } else {
        Err(SimError::InvalidScenario(msg.to_string()))
    }
}

/// Compiles a polyline into straight segments joined by tangent arcs.
fn rounded_polygon(
    vertices: &[Point2<f64>],
    radius: f64,
    speed: f64,
    closed: bool,
) -> Result<CompiledPath, SimError> {
    require(speed.is_finite() && speed > 0.0, "path speed must be > 0")?;
    require(radius.is_finite() && radius >= 0.0, "corner radius must be >= 0")?;
    require(
        vertices.len() >= if closed { 3 } else { 2 },
        "too few waypoints",
    )?;

    let n = vertices.len();
    let edge = |i: usize| {
        let from = vertices[i];
        let to = vertices[(i + 1) % n];
        let d = to - from;
        let len = d.norm();
        (d / len, len)
    };
    let edge_count = if closed { n } else { n - 1 };
    for i in 0..edge_count {
        let (_, len) = edge(i);
        require(len > 1e-9, "repeated waypoint")?;
    }

    // Trim distance consumed at each vertex by its corner arc.
    let mut trims = vec![0.0; n];
    let mut turns = vec![0.0; n];
    let corner_range = if closed { 0..n } else { 1..n - 1 };
    for i in corner_range {
        let (dir_in, _) = edge((i + n - 1) % n);
        let (dir_out, _) = edge(i);
        let turn = crate::geometry::wrap(dir_out.y.atan2(dir_out.x) - dir_in.y.atan2(dir_in.x));
        require(turn.abs() < std::f64::consts::PI - 1e-9, "path reverses on itself")?;
        turns[i] = turn;
        trims[i] = radius * (turn.abs() / 2.0).tan();
    }

    // Walk the boundary, alternating straights and corner arcs.
    let mut segments: Vec<Segment> = Vec::new();
    let mut clock = 0.0;
    fn push(segments: &mut Vec<Segment>, clock: &mut f64, v: f64, omega: f64, duration: f64, start: Pose) {
        segments.push(Segment {
            start_time: *clock,
            duration,
            v,
            omega,
            start,
        });
        *clock += duration;
    }

    let (first_dir, _) = edge(0);
    let start_point = vertices[0] + first_dir * trims[0];
    let mut cursor = Pose::new(start_point.x, start_point.y, first_dir.y.atan2(first_dir.x));

    for i in 0..edge_count {
        let (dir, len) = edge(i);
        let end_trim = trims[(i + 1) % n];
        let straight = len - trims[i] - end_trim;
        require(
            straight > 1e-9,
            "corner radius too large for an edge of this path",
        )?;
        let heading = dir.y.atan2(dir.x);
        cursor = Pose::new(cursor.x, cursor.y, heading);
        push(&mut segments, &mut clock, speed, 0.0, straight / speed, cursor);
        cursor = Pose::new(
            cursor.x + straight * heading.cos(),
            cursor.y + straight * heading.sin(),
            heading,
        );

        let corner = (i + 1) % n;
        let is_last_edge = i + 1 == edge_count;
        if closed || !is_last_edge {
            let turn = turns[corner];
            if turn.abs() > 1e-12 && radius > 0.0 {
                let omega = turn.signum() * speed / radius;
                let duration = radius * turn.abs() / speed;
                push(&mut segments, &mut clock, speed, omega, duration, cursor);
                cursor = segments.last().unwrap().pose_after(duration);
            }
        }
    }

    Ok(CompiledPath {
        segments,
        cycle: clock,
        loops: closed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{odometry_delta, propagate_pose};
    use approx::assert_relative_eq;

    fn params() -> RobotParams {
        RobotParams::new(0.05, 0.6, 0.1).unwrap()
    }

    #[test]
    fn straight_path_is_constant_velocity() {
        let path = compile(&PathProgram::Straight { speed: 0.1 }, 20.0).unwrap();
        let pose = path.pose_at(10.0);
        assert_relative_eq!(pose.x, 1.0, epsilon = 1e-12);
        assert_eq!(pose.y, 0.0);
        assert_eq!(pose.theta, 0.0);
    }

    #[test]
    fn spin_path_rotates_in_place() {
        let path = compile(&PathProgram::Spin { rate: 0.1 }, 20.0).unwrap();
        let pose = path.pose_at(10.0);
        assert_eq!(pose.x, 0.0);
        assert_eq!(pose.y, 0.0);
        assert_relative_eq!(pose.theta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wheel_speeds_realize_the_twist() {
        let path = compile(
            &PathProgram::RoundedRectangle {
                width: 4.0,
                height: 3.0,
                corner_radius: 0.5,
                speed: 0.2,
            },
            60.0,
        )
        .unwrap();
        let p = params();
        // On a straight: v = 0.2, omega = 0.
        let u = path.wheel_speeds_at(0.1, &p);
        assert_relative_eq!(
            0.5 * p.wheel_radius() * (u.omega_l + u.omega_r),
            0.2,
            epsilon = 1e-12
        );
        assert_relative_eq!(u.omega_l, u.omega_r, epsilon = 1e-12);
    }

    #[test]
    fn rectangle_loop_returns_to_start() {
        let program = PathProgram::RoundedRectangle {
            width: 4.0,
            height: 3.0,
            corner_radius: 0.5,
            speed: 0.2,
        };
        let path = compile(&program, 600.0).unwrap();
        let lap = path.cycle_duration();
        // Perimeter: two 3 m and two 2 m straights plus a full turn of arcs.
        let expected = (2.0 * 3.0 + 2.0 * 2.0 + 2.0 * std::f64::consts::PI * 0.5) / 0.2;
        assert_relative_eq!(lap, expected, epsilon = 1e-9);

        let start = path.pose_at(0.0);
        let after_lap = path.pose_at(lap);
        assert_relative_eq!(start.x, after_lap.x, epsilon = 1e-9);
        assert_relative_eq!(start.y, after_lap.y, epsilon = 1e-9);
        assert_relative_eq!(start.theta, after_lap.theta, epsilon = 1e-9);
    }

    #[test]
    fn triangle_corners_turn_by_120_degrees() {
        let program = PathProgram::RoundedTriangle {
            side: 3.0,
            corner_radius: 0.5,
            speed: 0.2,
        };
        let path = compile(&program, 600.0).unwrap();
        let lap = path.cycle_duration();
        let arc_per_corner = 0.5 * (120.0_f64).to_radians();
        let trim = 0.5 * (60.0_f64).to_radians().tan();
        let expected = (3.0 * (3.0 - 2.0 * trim) + 3.0 * arc_per_corner) / 0.2;
        assert_relative_eq!(lap, expected, epsilon = 1e-9);
        let mid = path.pose_at(lap / 2.0);
        assert!(mid.x.is_finite() && mid.y.is_finite());
    }

    #[test]
    fn tick_integration_tracks_an_arc_corner() {
        // Integrating the odometry recursion across one quarter-circle arc
        // stays within a millimeter of the closed-form arc endpoint.
        let program = PathProgram::RoundedRectangle {
            width: 4.0,
            height: 3.0,
            corner_radius: 0.5,
            speed: 0.1,
        };
        let path = compile(&program, 600.0).unwrap();
        let p = params();
        let dt = p.dt();

        let arc_start = 3.0 / 0.1; // after the first straight
        let arc_duration = 0.5 * std::f64::consts::FRAC_PI_2 / 0.1;
        let mut pose = path.pose_at(arc_start);
        let steps = (arc_duration / dt).round() as usize;
        for k in 0..steps {
            let u = path.wheel_speeds_at(arc_start + k as f64 * dt, &p);
            pose = propagate_pose(&pose, &odometry_delta(&u, &p));
        }
        let exact = path.pose_at(arc_start + steps as f64 * dt);
        let error = ((pose.x - exact.x).powi(2) + (pose.y - exact.y).powi(2)).sqrt();
        assert!(error <= 1e-3, "arc endpoint error {error}");
    }

    #[test]
    fn open_waypoint_paths_clamp_at_the_end() {
        let program = PathProgram::Waypoints {
            points: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
            ],
            corner_radius: 0.2,
            speed: 0.5,
            closed: false,
        };
        let path = compile(&program, 600.0).unwrap();
        let end = path.pose_at(1e6);
        assert_relative_eq!(end.x, 1.0, epsilon = 1e-9);
        assert_relative_eq!(end.y, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn oversized_corner_radius_is_rejected() {
        let program = PathProgram::RoundedRectangle {
            width: 1.0,
            height: 1.0,
            corner_radius: 0.6,
            speed: 0.1,
        };
        assert!(matches!(
            compile(&program, 10.0),
            Err(SimError::InvalidScenario(_))
        ));
    }
}
