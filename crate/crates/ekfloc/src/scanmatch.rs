//! Line-feature extraction from range scans and association with the map.
//!
//! Beams are converted to robot-frame points, segmented by recursive
//! splitting at the point farthest from the chord, fitted in normal form by
//! weighted total least squares, and collinear neighbours are merged back.
//! Extracted lines are then greedily associated one-to-one with the map
//! lines whose robot-frame prediction falls inside the gates.

use crate::ekf::PoseEstimate;
use crate::geometry::{
    self, angle_diff, line_through_points, GeometryError, GlobalLine, LocalLine, Pose,
};
use nalgebra::{Matrix2, Point2};
use thiserror::Error;

/// Errors from scan handling.
#[derive(Debug, Error, PartialEq)]
pub enum ScanmatchError {
    /// The scan's beam count does not cover 0°–180° at its resolution.
    #[error("invalid scan: {0}")]
    BadScan(&'static str),
    /// A geometric construction failed.
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One sweep of the range finder.
///
/// Beam `i` looks along scan angle `i · angular_resolution_deg`, measured
/// over the half-plane in front of the robot: scan angle 90° is straight
/// ahead, 0° is to the robot's right, 180° to its left. Beams that saw
/// nothing carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    /// Measured distances (m); `None` marks a no-return beam.
    pub ranges: Vec<Option<f64>>,
    /// Angular spacing between beams (deg).
    pub angular_resolution_deg: f64,
    /// Smallest measurable distance (m).
    pub min_range: f64,
    /// Largest measurable distance (m).
    pub max_range: f64,
    /// Estimated pose at scan time, carried for logging and replay.
    pub pose_hint: PoseEstimate,
}

impl Scan {
    /// Builds a scan, checking that the beams span exactly 0°–180°.
    pub fn new(
        ranges: Vec<Option<f64>>,
        angular_resolution_deg: f64,
        min_range: f64,
        max_range: f64,
        pose_hint: PoseEstimate,
    ) -> Result<Self, ScanmatchError> {
        if ranges.len() < 2 {
            return Err(ScanmatchError::BadScan("fewer than two beams"));
        }
        let span = (ranges.len() - 1) as f64 * angular_resolution_deg;
        if !(span - 180.0).abs().le(&1e-9) {
            return Err(ScanmatchError::BadScan("beams do not span 180 degrees"));
        }
        if !(min_range >= 0.0 && max_range > min_range) {
            return Err(ScanmatchError::BadScan("bad range limits"));
        }
        Ok(Scan {
            ranges,
            angular_resolution_deg,
            min_range,
            max_range,
            pose_hint,
        })
    }

    /// Number of beams.
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Scan angle of beam `i` (deg), counted from the robot's right side.
    pub fn scan_angle_deg(&self, i: usize) -> f64 {
        i as f64 * self.angular_resolution_deg
    }

    /// Robot-frame bearing of beam `i` (rad): scan angle 90° maps to 0.
    pub fn bearing(&self, i: usize) -> f64 {
        (self.scan_angle_deg(i) - 90.0).to_radians()
    }

    /// Robot-frame Cartesian point of beam `i`, if it returned in range.
    pub fn point(&self, i: usize) -> Option<Point2<f64>> {
        let d = self.ranges[i]?;
        if !(self.min_range..=self.max_range).contains(&d) {
            return None;
        }
        let (sin_b, cos_b) = self.bearing(i).sin_cos();
        Some(Point2::new(d * cos_b, d * sin_b))
    }
}

/// A line segment extracted from one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedLine {
    /// Fitted normal form with parameter covariance.
    pub local: LocalLine,
    /// First and last contributing beam index.
    pub support: (usize, usize),
    /// Root-mean-square orthogonal residual of the fit (m).
    pub rms_residual: f64,
}

/// Extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Split a segment while some point lies farther than this from the
    /// chord (m).
    pub split_threshold: f64,
    /// Minimum number of beams a reported line must rest on.
    pub min_points: usize,
    /// Merge adjacent segments whose normal directions differ by at most
    /// this (rad)...
    pub merge_psi: f64,
    /// ...and whose normal distances differ by at most this (m).
    pub merge_r: f64,
    /// Per-beam range variance used for fit weights and the reported
    /// parameter covariance (m²).
    pub var_r: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            split_threshold: 0.15,
            min_points: 8,
            merge_psi: 2.0_f64.to_radians(),
            merge_r: 0.05,
            var_r: 0.03 * 0.03,
        }
    }
}

/// Extracted lines associated to map lines, one-to-one.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    /// Accepted pairs, ordered by map-line index.
    pub pairs: Vec<(ExtractedLine, GlobalLine)>,
    /// Extracted lines that failed every gate.
    pub unmatched: Vec<ExtractedLine>,
}

/// Association gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchGates {
    /// Largest accepted |Δr| (m) in scalar gating.
    pub gate_r: f64,
    /// Largest accepted |Δpsi| (rad) in scalar gating.
    pub gate_psi: f64,
    /// When set, gate on the Mahalanobis distance of the (Δr, Δpsi)
    /// innovation instead, using the prior covariance plus the extracted
    /// line's fit covariance; the value is the squared-distance threshold.
    pub mahalanobis: Option<f64>,
}

impl Default for MatchGates {
    fn default() -> Self {
        MatchGates {
            gate_r: 0.3,
            gate_psi: 0.15,
            mahalanobis: None,
        }
    }
}

struct NormalFit {
    r: f64,
    psi: f64,
    cov: Matrix2<f64>,
    rms: f64,
}

/// Weighted total-least-squares fit of `x·cos(psi) + y·sin(psi) = r` with
/// uniform beam weights `1/var_r`; the covariance is the inverse of the
/// fit's information matrix.
fn fit_normal_form(points: &[(usize, Point2<f64>)], var_r: f64) -> Option<NormalFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let mean_x = points.iter().map(|(_, p)| p.x).sum::<f64>() * inv_n;
    let mean_y = points.iter().map(|(_, p)| p.y).sum::<f64>() * inv_n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (_, p) in points {
        let dx = p.x - mean_x;
        let dy = p.y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let mut psi = 0.5 * (-2.0 * sxy).atan2(syy - sxx);
    let mut r = mean_x * psi.cos() + mean_y * psi.sin();
    if r < 0.0 {
        r = -r;
        psi = geometry::wrap(psi + std::f64::consts::PI);
    } else {
        psi = geometry::wrap(psi);
    }

    let (sin_psi, cos_psi) = psi.sin_cos();
    let weight = 1.0 / var_r;
    let (mut sum_w, mut sum_wu, mut sum_wuu, mut sum_sq) = (0.0, 0.0, 0.0, 0.0);
    for (_, p) in points {
        let along = -p.x * sin_psi + p.y * cos_psi;
        let residual = p.x * cos_psi + p.y * sin_psi - r;
        sum_w += weight;
        sum_wu += weight * along;
        sum_wuu += weight * along * along;
        sum_sq += residual * residual;
    }
    let det = sum_w * sum_wuu - sum_wu * sum_wu;
    if det <= 1e-12 {
        return None; // no spread along the line: parameters not identifiable
    }
    let cov = Matrix2::new(sum_wuu / det, sum_wu / det, sum_wu / det, sum_w / det);
    Some(NormalFit {
        r,
        psi,
        cov,
        rms: (sum_sq * inv_n).sqrt(),
    })
}

fn point_to_chord_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let len = ex.hypot(ey);
    if len < 1e-12 {
        return (p.x - a.x).hypot(p.y - a.y);
    }
    ((p.x - a.x) * ey - (p.y - a.y) * ex).abs() / len
}

/// Recursively splits `points[lo..=hi]` at the sample farthest from the
/// chord; emits inclusive index ranges. Split halves share the split point.
fn split_recursive(
    points: &[(usize, Point2<f64>)],
    lo: usize,
    hi: usize,
    threshold: f64,
    out: &mut Vec<(usize, usize)>,
) {
    if hi - lo >= 2 {
        let a = &points[lo].1;
        let b = &points[hi].1;
        let mut worst = lo;
        let mut worst_dist = -1.0;
        for (k, point) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = point_to_chord_distance(&point.1, a, b);
            if d > worst_dist {
                worst_dist = d;
                worst = k;
            }
        }
        if worst_dist > threshold {
            split_recursive(points, lo, worst, threshold, out);
            split_recursive(points, worst, hi, threshold, out);
            return;
        }
    }
    out.push((lo, hi));
}

/// Extracts line segments from one scan.
///
/// Runs of consecutive valid beams are segmented by split-and-merge and
/// fitted in normal form; segments resting on fewer than
/// `cfg.min_points` beams are dropped, as are fits whose residual exceeds
/// the split threshold. Too little data yields an empty list, not an error.
pub fn extract_lines(scan: &Scan, cfg: &ExtractionConfig) -> Vec<ExtractedLine> {
    let mut lines = Vec::new();
    let mut run: Vec<(usize, Point2<f64>)> = Vec::new();
    let flush = |run: &mut Vec<(usize, Point2<f64>)>, lines: &mut Vec<ExtractedLine>| {
        if run.len() >= cfg.min_points {
            extract_from_run(run, cfg, lines);
        }
        run.clear();
    };
    for i in 0..scan.len() {
        match scan.point(i) {
            Some(p) => run.push((i, p)),
            None => flush(&mut run, &mut lines),
        }
    }
    flush(&mut run, &mut lines);
    lines
}

fn extract_from_run(
    run: &[(usize, Point2<f64>)],
    cfg: &ExtractionConfig,
    lines: &mut Vec<ExtractedLine>,
) {
    let mut ranges = Vec::new();
    split_recursive(run, 0, run.len() - 1, cfg.split_threshold, &mut ranges);

    // Fit every segment that is large enough on its own.
    let mut fitted: Vec<((usize, usize), NormalFit)> = ranges
        .into_iter()
        .filter(|&(lo, hi)| hi - lo + 1 >= cfg.min_points)
        .filter_map(|(lo, hi)| fit_normal_form(&run[lo..=hi], cfg.var_r).map(|f| ((lo, hi), f)))
        .collect();

    // Merge neighbours that describe the same carrier line; repeat until
    // stable since a merge can bring the next neighbour within range.
    let mut i = 0;
    while i + 1 < fitted.len() {
        let (ref span_a, ref fit_a) = fitted[i];
        let (ref span_b, ref fit_b) = fitted[i + 1];
        let close = (fit_a.r - fit_b.r).abs() <= cfg.merge_r
            && angle_diff(fit_a.psi, fit_b.psi).abs() <= cfg.merge_psi;
        if close {
            let joined = (span_a.0, span_b.1);
            if let Some(fit) = fit_normal_form(&run[joined.0..=joined.1], cfg.var_r) {
                fitted[i] = (joined, fit);
                fitted.remove(i + 1);
                i = i.saturating_sub(1);
                continue;
            }
        }
        i += 1;
    }

    for ((lo, hi), fit) in fitted {
        if fit.rms > cfg.split_threshold {
            continue;
        }
        lines.push(ExtractedLine {
            local: LocalLine::new(fit.r, fit.psi, fit.cov),
            support: (run[lo].0, run[hi].0),
            rms_residual: fit.rms,
        });
    }
}

/// Associates extracted lines with map lines, one-to-one.
///
/// Every map line is predicted into the robot frame at the prior mean;
/// candidate pairs inside the gates are then assigned greedily in order of
/// increasing gate distance, ties broken by lower map-line index.
pub fn match_lines(
    extracted: &[ExtractedLine],
    map: &[GlobalLine],
    prior: &PoseEstimate,
    gates: &MatchGates,
) -> MatchSet {
    let projections: Vec<_> = map
        .iter()
        .map(|line| geometry::global_line_to_local(&prior.mean, line))
        .collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ei, e) in extracted.iter().enumerate() {
        for (mi, proj) in projections.iter().enumerate() {
            let dr = e.local.r - proj.r;
            let dpsi = angle_diff(e.local.psi, proj.psi);
            let distance = match gates.mahalanobis {
                None => {
                    let d = (dr.abs() / gates.gate_r).max(dpsi.abs() / gates.gate_psi);
                    if d > 1.0 {
                        continue;
                    }
                    d
                }
                Some(threshold) => {
                    let sign = if proj.c >= 0.0 { 1.0 } else { -1.0 };
                    let h = nalgebra::Matrix2x3::new(
                        -sign * map[mi].beta.cos(),
                        -sign * map[mi].beta.sin(),
                        0.0,
                        0.0,
                        0.0,
                        -1.0,
                    );
                    let s = h * prior.cov * h.transpose() + e.local.cov;
                    let Some(inv) = s.try_inverse() else { continue };
                    let nu = nalgebra::Vector2::new(dr, dpsi);
                    let d2 = (nu.transpose() * inv * nu)[(0, 0)];
                    if d2 > threshold {
                        continue;
                    }
                    d2
                }
            };
            candidates.push((distance, mi, ei));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("gate distances are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut map_taken = vec![false; map.len()];
    let mut ext_taken = vec![false; extracted.len()];
    let mut assigned: Vec<(usize, usize)> = Vec::new();
    for (_, mi, ei) in candidates {
        if !map_taken[mi] && !ext_taken[ei] {
            map_taken[mi] = true;
            ext_taken[ei] = true;
            assigned.push((mi, ei));
        }
    }
    assigned.sort_by_key(|&(mi, _)| mi);

    MatchSet {
        pairs: assigned
            .into_iter()
            .map(|(mi, ei)| (extracted[ei].clone(), map[mi].clone()))
            .collect(),
        unmatched: extracted
            .iter()
            .enumerate()
            .filter(|(ei, _)| !ext_taken[*ei])
            .map(|(_, e)| e.clone())
            .collect(),
    }
}

/// Builds world-frame map lines from the first scan, taken at an exactly
/// known pose. Each extracted line is lifted to the world frame; its
/// endpoints are the outermost supporting beams projected onto the carrier.
pub fn build_global_map(
    scan: &Scan,
    known_pose: &Pose,
    cfg: &ExtractionConfig,
) -> Result<Vec<GlobalLine>, ScanmatchError> {
    let mut map = Vec::new();
    for line in extract_lines(scan, cfg) {
        let (first, last) = line.support;
        let (Some(p_first), Some(p_last)) = (scan.point(first), scan.point(last)) else {
            continue;
        };
        let (sin_psi, cos_psi) = line.local.psi.sin_cos();
        let project = |p: Point2<f64>| {
            let offset = p.x * cos_psi + p.y * sin_psi - line.local.r;
            known_pose
                .robot_to_world(&Point2::new(p.x - offset * cos_psi, p.y - offset * sin_psi))
        };
        map.push(line_through_points(project(p_first), project(p_last))?);
    }
    Ok(map)
}
