//! Per-run error metrics and the Monte Carlo consistency interval.

use super::runner::RunLog;
use crate::geometry::angle_diff;
use nalgebra::Vector3;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Error series and scalar summaries for one estimator over one run.
#[derive(Debug, Clone)]
pub struct EstimatorMetrics {
    pub name: String,
    /// Per-tick estimated-minus-true position, x component (m).
    pub deviation_x: Vec<f64>,
    /// Per-tick estimated-minus-true position, y component (m).
    pub deviation_y: Vec<f64>,
    /// Root-mean-square position error over the run (m).
    pub rmse_position: f64,
    /// Position error at the final tick (m).
    pub final_position_error: f64,
    /// Wrapped heading error at the final tick (rad).
    pub final_heading_error: f64,
    /// Per-tick normalized estimation error squared, where the covariance
    /// is positive definite.
    pub nees: Vec<Option<f64>>,
    /// Mean of the available NEES samples.
    pub nees_mean: Option<f64>,
    /// NEES at the final tick, if available.
    pub final_nees: Option<f64>,
}

/// Metrics for every estimator of one run, in run order.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub per_estimator: Vec<EstimatorMetrics>,
}

/// Computes deviation series, RMSE, final errors and NEES from a run log.
pub fn compute_metrics(log: &RunLog) -> RunMetrics {
    let per_estimator = log
        .estimators
        .iter()
        .enumerate()
        .map(|(idx, kind)| {
            let mut deviation_x = Vec::with_capacity(log.records.len());
            let mut deviation_y = Vec::with_capacity(log.records.len());
            let mut nees = Vec::with_capacity(log.records.len());
            let mut sq_sum = 0.0;
            for record in &log.records {
                let est = &record.estimates[idx];
                let dx = est.mean.x - record.truth.x;
                let dy = est.mean.y - record.truth.y;
                deviation_x.push(dx);
                deviation_y.push(dy);
                sq_sum += dx * dx + dy * dy;
                nees.push(nees_sample(
                    dx,
                    dy,
                    angle_diff(record.truth.theta, est.mean.theta),
                    &est.cov,
                ));
            }
            let n = log.records.len() as f64;
            let last = log.records.last().expect("run log has records");
            let est = &last.estimates[idx];
            let available: Vec<f64> = nees.iter().flatten().copied().collect();
            EstimatorMetrics {
                name: kind.name().to_string(),
                rmse_position: (sq_sum / n).sqrt(),
                final_position_error: (est.mean.x - last.truth.x)
                    .hypot(est.mean.y - last.truth.y),
                final_heading_error: angle_diff(est.mean.theta, last.truth.theta),
                nees_mean: (!available.is_empty())
                    .then(|| available.iter().sum::<f64>() / available.len() as f64),
                final_nees: *nees.last().expect("run log has records"),
                deviation_x,
                deviation_y,
                nees,
            }
        })
        .collect();
    RunMetrics { per_estimator }
}

fn nees_sample(dx: f64, dy: f64, dtheta: f64, cov: &nalgebra::Matrix3<f64>) -> Option<f64> {
    let chol = cov.cholesky()?;
    let err = Vector3::new(dx, dy, dtheta);
    Some(err.dot(&chol.solve(&err)))
}

/// Two-sided confidence interval for the mean of `runs` independent
/// chi-square samples with `dof` degrees of freedom each: a consistent
/// filter's average NEES falls inside it with the given probability.
pub fn nees_interval(runs: usize, dof: usize, confidence: f64) -> (f64, f64) {
    assert!(runs > 0 && dof > 0 && (0.0..1.0).contains(&confidence));
    let total = (runs * dof) as f64;
    let chi = ChiSquared::new(total).expect("positive degrees of freedom");
    let alpha = 1.0 - confidence;
    (
        chi.inverse_cdf(alpha / 2.0) / runs as f64,
        chi.inverse_cdf(1.0 - alpha / 2.0) / runs as f64,
    )
}
