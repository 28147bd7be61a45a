//! Wheel-noise calibration against the simulator.
//!
//! Replicates the bench procedure for estimating the speed-noise constant:
//! drive straight repeatedly across the speed range and measure terminal
//! position deviations between the odometry prediction and the truth, then
//! spin in place and measure terminal heading deviations. Each motion's
//! empirical deviation variance is proportional to the noise constant, so
//! the constant is recovered as the mean ratio of empirical to predicted
//! unit variance.

use super::SimError;
use crate::geometry::Pose;
use crate::motion::{odometry_delta, propagate_pose, RobotParams, WheelSpeeds};
use crate::sensors::sample_wheel_speeds;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The motion pattern of one calibration batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMotion {
    /// Both wheels forward at the probe speed; position deviation counts.
    Straight,
    /// Wheels in opposition at the probe speed; heading deviation counts.
    Spin,
}

impl std::fmt::Display for CalibrationMotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibrationMotion::Straight => "straight",
            CalibrationMotion::Spin => "spin",
        })
    }
}

/// Calibration experiment description.
#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    /// Wheel speeds to probe (rad/s), spanning the platform's range.
    pub speeds: Vec<f64>,
    /// Runs per speed per motion; at least 10.
    pub runs_per_speed: usize,
    /// Duration of each run (s).
    pub run_duration: f64,
    pub params: RobotParams,
    /// Noise constant used to generate the simulated wheel readings.
    pub sim_delta: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            speeds: vec![2.0, 4.0, 6.0, 8.0],
            runs_per_speed: 100,
            run_duration: 10.0,
            params: RobotParams::default(),
            sim_delta: 0.01,
            seed: 1,
        }
    }
}

/// One batch's contribution to the fit.
#[derive(Debug, Clone)]
pub struct SpeedCalibration {
    pub wheel_speed: f64,
    pub motion: CalibrationMotion,
    /// Empirical variance of the terminal deviation.
    pub empirical_variance: f64,
    /// Predicted deviation variance per unit of the noise constant.
    pub unit_variance: f64,
    /// This batch's estimate of the constant.
    pub ratio: f64,
}

/// Result of a calibration experiment.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// Fitted noise constant.
    pub estimate: f64,
    pub batches: Vec<SpeedCalibration>,
}

/// Recovers the wheel-noise constant from simulated drive tests.
///
/// Requires at least 10 runs per speed and at least one nonzero probe
/// speed; otherwise no batch carries information and calibration fails.
/// Zero observed deviation is a valid outcome and yields a zero估 estimate.
pub fn calibrate_delta(cfg: &CalibrationConfig) -> Result<CalibrationReport, SimError> {
    if cfg.runs_per_speed < 10 {
        return Err(SimError::InvalidScenario(
            "calibration needs at least 10 runs per speed".into(),
        ));
    }
    if !(cfg.run_duration.is_finite() && cfg.run_duration > 0.0) {
        return Err(SimError::InvalidScenario(
            "calibration run duration must be > 0".into(),
        ));
    }
    if !(cfg.sim_delta.is_finite() && cfg.sim_delta >= 0.0) {
        return Err(SimError::InvalidScenario(
            "simulated noise constant must be >= 0".into(),
        ));
    }

    let dt = cfg.params.dt();
    let travel_per_rad = dt * cfg.params.wheel_radius();
    let ticks = (cfg.run_duration / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Vec::new();

    for &speed in &cfg.speeds {
        for motion in [CalibrationMotion::Straight, CalibrationMotion::Spin] {
            let commanded = match motion {
                CalibrationMotion::Straight => WheelSpeeds::new(speed, speed),
                CalibrationMotion::Spin => WheelSpeeds::new(-speed, speed),
            };
            // Per-tick deviation variance per unit delta, from the wheel
            // travel laws: straight runs accumulate (dt·R·omega)²/2 in
            // position, spins accumulate 2·(dt·R·omega/L)² in heading.
            let per_tick = match motion {
                CalibrationMotion::Straight => (travel_per_rad * speed).powi(2) / 2.0,
                CalibrationMotion::Spin => {
                    2.0 * (travel_per_rad * speed / cfg.params.wheel_base()).powi(2)
                }
            };
            let unit_variance = ticks as f64 * per_tick;

            let mut deviations = Vec::with_capacity(cfg.runs_per_speed);
            for _ in 0..cfg.runs_per_speed {
                let mut truth = Pose::new(0.0, 0.0, 0.0);
                let mut odo = Pose::new(0.0, 0.0, 0.0);
                let mut truth_heading = 0.0;
                let mut odo_heading = 0.0;
                for _ in 0..ticks {
                    let measured = sample_wheel_speeds(&commanded, cfg.sim_delta, &mut rng);
                    let true_delta = odometry_delta(&commanded, &cfg.params);
                    let measured_delta = odometry_delta(&measured, &cfg.params);
                    truth = propagate_pose(&truth, &true_delta);
                    odo = propagate_pose(&odo, &measured_delta);
                    truth_heading += true_delta.dtheta;
                    odo_heading += measured_delta.dtheta;
                }
                deviations.push(match motion {
                    // Along-track deviation for straight drives.
                    CalibrationMotion::Straight => odo.x - truth.x,
                    // Accumulated (unwrapped) heading deviation for spins.
                    CalibrationMotion::Spin => odo_heading - truth_heading,
                });
            }

            let n = deviations.len() as f64;
            let mean = deviations.iter().sum::<f64>() / n;
            let empirical_variance =
                deviations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
            batches.push(SpeedCalibration {
                wheel_speed: speed,
                motion,
                empirical_variance,
                unit_variance,
                ratio: if unit_variance > 0.0 {
                    empirical_variance / unit_variance
                } else {
                    0.0
                },
            });
        }
    }

    let informative: Vec<&SpeedCalibration> =
        batches.iter().filter(|b| b.unit_variance > 0.0).collect();
    if informative.is_empty() {
        return Err(SimError::CalibrationFailed);
    }
    let estimate = informative.iter().map(|b| b.ratio).sum::<f64>() / informative.len() as f64;
    Ok(CalibrationReport { estimate, batches })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_the_generating_constant() {
        let report = calibrate_delta(&CalibrationConfig::default()).unwrap();
        assert!(
            (0.005..=0.02).contains(&report.estimate),
            "estimate {} not within a factor of two of 0.01",
            report.estimate
        );
        assert_eq!(report.batches.len(), 8);
    }

    #[test]
    fn noiseless_wheels_calibrate_to_zero() {
        let report = calibrate_delta(&CalibrationConfig {
            sim_delta: 0.0,
            ..CalibrationConfig::default()
        })
        .unwrap();
        assert!(report.estimate <= 1e-6, "estimate {}", report.estimate);
    }

    #[test]
    fn zero_speeds_cannot_calibrate() {
        assert_eq!(
            calibrate_delta(&CalibrationConfig {
                speeds: vec![0.0],
                ..CalibrationConfig::default()
            }),
            Err(SimError::CalibrationFailed)
        );
    }

    #[test]
    fn too_few_runs_are_rejected() {
        assert!(matches!(
            calibrate_delta(&CalibrationConfig {
                runs_per_speed: 5,
                ..CalibrationConfig::default()
            }),
            Err(SimError::InvalidScenario(_))
        ));
    }
}
