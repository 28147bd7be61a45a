//! Scenario orchestration: ground-truth trajectories, the per-tick run
//! loop, Monte Carlo metrics, and wheel-noise calibration.

mod calibrate;
mod metrics;
mod path;
mod runner;

pub use calibrate::{calibrate_delta, CalibrationConfig, CalibrationReport, SpeedCalibration};
pub use metrics::{compute_metrics, nees_interval, EstimatorMetrics, RunMetrics};
pub use path::{compile, CompiledPath, PathProgram};
pub use runner::{run_scenario, EstimatorHealth, RunLog, TickRecord};

use crate::ekf::{EkfError, SensorVariances};
use crate::geometry::Pose;
use crate::motion::{MotionError, NoiseModel, RobotParams, WheelSpeeds};
use crate::scanmatch::{ExtractionConfig, MatchGates, ScanmatchError};
use crate::sensors::{LrfModel, PanoramaModel, SensorError, SensorNoise, World};
use nalgebra::{Matrix3, Point2};
use thiserror::Error;

/// Minimum clearance the planned path must keep from the world bounds (m).
pub const PATH_CLEARANCE: f64 = 0.2;

/// Errors from scenario validation and execution.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    /// The scenario violates one of its structural invariants.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    /// A trajectory query fell outside the run window.
    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    /// Calibration had no informative runs to fit against.
    #[error("calibration failed: no informative runs (all predicted variances are zero)")]
    CalibrationFailed,
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Ekf(#[from] EkfError),
    #[error(transparent)]
    Scanmatch(#[from] ScanmatchError),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Which corrections an estimator consumes on top of odometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// Dead reckoning: prediction only.
    Odometry,
    /// Odometry corrected by the compass.
    EkfCompass,
    /// Odometry corrected by matched laser lines.
    EkfLrf,
    /// Odometry corrected by the camera orientation.
    EkfCamera,
    /// Odometry corrected by all three sensors.
    EkfAll,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Odometry,
        EstimatorKind::EkfCompass,
        EstimatorKind::EkfLrf,
        EstimatorKind::EkfCamera,
        EstimatorKind::EkfAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Odometry => "odometry",
            EstimatorKind::EkfCompass => "ekf-compass",
            EstimatorKind::EkfLrf => "ekf-lrf",
            EstimatorKind::EkfCamera => "ekf-camera",
            EstimatorKind::EkfAll => "ekf-all",
        }
    }

    pub fn uses_compass(&self) -> bool {
        matches!(self, EstimatorKind::EkfCompass | EstimatorKind::EkfAll)
    }

    pub fn uses_lrf(&self) -> bool {
        matches!(self, EstimatorKind::EkfLrf | EstimatorKind::EkfAll)
    }

    pub fn uses_camera(&self) -> bool {
        matches!(self, EstimatorKind::EkfCamera | EstimatorKind::EkfAll)
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown estimator {s:?}; expected one of {}",
                    EstimatorKind::ALL.map(|k| k.name()).join(", ")
                )
            })
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the line-matching map comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapSource {
    /// Use the world's wall segments directly.
    #[default]
    WorldWalls,
    /// Build the map from one scan taken at the exactly known start pose;
    /// it stays fixed afterwards.
    FirstScan,
}

/// How often each exteroceptive sensor produces a reading, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorRates {
    pub compass_every: u32,
    pub camera_every: u32,
    pub lrf_every: u32,
}

impl Default for SensorRates {
    fn default() -> Self {
        SensorRates {
            compass_every: 1,
            camera_every: 5,
            lrf_every: 10,
        }
    }
}

/// A complete, self-contained experiment description.
///
/// Identical scenarios (including the seed) reproduce identical runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: World,
    pub program: PathProgram,
    pub params: RobotParams,
    /// Simulation-side noise levels.
    pub noise: SensorNoise,
    /// Wheel-noise constant assumed by the filters (usually equal to the
    /// simulated `noise.speed_delta`).
    pub filter_delta: NoiseModel,
    /// Measurement variances assumed by the filters.
    pub variances: SensorVariances,
    pub extraction: ExtractionConfig,
    pub gates: MatchGates,
    pub lrf: LrfModel,
    pub panorama: PanoramaModel,
    pub rates: SensorRates,
    pub estimators: Vec<EstimatorKind>,
    pub duration: f64,
    pub seed: u64,
    pub map_source: MapSource,
    /// Initial covariance of every estimator; zero for a known start.
    pub initial_cov: Matrix3<f64>,
}

impl Default for Scenario {
    /// The bundled reference experiment: the rounded 4 m × 3 m rectangle
    /// inside a 6 m × 5 m room, 60 s at 0.22 m/s, all five estimators.
    fn default() -> Self {
        Scenario {
            world: World::rectangular_room(6.0, 5.0, Point2::new(2.5, 2.0))
                .expect("reference world is valid"),
            program: PathProgram::RoundedRectangle {
                width: 4.0,
                height: 3.0,
                corner_radius: 0.5,
                speed: 0.22,
            },
            params: RobotParams::default(),
            noise: SensorNoise::default(),
            filter_delta: NoiseModel::default(),
            variances: SensorVariances::default(),
            extraction: ExtractionConfig::default(),
            gates: MatchGates::default(),
            lrf: LrfModel::default(),
            panorama: PanoramaModel::default(),
            rates: SensorRates::default(),
            estimators: EstimatorKind::ALL.to_vec(),
            duration: 60.0,
            seed: 1,
            map_source: MapSource::WorldWalls,
            initial_cov: Matrix3::zeros(),
        }
    }
}

impl Scenario {
    /// Checks the structural invariants: positive duration, at least one
    /// estimator, sane rates, and a path that stays inside the world with
    /// the required clearance.
    pub fn validate(&self) -> Result<CompiledPath, SimError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::InvalidScenario("duration must be > 0".into()));
        }
        if self.estimators.is_empty() {
            return Err(SimError::InvalidScenario("no estimators enabled".into()));
        }
        if self.rates.compass_every == 0 || self.rates.camera_every == 0 || self.rates.lrf_every == 0
        {
            return Err(SimError::InvalidScenario(
                "sensor rates must be at least one tick".into(),
            ));
        }
        let path = compile(&self.program, self.duration)?;
        let inner = self.world.bounds.shrunk(PATH_CLEARANCE);
        let probe = (self.duration / 0.05).ceil() as usize;
        for k in 0..=probe {
            let t = self.duration * k as f64 / probe as f64;
            let pose = path.pose_at(t);
            if !inner.contains(&Point2::new(pose.x, pose.y)) {
                return Err(SimError::InvalidScenario(format!(
                    "path leaves the {PATH_CLEARANCE} m clearance at t = {t:.2} s ({:.2}, {:.2})",
                    pose.x, pose.y
                )));
            }
        }
        Ok(path)
    }
}

/// Ground truth at time `t`: the exact pose on the path and the wheel
/// speeds commanding it.
pub fn generate_truth(scenario: &Scenario, t: f64) -> Result<(Pose, WheelSpeeds), SimError> {
    if !(0.0..=scenario.duration).contains(&t) {
        return Err(SimError::TimeOutOfRange {
            t,
            duration: scenario.duration,
        });
    }
    let path = compile(&scenario.program, scenario.duration)?;
    Ok((
        path.pose_at(t),
        path.wheel_speeds_at(t, &scenario.params),
    ))
}
