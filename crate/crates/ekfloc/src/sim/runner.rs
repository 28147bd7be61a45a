//! The per-tick run loop.
//!
//! Ground truth advances through the same tick-level kinematics the
//! estimators use, driven by the commanded wheel speeds; the estimators see
//! one shared noisy speed sample per tick plus whatever exteroceptive
//! readings the schedule produces. With all noise at zero every estimator
//! therefore reproduces the truth to machine precision, and any differences
//! between estimators are attributable to their sensor subsets alone.

use super::{EstimatorKind, MapSource, Scenario, SimError};
use crate::ekf::{EkfLocalizer, Measurements, PoseEstimate};
use crate::geometry::GlobalLine;
use crate::motion::{odometry_delta, propagate_pose, WheelSpeeds};
use crate::scanmatch::{build_global_map, extract_lines, match_lines, Scan};
use crate::sensors::{cast_scan, read_camera_orientation, read_compass, sample_wheel_speeds};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// One RNG stream per sensor, all derived from the scenario seed, so that
// reconfiguring one sensor never disturbs another's draws.
const STREAM_WHEELS: u64 = 0;
const STREAM_COMPASS: u64 = 1;
const STREAM_CAMERA: u64 = 2;
const STREAM_LRF: u64 = 3;

/// Everything recorded at one tick. Record `k` describes the state at
/// `t = k·dt`; its wheel speeds are the ones that drove the robot into
/// this tick (zero on the initial record), and its readings were taken at
/// this tick's time.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub time: f64,
    pub truth: crate::geometry::Pose,
    pub commanded: WheelSpeeds,
    pub measured: WheelSpeeds,
    pub compass: Option<f64>,
    pub camera: Option<f64>,
    /// Index into [`RunLog::scans`] when a sweep was taken this tick.
    pub scan_index: Option<usize>,
    /// One estimate per configured estimator, in scenario order.
    pub estimates: Vec<PoseEstimate>,
}

/// Numerical health of one estimator's covariance over a run.
#[derive(Debug, Clone)]
pub struct EstimatorHealth {
    /// Largest `|P - Pᵀ|` entry seen after any update.
    pub max_asymmetry: f64,
    /// Smallest covariance eigenvalue seen after any update.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of `P⁻ - P` over all corrections; `None` when
    /// the estimator never corrected.
    pub min_correction_gap: Option<f64>,
    /// Time at which the position error first exceeded the world diagonal.
    pub diverged_at: Option<f64>,
}

impl EstimatorHealth {
    fn new() -> Self {
        EstimatorHealth {
            max_asymmetry: 0.0,
            min_eigenvalue: f64::INFINITY,
            min_correction_gap: None,
            diverged_at: None,
        }
    }

    fn absorb_cov(&mut self, cov: &Matrix3<f64>) {
        let asym = (cov - cov.transpose()).abs().max();
        if asym > self.max_asymmetry {
            self.max_asymmetry = asym;
        }
        let min_eig = min_eigenvalue(cov);
        if min_eig < self.min_eigenvalue {
            self.min_eigenvalue = min_eig;
        }
    }

    fn absorb_correction(&mut self, prior: &Matrix3<f64>, posterior: &Matrix3<f64>) {
        let gap = min_eigenvalue(&(prior - posterior));
        self.min_correction_gap = Some(match self.min_correction_gap {
            Some(current) => current.min(gap),
            None => gap,
        });
    }
}

fn min_eigenvalue(m: &Matrix3<f64>) -> f64 {
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// The complete record of one simulated run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub dt: f64,
    pub estimators: Vec<EstimatorKind>,
    pub records: Vec<TickRecord>,
    /// Scans taken during the run, tagged with their tick index.
    pub scans: Vec<(usize, Scan)>,
    /// Per-estimator covariance health, parallel to `estimators`.
    pub health: Vec<EstimatorHealth>,
}

/// Simulates one scenario tick by tick.
///
/// Per tick: sample one noisy wheel-speed reading shared by every
/// estimator, advance the truth with the commanded speeds, generate the
/// scheduled sensor readings from the new truth, then let each estimator
/// predict and correct with its own sensor subset. Estimator divergence is
/// recorded and the run continues; hard numerical failures abort.
pub fn run_scenario(scenario: &Scenario) -> Result<RunLog, SimError> {
    let path = scenario.validate()?;
    let params = &scenario.params;
    let dt = params.dt();
    let ticks = (scenario.duration / dt).round() as usize;

    let mut rng_wheels = stream(scenario.seed, STREAM_WHEELS);
    let mut rng_compass = stream(scenario.seed, STREAM_COMPASS);
    let mut rng_camera = stream(scenario.seed, STREAM_CAMERA);
    let mut rng_lrf = stream(scenario.seed, STREAM_LRF);

    let mut truth = path.pose_at(0.0);
    let map: Vec<GlobalLine> = match scenario.map_source {
        MapSource::WorldWalls => scenario.world.walls.clone(),
        MapSource::FirstScan => {
            // One initialization sweep from the exactly known start pose.
            let scan = cast_scan(
                &truth,
                &scenario.world,
                &scenario.lrf,
                &scenario.noise,
                &mut rng_lrf,
            )?;
            build_global_map(&scan, &truth, &scenario.extraction)?
        }
    };

    let mut filters: Vec<EkfLocalizer> = scenario
        .estimators
        .iter()
        .map(|_| {
            EkfLocalizer::new(
                *params,
                scenario.filter_delta,
                scenario.variances,
                PoseEstimate::new(truth, scenario.initial_cov),
            )
        })
        .collect();
    let mut health: Vec<EstimatorHealth> =
        scenario.estimators.iter().map(|_| EstimatorHealth::new()).collect();
    let diagonal = scenario.world.bounds.diagonal();

    let mut records = Vec::with_capacity(ticks + 1);
    let mut scans: Vec<(usize, Scan)> = Vec::new();
    records.push(TickRecord {
        time: 0.0,
        truth,
        commanded: WheelSpeeds::default(),
        measured: WheelSpeeds::default(),
        compass: None,
        camera: None,
        scan_index: None,
        estimates: filters.iter().map(|f| f.estimate().clone()).collect(),
    });

    for k in 0..ticks {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        let commanded = path.wheel_speeds_at(t, params);
        let measured = sample_wheel_speeds(&commanded, scenario.noise.speed_delta, &mut rng_wheels);
        truth = propagate_pose(&truth, &odometry_delta(&commanded, params));

        let tick = (k + 1) as u32;
        let compass = (tick % scenario.rates.compass_every == 0).then(|| {
            read_compass(truth.theta, scenario.noise.sigma_compass, &mut rng_compass)
        });
        let camera = if tick % scenario.rates.camera_every == 0 {
            read_camera_orientation(
                &truth,
                &scenario.world,
                &scenario.panorama,
                scenario.noise.sigma_camera,
                &mut rng_camera,
            )
        } else {
            None
        };
        let (scan_index, extracted) = if tick % scenario.rates.lrf_every == 0 {
            let scan = cast_scan(
                &truth,
                &scenario.world,
                &scenario.lrf,
                &scenario.noise,
                &mut rng_lrf,
            )?;
            let extracted = extract_lines(&scan, &scenario.extraction);
            scans.push((k + 1, scan));
            (Some(scans.len() - 1), extracted)
        } else {
            (None, Vec::new())
        };

        for (i, filter) in filters.iter_mut().enumerate() {
            let kind = scenario.estimators[i];
            filter.predict(&measured);
            health[i].absorb_cov(&filter.estimate().cov);

            let mut meas = Measurements::default();
            if kind.uses_compass() {
                meas.compass = compass;
            }
            if kind.uses_camera() {
                meas.camera = camera;
            }
            if kind.uses_lrf() && !extracted.is_empty() {
                meas.lines = match_lines(&extracted, &map, filter.estimate(), &scenario.gates)
                    .pairs
                    .into_iter()
                    .map(|(e, g)| (e.local, g))
                    .collect();
            }
            if !meas.is_empty() {
                let prior_cov = filter.estimate().cov;
                filter.correct(&meas)?;
                health[i].absorb_cov(&filter.estimate().cov);
                health[i].absorb_correction(&prior_cov, &filter.estimate().cov);
            }

            if health[i].diverged_at.is_none() {
                let est = filter.estimate().mean;
                let err = (est.x - truth.x).hypot(est.y - truth.y);
                if err > diagonal {
                    health[i].diverged_at = Some(t_next);
                }
            }
        }

        records.push(TickRecord {
            time: t_next,
            truth,
            commanded,
            measured,
            compass,
            camera,
            scan_index,
            estimates: filters.iter().map(|f| f.estimate().clone()).collect(),
        });
    }

    Ok(RunLog {
        dt,
        estimators: scenario.estimators.clone(),
        records,
        scans,
        health,
    })
}

fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
