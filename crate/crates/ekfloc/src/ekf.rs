//! The predict/correct cycle: state and covariance propagation, stacked
//! measurement assembly across all sensors, Kalman gain, and update.
//!
//! One correction consumes everything observed in a tick as a single
//! stacked batch: two rows `(r, psi)` per matched line feature, then one
//! row each for the compass and camera orientation readings. Angular rows
//! are flagged so their innovations get wrapped before the gain is applied.

use crate::geometry::{angle_diff, GlobalLine, LocalLine, Pose};
use crate::motion::{
    build_q, jacobian_a, jacobian_w, odometry_delta, propagate_pose, NoiseModel, RobotParams,
    WheelSpeeds,
};
use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

/// Condition-number limit above which an innovation covariance is treated
/// as numerically singular.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Errors from the correction step.
#[derive(Debug, Error, PartialEq)]
pub enum EkfError {
    /// A correction was requested with no measurements at all.
    #[error("nothing to correct: measurement set is empty")]
    NothingToCorrect,
    /// The innovation covariance cannot be inverted reliably.
    #[error("ill-conditioned innovation covariance (condition number {cond:.3e})")]
    IllConditioned {
        /// Estimated condition number of `H·P·Hᵀ + R`.
        cond: f64,
    },
    /// The bundle's row counts or noise entries are inconsistent.
    #[error("malformed measurement bundle: {0}")]
    MalformedBundle(&'static str),
}

/// A pose estimate with its 3×3 covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    /// Estimated pose.
    pub mean: Pose,
    /// Covariance of `(x, y, theta)`, kept symmetric by the filter.
    pub cov: Matrix3<f64>,
}

impl PoseEstimate {
    pub fn new(mean: Pose, cov: Matrix3<f64>) -> Self {
        PoseEstimate { mean, cov }
    }

    /// An estimate with zero uncertainty, for exactly known starts.
    pub fn exact(mean: Pose) -> Self {
        PoseEstimate {
            mean,
            cov: Matrix3::zeros(),
        }
    }
}

/// Measurement-noise variances filled into the diagonal of `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorVariances {
    /// Variance of a matched line's normal distance (m²).
    pub var_r: f64,
    /// Variance of a matched line's normal direction (rad²).
    pub var_psi: f64,
    /// Variance of the compass heading (rad²).
    pub var_phi: f64,
    /// Variance of the camera orientation (rad²).
    pub var_gamma: f64,
}

/// The compass datasheet quotes a 0.1° heading accuracy next to a noise
/// variance figure of 0.01 with no unit. Read literally (as used in the
/// original tuning of the reference platform) that is this raw value; the
/// crate default converts 0.1° to radians instead.
pub const RAW_DATASHEET_COMPASS_VARIANCE: f64 = 0.01;

impl SensorVariances {
    /// All variances must be strictly positive and finite.
    pub fn new(var_r: f64, var_psi: f64, var_phi: f64, var_gamma: f64) -> Result<Self, EkfError> {
        for v in [var_r, var_psi, var_phi, var_gamma] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EkfError::MalformedBundle("non-positive sensor variance"));
            }
        }
        Ok(SensorVariances {
            var_r,
            var_psi,
            var_phi,
            var_gamma,
        })
    }
}

impl Default for SensorVariances {
    /// Datasheet-derived defaults: 30 mm ranging and 0.25° deflection
    /// accuracy for the laser, 0.1° ≈ 3.0e-6 rad² for the compass, and one
    /// 0.25° panorama half-pixel for the camera.
    fn default() -> Self {
        let quarter_deg = 0.25_f64.to_radians();
        SensorVariances {
            var_r: 0.03 * 0.03,
            var_psi: quarter_deg * quarter_deg,
            var_phi: 3.0e-6,
            var_gamma: quarter_deg * quarter_deg,
        }
    }
}

/// One tick's worth of measurements, already associated with the map.
#[derive(Debug, Clone, Default)]
pub struct Measurements {
    /// Observed local lines paired with the map lines they matched.
    pub lines: Vec<(LocalLine, GlobalLine)>,
    /// Compass heading reading (rad), if taken this tick.
    pub compass: Option<f64>,
    /// Camera orientation reading (rad), if taken this tick.
    pub camera: Option<f64>,
}

impl Measurements {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty() && self.compass.is_none() && self.camera.is_none()
    }
}

/// A stacked measurement for one correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    /// Observed values `[r_1, psi_1, …, r_N, psi_N, phi, gamma]` (entries
    /// present as configured).
    pub z: DVector<f64>,
    /// Predicted values at the prior mean.
    pub z_hat: DVector<f64>,
    /// Jacobian of the prediction function, one row per measurement.
    pub h_jac: DMatrix<f64>,
    /// Diagonal of the measurement-noise covariance, entries > 0.
    pub r_diag: DVector<f64>,
    /// True on rows holding angles, whose innovations must be wrapped.
    pub angle_mask: Vec<bool>,
}

impl MeasurementBundle {
    /// Number of measurement rows.
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn validate(&self) -> Result<(), EkfError> {
        let n = self.z.len();
        if n == 0 {
            return Err(EkfError::NothingToCorrect);
        }
        if self.z_hat.len() != n
            || self.h_jac.nrows() != n
            || self.h_jac.ncols() != 3
            || self.r_diag.len() != n
            || self.angle_mask.len() != n
        {
            return Err(EkfError::MalformedBundle("row counts disagree"));
        }
        if self.r_diag.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(EkfError::MalformedBundle("non-positive noise entry"));
        }
        Ok(())
    }
}

fn symmetrize(m: Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (m + m.transpose())
}

/// Time update: propagates the mean through the motion model and the
/// covariance through its Jacobians, `P ← A·P·Aᵀ + W·Q·Wᵀ`.
pub fn predict(
    est: &PoseEstimate,
    u: &WheelSpeeds,
    p: &RobotParams,
    nm: &NoiseModel,
) -> PoseEstimate {
    let d = odometry_delta(u, p);
    let a = jacobian_a(&est.mean, &d);
    let w = jacobian_w(&est.mean, u, p);
    let q = build_q(u, nm);
    PoseEstimate {
        mean: propagate_pose(&est.mean, &d),
        cov: symmetrize(a * est.cov * a.transpose() + w * q * w.transpose()),
    }
}

/// Stacks every available measurement into one bundle evaluated at the
/// prior mean.
///
/// Each matched line contributes a `(r, psi)` row pair predicted through
/// the world→robot line transform; compass and camera readings contribute
/// one direct heading row each. Returns an error when nothing was measured.
pub fn assemble_measurement(
    prior: &PoseEstimate,
    lines: &[(LocalLine, GlobalLine)],
    compass: Option<f64>,
    camera: Option<f64>,
    sv: &SensorVariances,
) -> Result<MeasurementBundle, EkfError> {
    let n = 2 * lines.len() + usize::from(compass.is_some()) + usize::from(camera.is_some());
    if n == 0 {
        return Err(EkfError::NothingToCorrect);
    }

    let mut z = DVector::zeros(n);
    let mut z_hat = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, 3);
    let mut r_diag = DVector::zeros(n);
    let mut angle_mask = vec![false; n];

    let mut row = 0;
    for (observed, map_line) in lines {
        let projected = crate::geometry::global_line_to_local(&prior.mean, map_line);
        let sign = if projected.c >= 0.0 { 1.0 } else { -1.0 };

        z[row] = observed.r;
        z_hat[row] = projected.r;
        h[(row, 0)] = -sign * map_line.beta.cos();
        h[(row, 1)] = -sign * map_line.beta.sin();
        r_diag[row] = sv.var_r;
        row += 1;

        z[row] = observed.psi;
        z_hat[row] = projected.psi;
        h[(row, 2)] = -1.0;
        r_diag[row] = sv.var_psi;
        angle_mask[row] = true;
        row += 1;
    }
    for (reading, var) in [(compass, sv.var_phi), (camera, sv.var_gamma)] {
        if let Some(value) = reading {
            z[row] = value;
            z_hat[row] = prior.mean.theta;
            h[(row, 2)] = 1.0;
            r_diag[row] = var;
            angle_mask[row] = true;
            row += 1;
        }
    }

    Ok(MeasurementBundle {
        z,
        z_hat,
        h_jac: h,
        r_diag,
        angle_mask,
    })
}

/// Measurement update: gains the wrapped innovation into the state and
/// contracts the covariance, `P ← (I - K·H)·P⁻`, re-symmetrized.
pub fn correct(prior: &PoseEstimate, mb: &MeasurementBundle) -> Result<PoseEstimate, EkfError> {
    mb.validate()?;
    let n = mb.len();

    let mut innovation = DVector::zeros(n);
    for i in 0..n {
        innovation[i] = if mb.angle_mask[i] {
            angle_diff(mb.z[i], mb.z_hat[i])
        } else {
            mb.z[i] - mb.z_hat[i]
        };
    }

    let mut s = &mb.h_jac * prior.cov * mb.h_jac.transpose();
    for i in 0..n {
        s[(i, i)] += mb.r_diag[i];
    }
    let eig = s.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if min_eig <= 0.0 {
        f64::INFINITY
    } else {
        max_eig / min_eig
    };
    if !cond.is_finite() || cond > MAX_INNOVATION_CONDITION {
        return Err(EkfError::IllConditioned { cond });
    }
    let inv_eigenvalues = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&v| 1.0 / v));
    let s_inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_eigenvalues) * eig.eigenvectors.transpose();

    let gain = prior.cov * mb.h_jac.transpose() * s_inv;
    let update = &gain * innovation;
    let mean = Pose::new(
        prior.mean.x + update[0],
        prior.mean.y + update[1],
        prior.mean.theta + update[2],
    );
    let cov = symmetrize((Matrix3::identity() - gain * &mb.h_jac) * prior.cov);
    Ok(PoseEstimate { mean, cov })
}

/// One pose filter instance. It owns the running estimate; callers must
/// serialize steps on a given instance, while separate instances are
/// independent and may live on different threads.
#[derive(Debug, Clone)]
pub struct EkfLocalizer {
    params: RobotParams,
    noise: NoiseModel,
    variances: SensorVariances,
    estimate: PoseEstimate,
}

impl EkfLocalizer {
    pub fn new(
        params: RobotParams,
        noise: NoiseModel,
        variances: SensorVariances,
        initial: PoseEstimate,
    ) -> Self {
        EkfLocalizer {
            params,
            noise,
            variances,
            estimate: initial,
        }
    }

    /// The current estimate.
    pub fn estimate(&self) -> &PoseEstimate {
        &self.estimate
    }

    /// Advances the estimate by one tick of wheel speeds.
    pub fn predict(&mut self, u: &WheelSpeeds) {
        self.estimate = predict(&self.estimate, u, &self.params, &self.noise);
    }

    /// Applies one stacked correction. An empty measurement set is a no-op:
    /// with nothing observed there is nothing to correct.
    pub fn correct(&mut self, m: &Measurements) -> Result<(), EkfError> {
        if m.is_empty() {
            return Ok(());
        }
        let bundle = assemble_measurement(
            &self.estimate,
            &m.lines,
            m.compass,
            m.camera,
            &self.variances,
        )?;
        self.estimate = correct(&self.estimate, &bundle)?;
        Ok(())
    }

    /// One full tick: predict, then correct if any measurements arrived.
    pub fn step(&mut self, u: &WheelSpeeds, m: Option<&Measurements>) -> Result<(), EkfError> {
        self.predict(u);
        if let Some(m) = m {
            self.correct(m)?;
        }
        Ok(())
    }
}
