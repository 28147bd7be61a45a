//! EKF localization for a differential-drive robot, together with a
//! deterministic 2D simulator for exercising it.
//!
//! The robot fuses four sensor streams: wheel odometry, a magnetic compass,
//! an absolute-orientation cue from an omni-directional camera, and line
//! features extracted from a laser range finder and matched against a map
//! of wall segments. The crate provides:
//!
//! - [`geometry`]: angles, normal-form lines, world↔robot transforms;
//! - [`motion`]: differential-drive kinematics and prediction Jacobians;
//! - [`ekf`]: the predict/correct cycle and measurement assembly;
//! - [`scanmatch`]: line extraction from range scans and map association;
//! - [`sensors`]: simulated sensor readings generated from ground truth;
//! - [`sim`]: scenario definitions, trajectory generation, the run loop,
//!   Monte Carlo metrics, and wheel-noise calibration;
//! - [`config`] and [`logfmt`]: the scenario file schema and the emitted
//!   log/summary formats;
//! - [`cli`]: the `simulate`, `compare` and `calibrate-delta` commands
//!   behind the `ekfloc` binary.
//!
//! Runs are reproducible: every random draw comes from counter-based RNG
//! streams derived from the scenario seed, and identical (config, seed)
//! pairs produce byte-identical logs. See the `examples/` directory for
//! runnable walkthroughs of each capability.

pub mod ekf;
pub mod geometry;
pub mod motion;
pub mod scanmatch;
pub mod sensors;
