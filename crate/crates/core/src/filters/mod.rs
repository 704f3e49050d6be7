//! Kalman-filter machinery: Gaussian beliefs, the scaled unscented
//! transform, linear and unscented filter steps, measurement models, and the
//! head/flow estimation loops built from them.

pub mod belief;
pub mod dual;
pub mod kf;
pub mod measurement;
pub mod sigma;
pub mod ukf;

pub use belief::GaussianBelief;
pub use dual::{dual_ukf_run, ukf_awgsi_run, EstimatorConfig, EstimatorRun, RunDiagnostics};
pub use kf::{flow_kf_step, kf_step};
pub use measurement::{head_measurement_fn, MeasurementSet, SensorReadings};
pub use sigma::{sigma_points, SigmaPointSet};
pub use ukf::ukf_step;

// Pipe orientation from a head estimate is shared with the hydraulic layer.
pub use crate::hydraulics::estimate_incidence;
