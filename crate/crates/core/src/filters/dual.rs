//! The head/flow estimation loops: a UKF over nodal heads with a diffusion
//! prediction model, optionally coupled to a linear KF over pipe flows
//! through virtual-measurement exchange.
//!
//! Each iteration predicts both states, re-orients the incidence estimate
//! from the prior head mean, propagates head sigma points through the
//! measurement map and corrects both filters. Every `refresh_period`
//! iterations the measurement vectors are rebuilt from the other estimator's
//! posterior, which is what ties the two solutions together.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::belief::{GaussianBelief, PSD_TOLERANCE};
use crate::filters::kf::flow_kf_step;
use crate::filters::measurement::{
    flow_measurement_matrix, flow_measurement_noise, head_measurement_fn, head_measurement_noise,
    MeasurementSet, SensorReadings,
};
use crate::filters::sigma::sigma_points;
use crate::filters::ukf::correct_with_repair;
use crate::hydraulics::{estimate_incidence, hazen_williams_flow};
use crate::interpolation::PredictionMatrix;
use crate::network::{NetworkModel, SensorLayout, StructuralMatrices};

/// Tuning of the estimator stack. Covariances are diagonal scales times the
/// identity, matching how the filters are configured in practice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Sigma-point spread parameter, in (0, 1].
    pub alpha: f64,
    /// Distribution prior parameter of the scaled transform.
    pub beta: f64,
    /// Identity-vs-diffusion mix of the prediction matrix; `None` uses the
    /// AMR coverage ratio n_c / n.
    pub epsilon: Option<f64>,
    /// Head process noise scale (Q_h = q_h * I).
    pub q_h: f64,
    /// Head measurement noise scale for pressure and demand rows.
    pub r_h: f64,
    /// Head measurement noise scale for appended virtual flow rows.
    pub r_h_virtual: f64,
    /// Initial head covariance scale.
    pub p0_h: f64,
    /// Flow process noise scale (Q_q = q_q * I).
    pub q_q: f64,
    /// Flow measurement noise scale for virtual rows.
    pub r_q: f64,
    /// Initial flow covariance scale.
    pub p0_q: f64,
    /// Multiplier shrinking R_q rows of real flow sensors.
    pub flow_sensor_confidence_scale: f64,
    /// Virtual-measurement refresh period in iterations.
    pub refresh_period: usize,
    pub max_iters: usize,
    /// Convergence threshold on the head update infinity norm, meters.
    pub conv_tol_h: f64,
    /// Convergence threshold on the flow update infinity norm, l/s.
    pub conv_tol_q: f64,
    /// Consecutive in-tolerance iterations required to declare convergence.
    pub patience: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            alpha: 1e-3,
            beta: 2.0,
            epsilon: None,
            q_h: 1.0,
            r_h: 1e-4,
            r_h_virtual: 1e6,
            p0_h: 1.0,
            q_q: 1.0,
            r_q: 4.0,
            p0_q: 1.0,
            flow_sensor_confidence_scale: 1e-4,
            refresh_period: 10,
            max_iters: 200,
            conv_tol_h: 1e-4,
            conv_tol_q: 1e-4,
            patience: 3,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::validation("alpha must lie in (0, 1]"));
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::validation("epsilon must lie in [0, 1]"));
            }
        }
        if self.refresh_period == 0 {
            return Err(Error::validation("refresh_period must be at least 1"));
        }
        if self.max_iters == 0 || self.patience == 0 {
            return Err(Error::validation("max_iters and patience must be positive"));
        }
        for (name, v) in [
            ("q_h", self.q_h),
            ("r_h", self.r_h),
            ("r_h_virtual", self.r_h_virtual),
            ("p0_h", self.p0_h),
            ("q_q", self.q_q),
            ("r_q", self.r_q),
            ("p0_q", self.p0_q),
            ("flow_sensor_confidence_scale", self.flow_sensor_confidence_scale),
            ("conv_tol_h", self.conv_tol_h),
            ("conv_tol_q", self.conv_tol_q),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Prediction mix: configured value or the AMR coverage ratio.
    pub fn effective_epsilon(&self, layout: &SensorLayout, n: usize) -> f64 {
        self.epsilon
            .unwrap_or(layout.amr_nodes().len() as f64 / n as f64)
    }
}

/// Per-iteration diagnostics row.
#[derive(Debug, Clone, Serialize)]
pub struct IterationDiag {
    pub iteration: usize,
    /// Posterior-to-posterior head update, infinity norm (m).
    pub head_delta: f64,
    /// Posterior-to-posterior flow update, infinity norm (l/s).
    pub flow_delta: f64,
    pub head_cov_trace: f64,
    pub flow_cov_trace: f64,
    /// Head innovation infinity norm.
    pub head_innovation: f64,
    /// Flow innovation infinity norm.
    pub flow_innovation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub covariance_repairs: usize,
    pub rows: Vec<IterationDiag>,
}

/// Output of an estimator run.
#[derive(Debug, Clone)]
pub struct EstimatorRun {
    pub heads: DVector<f64>,
    /// Flow filter state; `None` for the head-only estimator.
    pub flows: Option<DVector<f64>>,
    pub head_belief: GaussianBelief,
    pub flow_belief: Option<GaussianBelief>,
    pub diagnostics: RunDiagnostics,
}

/// Head-only estimator: the flow filter and the virtual flow rows of the
/// head measurement are disabled, so the trajectory is independent of every
/// flow-side setting.
pub fn ukf_awgsi_run(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    prediction: &PredictionMatrix,
    config: &EstimatorConfig,
    readings: &SensorReadings,
    initial_heads: &DVector<f64>,
) -> Result<EstimatorRun> {
    run_estimator(
        network,
        structural,
        layout,
        prediction,
        config,
        readings,
        initial_heads,
        false,
    )
}

/// Dual estimator: head UKF and flow KF exchanging virtual measurements.
pub fn dual_ukf_run(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    prediction: &PredictionMatrix,
    config: &EstimatorConfig,
    readings: &SensorReadings,
    initial_heads: &DVector<f64>,
) -> Result<EstimatorRun> {
    run_estimator(
        network,
        structural,
        layout,
        prediction,
        config,
        readings,
        initial_heads,
        true,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_estimator(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    prediction: &PredictionMatrix,
    config: &EstimatorConfig,
    readings: &SensorReadings,
    initial_heads: &DVector<f64>,
    dual: bool,
) -> Result<EstimatorRun> {
    config.validate()?;
    let n = network.node_count();
    let m = network.pipe_count();
    if initial_heads.len() != n {
        return Err(Error::validation(format!(
            "initial head vector length {} does not match node count {n}",
            initial_heads.len()
        )));
    }
    if !readings.matches(layout) {
        return Err(Error::validation(
            "sensor readings do not match the layout dimensions",
        ));
    }
    let f = &prediction.matrix;
    if f.nrows() != n || f.ncols() != n {
        return Err(Error::validation("prediction matrix does not match node count"));
    }

    // initial virtual flows from the interpolated heads
    let b0 = estimate_incidence(initial_heads, network);
    let q0 = hazen_williams_flow(initial_heads, &b0, &structural.resistance)?;
    let mut measurements = MeasurementSet::assemble(readings, dual.then_some(&q0), &q0);

    let r_h = head_measurement_noise(layout, m, config.r_h, config.r_h_virtual, dual);
    let q_h = DMatrix::identity(n, n) * config.q_h;
    let g_q = flow_measurement_matrix(layout, m);
    let r_q = flow_measurement_noise(layout, m, config.r_q, config.flow_sensor_confidence_scale);
    let q_q = DMatrix::identity(m, m) * config.q_q;

    let mut head_belief = GaussianBelief::isotropic(initial_heads.clone(), config.p0_h);
    let mut flow_belief = GaussianBelief::isotropic(q0, config.p0_q);

    let mut rows = Vec::new();
    let mut repairs = 0usize;
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 1..=config.max_iters {
        iterations = k;
        let prev_heads = head_belief.mean.clone();
        let prev_flows = flow_belief.mean.clone();

        // linear prediction of the head state (exact under the SUT)
        let prior_mean = f * &head_belief.mean;
        let mut prior_cov = f * &head_belief.cov * f.transpose() + &q_h;
        crate::linalg::symmetrize(&mut prior_cov);
        let head_prior = GaussianBelief::new(prior_mean, prior_cov)?;

        // incidence oriented at the prior head mean
        let b_prior = estimate_incidence(&head_prior.mean, network);

        let set = sigma_points(&head_prior, config.alpha, config.beta)?;
        let head_innovation = {
            let projected_center = head_measurement_fn(
                &DMatrix::from_columns(&[head_prior.mean.clone()]),
                structural,
                layout,
                &b_prior,
                dual,
            );
            (&measurements.z_h - projected_center.column(0)).abs().max()
        };
        let (mut posterior, pyy_repaired) = correct_with_repair(
            &head_prior,
            &set,
            |cols| head_measurement_fn(cols, structural, layout, &b_prior, dual),
            &r_h,
            &measurements.z_h,
        )?;
        if pyy_repaired {
            repairs += 1;
        }
        posterior.check_finite(&format!("head update, iteration {k}"))?;
        if !posterior.is_psd_within(PSD_TOLERANCE) {
            posterior.repair_psd()?;
            repairs += 1;
        }
        head_belief = posterior;

        let mut flow_innovation = 0.0;
        if dual {
            flow_innovation = (&measurements.z_q - &g_q * &flow_belief.mean).abs().max();
            let mut flow_post = flow_kf_step(&flow_belief, &q_q, &g_q, &r_q, &measurements.z_q)?;
            flow_post.check_finite(&format!("flow update, iteration {k}"))?;
            if !flow_post.is_psd_within(PSD_TOLERANCE) {
                flow_post.repair_psd()?;
                repairs += 1;
            }
            flow_belief = flow_post;
        }

        // virtual-measurement refresh from the posteriors: the head filter
        // receives the flow state, the flow filter receives head-derived flows
        let mut refreshed = false;
        if dual && k % config.refresh_period == 0 {
            let b_post = estimate_incidence(&head_belief.mean, network);
            let head_virtual =
                hazen_williams_flow(&head_belief.mean, &b_post, &structural.resistance)?;
            measurements = MeasurementSet::assemble(readings, Some(&flow_belief.mean), &head_virtual);
            refreshed = true;
        }

        let head_delta = (&head_belief.mean - &prev_heads).abs().max();
        let flow_delta = if dual {
            (&flow_belief.mean - &prev_flows).abs().max()
        } else {
            0.0
        };
        rows.push(IterationDiag {
            iteration: k,
            head_delta,
            flow_delta,
            head_cov_trace: head_belief.cov.trace(),
            flow_cov_trace: if dual { flow_belief.cov.trace() } else { 0.0 },
            head_innovation,
            flow_innovation,
        });

        // a refresh changes both measurement vectors, so in-tolerance
        // iterations before it do not count toward convergence; the dual
        // exchange also needs at least two refresh cycles to settle
        let within = head_delta < config.conv_tol_h && (!dual || flow_delta < config.conv_tol_q);
        streak = if within && !refreshed { streak + 1 } else { 0 };
        let warmed_up = !dual || k >= 2 * config.refresh_period;
        if streak >= config.patience && warmed_up {
            converged = true;
            break;
        }
    }

    // final synchronization: the loop can stop between refreshes, so the
    // flow filter runs one more refresh cycle against virtual flows drawn
    // from the final head posterior (and the real sensors), fully adopting
    // the measurement blend and making the returned pair mutually consistent
    if dual {
        let b_final = estimate_incidence(&head_belief.mean, network);
        let head_virtual =
            hazen_williams_flow(&head_belief.mean, &b_final, &structural.resistance)?;
        let z_q = MeasurementSet::assemble(readings, None, &head_virtual).z_q;
        for _ in 0..config.refresh_period {
            let mut flow_post = flow_kf_step(&flow_belief, &q_q, &g_q, &r_q, &z_q)?;
            flow_post.check_finite("final flow synchronization")?;
            if !flow_post.is_psd_within(PSD_TOLERANCE) {
                flow_post.repair_psd()?;
                repairs += 1;
            }
            flow_belief = flow_post;
        }
    }

    let diagnostics = RunDiagnostics {
        iterations,
        converged,
        covariance_repairs: repairs,
        rows,
    };
    Ok(EstimatorRun {
        heads: head_belief.mean.clone(),
        flows: dual.then(|| flow_belief.mean.clone()),
        head_belief,
        flow_belief: dual.then_some(flow_belief),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::{build_prediction_matrix, InterpolationWeights};
    use crate::network::build_structural;
    use crate::testutil::triangle_network;

    fn full_readings(heads: &DVector<f64>, nw: &NetworkModel, s: &StructuralMatrices) -> (SensorLayout, SensorReadings) {
        let layout = SensorLayout::new(nw, vec![0, 1, 2], vec![1, 2], vec![0]).unwrap();
        let b = estimate_incidence(heads, nw);
        let q = hazen_williams_flow(heads, &b, &s.resistance).unwrap();
        let c = crate::hydraulics::nodal_balance(&q, &b);
        let readings = SensorReadings {
            pressure: DVector::from_fn(3, |i, _| heads[layout.pressure_nodes()[i]]),
            demand: DVector::from_fn(2, |i, _| c[layout.amr_nodes()[i]]),
            flow: DVector::from_fn(1, |i, _| q[layout.flow_pipes()[i]]),
        };
        (layout, readings)
    }

    #[test]
    fn fully_sensed_noiseless_converges_to_truth() {
        let nw = triangle_network();
        let mut s = build_structural(&nw);
        s.resistance = DVector::from_vec(vec![1.0, 1.5, 0.8]);
        let demands = DVector::from_vec(vec![0.0, 1.0, 0.5]);
        let truth = crate::hydraulics::solve_steady_state(&nw, &s, &vec![(0, 60.0)], &demands).unwrap();
        let (layout, readings) = full_readings(&truth.heads, &nw, &s);
        let weights = InterpolationWeights::gsi(&s);
        let prediction = build_prediction_matrix(&weights, 2.0 / 3.0).unwrap();
        let config = EstimatorConfig::default();

        // initial guess deliberately off
        let h0 = DVector::from_vec(vec![60.0, 59.2, 58.8]);

        for dual in [false, true] {
            let run = if dual {
                dual_ukf_run(&nw, &s, &layout, &prediction, &config, &readings, &h0).unwrap()
            } else {
                ukf_awgsi_run(&nw, &s, &layout, &prediction, &config, &readings, &h0).unwrap()
            };
            let err = (&run.heads - &truth.heads).abs().max();
            assert!(err < 5e-2, "dual={dual}: head error {err:e}");
            if dual {
                let qerr = (run.flows.as_ref().unwrap() - &truth.flows).abs().max();
                assert!(qerr < 2e-1, "flow error {qerr:e}");
            }
        }
    }

    #[test]
    fn head_only_trajectory_ignores_flow_config() {
        let nw = triangle_network();
        let mut s = build_structural(&nw);
        s.resistance = DVector::from_vec(vec![1.0, 1.5, 0.8]);
        let demands = DVector::from_vec(vec![0.0, 1.0, 0.5]);
        let truth = crate::hydraulics::solve_steady_state(&nw, &s, &vec![(0, 60.0)], &demands).unwrap();
        let (layout, readings) = full_readings(&truth.heads, &nw, &s);
        let weights = InterpolationWeights::gsi(&s);
        let prediction = build_prediction_matrix(&weights, 0.5).unwrap();
        let h0 = DVector::from_vec(vec![59.0, 58.4, 58.1]);

        let mut config_a = EstimatorConfig::default();
        config_a.max_iters = 40;
        let mut config_b = config_a.clone();
        config_b.q_q = 123.0;
        config_b.r_q = 7.7;
        config_b.refresh_period = 2;
        config_b.flow_sensor_confidence_scale = 0.5;

        let run_a = ukf_awgsi_run(&nw, &s, &layout, &prediction, &config_a, &readings, &h0).unwrap();
        let run_b = ukf_awgsi_run(&nw, &s, &layout, &prediction, &config_b, &readings, &h0).unwrap();
        assert_eq!(run_a.heads, run_b.heads);
        assert!(run_a.flows.is_none());
    }

    #[test]
    fn determinism_bitwise() {
        let nw = triangle_network();
        let mut s = build_structural(&nw);
        s.resistance = DVector::from_vec(vec![1.0, 1.5, 0.8]);
        let demands = DVector::from_vec(vec![0.0, 1.2, 0.3]);
        let truth = crate::hydraulics::solve_steady_state(&nw, &s, &vec![(0, 55.0)], &demands).unwrap();
        let (layout, readings) = full_readings(&truth.heads, &nw, &s);
        let weights = InterpolationWeights::gsi(&s);
        let prediction = build_prediction_matrix(&weights, 0.4).unwrap();
        let config = EstimatorConfig { max_iters: 25, ..Default::default() };
        let h0 = DVector::from_vec(vec![54.0, 53.5, 53.2]);

        let a = dual_ukf_run(&nw, &s, &layout, &prediction, &config, &readings, &h0).unwrap();
        let b = dual_ukf_run(&nw, &s, &layout, &prediction, &config, &readings, &h0).unwrap();
        assert_eq!(a.heads, b.heads);
        assert_eq!(a.flows, b.flows);
    }

    #[test]
    fn config_validation() {
        let mut c = EstimatorConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 1e-3;
        c.refresh_period = 0;
        assert!(c.validate().is_err());
        c.refresh_period = 10;
        c.r_q = -1.0;
        assert!(c.validate().is_err());
    }
}
