//! Executable numeric checks of the analytical properties the estimation
//! stack relies on: power convergence of the diffusion prediction matrix,
//! the Woodbury form of the Kalman gain complement, spectra of PSD-diagonal
//! products, subunitary singular values of the error-iteration factors, and
//! the geometric error bound of the head-only linear filter.
//!
//! Checks run on pipeline-realistic instances (matrices produced by the
//! actual modules) as well as random ones, and emit machine-readable
//! outcomes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpolation::{build_prediction_matrix, InterpolationWeights, PredictionMatrix};
use crate::network::{build_structural, NetworkModel, SensorLayout};
use crate::synth::{benchmark_layout, random_network, SynthSpec};

/// One check result. `pass` means the observed quantity respects the bound
/// in the check's own direction.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationOutcome {
    pub check_name: String,
    /// Instance descriptor: seed, size, parameters.
    pub instance: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
    /// Slack between bound and observation (positive = margin left).
    pub margin: f64,
    pub detail: String,
}

/// Iterates F^k until the rows agree within `tol` (max column-wise spread),
/// reporting the first such k, or failure at `max_k`. Also verifies that
/// stochasticity is preserved along the way.
pub fn check_power_convergence(
    f: &PredictionMatrix,
    tol: f64,
    max_k: usize,
    instance: impl Into<String>,
) -> ValidationOutcome {
    let n = f.matrix.nrows();
    let ones = DVector::from_element(n, 1.0);
    let mut power = f.matrix.clone();
    let mut spread = row_spread(&power);
    let mut k = 1;
    let mut stochastic_drift = (&power * &ones).add_scalar(-1.0).abs().max();
    while spread >= tol && k < max_k {
        power *= &f.matrix;
        k += 1;
        spread = row_spread(&power);
        stochastic_drift = stochastic_drift.max((&power * &ones).add_scalar(-1.0).abs().max());
    }
    let pass = spread < tol;
    ValidationOutcome {
        check_name: "power_convergence".into(),
        instance: instance.into(),
        observed: spread,
        bound: tol,
        pass,
        margin: tol - spread,
        detail: format!("first k = {k}, max |F^k 1 - 1| = {stochastic_drift:.3e}"),
    }
}

/// Max row-to-row deviation: the largest spread of values within any column.
fn row_spread(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        let col = m.column(j);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    worst
}

/// Verifies (I - K S) = (I + P S' R^-1 S)^-1 with K the Kalman gain
/// P S' (S P S' + R)^-1, elementwise to 1e-10.
pub fn check_woodbury_gain(
    p: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    instance: impl Into<String>,
) -> ValidationOutcome {
    let n = p.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let bound = 1e-10;

    let discrepancy = (|| -> Result<f64> {
        let innovation = s * p * s.transpose() + r;
        let gain = p * s.transpose()
            * innovation
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular innovation".into()))?;
        let lhs = &identity - gain * s;
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular R".into()))?;
        let rhs = (&identity + p * s.transpose() * r_inv * s)
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular I + PS'R^-1S".into()))?;
        Ok((lhs - rhs).abs().max())
    })();

    match discrepancy {
        Ok(observed) => ValidationOutcome {
            check_name: "woodbury_gain".into(),
            instance: instance.into(),
            observed,
            bound,
            pass: observed < bound,
            margin: bound - observed,
            detail: format!("n = {n}, sensors = {}", s.nrows()),
        },
        Err(e) => ValidationOutcome {
            check_name: "woodbury_gain".into(),
            instance: instance.into(),
            observed: f64::INFINITY,
            bound,
            pass: false,
            margin: f64::NEG_INFINITY,
            detail: format!("factorization failed: {e}"),
        },
    }
}

/// Verifies that P*D has (numerically) nonnegative eigenvalues for PSD P and
/// nonnegative diagonal D. Observed value is the most negative real part.
pub fn check_pd_product_spectrum(
    p: &DMatrix<f64>,
    d: &DVector<f64>,
    instance: impl Into<String>,
) -> ValidationOutcome {
    let product = p * DMatrix::from_diagonal(d);
    let eigenvalues = product.complex_eigenvalues();
    let min_real = eigenvalues.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    let max_imag = eigenvalues.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let tol = 1e-9;
    ValidationOutcome {
        check_name: "pd_product_spectrum".into(),
        instance: instance.into(),
        observed: min_real,
        bound: -tol,
        pass: min_real >= -tol,
        margin: min_real + tol,
        detail: format!("max |imag| = {max_imag:.3e}"),
    }
}

/// Reports the largest singular value of A*B; passes strictly below one, so
/// the identity-pair boundary case is flagged rather than passed.
pub fn check_subunitary_product(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    instance: impl Into<String>,
) -> ValidationOutcome {
    let sigma_max = (a * b).singular_values().max();
    ValidationOutcome {
        check_name: "subunitary_product".into(),
        instance: instance.into(),
        observed: sigma_max,
        bound: 1.0,
        pass: sigma_max < 1.0,
        margin: 1.0 - sigma_max,
        detail: String::new(),
    }
}

/// Head-only linear KF run checking the geometric error bound
/// ||e_k|| <= sigma^(k-1) ||e_0|| + (sigma - sigma^(k+1)) / (1 - sigma) ||h||
/// with sigma the largest singular value of M_s F and M_s (I - F) observed
/// across the run. Measurements are the noiseless sensed heads of `truth`.
#[allow(clippy::too_many_arguments)]
pub fn check_monotone_error(
    prediction: &PredictionMatrix,
    layout: &SensorLayout,
    truth_heads: &DVector<f64>,
    initial_heads: &DVector<f64>,
    q_scale: f64,
    r_scale: f64,
    iterations: usize,
    instance: impl Into<String>,
) -> ValidationOutcome {
    let n = truth_heads.len();
    let f = &prediction.matrix;
    let s = layout.pressure_selection(n);
    let identity = DMatrix::<f64>::identity(n, n);
    let i_minus_f = &identity - f;
    let z = &s * truth_heads;
    let q = DMatrix::identity(n, n) * q_scale;
    let r_inv_scale = 1.0 / r_scale;

    let mut mean = initial_heads.clone();
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut errors = Vec::with_capacity(iterations);
    let mut sigma_bar = 0.0f64;
    let e0 = (truth_heads - &mean).norm();

    for _ in 0..iterations {
        // prediction
        let prior_mean = f * &mean;
        let mut prior_cov = f * &cov * f.transpose() + &q;
        crate::linalg::symmetrize(&mut prior_cov);

        // M_s = (I + P S' R^-1 S)^-1; with diagonal R = r * I the inner
        // product collapses to scaled column selection
        let st_rinv_s = s.transpose() * &s * r_inv_scale;
        let m_s = match (&identity + &prior_cov * st_rinv_s).try_inverse() {
            Some(inv) => inv,
            None => {
                return ValidationOutcome {
                    check_name: "monotone_error_bound".into(),
                    instance: instance.into(),
                    observed: f64::INFINITY,
                    bound: 1e-9,
                    pass: false,
                    margin: f64::NEG_INFINITY,
                    detail: "I + PS'R^-1S not invertible".into(),
                };
            }
        };
        sigma_bar = sigma_bar
            .max((&m_s * f).singular_values().max())
            .max((&m_s * &i_minus_f).singular_values().max());

        // measurement update
        let innovation_cov = &s * &prior_cov * s.transpose()
            + DMatrix::<f64>::identity(s.nrows(), s.nrows()) * r_scale;
        let gain = match innovation_cov.clone().cholesky() {
            Some(ch) => ch.solve(&(&s * &prior_cov)).transpose(),
            None => {
                return ValidationOutcome {
                    check_name: "monotone_error_bound".into(),
                    instance: instance.into(),
                    observed: f64::INFINITY,
                    bound: 1e-9,
                    pass: false,
                    margin: f64::NEG_INFINITY,
                    detail: "singular innovation covariance".into(),
                };
            }
        };
        mean = &prior_mean + &gain * (&z - &s * &prior_mean);
        cov = (&identity - &gain * &s) * prior_cov;
        crate::linalg::symmetrize(&mut cov);

        errors.push((truth_heads - &mean).norm());
    }

    let h_norm = truth_heads.norm();
    let slack = 1e-9;
    let mut worst_violation = f64::NEG_INFINITY;
    for (idx, &err) in errors.iter().enumerate() {
        let k = idx + 1;
        // (sigma - sigma^(k+1)) / (1 - sigma) is the geometric sum
        // sigma + ... + sigma^k, valid on either side of 1
        let tail = if (sigma_bar - 1.0).abs() < 1e-12 {
            k as f64 * sigma_bar
        } else {
            (sigma_bar - sigma_bar.powi(k as i32 + 1)) / (1.0 - sigma_bar)
        };
        let bound_k = sigma_bar.powi(k as i32 - 1) * e0 + tail * h_norm;
        worst_violation = worst_violation.max(err - bound_k);
    }

    ValidationOutcome {
        check_name: "monotone_error_bound".into(),
        instance: instance.into(),
        observed: worst_violation,
        bound: slack,
        pass: worst_violation <= slack,
        margin: slack - worst_violation,
        detail: format!(
            "sigma_bar = {sigma_bar:.6} ({}), iterations = {}, final error = {:.3e}",
            if sigma_bar < 1.0 {
                "contractive"
            } else {
                "not contractive; bound holds vacuously"
            },
            errors.len(),
            errors.last().copied().unwrap_or(e0)
        ),
    }
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() * scale
}

fn random_selection(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let count = rng.random_range(1..=n.max(2) - 1);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        rows.push(pool.swap_remove(rng.random_range(0..pool.len())));
    }
    rows.sort_unstable();
    crate::network::selection_matrix(&rows, n).expect("indices in range")
}

/// A pipeline-realistic linear-KF setting on a small synthetic network:
/// prediction matrix from plain weights, spread-out pressure sensors, truth
/// from the hydraulic oracle.
fn pipeline_instance(seed: u64, n: usize) -> (NetworkModel, PredictionMatrix, SensorLayout, DVector<f64>) {
    let network = random_network(&SynthSpec {
        nodes: n,
        extra_edge_fraction: 0.25,
        seed,
    });
    let structural = build_structural(&network);
    let layout = benchmark_layout(&network, 0.2, 0.15, seed ^ 0x5eed);
    let demands = crate::scenario::draw_demands(
        &network,
        &crate::scenario::DemandRange::default(),
        seed ^ 0xd00d,
    )
    .expect("demand range valid");
    let truth = crate::hydraulics::solve_steady_state(
        &network,
        &structural,
        &vec![(0, 60.0)],
        &demands,
    )
    .expect("oracle solves the synthetic instance");
    let weights = InterpolationWeights::gsi(&structural);
    let eps = 0.4;
    let prediction = build_prediction_matrix(&weights, eps).expect("valid epsilon");
    (network, prediction, layout, truth.heads)
}

/// Full validation battery at default sizes. Deterministic in the seed.
pub fn run_battery(seed: u64) -> Vec<ValidationOutcomes> {
    vec![
        battery_power_convergence(seed, 30),
        battery_woodbury(seed, 100),
        battery_pd_product(seed, 100),
        battery_subunitary(seed, 4),
        battery_monotone(seed, 4),
    ]
}

/// A named group of outcomes from one check family. Non-gating families are
/// recorded for inspection but do not fail the battery: the subunitary
/// claim is false for the non-normal products the pipeline actually builds
/// (their eigenvalues stay in the unit disc, their singular values need
/// not), so those values are reported rather than asserted.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationOutcomes {
    pub family: String,
    pub gating: bool,
    pub outcomes: Vec<ValidationOutcome>,
}

impl ValidationOutcomes {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }

    /// Battery verdict: gating families must pass, recorded families only
    /// need finite observations.
    pub fn acceptable(&self) -> bool {
        if self.gating {
            self.all_pass()
        } else {
            self.outcomes.iter().all(|o| o.observed.is_finite())
        }
    }
}

pub fn battery_power_convergence(seed: u64, graphs: usize) -> ValidationOutcomes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
    let mut outcomes = Vec::new();
    for g in 0..graphs {
        let n = rng.random_range(5..=30);
        let network = random_network(&SynthSpec {
            nodes: n,
            extra_edge_fraction: 0.3,
            seed: seed.wrapping_add(g as u64),
        });
        let structural = build_structural(&network);
        let weights = InterpolationWeights::gsi(&structural);
        for eps in [0.1, 0.5, 0.9] {
            let f = build_prediction_matrix(&weights, eps).expect("valid epsilon");
            outcomes.push(check_power_convergence(
                &f,
                1e-8,
                200_000,
                format!("seed={} n={n} eps={eps}", seed.wrapping_add(g as u64)),
            ));
        }
    }
    ValidationOutcomes {
        family: "power_convergence".into(),
        gating: true,
        outcomes,
    }
}

pub fn battery_woodbury(seed: u64, instances: usize) -> ValidationOutcomes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
    let mut outcomes = Vec::new();
    for i in 0..instances {
        let n = rng.random_range(2..=30);
        let p = random_psd(&mut rng, n, 1.0);
        let s = random_selection(&mut rng, n);
        let r = DMatrix::from_diagonal(&DVector::from_fn(s.nrows(), |_, _| {
            rng.random_range(1e-4..1.0)
        }));
        outcomes.push(check_woodbury_gain(&p, &s, &r, format!("i={i} n={n}")));
    }
    ValidationOutcomes {
        family: "woodbury_gain".into(),
        gating: true,
        outcomes,
    }
}

pub fn battery_pd_product(seed: u64, instances: usize) -> ValidationOutcomes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
    let mut outcomes = Vec::new();
    for i in 0..instances {
        let n = rng.random_range(2..=30);
        let p = random_psd(&mut rng, n, 1.0);
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        outcomes.push(check_pd_product_spectrum(&p, &d, format!("i={i} n={n}")));
        if i == 0 {
            // boundary cases: zero diagonal and the identity
            outcomes.push(check_pd_product_spectrum(
                &p,
                &DVector::zeros(n),
                format!("i={i} n={n} D=0"),
            ));
            outcomes.push(check_pd_product_spectrum(
                &p,
                &DVector::from_element(n, 1.0),
                format!("i={i} n={n} D=I"),
            ));
        }
    }
    ValidationOutcomes {
        family: "pd_product_spectrum".into(),
        gating: true,
        outcomes,
    }
}

/// Subunitary products as they arise in the pipeline: M_s F and M_s (I - F)
/// recorded along head-only KF runs.
pub fn battery_subunitary(seed: u64, networks: usize) -> ValidationOutcomes {
    let mut outcomes = Vec::new();
    for g in 0..networks {
        let inst_seed = seed.wrapping_add(0x40 + g as u64);
        let (network, prediction, layout, truth) = pipeline_instance(inst_seed, 18 + 3 * g);
        let n = network.node_count();
        let identity = DMatrix::<f64>::identity(n, n);
        let s = layout.pressure_selection(n);
        let f = &prediction.matrix;
        let mut cov = DMatrix::<f64>::identity(n, n);
        let q = DMatrix::<f64>::identity(n, n);
        let r_scale = 1e-4;
        for iter in 0..30 {
            let prior_cov = f * &cov * f.transpose() + &q;
            let m_s = (&identity + &prior_cov * s.transpose() * &s / r_scale)
                .try_inverse()
                .expect("well conditioned");
            outcomes.push(check_subunitary_product(
                &m_s,
                f,
                format!("seed={inst_seed} iter={iter} M_sF"),
            ));
            outcomes.push(check_subunitary_product(
                &m_s,
                &(&identity - f),
                format!("seed={inst_seed} iter={iter} M_s(I-F)"),
            ));
            let innovation = &s * &prior_cov * s.transpose()
                + DMatrix::<f64>::identity(s.nrows(), s.nrows()) * r_scale;
            let gain = innovation
                .cholesky()
                .expect("innovation PD")
                .solve(&(&s * &prior_cov))
                .transpose();
            cov = (&identity - &gain * &s) * prior_cov;
            crate::linalg::symmetrize(&mut cov);
        }
        let _ = truth;
    }
    ValidationOutcomes {
        family: "subunitary_product".into(),
        gating: false,
        outcomes,
    }
}

pub fn battery_monotone(seed: u64, networks: usize) -> ValidationOutcomes {
    let mut outcomes = Vec::new();
    for g in 0..networks {
        let inst_seed = seed.wrapping_add(0x80 + g as u64);
        let (network, prediction, layout, truth) = pipeline_instance(inst_seed, 16 + 4 * g);
        let initial = DVector::from_element(network.node_count(), truth.mean());
        outcomes.push(check_monotone_error(
            &prediction,
            &layout,
            &truth,
            &initial,
            1.0,
            1e-4,
            200,
            format!("seed={inst_seed} n={}", network.node_count()),
        ));
    }
    ValidationOutcomes {
        family: "monotone_error_bound".into(),
        gating: true,
        outcomes,
    }
}
