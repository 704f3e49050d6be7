//! Hydraulic state estimation for water distribution networks.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`network`] — graph model, structural matrices, sensor layouts;
//! * [`hydraulics`] — Hazen-Williams steady-state oracle and flow/demand
//!   relations used everywhere else;
//! * [`interpolation`] — graph-based head interpolation (quadratic program)
//!   with plain and analytically reweighted edge weights, plus the diffusion
//!   prediction matrix;
//! * [`filters`] — linear Kalman filter, scaled-unscented-transform UKF and
//!   the dual head/flow estimator that exchanges virtual measurements;
//! * [`localization`] — leak-candidate ranking and the KPI suite;
//! * [`validators`] — executable numeric checks of the analytical properties
//!   the estimators rely on;
//! * [`scenario`] / [`synth`] — seeded scenario generation and synthetic
//!   benchmark networks;
//! * [`pipeline`] — batch orchestration, RMSE summaries, report files;
//! * [`io`] — versioned file formats for all of the above.

pub mod error;
pub mod filters;
pub mod hydraulics;
pub mod interpolation;
pub mod io;
pub(crate) mod linalg;
pub mod localization;
pub mod network;
pub mod pipeline;
pub mod scenario;
pub mod synth;
pub mod validators;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::network::{NetworkModel, Node, Pipe};

    /// Path graph n0 - n1 - ... with the given pipe lengths; n0 is the inlet.
    pub fn line_network(lengths: &[f64]) -> NetworkModel {
        let n = lengths.len() + 1;
        let nodes = (0..n)
            .map(|i| Node {
                id: format!("n{i}"),
                elevation: 0.0,
                is_inlet: i == 0,
            })
            .collect();
        let pipes = lengths
            .iter()
            .enumerate()
            .map(|(k, &len)| Pipe {
                id: format!("p{k}"),
                source: k,
                sink: k + 1,
                length: len,
                diameter: 0.2,
                roughness: 100.0,
            })
            .collect();
        NetworkModel::new(nodes, pipes).unwrap()
    }

    /// Triangle with pipe lengths 100/150/200 m; n0 is the inlet.
    pub fn triangle_network() -> NetworkModel {
        let nodes = (0..3)
            .map(|i| Node {
                id: format!("n{i}"),
                elevation: 0.0,
                is_inlet: i == 0,
            })
            .collect();
        let mk = |id: &str, a: usize, b: usize, len: f64| Pipe {
            id: id.into(),
            source: a,
            sink: b,
            length: len,
            diameter: 0.2,
            roughness: 100.0,
        };
        let pipes = vec![
            mk("p0", 0, 1, 100.0),
            mk("p1", 1, 2, 150.0),
            mk("p2", 0, 2, 200.0),
        ];
        NetworkModel::new(nodes, pipes).unwrap()
    }
}
