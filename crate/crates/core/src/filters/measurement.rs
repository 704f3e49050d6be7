//! Measurement models of the head and flow estimators.
//!
//! The head estimator observes sensed heads, AMR demands derived through the
//! flow law and mass conservation, and (in the dual architecture) the full
//! virtual flow vector. The flow estimator observes sensed flows stacked on
//! top of the virtual flows computed from the head state.

use nalgebra::{DMatrix, DVector};

use crate::hydraulics::hazen_williams_flow_clamped;
use crate::network::{SensorLayout, StructuralMatrices};

/// Raw sensor readings aligned with a [`SensorLayout`]: entry order matches
/// the layout's index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReadings {
    pub pressure: DVector<f64>,
    pub demand: DVector<f64>,
    pub flow: DVector<f64>,
}

impl SensorReadings {
    pub fn matches(&self, layout: &SensorLayout) -> bool {
        self.pressure.len() == layout.pressure_nodes().len()
            && self.demand.len() == layout.amr_nodes().len()
            && self.flow.len() == layout.flow_pipes().len()
    }
}

/// Stacked measurement vectors of the two estimators: `z_h` for the head
/// filter (sensed heads, AMR demands, then virtual flows in dual mode) and
/// `z_q` for the flow filter (sensed flows, then virtual flows).
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub z_h: DVector<f64>,
    pub z_q: DVector<f64>,
}

impl MeasurementSet {
    /// Assembles both stacked vectors. `virtual_for_head` carries the flow
    /// estimator's state into z_h (dual mode only); `virtual_for_flow`
    /// carries the head-derived flows into z_q.
    pub fn assemble(
        readings: &SensorReadings,
        virtual_for_head: Option<&DVector<f64>>,
        virtual_for_flow: &DVector<f64>,
    ) -> Self {
        let mut z_h_parts: Vec<f64> = Vec::new();
        z_h_parts.extend(readings.pressure.iter());
        z_h_parts.extend(readings.demand.iter());
        if let Some(virt) = virtual_for_head {
            z_h_parts.extend(virt.iter());
        }
        let mut z_q_parts: Vec<f64> = Vec::new();
        z_q_parts.extend(readings.flow.iter());
        z_q_parts.extend(virtual_for_flow.iter());
        MeasurementSet {
            z_h: DVector::from_vec(z_h_parts),
            z_q: DVector::from_vec(z_q_parts),
        }
    }
}

/// Head-estimator measurement map applied to a sigma matrix (n x columns).
///
/// Row blocks: sensed heads S*H; AMR demands -Bc' * (T^-1 B H)^(1/1.852);
/// optionally the full flow vector. Negative drops of off-center columns are
/// clamped to zero inside the flow law, keeping the map continuous.
pub fn head_measurement_fn(
    sigma_heads: &DMatrix<f64>,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    oriented_incidence: &DMatrix<f64>,
    include_virtual_flows: bool,
) -> DMatrix<f64> {
    let cols = sigma_heads.ncols();
    let n_s = layout.pressure_nodes().len();
    let n_c = layout.amr_nodes().len();
    let m = structural.incidence.nrows();
    let rows = n_s + n_c + if include_virtual_flows { m } else { 0 };

    let flows = hazen_williams_flow_clamped(sigma_heads, oriented_incidence, &structural.resistance);

    let mut out = DMatrix::zeros(rows, cols);
    for (row, &node) in layout.pressure_nodes().iter().enumerate() {
        out.row_mut(row).copy_from(&sigma_heads.row(node));
    }
    if n_c > 0 {
        // demand rows: -(Bc)' q, with Bc the AMR columns of the oriented incidence
        let bc = amr_columns(oriented_incidence, layout);
        let demands = -(bc.transpose() * &flows);
        out.view_mut((n_s, 0), (n_c, cols)).copy_from(&demands);
    }
    if include_virtual_flows {
        out.view_mut((n_s + n_c, 0), (m, cols)).copy_from(&flows);
    }
    out
}

/// AMR-node column block of an oriented incidence matrix (m x n_c).
pub fn amr_columns(oriented_incidence: &DMatrix<f64>, layout: &SensorLayout) -> DMatrix<f64> {
    let m = oriented_incidence.nrows();
    let n_c = layout.amr_nodes().len();
    DMatrix::from_fn(m, n_c, |k, j| oriented_incidence[(k, layout.amr_nodes()[j])])
}

/// Flow-estimator measurement matrix G_q = [S_q; I_m].
pub fn flow_measurement_matrix(layout: &SensorLayout, m: usize) -> DMatrix<f64> {
    let n_q = layout.flow_pipes().len();
    let mut g = DMatrix::zeros(n_q + m, m);
    for (row, &pipe) in layout.flow_pipes().iter().enumerate() {
        g[(row, pipe)] = 1.0;
    }
    for k in 0..m {
        g[(n_q + k, k)] = 1.0;
    }
    g
}

/// Diagonal measurement noise for the flow estimator: real sensor rows are
/// shrunk by the confidence scale so they dominate the virtual rows.
pub fn flow_measurement_noise(
    layout: &SensorLayout,
    m: usize,
    r_q: f64,
    confidence_scale: f64,
) -> DMatrix<f64> {
    let n_q = layout.flow_pipes().len();
    let diag = DVector::from_fn(n_q + m, |i, _| {
        if i < n_q {
            r_q * confidence_scale
        } else {
            r_q
        }
    });
    DMatrix::from_diagonal(&diag)
}

/// Diagonal measurement noise for the head estimator: `r_h` on pressure and
/// demand rows, `r_h_virtual` on appended virtual flow rows.
pub fn head_measurement_noise(
    layout: &SensorLayout,
    m: usize,
    r_h: f64,
    r_h_virtual: f64,
    include_virtual_flows: bool,
) -> DMatrix<f64> {
    let base = layout.pressure_nodes().len() + layout.amr_nodes().len();
    let rows = base + if include_virtual_flows { m } else { 0 };
    let diag = DVector::from_fn(rows, |i, _| if i < base { r_h } else { r_h_virtual });
    DMatrix::from_diagonal(&diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::{estimate_incidence, nodal_balance};
    use crate::network::{build_structural, SensorLayout};
    use crate::testutil::{line_network, triangle_network};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn single_pipe_hand_evaluation() {
        // tau = 1, heads [2, 1], AMR at node 1 (the sink): flow row 1,
        // demand row +1, pressure row = sensed head.
        let nw = line_network(&[100.0]);
        let mut s = build_structural(&nw);
        s.resistance = DVector::from_element(1, 1.0);
        let layout = SensorLayout::new(&nw, vec![0], vec![1], vec![]).unwrap();
        let heads = DVector::from_vec(vec![2.0, 1.0]);
        let b = estimate_incidence(&heads, &nw);
        let cols = DMatrix::from_columns(&[heads]);
        let out = head_measurement_fn(&cols, &s, &layout, &b, true);
        assert_eq!(out.nrows(), 1 + 1 + 1);
        assert!((out[(0, 0)] - 2.0).abs() < 1e-15); // sensed head
        assert!((out[(1, 0)] - 1.0).abs() < 1e-12); // demand at sink
        assert!((out[(2, 0)] - 1.0).abs() < 1e-12); // flow
    }

    #[test]
    fn flag_controls_row_count() {
        let nw = triangle_network();
        let s = build_structural(&nw);
        let layout = SensorLayout::new(&nw, vec![0, 1], vec![2], vec![]).unwrap();
        let heads = DMatrix::from_columns(&[DVector::from_vec(vec![10.0, 9.0, 8.0])]);
        let b = estimate_incidence(&DVector::from_vec(vec![10.0, 9.0, 8.0]), &nw);
        let without = head_measurement_fn(&heads, &s, &layout, &b, false);
        assert_eq!(without.nrows(), 3);
        let with = head_measurement_fn(&heads, &s, &layout, &b, true);
        assert_eq!(with.nrows(), 3 + nw.pipe_count());
    }

    #[test]
    fn demand_rows_reproduce_nodal_balance() {
        let nw = triangle_network();
        let mut s = build_structural(&nw);
        s.resistance = DVector::from_vec(vec![0.9, 1.1, 1.7]);
        let layout = SensorLayout::new(&nw, vec![0], vec![0, 1, 2], vec![]).unwrap();
        let heads = DVector::from_vec(vec![20.0, 18.5, 17.0]);
        let b = estimate_incidence(&heads, &nw);
        let cols = DMatrix::from_columns(&[heads.clone()]);
        let out = head_measurement_fn(&cols, &s, &layout, &b, true);

        let flows = DVector::from_fn(3, |k, _| out[(1 + 3 + k, 0)]);
        let balance = nodal_balance(&flows, &b);
        for j in 0..3 {
            assert!(
                (out[(1 + j, 0)] - balance[j]).abs() < 1e-12,
                "AMR row {j} vs nodal balance"
            );
        }
    }

    #[test]
    fn flow_matrix_and_noise_layout() {
        let nw = triangle_network();
        let layout = SensorLayout::new(&nw, vec![0], vec![], vec![1]).unwrap();
        let g = flow_measurement_matrix(&layout, 3);
        assert_eq!(g.nrows(), 4);
        assert_eq!(g[(0, 1)], 1.0); // sensed pipe row
        for k in 0..3 {
            assert_eq!(g[(1 + k, k)], 1.0); // identity block
        }
        let r = flow_measurement_noise(&layout, 3, 1e-4, 1e-4);
        assert!((r[(0, 0)] - 1e-8).abs() < 1e-20);
        assert!((r[(1, 1)] - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn measurement_set_assembly() {
        let readings = SensorReadings {
            pressure: DVector::from_vec(vec![10.0]),
            demand: DVector::from_vec(vec![0.5]),
            flow: DVector::from_vec(vec![2.0]),
        };
        let virt = DVector::from_vec(vec![1.0, 1.5]);
        let dual = MeasurementSet::assemble(&readings, Some(&virt), &virt);
        assert_eq!(dual.z_h.as_slice(), &[10.0, 0.5, 1.0, 1.5]);
        assert_eq!(dual.z_q.as_slice(), &[2.0, 1.0, 1.5]);
        let head_only = MeasurementSet::assemble(&readings, None, &virt);
        assert_eq!(head_only.z_h.as_slice(), &[10.0, 0.5]);
    }
}
