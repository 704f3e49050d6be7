//! Leak-scenario synthesis: seeded demand draws, leak injection, the
//! steady-state solve and noisy sensor sampling.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::SensorReadings;
use crate::hydraulics::{solve_steady_state, HydraulicState, InletHeads};
use crate::network::{NetworkModel, SensorLayout, StructuralMatrices};

/// One synthetic leak: the pipe it sits on, its rate, and the seed of the
/// nominal demand draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakScenario {
    pub leak_pipe: usize,
    /// Extra consumption caused by the leak, l/s; zero means no leak.
    pub leak_rate: f64,
    pub base_demand_seed: u64,
    pub timestamp_label: String,
}

impl LeakScenario {
    pub fn validate(&self, network: &NetworkModel) -> Result<()> {
        if self.leak_pipe >= network.pipe_count() {
            return Err(Error::validation(format!(
                "leak pipe index {} out of range",
                self.leak_pipe
            )));
        }
        if !(self.leak_rate >= 0.0 && self.leak_rate.is_finite()) {
            return Err(Error::validation("leak rate must be nonnegative"));
        }
        Ok(())
    }
}

/// Uniform range of nominal nodal demands, l/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DemandRange {
    fn default() -> Self {
        DemandRange { min: 0.2, max: 1.5 }
    }
}

/// Gaussian measurement noise per sensor class; zero sigmas reproduce the
/// true selections exactly (the fixture-generation default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub pressure_sigma: f64,
    pub demand_sigma: f64,
    pub flow_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            pressure_sigma: 0.0,
            demand_sigma: 0.0,
            flow_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Everything one scenario produces: the solved true state and the sampled
/// sensor readings.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub truth: HydraulicState,
    pub readings: SensorReadings,
    /// The demand vector fed to the solver (base draw plus leak split).
    pub demand_input: DVector<f64>,
}

/// Nominal demands: non-inlet nodes draw uniformly from the range, inlets
/// get zero. Deterministic in the seed.
pub fn draw_demands(network: &NetworkModel, range: &DemandRange, seed: u64) -> Result<DVector<f64>> {
    if !(range.min >= 0.0 && range.max >= range.min) {
        return Err(Error::validation("demand range must satisfy 0 <= min <= max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(range.min, range.max)
        .map_err(|e| Error::validation(format!("demand range: {e}")))?;
    Ok(DVector::from_fn(network.node_count(), |i, _| {
        if network.nodes()[i].is_inlet {
            0.0
        } else {
            dist.sample(&mut rng)
        }
    }))
}

/// Synthesizes one scenario: draws demands, splits the leak rate equally on
/// the leak pipe's endpoint nodes, solves the steady state and samples the
/// sensors with the configured noise.
pub fn generate_scenario(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    inlet_heads: &InletHeads,
    scenario: &LeakScenario,
    demand_range: &DemandRange,
    noise: &NoiseSpec,
) -> Result<ScenarioData> {
    scenario.validate(network)?;
    let mut demands = draw_demands(network, demand_range, scenario.base_demand_seed)?;
    if scenario.leak_rate > 0.0 {
        let pipe = &network.pipes()[scenario.leak_pipe];
        demands[pipe.source] += 0.5 * scenario.leak_rate;
        demands[pipe.sink] += 0.5 * scenario.leak_rate;
    }
    let truth = solve_steady_state(network, structural, inlet_heads, &demands)?;
    let readings = sample_readings(&truth, layout, noise);
    Ok(ScenarioData {
        truth,
        readings,
        demand_input: demands,
    })
}

/// Sensor selections of a state plus zero-mean Gaussian noise.
pub fn sample_readings(
    state: &HydraulicState,
    layout: &SensorLayout,
    noise: &NoiseSpec,
) -> SensorReadings {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut perturb = |value: f64, sigma: f64| -> f64 {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma validated nonnegative");
            value + normal.sample(&mut rng)
        } else {
            value
        }
    };
    let pressure = DVector::from_fn(layout.pressure_nodes().len(), |i, _| {
        perturb(state.heads[layout.pressure_nodes()[i]], noise.pressure_sigma)
    });
    let demand = DVector::from_fn(layout.amr_nodes().len(), |i, _| {
        perturb(state.demands[layout.amr_nodes()[i]], noise.demand_sigma)
    });
    let flow = DVector::from_fn(layout.flow_pipes().len(), |i, _| {
        perturb(state.flows[layout.flow_pipes()[i]], noise.flow_sigma)
    });
    SensorReadings {
        pressure,
        demand,
        flow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_structural;
    use crate::synth::{benchmark_layout, random_network, SynthSpec};

    fn setup() -> (NetworkModel, StructuralMatrices, SensorLayout, InletHeads) {
        let nw = random_network(&SynthSpec {
            nodes: 20,
            extra_edge_fraction: 0.25,
            seed: 9,
        });
        let s = build_structural(&nw);
        let layout = benchmark_layout(&nw, 0.2, 0.15, 4);
        let inlets = vec![(0usize, 60.0)];
        (nw, s, layout, inlets)
    }

    #[test]
    fn no_leak_noiseless_measurements_equal_selections() {
        let (nw, s, layout, inlets) = setup();
        let scenario = LeakScenario {
            leak_pipe: 0,
            leak_rate: 0.0,
            base_demand_seed: 1,
            timestamp_label: "t0".into(),
        };
        let data = generate_scenario(
            &nw,
            &s,
            &layout,
            &inlets,
            &scenario,
            &DemandRange::default(),
            &NoiseSpec::default(),
        )
        .unwrap();
        for (i, &node) in layout.pressure_nodes().iter().enumerate() {
            assert_eq!(data.readings.pressure[i], data.truth.heads[node]);
        }
        for (i, &pipe) in layout.flow_pipes().iter().enumerate() {
            assert_eq!(data.readings.flow[i], data.truth.flows[pipe]);
        }
    }

    #[test]
    fn leak_raises_total_consumption_by_its_rate() {
        let (nw, s, layout, inlets) = setup();
        let base = LeakScenario {
            leak_pipe: 5,
            leak_rate: 0.0,
            base_demand_seed: 7,
            timestamp_label: "t0".into(),
        };
        let leaky = LeakScenario {
            leak_rate: 5.0,
            ..base.clone()
        };
        let range = DemandRange::default();
        let noise = NoiseSpec::default();
        let d0 = generate_scenario(&nw, &s, &layout, &inlets, &base, &range, &noise).unwrap();
        let d1 = generate_scenario(&nw, &s, &layout, &inlets, &leaky, &range, &noise).unwrap();
        // input bookkeeping is exact
        assert!((d1.demand_input.sum() - d0.demand_input.sum() - 5.0).abs() < 1e-12);
        // realized consumption at non-inlet nodes follows to solver tolerance
        let consumption = |st: &HydraulicState| -> f64 {
            (0..nw.node_count())
                .filter(|&i| !nw.nodes()[i].is_inlet)
                .map(|i| st.demands[i])
                .sum()
        };
        let delta = consumption(&d1.truth) - consumption(&d0.truth);
        assert!((delta - 5.0).abs() < 1e-6, "consumption delta {delta}");
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_outputs() {
        let (nw, s, layout, inlets) = setup();
        let scenario = LeakScenario {
            leak_pipe: 3,
            leak_rate: 2.0,
            base_demand_seed: 42,
            timestamp_label: "t1".into(),
        };
        let range = DemandRange::default();
        let noise = NoiseSpec {
            pressure_sigma: 0.01,
            demand_sigma: 0.02,
            flow_sigma: 0.05,
            seed: 77,
        };
        let a = generate_scenario(&nw, &s, &layout, &inlets, &scenario, &range, &noise).unwrap();
        let b = generate_scenario(&nw, &s, &layout, &inlets, &scenario, &range, &noise).unwrap();
        assert_eq!(a.truth.heads, b.truth.heads);
        assert_eq!(a.readings.pressure, b.readings.pressure);
        assert_eq!(a.readings.demand, b.readings.demand);
        assert_eq!(a.readings.flow, b.readings.flow);
    }

    #[test]
    fn scenario_validation() {
        let (nw, ..) = setup();
        let bad_pipe = LeakScenario {
            leak_pipe: 999,
            leak_rate: 1.0,
            base_demand_seed: 0,
            timestamp_label: String::new(),
        };
        assert!(bad_pipe.validate(&nw).is_err());
        let bad_rate = LeakScenario {
            leak_pipe: 0,
            leak_rate: -1.0,
            base_demand_seed: 0,
            timestamp_label: String::new(),
        };
        assert!(bad_rate.validate(&nw).is_err());
    }
}
