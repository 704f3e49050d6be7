//! Measurement table: one row per sensor with columns
//! (sensor_kind, element_id, value, unit). CSV with a version comment line.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filters::SensorReadings;
use crate::network::{NetworkModel, SensorLayout};

pub const VERSION_LINE: &str = "# hydrostate-measurements v1";

const KIND_PRESSURE: &str = "pressure";
const KIND_DEMAND: &str = "demand";
const KIND_FLOW: &str = "flow";
const UNIT_HEAD: &str = "m";
const UNIT_FLOW: &str = "lps";

/// Writes the readings of one scenario. Row order follows the layout.
pub fn write_measurements(
    path: &Path,
    network: &NetworkModel,
    layout: &SensorLayout,
    readings: &SensorReadings,
) -> Result<()> {
    if !readings.matches(layout) {
        return Err(Error::validation("readings do not match the layout"));
    }
    let mut out = String::new();
    out.push_str(VERSION_LINE);
    out.push('\n');
    out.push_str("sensor_kind,element_id,value,unit\n");
    for (i, &node) in layout.pressure_nodes().iter().enumerate() {
        let id = &network.nodes()[node].id;
        out.push_str(&format!(
            "{KIND_PRESSURE},{id},{},{UNIT_HEAD}\n",
            readings.pressure[i]
        ));
    }
    for (i, &node) in layout.amr_nodes().iter().enumerate() {
        let id = &network.nodes()[node].id;
        out.push_str(&format!(
            "{KIND_DEMAND},{id},{},{UNIT_FLOW}\n",
            readings.demand[i]
        ));
    }
    for (i, &pipe) in layout.flow_pipes().iter().enumerate() {
        let id = &network.pipes()[pipe].id;
        out.push_str(&format!(
            "{KIND_FLOW},{id},{},{UNIT_FLOW}\n",
            readings.flow[i]
        ));
    }
    super::atomic_write(path, out.as_bytes())
}

/// Reads a measurement table back into layout-ordered readings. Every
/// layout sensor must be present; unknown ids, duplicate rows and unit
/// mismatches are rejected by name.
pub fn read_measurements(
    path: &Path,
    network: &NetworkModel,
    layout: &SensorLayout,
) -> Result<SensorReadings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(line) if line.trim() == VERSION_LINE => {}
        other => {
            return Err(Error::format(format!(
                "{}: missing version line (found {:?})",
                path.display(),
                other.unwrap_or("")
            )));
        }
    }
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());

    let mut values: HashMap<(String, String), (f64, String)> = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        if record.len() != 4 {
            return Err(Error::format(format!(
                "{}: row {} has {} columns, expected 4",
                path.display(),
                row_idx + 2,
                record.len()
            )));
        }
        let kind = record[0].trim().to_string();
        let id = record[1].trim().to_string();
        let value: f64 = record[2].trim().parse().map_err(|e| {
            Error::format(format!(
                "{}: row {}: bad value {:?}: {e}",
                path.display(),
                row_idx + 2,
                &record[2]
            ))
        })?;
        let unit = record[3].trim().to_string();
        let expected_unit = match kind.as_str() {
            KIND_PRESSURE => UNIT_HEAD,
            KIND_DEMAND | KIND_FLOW => UNIT_FLOW,
            other => {
                return Err(Error::format(format!(
                    "{}: unknown sensor kind {other:?}",
                    path.display()
                )));
            }
        };
        if unit != expected_unit {
            return Err(Error::format(format!(
                "{}: sensor {kind}/{id}: unit {unit:?} does not match expected {expected_unit:?}",
                path.display()
            )));
        }
        if values.insert((kind.clone(), id.clone()), (value, unit)).is_some() {
            return Err(Error::format(format!(
                "{}: duplicate row for sensor {kind}/{id}",
                path.display()
            )));
        }
    }

    let mut missing = Vec::new();
    let mut take = |kind: &str, id: &str| -> Option<f64> {
        match values.remove(&(kind.to_string(), id.to_string())) {
            Some((v, _)) => Some(v),
            None => {
                missing.push(format!("{kind}/{id}"));
                None
            }
        }
    };
    let pressure: Vec<f64> = layout
        .pressure_nodes()
        .iter()
        .filter_map(|&n| take(KIND_PRESSURE, &network.nodes()[n].id))
        .collect();
    let demand: Vec<f64> = layout
        .amr_nodes()
        .iter()
        .filter_map(|&n| take(KIND_DEMAND, &network.nodes()[n].id))
        .collect();
    let flow: Vec<f64> = layout
        .flow_pipes()
        .iter()
        .filter_map(|&k| take(KIND_FLOW, &network.pipes()[k].id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::format(format!(
            "{}: missing sensors: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    if !values.is_empty() {
        let mut extra: Vec<String> = values.keys().map(|(k, i)| format!("{k}/{i}")).collect();
        extra.sort();
        return Err(Error::format(format!(
            "{}: rows for sensors not in the layout: {}",
            path.display(),
            extra.join(", ")
        )));
    }
    Ok(SensorReadings {
        pressure: DVector::from_vec(pressure),
        demand: DVector::from_vec(demand),
        flow: DVector::from_vec(flow),
    })
}
