//! Sensor-layout document: element ids (not indices) at the boundary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{resolve_node_ids, resolve_pipe_ids, NetworkModel, SensorLayout};

pub const FORMAT: &str = "hydrostate-layout";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    format: String,
    version: u32,
    #[serde(default)]
    pressure_nodes: Vec<String>,
    #[serde(default)]
    amr_nodes: Vec<String>,
    #[serde(default)]
    flow_pipes: Vec<String>,
}

pub fn load_layout(path: &Path, network: &NetworkModel) -> Result<SensorLayout> {
    let file: LayoutFile = super::read_json(path)?;
    super::check_header(path, &file.format, file.version, FORMAT, VERSION)?;
    SensorLayout::new(
        network,
        resolve_node_ids(network, &file.pressure_nodes)?,
        resolve_node_ids(network, &file.amr_nodes)?,
        resolve_pipe_ids(network, &file.flow_pipes)?,
    )
}

pub fn save_layout(path: &Path, network: &NetworkModel, layout: &SensorLayout) -> Result<()> {
    let node_id = |&i: &usize| network.nodes()[i].id.clone();
    let pipe_id = |&k: &usize| network.pipes()[k].id.clone();
    let file = LayoutFile {
        format: FORMAT.into(),
        version: VERSION,
        pressure_nodes: layout.pressure_nodes().iter().map(node_id).collect(),
        amr_nodes: layout.amr_nodes().iter().map(node_id).collect(),
        flow_pipes: layout.flow_pipes().iter().map(pipe_id).collect(),
    };
    super::write_json(path, &file)
}
