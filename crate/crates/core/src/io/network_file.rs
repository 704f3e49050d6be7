//! Network document: nodes, pipes, and an optional input-preparation
//! transform (node removal, inlet re-rooting with fixed heads).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkModel, Node, Pipe};

pub const FORMAT: &str = "hydrostate-network";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    format: String,
    version: u32,
    nodes: Vec<NodeRecord>,
    pipes: Vec<PipeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<TransformSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    elevation_m: f64,
    #[serde(default)]
    is_inlet: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeRecord {
    id: String,
    source: String,
    sink: String,
    length_m: f64,
    diameter_m: f64,
    roughness: f64,
}

/// Declarative input preparation applied while loading: drop nodes (for
/// example isolated reservoirs) and mark nodes as inlets with fixed heads.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformSpec {
    #[serde(default)]
    remove_nodes: Vec<String>,
    #[serde(default)]
    set_inlets: Vec<InletSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InletSpec {
    node: String,
    head_m: f64,
}

/// A loaded network together with the fixed inlet heads declared in the
/// file's transform section (scenario batches may override or extend them).
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub model: NetworkModel,
    pub inlet_heads: BTreeMap<String, f64>,
}

pub fn load_network(path: &Path) -> Result<LoadedNetwork> {
    let file: NetworkFile = super::read_json(path)?;
    super::check_header(path, &file.format, file.version, FORMAT, VERSION)?;

    let transform = file.transform.unwrap_or_default();
    let removed: std::collections::HashSet<&str> =
        transform.remove_nodes.iter().map(String::as_str).collect();
    for id in &removed {
        if !file.nodes.iter().any(|n| n.id == *id) {
            return Err(Error::format(format!(
                "{}: transform removes unknown node {id}",
                path.display()
            )));
        }
    }

    let mut nodes = Vec::new();
    let mut index_of = std::collections::HashMap::new();
    for record in &file.nodes {
        if removed.contains(record.id.as_str()) {
            continue;
        }
        index_of.insert(record.id.clone(), nodes.len());
        nodes.push(Node {
            id: record.id.clone(),
            elevation: record.elevation_m,
            is_inlet: record.is_inlet,
        });
    }

    let mut inlet_heads = BTreeMap::new();
    for inlet in &transform.set_inlets {
        let &idx = index_of.get(&inlet.node).ok_or_else(|| {
            Error::format(format!(
                "{}: transform re-roots unknown or removed node {}",
                path.display(),
                inlet.node
            ))
        })?;
        nodes[idx].is_inlet = true;
        inlet_heads.insert(inlet.node.clone(), inlet.head_m);
    }

    let mut pipes = Vec::new();
    for record in &file.pipes {
        if removed.contains(record.source.as_str()) || removed.contains(record.sink.as_str()) {
            continue;
        }
        let resolve = |id: &str| -> Result<usize> {
            index_of.get(id).copied().ok_or_else(|| {
                Error::format(format!(
                    "{}: pipe {} references unknown node {id}",
                    path.display(),
                    record.id
                ))
            })
        };
        pipes.push(Pipe {
            id: record.id.clone(),
            source: resolve(&record.source)?,
            sink: resolve(&record.sink)?,
            length: record.length_m,
            diameter: record.diameter_m,
            roughness: record.roughness,
        });
    }

    let model = NetworkModel::new(nodes, pipes)?;
    Ok(LoadedNetwork { model, inlet_heads })
}

/// Saves a model, emitting the fixed inlet heads as a transform section so
/// a round trip reproduces them.
pub fn save_network(
    path: &Path,
    model: &NetworkModel,
    inlet_heads: &BTreeMap<String, f64>,
) -> Result<()> {
    let file = NetworkFile {
        format: FORMAT.into(),
        version: VERSION,
        nodes: model
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id.clone(),
                elevation_m: n.elevation,
                is_inlet: n.is_inlet,
            })
            .collect(),
        pipes: model
            .pipes()
            .iter()
            .map(|p| PipeRecord {
                id: p.id.clone(),
                source: model.nodes()[p.source].id.clone(),
                sink: model.nodes()[p.sink].id.clone(),
                length_m: p.length,
                diameter_m: p.diameter,
                roughness: p.roughness,
            })
            .collect(),
        transform: if inlet_heads.is_empty() {
            None
        } else {
            Some(TransformSpec {
                remove_nodes: Vec::new(),
                set_inlets: inlet_heads
                    .iter()
                    .map(|(node, &head_m)| InletSpec {
                        node: node.clone(),
                        head_m,
                    })
                    .collect(),
            })
        },
    };
    super::write_json(path, &file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn round_trip_with_transform() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.json");
        write(
            &path,
            r#"{
                "format": "hydrostate-network",
                "version": 1,
                "nodes": [
                    {"id": "res", "elevation_m": 100.0, "is_inlet": true},
                    {"id": "a", "elevation_m": 50.0},
                    {"id": "b", "elevation_m": 48.0},
                    {"id": "c", "elevation_m": 47.0}
                ],
                "pipes": [
                    {"id": "pr", "source": "res", "sink": "a", "length_m": 10.0, "diameter_m": 0.4, "roughness": 120.0},
                    {"id": "p0", "source": "a", "sink": "b", "length_m": 100.0, "diameter_m": 0.2, "roughness": 110.0},
                    {"id": "p1", "source": "b", "sink": "c", "length_m": 150.0, "diameter_m": 0.2, "roughness": 110.0}
                ],
                "transform": {
                    "remove_nodes": ["res"],
                    "set_inlets": [{"node": "a", "head_m": 76.0}]
                }
            }"#,
        );
        let loaded = load_network(&path).unwrap();
        // reservoir removed along with its pipe; node a re-rooted as inlet
        assert_eq!(loaded.model.node_count(), 3);
        assert_eq!(loaded.model.pipe_count(), 2);
        assert!(loaded.model.nodes()[0].is_inlet);
        assert_eq!(loaded.inlet_heads.get("a"), Some(&76.0));

        let out = dir.path().join("out.json");
        save_network(&out, &loaded.model, &loaded.inlet_heads).unwrap();
        let again = load_network(&out).unwrap();
        assert_eq!(again.model.nodes(), loaded.model.nodes());
        assert_eq!(again.model.pipes(), loaded.model.pipes());
        assert_eq!(again.inlet_heads, loaded.inlet_heads);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_versions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        write(
            &path,
            r#"{"format": "hydrostate-network", "version": 1, "nodes": [], "pipes": [], "extra": 1}"#,
        );
        assert!(matches!(load_network(&path), Err(Error::Format(_))));

        write(
            &path,
            r#"{"format": "hydrostate-network", "version": 9, "nodes": [], "pipes": []}"#,
        );
        let err = load_network(&path).unwrap_err();
        assert!(err.to_string().contains("version"));

        write(
            &path,
            r#"{"format": "something-else", "version": 1, "nodes": [], "pipes": []}"#,
        );
        assert!(load_network(&path).is_err());
    }

    #[test]
    fn parse_errors_name_the_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("broken.json");
        write(&path, "{ this is not json");
        let err = load_network(&path).unwrap_err();
        assert!(err.to_string().contains("broken.json"));
    }
}
