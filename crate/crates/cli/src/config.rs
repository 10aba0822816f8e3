use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use ctan_core::ctdg::{
    chronological_split, read_events_file, read_jodie_file, EventStream, IngestOptions, NodeId, SplitSpec,
};
use ctan_core::datagen::{PathGraphDataset, EVENTS_FILE};
use ctan_core::harness::{draw_negatives, Task, TrainConfig};
use ctan_core::model::{CtanConfig, ReadoutKind};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Directory written by `generate path`.
    Path,
    /// Native event CSV, or a directory containing `events.csv`.
    Events,
    /// JODIE-layout interaction CSV.
    Jodie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub path: PathBuf,
    /// Seed of the negative destinations drawn for link prediction.
    #[serde(default)]
    pub negative_seed: u64,
    /// Keep only the first `max_events` events of a link stream.
    #[serde(default)]
    pub max_events: Option<usize>,
    /// Chronological train/val/test fractions of a link stream.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_split() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: CtanConfig,
    pub train: TrainConfig,
}

pub enum Dataset {
    Path(PathGraphDataset),
    Link {
        stream: EventStream,
        split: SplitSpec,
        negatives: Vec<Option<NodeId>>,
    },
}

impl Dataset {
    pub fn task(&self) -> Task {
        match self {
            Dataset::Path(_) => Task::SequenceCls,
            Dataset::Link { .. } => Task::LinkPred,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Dataset::Path(d) => d
                .instances
                .first()
                .map_or((1, 1), |g| (g.stream.node_dim(), g.stream.edge_dim())),
            Dataset::Link { stream, .. } => (stream.node_dim(), stream.edge_dim()),
        }
    }
}

/// Relative paths are taken from the data root when one is set.
pub fn under_root(root: Option<&Path>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

pub fn load_dataset(data: &DataConfig, root: Option<&Path>) -> Result<Dataset, Failure> {
    let path = under_root(root, &data.path);
    if !path.exists() {
        return Err(Failure::io(format!("data not found: {}", path.display())));
    }
    if data.kind == DataKind::Path {
        return Ok(Dataset::Path(PathGraphDataset::read_dir(&path)?));
    }
    let mut stream = match data.kind {
        DataKind::Events if path.is_dir() => read_events_file(&path.join(EVENTS_FILE), IngestOptions::default())?,
        DataKind::Events => read_events_file(&path, IngestOptions::default())?,
        _ => read_jodie_file(&path)?,
    };
    if let Some(n) = data.max_events {
        if n < stream.len() {
            stream = stream.slice(0..n)?;
        }
    }
    let [a, b, c] = data.split;
    let split = chronological_split(stream.len(), (a, b, c))?;
    let negatives = draw_negatives(&stream, &split, data.negative_seed)?;
    Ok(Dataset::Link {
        stream,
        split,
        negatives,
    })
}

fn object(v: &Value, what: &str) -> Result<Map<String, Value>, Failure> {
    match v {
        Value::Object(m) => Ok(m.clone()),
        Value::Null => Ok(Map::new()),
        _ => Err(Failure::usage(format!("{what} must be a JSON object"))),
    }
}

fn overlay(base: Value, user: &Map<String, Value>) -> Value {
    let mut m = match base {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    for (k, v) in user {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

/// Fills every default, takes feature widths and the task from the data,
/// and rejects unknown keys.
pub fn resolve(raw: &Value, root: Option<&Path>) -> Result<(RunConfig, Dataset), Failure> {
    let top = object(raw, "config")?;
    if let Some(k) = top.keys().find(|k| !["data", "model", "train"].contains(&k.as_str())) {
        return Err(Failure::usage(format!("unknown config key `{k}`")));
    }
    let data: DataConfig = serde_json::from_value(
        top.get("data")
            .cloned()
            .ok_or_else(|| Failure::usage("config needs a `data` block"))?,
    )
    .map_err(|e| Failure::usage(format!("data block: {e}")))?;
    let dataset = load_dataset(&data, root)?;
    let task = dataset.task();
    let (node_dim, edge_dim) = dataset.dims();

    let mut model_base = CtanConfig {
        node_dim,
        edge_dim,
        ..CtanConfig::default()
    };
    let mut train_base = TrainConfig::sequence();
    if task == Task::LinkPred {
        model_base.readout = ReadoutKind::Pair;
        model_base.time_dim = 16;
        train_base = TrainConfig::link();
    }
    let model_user = object(top.get("model").unwrap_or(&Value::Null), "model")?;
    let train_user = object(top.get("train").unwrap_or(&Value::Null), "train")?;
    let model: CtanConfig =
        serde_json::from_value(overlay(serde_json::to_value(model_base).expect("model"), &model_user))
            .map_err(|e| Failure::usage(format!("model block: {e}")))?;
    let train: TrainConfig =
        serde_json::from_value(overlay(serde_json::to_value(train_base).expect("train"), &train_user))
            .map_err(|e| Failure::usage(format!("train block: {e}")))?;
    if train.task != task {
        return Err(Failure::usage(format!(
            "train.task {:?} does not match {:?} data",
            train.task, data.kind
        )));
    }
    if (model.node_dim, model.edge_dim) != (node_dim, edge_dim) {
        return Err(Failure::usage(format!(
            "dimension mismatch: model node/edge dims {}/{} but data has {node_dim}/{edge_dim}",
            model.node_dim, model.edge_dim
        )));
    }
    model.validate()?;
    train.validate()?;
    Ok((RunConfig { data, model, train }, dataset))
}

/// Sets `block.key` in a raw config.
fn set_dotted(raw: &mut Value, key: &str, v: Value) -> Result<(), Failure> {
    let (block, field) = key
        .split_once('.')
        .ok_or_else(|| Failure::usage(format!("grid key `{key}` must look like `model.epsilon`")))?;
    let top = raw
        .as_object_mut()
        .ok_or_else(|| Failure::usage("config must be a JSON object"))?;
    let entry = top
        .entry(block.to_string())
        .or_insert_with(|| Value::Object(Map::new()));
    match entry {
        Value::Object(m) => {
            m.insert(field.to_string(), v);
            Ok(())
        }
        _ => Err(Failure::usage(format!("`{block}` must be a JSON object"))),
    }
}

/// Expands a grid file into override sets. An object of arrays is the
/// Cartesian product in key order; an array of objects lists the points.
pub fn expand_grid(grid: &Value) -> Result<Vec<Map<String, Value>>, Failure> {
    match grid {
        Value::Array(points) => points
            .iter()
            .map(|p| object(p, "grid point"))
            .collect::<Result<Vec<_>, _>>(),
        Value::Object(axes) => {
            let mut out = vec![Map::new()];
            for (k, vals) in axes {
                let vals = vals
                    .as_array()
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| Failure::usage(format!("grid axis `{k}` must be a non-empty array")))?;
                out = out
                    .into_iter()
                    .flat_map(|m| {
                        vals.iter().map(move |v| {
                            let mut m = m.clone();
                            m.insert(k.clone(), v.clone());
                            m
                        })
                    })
                    .collect();
            }
            Ok(out)
        }
        _ => Err(Failure::usage(
            "grid must be an object of arrays or an array of objects",
        )),
    }
}

pub fn apply_overrides(raw: &Value, overrides: &Map<String, Value>) -> Result<Value, Failure> {
    let mut v = raw.clone();
    for (k, x) in overrides {
        set_dotted(&mut v, k, x.clone())?;
    }
    Ok(v)
}
