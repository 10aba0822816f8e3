use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::ctdg::event::{EventKind, EventStream, NodeId};
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Index boundaries over a time-ordered list:
/// train `[0, train_end)`, val `[train_end, val_end)`, test `[val_end, len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub len: usize,
    pub train_end: usize,
    pub val_end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Val,
    Test,
}

impl SplitSpec {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_end, self.val_end - self.train_end, self.len - self.val_end)
    }

    pub fn range(&self, phase: Phase) -> std::ops::Range<usize> {
        match phase {
            Phase::Train => 0..self.train_end,
            Phase::Val => self.train_end..self.val_end,
            Phase::Test => self.val_end..self.len,
        }
    }

    pub fn phase_of(&self, index: usize) -> Phase {
        if index < self.train_end {
            Phase::Train
        } else if index < self.val_end {
            Phase::Val
        } else {
            Phase::Test
        }
    }
}

/// Splits `len` ordered items at `floor(r_train·len)` and
/// `floor((r_train + r_val)·len)`.
pub fn chronological_split(len: usize, ratios: (f64, f64, f64)) -> Result<SplitSpec> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    if len < 3 {
        return Err(Error::Split(format!("need at least 3 items, got {len}")));
    }
    // The epsilon keeps products like 0.7·100 from flooring to 69.
    let cut = |r: f64| ((r * len as f64) + 1e-9).floor() as usize;
    Ok(SplitSpec {
        len,
        train_end: cut(a).min(len),
        val_end: cut(a + b).min(len),
    })
}

fn pairs(stream: &EventStream, range: std::ops::Range<usize>) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    stream.events()[range]
        .iter()
        .filter(|e| e.kind == EventKind::EdgeAdd)
        .map(|e| (e.src, e.dst.expect("edge has dst")))
}

/// Fraction of test edge occurrences whose `(src, dst)` pair never occurs in
/// the train or validation portion.
pub fn surprise_index(stream: &EventStream, split: &SplitSpec) -> Result<f64> {
    let seen: HashSet<(NodeId, NodeId)> = pairs(stream, 0..split.val_end).collect();
    let (mut total, mut unseen) = (0usize, 0usize);
    for p in pairs(stream, split.range(Phase::Test)) {
        total += 1;
        if !seen.contains(&p) {
            unseen += 1;
        }
    }
    if total == 0 {
        return Err(Error::Undefined("surprise index of an empty test set".into()));
    }
    Ok(unseen as f64 / total as f64)
}

/// Nodes that appear as source or destination in `range`.
pub fn nodes_in(stream: &EventStream, range: std::ops::Range<usize>) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for e in &stream.events()[range] {
        out.insert(e.src);
        if let Some(d) = e.dst {
            out.insert(d);
        }
    }
    out
}

/// Summary statistics of a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub nodes: usize,
    pub edges: usize,
    pub node_events: usize,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub split: Option<(usize, usize, usize)>,
    /// `None` when the stream is too short to split or has no test edges.
    pub surprise_index: Option<f64>,
}

pub fn stream_stats(stream: &EventStream) -> StreamStats {
    let edges = stream.num_edges();
    let split = chronological_split(stream.len(), DEFAULT_RATIOS).ok();
    let surprise = split.and_then(|s| surprise_index(stream, &s).ok());
    StreamStats {
        nodes: stream.num_nodes(),
        edges,
        node_events: stream.len() - edges,
        node_feature_dim: stream.node_dim(),
        edge_feature_dim: stream.edge_dim(),
        split: split.map(|s| s.sizes()),
        surprise_index: surprise,
    }
}
