use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Dense node identifier assigned by interning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    NodeCreate,
    EdgeAdd,
}

/// One row of the stream. Feature vectors live in the owning
/// [`EventStream`]'s arenas and are reached through [`EventStream::get`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub src: NodeId,
    pub dst: Option<NodeId>,
}

/// Borrowed view of an event together with its features.
#[derive(Clone, Copy, Debug)]
pub struct EventRef<'a> {
    pub index: usize,
    pub time: f64,
    pub kind: EventKind,
    pub src: NodeId,
    pub dst: Option<NodeId>,
    pub src_features: &'a [f64],
    pub dst_features: &'a [f64],
    pub edge_features: &'a [f64],
}

/// A validated, time-ordered stream of C-TDG events with interned node ids.
///
/// Edge features are stored once per event; neighbor entries refer to them
/// by event index.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    node_dim: usize,
    edge_dim: usize,
    names: Vec<String>,
    ids: HashMap<String, NodeId>,
    events: Vec<Event>,
    src_feats: Vec<f64>,
    dst_feats: Vec<f64>,
    edge_feats: Vec<f64>,
}

impl EventStream {
    pub fn new(node_dim: usize, edge_dim: usize) -> Self {
        Self {
            node_dim,
            edge_dim,
            names: Vec::new(),
            ids: HashMap::new(),
            events: Vec::new(),
            src_feats: Vec::new(),
            dst_feats: Vec::new(),
            edge_feats: Vec::new(),
        }
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::EdgeAdd).count()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    /// Returns the id for `name`, assigning the next free id on first sight.
    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, index: usize) -> EventRef<'_> {
        let e = &self.events[index];
        let (dn, de) = (self.node_dim, self.edge_dim);
        EventRef {
            index,
            time: e.time,
            kind: e.kind,
            src: e.src,
            dst: e.dst,
            src_features: &self.src_feats[index * dn..(index + 1) * dn],
            dst_features: &self.dst_feats[index * dn..(index + 1) * dn],
            edge_features: &self.edge_feats[index * de..(index + 1) * de],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = EventRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Flat edge-feature arena, `edge_dim` values per event.
    pub fn edge_arena(&self) -> &[f64] {
        &self.edge_feats
    }

    /// Appends an event. Empty feature slices stand for zero vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        time: f64,
        kind: EventKind,
        src: NodeId,
        dst: Option<NodeId>,
        src_features: &[f64],
        dst_features: &[f64],
        edge_features: &[f64],
    ) -> Result<()> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Contract(format!("event time {time} must be finite and >= 0")));
        }
        if let Some(last) = self.events.last() {
            if time < last.time {
                return Err(Error::Causality(format!(
                    "event time {time} precedes previous event time {}",
                    last.time
                )));
            }
        }
        match (kind, dst) {
            (EventKind::EdgeAdd, None) => return Err(Error::Contract("edge event without destination".into())),
            (EventKind::NodeCreate, Some(_)) => return Err(Error::Contract("node event with destination".into())),
            _ => {}
        }
        for id in std::iter::once(src).chain(dst) {
            if id.index() >= self.names.len() {
                return Err(Error::Contract(format!("node id {id} was never interned")));
            }
        }
        extend_features(&mut self.src_feats, src_features, self.node_dim, "src features")?;
        extend_features(&mut self.dst_feats, dst_features, self.node_dim, "dst features")?;
        extend_features(&mut self.edge_feats, edge_features, self.edge_dim, "edge features")?;
        self.events.push(Event { time, kind, src, dst });
        Ok(())
    }

    /// Copies events `range` into a new stream that shares the node naming.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<EventStream> {
        let mut out = EventStream::new(self.node_dim, self.edge_dim);
        out.names = self.names.clone();
        out.ids = self.ids.clone();
        for i in range {
            let e = self.get(i);
            out.push(
                e.time,
                e.kind,
                e.src,
                e.dst,
                e.src_features,
                e.dst_features,
                e.edge_features,
            )?;
        }
        Ok(out)
    }
}

fn extend_features(arena: &mut Vec<f64>, values: &[f64], dim: usize, what: &'static str) -> Result<()> {
    if values.is_empty() {
        arena.extend(std::iter::repeat_n(0.0, dim));
        return Ok(());
    }
    if values.len() != dim {
        return Err(dim_err(
            "EventStream::push",
            format!("{what}: expected {dim}, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{what} must be finite")));
    }
    arena.extend_from_slice(values);
    Ok(())
}
