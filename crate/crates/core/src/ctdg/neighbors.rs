use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::event::NodeId;
use crate::error::{Error, Result};

/// One historical interaction seen from the perspective of a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborEntry {
    pub neighbor: NodeId,
    pub time: f64,
    /// Row of the edge-feature arena holding this interaction's features.
    pub edge: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// The k most recent interactions.
    #[default]
    Recent,
    /// k interactions drawn uniformly without replacement.
    Uniform,
}

/// Per-node chronological interaction lists supporting "strictly before t"
/// queries.
#[derive(Clone, Debug, Default)]
pub struct NeighborStore {
    lists: Vec<Vec<NeighborEntry>>,
}

impl NeighborStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn list_mut(&mut self, u: NodeId) -> &mut Vec<NeighborEntry> {
        if self.lists.len() <= u.index() {
            self.lists.resize_with(u.index() + 1, Vec::new);
        }
        &mut self.lists[u.index()]
    }

    /// Records an undirected interaction between `u` and `v`.
    pub fn insert(&mut self, u: NodeId, v: NodeId, time: f64, edge: u32) -> Result<()> {
        for (a, b) in [(u, v), (v, u)] {
            let list = self.list_mut(a);
            if let Some(last) = list.last() {
                if time < last.time {
                    return Err(Error::Causality(format!(
                        "interaction at {time} older than history of node {a} ({})",
                        last.time
                    )));
                }
            }
            list.push(NeighborEntry {
                neighbor: b,
                time,
                edge,
            });
            if u == v {
                break;
            }
        }
        Ok(())
    }

    pub fn history(&self, u: NodeId) -> &[NeighborEntry] {
        self.lists.get(u.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    fn before(&self, u: NodeId, t: f64) -> &[NeighborEntry] {
        let list = self.history(u);
        let end = list.partition_point(|e| e.time < t);
        &list[..end]
    }

    /// The `k` most recent entries with time strictly below `t`,
    /// most recent first. Unknown nodes have no history.
    pub fn neighbors_before(&self, u: NodeId, t: f64, k: usize) -> Vec<NeighborEntry> {
        self.before(u, t).iter().rev().take(k).copied().collect()
    }

    /// Up to `k` entries before `t` chosen uniformly without replacement,
    /// returned most recent first.
    pub fn sample_before<R: Rng + ?Sized>(&self, u: NodeId, t: f64, k: usize, rng: &mut R) -> Vec<NeighborEntry> {
        let hist = self.before(u, t);
        if hist.len() <= k {
            return hist.iter().rev().copied().collect();
        }
        let mut picked: Vec<usize> = sample(rng, hist.len(), k).into_vec();
        picked.sort_unstable_by(|a, b| b.cmp(a));
        picked.into_iter().map(|i| hist[i]).collect()
    }

    pub fn query<R: Rng + ?Sized>(
        &self,
        kind: SamplerKind,
        u: NodeId,
        t: f64,
        k: usize,
        rng: &mut R,
    ) -> Vec<NeighborEntry> {
        match kind {
            SamplerKind::Recent => self.neighbors_before(u, t, k),
            SamplerKind::Uniform => self.sample_before(u, t, k, rng),
        }
    }
}
