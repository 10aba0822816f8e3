//! Synthetic benchmarks: temporal path graphs that require remembering a
//! signal across the whole graph, and a periodic user–item stream for link
//! prediction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{
    chronological_split, read_events_file, write_events_file, EventKind, EventStream, IngestOptions, NodeId, SplitSpec,
    DEFAULT_RATIOS,
};
use crate::error::{Error, Result};

/// One path `u₀ → u₁ → … → u_{n−1}` observed edge by edge. The label is
/// the input feature of `u₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGraphInstance {
    pub n: usize,
    pub label: i8,
    /// Nodes are named `0..n`; event `t` at time `t` links `t → t + 1`.
    pub stream: EventStream,
}

impl PathGraphInstance {
    /// Destination of the last event, whose state the classifier reads.
    pub fn target(&self) -> NodeId {
        NodeId(self.n as u32 - 1)
    }
}

/// Draws one instance from `rng`.
pub fn gen_path_graph_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PathGraphInstance> {
    if n < 2 {
        return Err(Error::Contract(format!("a path needs at least 2 nodes, got {n}")));
    }
    let label: i8 = if rng.gen::<bool>() { 1 } else { -1 };
    let mut x = vec![label as f64];
    for _ in 1..n {
        x.push(rng.gen_range(-1.0..=1.0));
    }
    let mut stream = EventStream::new(1, 1);
    for j in 0..n {
        stream.intern(&j.to_string());
    }
    for t in 0..n - 1 {
        let e: f64 = rng.gen_range(-1.0..=1.0);
        stream.push(
            t as f64,
            EventKind::EdgeAdd,
            NodeId(t as u32),
            Some(NodeId(t as u32 + 1)),
            &[x[t]],
            &[x[t + 1]],
            &[e],
        )?;
    }
    Ok(PathGraphInstance { n, label, stream })
}

pub fn gen_path_graph(n: usize, seed: u64) -> Result<PathGraphInstance> {
    gen_path_graph_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathGraphDataset {
    pub n: usize,
    pub seed: u64,
    pub instances: Vec<PathGraphInstance>,
    /// Split over instance indices.
    pub split: SplitSpec,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathManifest {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    /// Instance `i` occupies times `[i·time_stride, i·time_stride + n − 1)`
    /// of the combined event file.
    pub time_stride: u64,
    pub split: SplitSpec,
}

pub const EVENTS_FILE: &str = "events.csv";
pub const LABELS_FILE: &str = "labels.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `count` independent instances; instance `i` is drawn from stream `i` of
/// the generator seeded with `seed`, so any instance can be regenerated on
/// its own.
pub fn gen_path_dataset(n: usize, count: usize, seed: u64) -> Result<PathGraphDataset> {
    if count < 10 {
        return Err(Error::Contract(format!("need at least 10 instances, got {count}")));
    }
    let instances = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            gen_path_graph_with(n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathGraphDataset {
        n,
        seed,
        instances,
        split: chronological_split(count, DEFAULT_RATIOS)?,
    })
}

impl PathGraphDataset {
    pub fn manifest(&self) -> PathManifest {
        PathManifest {
            n: self.n,
            count: self.instances.len(),
            seed: self.seed,
            time_stride: self.n as u64,
            split: self.split,
        }
    }

    /// All instances in one stream: node `j` of instance `i` is named
    /// `i·n + j` and instance times are offset by `i·n`.
    pub fn combined_stream(&self) -> Result<EventStream> {
        let n = self.n;
        let mut out = EventStream::new(1, 1);
        for (i, inst) in self.instances.iter().enumerate() {
            let ids: Vec<NodeId> = (0..n).map(|j| out.intern(&(i * n + j).to_string())).collect();
            for e in inst.stream.iter() {
                out.push(
                    e.time + (i * n) as f64,
                    e.kind,
                    ids[e.src.index()],
                    e.dst.map(|d| ids[d.index()]),
                    e.src_features,
                    e.dst_features,
                    e.edge_features,
                )?;
            }
        }
        Ok(out)
    }

    pub fn labels(&self) -> BTreeMap<usize, i8> {
        self.instances.iter().enumerate().map(|(i, x)| (i, x.label)).collect()
    }

    /// Writes `events.csv`, `labels.json` and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_events_file(&self.combined_stream()?, &dir.join(EVENTS_FILE))?;
        std::fs::write(
            dir.join(LABELS_FILE),
            serde_json::to_string_pretty(&self.labels())? + "\n",
        )?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest())? + "\n",
        )?;
        Ok(())
    }

    /// Reads a directory written by [`write_dir`](Self::write_dir).
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: PathManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let labels: BTreeMap<usize, i8> = serde_json::from_str(&std::fs::read_to_string(dir.join(LABELS_FILE))?)?;
        let all = read_events_file(&dir.join(EVENTS_FILE), IngestOptions::default())?;
        let (n, count) = (manifest.n, manifest.count);
        if n < 2 || all.len() != count * (n - 1) || labels.len() != count {
            return Err(Error::Contract(format!(
                "dataset holds {} events and {} labels, manifest promises {count} paths of {n} nodes",
                all.len(),
                labels.len()
            )));
        }
        if manifest.split.len != count {
            return Err(Error::Split("manifest split does not cover every instance".into()));
        }
        let mut instances = Vec::with_capacity(count);
        for i in 0..count {
            let label = *labels
                .get(&i)
                .ok_or_else(|| Error::Contract(format!("no label for instance {i}")))?;
            let mut stream = EventStream::new(all.node_dim(), all.edge_dim());
            for j in 0..n {
                stream.intern(&j.to_string());
            }
            let base = (i * n) as f64;
            for k in 0..n - 1 {
                let e = all.get(i * (n - 1) + k);
                let local = |u: NodeId| -> Result<NodeId> {
                    all.name(u)
                        .parse::<usize>()
                        .ok()
                        .and_then(|g| g.checked_sub(i * n))
                        .filter(|&j| j < n)
                        .map(|j| NodeId(j as u32))
                        .ok_or_else(|| Error::Contract(format!("node `{}` outside instance {i}", all.name(u))))
                };
                let dst = e.dst.map(local).transpose()?;
                stream.push(
                    e.time - base,
                    e.kind,
                    local(e.src)?,
                    dst,
                    e.src_features,
                    e.dst_features,
                    e.edge_features,
                )?;
            }
            instances.push(PathGraphInstance { n, label, stream });
        }
        Ok(Self {
            n,
            seed: manifest.seed,
            instances,
            split: manifest.split,
        })
    }
}

/// User–item stream where user `u` acts at times `t ≡ u (mod users)` and
/// always picks item `(u + ⌊t / period⌋) mod items`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicBipartite {
    pub users: usize,
    pub items: usize,
    /// `None` keeps every user on one item forever.
    pub period: Option<u64>,
}

impl PeriodicBipartite {
    /// The `(user, item)` pair of the event at integer time `t`.
    pub fn pair_at(&self, t: u64) -> (usize, usize) {
        let u = (t % self.users as u64) as usize;
        let shift = self.period.map_or(0, |p| t / p);
        (u, ((u as u64 + shift) % self.items as u64) as usize)
    }
}

/// `events` interactions at times `0, 1, 2, …`; users are named `u{k}` and
/// items `i{k}`, interned users first. Each event carries one edge feature
/// drawn uniformly from `[−1, 1]`, pure noise with respect to the pattern.
pub fn gen_periodic_bipartite(
    users: usize,
    items: usize,
    period: Option<u64>,
    events: usize,
    seed: u64,
) -> Result<EventStream> {
    if users < 2 || items < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 users and 2 items, got {users}×{items}"
        )));
    }
    if period == Some(0) {
        return Err(Error::Contract("period must be positive".into()));
    }
    let gen = PeriodicBipartite { users, items, period };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = EventStream::new(0, 1);
    let user_ids: Vec<NodeId> = (0..users).map(|u| s.intern(&format!("u{u}"))).collect();
    let item_ids: Vec<NodeId> = (0..items).map(|j| s.intern(&format!("i{j}"))).collect();
    for t in 0..events as u64 {
        let (u, j) = gen.pair_at(t);
        let e: f64 = rng.gen_range(-1.0..=1.0);
        s.push(
            t as f64,
            EventKind::EdgeAdd,
            user_ids[u],
            Some(item_ids[j]),
            &[],
            &[],
            &[e],
        )?;
    }
    Ok(s)
}
