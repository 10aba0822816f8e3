//! Per-event propagation over the temporal neighborhood of the event's
//! endpoints.

use std::collections::HashMap;

use rand::Rng;

use crate::ctdg::{EventKind, EventRef, NeighborStore, NodeId, NodeStateTable};
use crate::error::{dim_err, Error, Result};
use crate::model::layers::{self, AttnInput};
use crate::model::params::ParamVars;
use crate::model::CtanModel;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Everything the model remembers between events: committed node states,
/// interaction history and the features of every stored interaction.
#[derive(Clone, Debug)]
pub struct Memory {
    pub states: NodeStateTable,
    pub neighbors: NeighborStore,
    edge_dim: usize,
    edge_feats: Vec<f64>,
}

impl Memory {
    pub fn new(dim: usize, edge_dim: usize) -> Self {
        Self {
            states: NodeStateTable::new(dim),
            neighbors: NeighborStore::new(),
            edge_dim,
            edge_feats: Vec::new(),
        }
    }

    pub fn for_model(model: &CtanModel) -> Self {
        Self::new(model.config.dim, model.config.edge_dim)
    }

    pub fn reset(&mut self) {
        self.states.reset();
        self.neighbors = NeighborStore::new();
        self.edge_feats.clear();
    }

    /// Records the interaction `(u, v)` at `time` with its features.
    pub fn insert_edge(&mut self, u: NodeId, v: NodeId, time: f64, features: &[f64]) -> Result<()> {
        if !features.is_empty() && features.len() != self.edge_dim {
            return Err(dim_err(
                "insert_edge",
                format!("{} edge features, expected {}", features.len(), self.edge_dim),
            ));
        }
        let id = if self.edge_dim == 0 {
            0
        } else {
            (self.edge_feats.len() / self.edge_dim) as u32
        };
        self.neighbors.insert(u, v, time, id)?;
        if features.is_empty() {
            self.edge_feats.extend(std::iter::repeat_n(0.0, self.edge_dim));
        } else {
            self.edge_feats.extend_from_slice(features);
        }
        Ok(())
    }

    fn edge_features(&self, edge: u32) -> &[f64] {
        let d = self.edge_dim;
        &self.edge_feats[edge as usize * d..(edge as usize + 1) * d]
    }
}

/// One recorded computation. States produced inside the session stay on
/// the tape, so later events read them differentiably until [`commit`]
/// detaches them into the [`Memory`].
///
/// [`commit`]: Session::commit
pub struct Session<'m> {
    model: &'m CtanModel,
    pub tape: Tape,
    pub vars: ParamVars,
    overlay: HashMap<NodeId, (Var, f64)>,
}

/// A node taking part in one propagation.
struct Slot {
    node: NodeId,
    /// Number of Euler steps this node runs; later layers reuse its last
    /// value.
    depth: usize,
    /// Neighbor slots and projected edge representations, self first.
    set: Vec<(usize, Var)>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m CtanModel) -> Result<Self> {
        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape, model.config.gamma)?;
        Ok(Self {
            model,
            tape,
            vars,
            overlay: HashMap::new(),
        })
    }

    pub fn model(&self) -> &CtanModel {
        self.model
    }

    /// Current state handle and last-event time of `u`.
    pub fn node_state(&mut self, mem: &Memory, u: NodeId, now: f64) -> (Var, f64) {
        if let Some(&(v, t)) = self.overlay.get(&u) {
            return (v, t);
        }
        let (h, t) = mem.states.read(u, now);
        (self.tape.constant(Tensor::vector(h)), t)
    }

    fn last_time(&self, mem: &Memory, u: NodeId, now: f64) -> f64 {
        match self.overlay.get(&u) {
            Some(&(_, t)) => t,
            None => mem.states.last_time(u, now),
        }
    }

    /// Value of the latest state of `u`, as it would be committed.
    pub fn state_value(&self, mem: &Memory, u: NodeId) -> Vec<f64> {
        match self.overlay.get(&u) {
            Some(&(v, _)) => self.tape.value(v).data().to_vec(),
            None => mem.states.read(u, 0.0).0,
        }
    }

    /// Writes every state produced in this session into `mem` and forgets
    /// their tape handles.
    pub fn commit(&mut self, mem: &mut Memory) -> Result<()> {
        let mut touched: Vec<_> = self.overlay.drain().collect();
        touched.sort_by_key(|(u, _)| *u);
        for (u, (v, t)) in touched {
            mem.states.write(u, self.tape.value(v).data(), t)?;
        }
        Ok(())
    }

    fn edge_proj(&mut self, features: &[f64], dt: f64) -> Result<Var> {
        let dt = dt / self.model.dt_scale;
        let e_hat = layers::edge_repr(&mut self.tape, &self.vars, features, dt)?;
        self.tape.matmul(self.vars.v_e, e_hat)
    }

    /// Builds the propagation subgraph around `seeds` and runs the Euler
    /// steps. `full` runs every node within `L` hops for all steps, as when
    /// an event is absorbed; otherwise only the part of the computation
    /// tree the seeds' final embeddings depend on is evaluated.
    #[allow(clippy::too_many_arguments)]
    fn propagate<R: Rng + ?Sized>(
        &mut self,
        mem: &Memory,
        seeds: &[(NodeId, &[f64])],
        t: f64,
        current: Option<(NodeId, NodeId, &[f64])>,
        full: bool,
        rng: &mut R,
    ) -> Result<(Vec<Slot>, Vec<Vec<Var>>)> {
        let model = self.model;
        let cfg = &model.config;
        let l = cfg.layers;
        let mut index: HashMap<NodeId, usize> = HashMap::new();
        let mut slots: Vec<Slot> = Vec::new();
        let mut hops: Vec<usize> = Vec::new();
        for &(u, _) in seeds {
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(u) {
                e.insert(slots.len());
                slots.push(Slot {
                    node: u,
                    depth: 0,
                    set: Vec::new(),
                });
                hops.push(0);
            }
        }
        let depth_of = |hop: usize| {
            if full {
                if hop <= l {
                    l
                } else {
                    0
                }
            } else {
                l - hop.min(l)
            }
        };

        let mut i = 0;
        while i < slots.len() {
            let hop = hops[i];
            let depth = depth_of(hop);
            slots[i].depth = depth;
            if depth == 0 {
                i += 1;
                continue;
            }
            let u = slots[i].node;
            let mut found: Vec<(NodeId, Option<u32>, &[f64])> = Vec::new();
            if let Some((a, b, feats)) = current {
                if u == a {
                    found.push((b, None, feats));
                } else if u == b {
                    found.push((a, None, feats));
                }
            }
            for e in mem.neighbors.query(cfg.sampler, u, t, cfg.sampler_k, rng) {
                found.push((e.neighbor, Some(e.edge), &[]));
            }
            let mut set = Vec::with_capacity(found.len() + 1);
            let self_dt = t - self.last_time(mem, u, t);
            let zeros = vec![0.0; cfg.edge_dim];
            set.push((i, self.edge_proj(&zeros, self_dt)?));
            for (v, edge, feats) in found {
                let j = match index.get(&v) {
                    Some(&j) => j,
                    None => {
                        index.insert(v, slots.len());
                        slots.push(Slot {
                            node: v,
                            depth: 0,
                            set: Vec::new(),
                        });
                        hops.push(hop + 1);
                        slots.len() - 1
                    }
                };
                let dt = t - self.last_time(mem, v, t);
                let proj = match edge {
                    Some(id) => {
                        let f = mem.edge_features(id).to_vec();
                        self.edge_proj(&f, dt)?
                    }
                    None => self.edge_proj(feats, dt)?,
                };
                set.push((j, proj));
            }
            slots[i].set = set;
            i += 1;
        }

        // Initial conditions.
        let inputs: HashMap<NodeId, &[f64]> = seeds.iter().copied().collect();
        let mut h: Vec<Vec<Var>> = Vec::with_capacity(slots.len());
        for s in &slots {
            let (stored, _) = self.node_state(mem, s.node, t);
            let x = inputs.get(&s.node).copied().unwrap_or(&[]);
            let h0 = layers::psi_apply(&mut self.tape, &self.vars, &self.model.config, stored, x)?;
            h.push(vec![h0]);
        }

        let heads = self.model.config.heads;
        let vars = self.vars;
        for layer in 1..=l {
            // Per-node projections of the previous step, shared by every
            // attention set that contains the node.
            let mut keys: HashMap<usize, (Var, Var)> = HashMap::new();
            for s in slots.iter().filter(|s| s.depth >= layer) {
                for &(j, _) in &s.set {
                    if keys.contains_key(&j) {
                        continue;
                    }
                    let hv = *h[j].get(layer - 1).unwrap_or_else(|| h[j].last().expect("h0"));
                    let k = self.tape.matmul(vars.v_k, hv)?;
                    let v = self.tape.matmul(vars.v_n, hv)?;
                    keys.insert(j, (k, v));
                }
            }
            let mut next: Vec<(usize, Var)> = Vec::new();
            for (i, s) in slots.iter().enumerate().filter(|(_, s)| s.depth >= layer) {
                let hu = h[i][layer - 1];
                let q = self.tape.matmul(vars.v_q, hu)?;
                let inputs: Vec<AttnInput> = s
                    .set
                    .iter()
                    .map(|&(j, e)| AttnInput {
                        key_node: keys[&j].0,
                        value_node: keys[&j].1,
                        edge_proj: e,
                    })
                    .collect();
                let att = layers::attend(&mut self.tape, q, &inputs, heads)?;
                let out = layers::euler_layer(&mut self.tape, &vars, &self.model.config, hu, att.output)?;
                next.push((i, out));
            }
            for (i, out) in next {
                h[i].push(out);
            }
        }
        Ok((slots, h))
    }

    /// Absorbs one event: propagates it `L` hops from its endpoints, stores
    /// the resulting states of every node within `L` hops and finally adds
    /// the interaction to the history. Only the endpoints' last-event times
    /// advance.
    pub fn process_event<R: Rng + ?Sized>(&mut self, mem: &mut Memory, ev: &EventRef, rng: &mut R) -> Result<()> {
        for u in std::iter::once(ev.src).chain(ev.dst) {
            let last = self.last_time(mem, u, ev.time);
            if ev.time < last {
                return Err(Error::Causality(format!(
                    "event at {} precedes the last event of node {u} at {last}",
                    ev.time
                )));
            }
        }
        let mut seeds: Vec<(NodeId, &[f64])> = vec![(ev.src, ev.src_features)];
        let mut current = None;
        if let (EventKind::EdgeAdd, Some(dst)) = (ev.kind, ev.dst) {
            if dst != ev.src {
                seeds.push((dst, ev.dst_features));
            }
            current = Some((ev.src, dst, ev.edge_features));
        }
        let (slots, h) = self.propagate(mem, &seeds, ev.time, current, true, rng)?;
        for (s, hs) in slots.iter().zip(&h) {
            if s.depth > 0 {
                // Only the endpoints take part in the event; relayed nodes
                // keep the time of their own last event.
                let endpoint = s.node == ev.src || Some(s.node) == ev.dst;
                let t = if endpoint {
                    ev.time
                } else {
                    self.last_time(mem, s.node, ev.time)
                };
                self.overlay.insert(s.node, (*hs.last().expect("h"), t));
            }
        }
        if let Some(dst) = ev.dst {
            mem.insert_edge(ev.src, dst, ev.time, ev.edge_features)?;
        }
        Ok(())
    }

    /// Embeddings of `nodes` as of time `t`, computed without absorbing any
    /// event and without touching the stored states.
    pub fn embed<R: Rng + ?Sized>(&mut self, mem: &Memory, nodes: &[NodeId], t: f64, rng: &mut R) -> Result<Vec<Var>> {
        let seeds: Vec<(NodeId, &[f64])> = nodes.iter().map(|&u| (u, &[][..])).collect();
        let (slots, h) = self.propagate(mem, &seeds, t, None, false, rng)?;
        let pos: HashMap<NodeId, usize> = slots.iter().enumerate().map(|(i, s)| (s.node, i)).collect();
        Ok(nodes.iter().map(|u| *h[pos[u]].last().expect("h")).collect())
    }

    /// Logit of the sequence readout on the latest state of `u`.
    pub fn sequence_logit(&mut self, mem: &Memory, u: NodeId, now: f64) -> Result<Var> {
        let (h, _) = self.node_state(mem, u, now);
        layers::readout_sequence(&mut self.tape, &self.vars, h)
    }

    pub fn link_logit(&mut self, h_src: Var, h_dst: Var) -> Result<Var> {
        layers::readout_link(&mut self.tape, &self.vars, h_src, h_dst)
    }

    /// Gradients of `loss` with respect to every parameter, in
    /// [`PARAM_NAMES`](crate::model::PARAM_NAMES) order.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Tensor>> {
        let g = self.tape.backward(loss)?;
        Ok(self.vars.leaves().iter().map(|&v| g.get(v)).collect())
    }
}
