use crate::ctdg::event::NodeId;
use crate::error::{dim_err, Error, Result};

/// Persistent node embeddings and last-event times.
///
/// Untouched nodes read as the zero vector, and their last-event time reads
/// as the query time so the elapsed-time encoding sees zero.
#[derive(Clone, Debug)]
pub struct NodeStateTable {
    dim: usize,
    states: Vec<f64>,
    last: Vec<Option<f64>>,
}

impl NodeStateTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            states: Vec::new(),
            last: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reset(&mut self) {
        self.states.clear();
        self.last.clear();
    }

    fn grow(&mut self, u: NodeId) {
        if self.last.len() <= u.index() {
            self.last.resize(u.index() + 1, None);
            self.states.resize((u.index() + 1) * self.dim, 0.0);
        }
    }

    pub fn state(&self, u: NodeId) -> Option<&[f64]> {
        self.last.get(u.index()).copied().flatten()?;
        Some(&self.states[u.index() * self.dim..(u.index() + 1) * self.dim])
    }

    pub fn is_touched(&self, u: NodeId) -> bool {
        matches!(self.last.get(u.index()), Some(Some(_)))
    }

    /// `(h_u, t_u⁻)` as seen at time `now`.
    pub fn read(&self, u: NodeId, now: f64) -> (Vec<f64>, f64) {
        match self.last.get(u.index()).copied().flatten() {
            Some(t) => (self.state(u).expect("touched").to_vec(), t),
            None => (vec![0.0; self.dim], now),
        }
    }

    pub fn last_time(&self, u: NodeId, now: f64) -> f64 {
        self.last.get(u.index()).copied().flatten().unwrap_or(now)
    }

    /// Stores `h` as the state of `u` at time `t`.
    pub fn write(&mut self, u: NodeId, h: &[f64], t: f64) -> Result<()> {
        if h.len() != self.dim {
            return Err(dim_err(
                "state_write",
                format!("state of length {} for table of dim {}", h.len(), self.dim),
            ));
        }
        if let Some(Some(prev)) = self.last.get(u.index()) {
            if t < *prev {
                return Err(Error::Causality(format!(
                    "state write for node {u} at {t} precedes its last event at {prev}"
                )));
            }
        }
        self.grow(u);
        self.states[u.index() * self.dim..(u.index() + 1) * self.dim].copy_from_slice(h);
        self.last[u.index()] = Some(t);
        Ok(())
    }
}
