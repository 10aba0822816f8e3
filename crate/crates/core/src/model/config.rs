use serde::{Deserialize, Serialize};

use crate::ctdg::SamplerKind;
use crate::error::{Error, Result};

/// How a node's stored state and its fresh input features form the initial
/// condition of an event's propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    /// `h + pad(x)`.
    Addition,
    /// `P · (h ‖ x)`.
    Concat,
    /// `P · tanh(h ‖ x)`.
    #[default]
    TanhConcat,
}

/// Input layout of the two-layer readout MLP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    /// One node embedding (`d → d → 1`).
    #[default]
    Node,
    /// Concatenated source and destination embeddings (`2d → d → 1`).
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtanConfig {
    /// State dimension `d`.
    pub dim: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Number of forward-Euler steps `L`, one per graph convolution.
    pub layers: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub psi: PsiKind,
    pub time_dim: usize,
    pub heads: usize,
    pub sampler_k: usize,
    pub sampler: SamplerKind,
    pub readout: ReadoutKind,
}

impl Default for CtanConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            node_dim: 1,
            edge_dim: 1,
            layers: 1,
            epsilon: 1.0,
            gamma: 0.1,
            psi: PsiKind::TanhConcat,
            time_dim: 1,
            heads: 1,
            sampler_k: 5,
            sampler: SamplerKind::Recent,
            readout: ReadoutKind::Node,
        }
    }
}

impl CtanConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.layers == 0 {
            return fail("layers must be >= 1".into());
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return fail(format!("dim {} is not divisible by heads {}", self.dim, self.heads));
        }
        if self.psi == PsiKind::Addition && self.node_dim > self.dim {
            return fail(format!(
                "addition initial condition needs node_dim ({}) <= dim ({})",
                self.node_dim, self.dim
            ));
        }
        Ok(())
    }

    /// Terminal time of each per-event sub-problem, `ε · L`.
    pub fn terminal_time(&self) -> f64 {
        self.epsilon * self.layers as f64
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn readout_in(&self) -> usize {
        match self.readout {
            ReadoutKind::Node => self.dim,
            ReadoutKind::Pair => 2 * self.dim,
        }
    }
}
