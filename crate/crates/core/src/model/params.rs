use rand::Rng;

use crate::error::{dim_err, Result};
use crate::model::config::CtanConfig;
use crate::tape::{Tape, Var};
use crate::tensor::{NamedTensors, Tensor};

/// Every learnable tensor of the model. A single copy is shared by all
/// discretization steps; the raw `w` is anti-symmetrized each time it is used.
#[derive(Clone, Debug, PartialEq)]
pub struct CtanParams {
    pub w: Tensor,
    pub b: Tensor,
    pub v_n: Tensor,
    pub v_k: Tensor,
    pub v_q: Tensor,
    pub v_e: Tensor,
    pub time_w: Tensor,
    pub time_b: Tensor,
    pub psi_proj: Tensor,
    pub readout_w1: Tensor,
    pub readout_b1: Tensor,
    pub readout_w2: Tensor,
    pub readout_b2: Tensor,
}

pub const PARAM_NAMES: [&str; 13] = [
    "w",
    "b",
    "v_n",
    "v_k",
    "v_q",
    "v_e",
    "time_w",
    "time_b",
    "psi_proj",
    "readout_w1",
    "readout_b1",
    "readout_w2",
    "readout_b2",
];

impl CtanParams {
    fn shapes(cfg: &CtanConfig) -> [Vec<usize>; 13] {
        let d = cfg.dim;
        [
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, cfg.edge_dim + cfg.time_dim],
            vec![cfg.time_dim],
            vec![cfg.time_dim],
            vec![d, d + cfg.node_dim],
            vec![d, cfg.readout_in()],
            vec![d],
            vec![1, d],
            vec![1],
        ]
    }

    /// Uniform fan-in initialization, `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init<R: Rng + ?Sized>(cfg: &CtanConfig, rng: &mut R) -> Self {
        let shapes = Self::shapes(cfg);
        let fan_in = [
            cfg.dim,
            cfg.dim,
            cfg.dim,
            cfg.dim,
            cfg.dim,
            cfg.edge_dim + cfg.time_dim,
            1,
            1,
            cfg.dim + cfg.node_dim,
            cfg.readout_in(),
            cfg.readout_in(),
            cfg.dim,
            cfg.dim,
        ];
        let mut t: Vec<Tensor> = shapes
            .iter()
            .zip(fan_in)
            .map(|(s, f)| Tensor::uniform(s, 1.0 / (f.max(1) as f64).sqrt(), rng))
            .collect();
        let mut next = || t.remove(0);
        Self {
            w: next(),
            b: next(),
            v_n: next(),
            v_k: next(),
            v_q: next(),
            v_e: next(),
            time_w: next(),
            time_b: next(),
            psi_proj: next(),
            readout_w1: next(),
            readout_b1: next(),
            readout_w2: next(),
            readout_b2: next(),
        }
    }

    pub fn zeros(cfg: &CtanConfig) -> Self {
        let shapes = Self::shapes(cfg);
        let mut t: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        let mut next = || t.remove(0);
        Self {
            w: next(),
            b: next(),
            v_n: next(),
            v_k: next(),
            v_q: next(),
            v_e: next(),
            time_w: next(),
            time_b: next(),
            psi_proj: next(),
            readout_w1: next(),
            readout_b1: next(),
            readout_w2: next(),
            readout_b2: next(),
        }
    }

    /// Tensors in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [&Tensor; 13] {
        [
            &self.w,
            &self.b,
            &self.v_n,
            &self.v_k,
            &self.v_q,
            &self.v_e,
            &self.time_w,
            &self.time_b,
            &self.psi_proj,
            &self.readout_w1,
            &self.readout_b1,
            &self.readout_w2,
            &self.readout_b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 13] {
        [
            &mut self.w,
            &mut self.b,
            &mut self.v_n,
            &mut self.v_k,
            &mut self.v_q,
            &mut self.v_e,
            &mut self.time_w,
            &mut self.time_b,
            &mut self.psi_proj,
            &mut self.readout_w1,
            &mut self.readout_b1,
            &mut self.readout_w2,
            &mut self.readout_b2,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_named(&self) -> NamedTensors {
        let mut out = NamedTensors::default();
        for (name, t) in PARAM_NAMES.iter().zip(self.tensors()) {
            out.insert(*name, t.clone());
        }
        out
    }

    /// Rebuilds parameters, checking every shape against `cfg`.
    pub fn from_named(cfg: &CtanConfig, named: &NamedTensors) -> Result<Self> {
        let mut params = Self::zeros(cfg);
        for (name, slot) in PARAM_NAMES.iter().zip(params.tensors_mut()) {
            let t = named.get(name)?;
            if t.shape() != slot.shape() {
                return Err(dim_err(
                    "checkpoint",
                    format!("`{name}` has shape {:?}, config expects {:?}", t.shape(), slot.shape()),
                ));
            }
            *slot = t.clone();
        }
        Ok(params)
    }

    /// Records every parameter as a tape leaf and precomputes the
    /// anti-symmetric transition `W − Wᵀ − γI` once for the whole pass.
    pub fn register(&self, tape: &mut Tape, gamma: f64) -> Result<ParamVars> {
        let [w, b, v_n, v_k, v_q, v_e, time_w, time_b, psi_proj, r_w1, r_b1, r_w2, r_b2] =
            self.tensors().map(|t| tape.leaf(t.clone()));
        let a = crate::model::layers::antisymmetrize(tape, w, gamma)?;
        Ok(ParamVars {
            w,
            b,
            v_n,
            v_k,
            v_q,
            v_e,
            time_w,
            time_b,
            psi_proj,
            readout_w1: r_w1,
            readout_b1: r_b1,
            readout_w2: r_w2,
            readout_b2: r_b2,
            a,
        })
    }
}

/// Tape handles for [`CtanParams`], plus the derived transition matrix.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub w: Var,
    pub b: Var,
    pub v_n: Var,
    pub v_k: Var,
    pub v_q: Var,
    pub v_e: Var,
    pub time_w: Var,
    pub time_b: Var,
    pub psi_proj: Var,
    pub readout_w1: Var,
    pub readout_b1: Var,
    pub readout_w2: Var,
    pub readout_b2: Var,
    /// `W − Wᵀ − γI`.
    pub a: Var,
}

impl ParamVars {
    pub fn leaves(&self) -> [Var; 13] {
        [
            self.w,
            self.b,
            self.v_n,
            self.v_k,
            self.v_q,
            self.v_e,
            self.time_w,
            self.time_b,
            self.psi_proj,
            self.readout_w1,
            self.readout_b1,
            self.readout_w2,
            self.readout_b2,
        ]
    }
}
