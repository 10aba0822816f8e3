//! Tape-level building blocks of a CTAN layer.

use crate::error::{dim_err, Error, Result};
use crate::model::config::{CtanConfig, PsiKind};
use crate::model::params::ParamVars;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `W − Wᵀ − γI`.
pub fn antisymmetrize(tape: &mut Tape, w: Var, gamma: f64) -> Result<Var> {
    let shape = tape.shape(w).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(dim_err(
            "antisymmetrize",
            format!("square matrix expected, got {shape:?}"),
        ));
    }
    let wt = tape.transpose(w)?;
    let skew = tape.sub(w, wt)?;
    if gamma == 0.0 {
        return Ok(skew);
    }
    let mut shift = Tensor::identity(shape[0]);
    shift.data_mut().iter_mut().for_each(|v| *v *= gamma);
    let shift = tape.constant(shift);
    tape.sub(skew, shift)
}

/// Learned affine embedding `V·Δt + bias` of a non-negative elapsed time.
pub fn time_encode(tape: &mut Tape, p: &ParamVars, delta_t: f64) -> Result<Var> {
    if !(delta_t >= 0.0) {
        return Err(Error::Causality(format!("negative elapsed time {delta_t}")));
    }
    let dt = tape.constant(Tensor::scalar(delta_t));
    let scaled = tape.mul(p.time_w, dt)?;
    tape.add(scaled, p.time_b)
}

/// `ê = e ‖ V·Δt`.
pub fn edge_repr(tape: &mut Tape, p: &ParamVars, edge_features: &[f64], delta_t: f64) -> Result<Var> {
    let enc = time_encode(tape, p, delta_t)?;
    if edge_features.is_empty() {
        return Ok(enc);
    }
    let e = tape.constant(Tensor::vector(edge_features.to_vec()));
    Ok(tape.concat(&[e, enc]))
}

/// Pre-projected pieces of one attention candidate.
#[derive(Clone, Copy, Debug)]
pub struct AttnInput {
    /// `V_k h_v`.
    pub key_node: Var,
    /// `V_n h_v`.
    pub value_node: Var,
    /// `V_e ê_uv`.
    pub edge_proj: Var,
}

/// Attention output and the per-head coefficient vectors.
pub struct Attention {
    pub output: Var,
    pub alphas: Vec<Var>,
}

/// Scaled dot-product attention over pre-projected candidates:
/// `Σ_v α_uv (V_n h_v + V_e ê_uv)` with
/// `α = softmax(qᵀ(V_k h_v + V_e ê_uv) / √d_head)`, computed per head and
/// concatenated.
pub fn attend(tape: &mut Tape, query: Var, inputs: &[AttnInput], heads: usize) -> Result<Attention> {
    if inputs.is_empty() {
        return Err(Error::Contract("attention over an empty set".into()));
    }
    let d = tape.value(query).len();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(dim_err("attention", format!("dim {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let mut keys = Vec::with_capacity(inputs.len());
    let mut values = Vec::with_capacity(inputs.len());
    for inp in inputs {
        keys.push(tape.add(inp.key_node, inp.edge_proj)?);
        values.push(tape.add(inp.value_node, inp.edge_proj)?);
    }
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut alphas = Vec::with_capacity(heads);
    for h in 0..heads {
        let (q, k, v) = if heads == 1 {
            (query, keys.clone(), values.clone())
        } else {
            let q = tape.slice(query, h * dh, dh)?;
            let k = keys
                .iter()
                .map(|&x| tape.slice(x, h * dh, dh))
                .collect::<Result<Vec<_>>>()?;
            let v = values
                .iter()
                .map(|&x| tape.slice(x, h * dh, dh))
                .collect::<Result<Vec<_>>>()?;
            (q, k, v)
        };
        let kmat = tape.stack(&k)?;
        let logits = tape.matmul(kmat, q)?;
        let logits = tape.scale(logits, scale);
        let alpha = tape.softmax(logits)?;
        let vmat = tape.stack(&v)?;
        let vt = tape.transpose(vmat)?;
        outs.push(tape.matmul(vt, alpha)?);
        alphas.push(alpha);
    }
    let output = if heads == 1 { outs[0] } else { tape.concat(&outs) };
    Ok(Attention { output, alphas })
}

/// Attention aggregation from raw states and edge representations.
/// `set` must contain the node itself alongside its temporal neighbors.
pub fn attention_aggregate(
    tape: &mut Tape,
    p: &ParamVars,
    heads: usize,
    h_u: Var,
    set: &[(Var, Var)],
) -> Result<Attention> {
    let q = tape.matmul(p.v_q, h_u)?;
    let mut inputs = Vec::with_capacity(set.len());
    for &(h_v, e_hat) in set {
        inputs.push(AttnInput {
            key_node: tape.matmul(p.v_k, h_v)?,
            value_node: tape.matmul(p.v_n, h_v)?,
            edge_proj: tape.matmul(p.v_e, e_hat)?,
        });
    }
    attend(tape, q, &inputs, heads)
}

/// Initial condition of a node for the current event. An empty `x` stands
/// for the zero input used while an event propagates.
pub fn psi_apply(tape: &mut Tape, p: &ParamVars, cfg: &CtanConfig, h_prev: Var, x: &[f64]) -> Result<Var> {
    if !x.is_empty() && x.len() != cfg.node_dim {
        return Err(dim_err(
            "psi",
            format!("input of length {} vs node_dim {}", x.len(), cfg.node_dim),
        ));
    }
    match cfg.psi {
        PsiKind::Addition => {
            if cfg.node_dim > cfg.dim {
                return Err(Error::Contract("addition needs node_dim <= dim".into()));
            }
            if x.iter().all(|&v| v == 0.0) {
                return Ok(h_prev);
            }
            let mut padded = vec![0.0; cfg.dim];
            padded[..x.len()].copy_from_slice(x);
            let xv = tape.constant(Tensor::vector(padded));
            tape.add(h_prev, xv)
        }
        PsiKind::Concat | PsiKind::TanhConcat => {
            let joined = if cfg.node_dim == 0 {
                h_prev
            } else {
                let xs = if x.is_empty() {
                    vec![0.0; cfg.node_dim]
                } else {
                    x.to_vec()
                };
                let xv = tape.constant(Tensor::vector(xs));
                tape.concat(&[h_prev, xv])
            };
            let inner = if cfg.psi == PsiKind::TanhConcat {
                tape.tanh(joined)
            } else {
                joined
            };
            tape.matmul(p.psi_proj, inner)
        }
    }
}

/// One forward-Euler step `h + ε·tanh((W − Wᵀ − γI)h + Φ + b)`.
pub fn euler_layer(tape: &mut Tape, p: &ParamVars, cfg: &CtanConfig, h_prev: Var, aggregate: Var) -> Result<Var> {
    let lin = tape.matmul(p.a, h_prev)?;
    let pre = tape.add(lin, aggregate)?;
    let pre = tape.add(pre, p.b)?;
    let act = tape.tanh(pre);
    let step = tape.scale(act, cfg.epsilon);
    tape.add(h_prev, step)
}

fn mlp(tape: &mut Tape, p: &ParamVars, input: Var) -> Result<Var> {
    let hidden = tape.matmul(p.readout_w1, input)?;
    let hidden = tape.add(hidden, p.readout_b1)?;
    let hidden = tape.tanh(hidden);
    let out = tape.matmul(p.readout_w2, hidden)?;
    tape.add(out, p.readout_b2)
}

/// Logit that the remembered signal is `+1`, from one node embedding.
pub fn readout_sequence(tape: &mut Tape, p: &ParamVars, h_dst: Var) -> Result<Var> {
    mlp(tape, p, h_dst)
}

/// Link logit from the concatenated source and destination embeddings.
pub fn readout_link(tape: &mut Tape, p: &ParamVars, h_src: Var, h_dst: Var) -> Result<Var> {
    let joined = tape.concat(&[h_src, h_dst]);
    mlp(tape, p, joined)
}

/// Binary cross-entropy of a logit against a 0/1 target, written as
/// `-log σ(z)` or `-log σ(-z)` so that neither branch saturates to 1.
pub fn bce_with_logit(tape: &mut Tape, logit: Var, positive: bool) -> Result<Var> {
    let z = if positive { logit } else { tape.neg(logit) };
    let s = tape.sigmoid(z);
    let l = tape.log(s)?;
    let l = tape.sum(l);
    Ok(tape.neg(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::CtanParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: &CtanConfig, seed: u64) -> (Tape, CtanParams, ParamVars) {
        let params = CtanParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut tape = Tape::new();
        let pv = params.register(&mut tape, cfg.gamma).unwrap();
        (tape, params, pv)
    }

    #[test]
    fn antisymmetrize_cases() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(&[3, 3]));
        let a = antisymmetrize(&mut tape, z, 0.0).unwrap();
        assert_eq!(tape.value(a), &Tensor::zeros(&[3, 3]));

        let sym = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 5.0]).unwrap());
        let a = antisymmetrize(&mut tape, sym, 0.1).unwrap();
        assert_eq!(tape.value(a).data(), &[-0.1, 0.0, 0.0, -0.1]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = tape.leaf(Tensor::uniform(&[3, 3], 1.0, &mut rng));
        let a = antisymmetrize(&mut tape, w, 0.0).unwrap();
        let m = tape.value(a);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get2(i, j) + m.get2(j, i), 0.0);
            }
        }

        let rect = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(antisymmetrize(&mut tape, rect, 0.0).is_err());
    }

    #[test]
    fn time_encode_cases() {
        let cfg = CtanConfig::default();
        let (mut tape, _, mut pv) = setup(&cfg, 0);
        pv.time_w = tape.leaf(Tensor::vector(vec![0.2]));
        pv.time_b = tape.leaf(Tensor::vector(vec![0.1]));
        let e = time_encode(&mut tape, &pv, 2.5).unwrap();
        assert!((tape.value(e).item() - 0.6).abs() < 1e-15);

        pv.time_b = tape.leaf(Tensor::vector(vec![0.0]));
        let e = time_encode(&mut tape, &pv, 0.0).unwrap();
        assert_eq!(tape.value(e).data(), &[0.0]);
        assert!(time_encode(&mut tape, &pv, -1.0).is_err());
    }

    #[test]
    fn singleton_attention_is_identity_weighting() {
        let cfg = CtanConfig {
            dim: 4,
            ..CtanConfig::default()
        };
        let (mut tape, params, pv) = setup(&cfg, 1);
        let h = tape.leaf(Tensor::vector(vec![0.3, -0.2, 0.5, 0.1]));
        let e = edge_repr(&mut tape, &pv, &[0.0], 0.0).unwrap();
        let att = attention_aggregate(&mut tape, &pv, 1, h, &[(h, e)]).unwrap();
        assert_eq!(tape.value(att.alphas[0]).data(), &[1.0]);
        // V_n h + V_e ê
        let ev = tape.value(e).clone();
        let hv = tape.value(h).clone();
        for i in 0..4 {
            let mut want = 0.0;
            for j in 0..4 {
                want += params.v_n.get2(i, j) * hv.data()[j];
            }
            for j in 0..2 {
                want += params.v_e.get2(i, j) * ev.data()[j];
            }
            assert!((tape.value(att.output).data()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_neighbors_split_attention_evenly() {
        let cfg = CtanConfig {
            dim: 4,
            heads: 2,
            ..CtanConfig::default()
        };
        let (mut tape, _, pv) = setup(&cfg, 2);
        let hu = tape.leaf(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let hv = tape.leaf(Tensor::vector(vec![-0.5, 0.5, 0.0, 1.0]));
        let e = edge_repr(&mut tape, &pv, &[0.25], 1.0).unwrap();
        let att = attention_aggregate(&mut tape, &pv, 2, hu, &[(hv, e), (hv, e)]).unwrap();
        for a in att.alphas {
            assert_eq!(tape.value(a).data(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn psi_cases() {
        let cfg = CtanConfig {
            dim: 2,
            psi: PsiKind::Addition,
            ..CtanConfig::default()
        };
        let (mut tape, _, pv) = setup(&cfg, 3);
        let h = tape.leaf(Tensor::vector(vec![0.7, -0.1]));
        let out = psi_apply(&mut tape, &pv, &cfg, h, &[0.0]).unwrap();
        assert_eq!(tape.value(out), tape.value(h));
        let out = psi_apply(&mut tape, &pv, &cfg, h, &[0.5]).unwrap();
        assert_eq!(tape.value(out).data(), &[1.2, -0.1]);

        let cfg = CtanConfig {
            dim: 2,
            psi: PsiKind::Concat,
            ..CtanConfig::default()
        };
        let (mut tape, _, pv) = setup(&cfg, 3);
        let z = tape.leaf(Tensor::zeros(&[2]));
        let out = psi_apply(&mut tape, &pv, &cfg, z, &[0.0]).unwrap();
        assert_eq!(tape.value(out), &Tensor::zeros(&[2]));

        // d = 1, d_n = 1, P = [1 1]: tanh(0.5) + tanh(-0.5) = 0 by oddness;
        // with P = [1 0] the result is tanh(0.5).
        let cfg = CtanConfig {
            dim: 1,
            psi: PsiKind::TanhConcat,
            ..CtanConfig::default()
        };
        let (mut tape, _, mut pv) = setup(&cfg, 4);
        let h = tape.leaf(Tensor::vector(vec![0.5]));
        pv.psi_proj = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let out = psi_apply(&mut tape, &pv, &cfg, h, &[-0.5]).unwrap();
        assert!(tape.value(out).item().abs() < 1e-16);
        pv.psi_proj = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let out = psi_apply(&mut tape, &pv, &cfg, h, &[-0.5]).unwrap();
        assert_eq!(tape.value(out).item(), 0.5f64.tanh());
        pv.psi_proj = tape.leaf(Tensor::matrix(1, 2, vec![2.0, -1.0]).unwrap());
        let out = psi_apply(&mut tape, &pv, &cfg, h, &[-0.5]).unwrap();
        assert!((tape.value(out).item() - 3.0 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn euler_cases() {
        let cfg = CtanConfig {
            dim: 2,
            epsilon: 0.5,
            gamma: 0.0,
            ..CtanConfig::default()
        };
        let mut tape = Tape::new();
        let mut params = CtanParams::zeros(&cfg);
        params.w = Tensor::matrix(2, 2, vec![0.0, 0.3, -0.1, 0.0]).unwrap();
        params.b = Tensor::vector(vec![0.05, -0.02]);
        let pv = params.register(&mut tape, cfg.gamma).unwrap();

        let z = tape.leaf(Tensor::zeros(&[2]));
        let zb = {
            let mut p0 = CtanParams::zeros(&cfg);
            p0.w = params.w.clone();
            p0.register(&mut tape, 0.0).unwrap()
        };
        let out = euler_layer(&mut tape, &zb, &cfg, z, z).unwrap();
        assert_eq!(tape.value(out), &Tensor::zeros(&[2]));

        let h = tape.leaf(Tensor::vector(vec![0.4, -0.6]));
        let phi = tape.leaf(Tensor::vector(vec![0.1, 0.2]));
        let out = euler_layer(&mut tape, &pv, &cfg, h, phi).unwrap();
        // A = W − Wᵀ = [[0, 0.4], [-0.4, 0]]
        let pre0 = 0.4 * -0.6 + 0.1 + 0.05;
        let pre1 = -0.4 * 0.4 + 0.2 - 0.02;
        let want = [0.4 + 0.5 * f64::tanh(pre0), -0.6 + 0.5 * f64::tanh(pre1)];
        for (g, w) in tape.value(out).data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_readout_is_even_odds() {
        let cfg = CtanConfig {
            dim: 3,
            ..CtanConfig::default()
        };
        let mut tape = Tape::new();
        let pv = CtanParams::zeros(&cfg).register(&mut tape, 0.0).unwrap();
        let h = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let z = readout_sequence(&mut tape, &pv, h).unwrap();
        assert_eq!(tape.value(z).item(), 0.0);
        let p = tape.sigmoid(z);
        assert_eq!(tape.value(p).item(), 0.5);
    }

    #[test]
    fn hand_mlp_readout() {
        let cfg = CtanConfig {
            dim: 1,
            ..CtanConfig::default()
        };
        let mut params = CtanParams::zeros(&cfg);
        params.readout_w1 = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        params.readout_b1 = Tensor::vector(vec![-0.5]);
        params.readout_w2 = Tensor::matrix(1, 1, vec![1.5]).unwrap();
        params.readout_b2 = Tensor::vector(vec![0.25]);
        let mut tape = Tape::new();
        let pv = params.register(&mut tape, 0.0).unwrap();
        let h = tape.leaf(Tensor::vector(vec![0.3]));
        let z = readout_sequence(&mut tape, &pv, h).unwrap();
        let want = 1.5 * f64::tanh(2.0 * 0.3 - 0.5) + 0.25;
        assert!((tape.value(z).item() - want).abs() < 1e-15);
    }

    #[test]
    fn link_readout_is_order_sensitive() {
        let cfg = CtanConfig {
            dim: 2,
            readout: crate::model::ReadoutKind::Pair,
            ..CtanConfig::default()
        };
        let (mut tape, _, pv) = setup(&cfg, 9);
        let a = tape.leaf(Tensor::vector(vec![0.5, -0.5]));
        let b = tape.leaf(Tensor::vector(vec![-0.5, 0.5]));
        let ab = readout_link(&mut tape, &pv, a, b).unwrap();
        let ba = readout_link(&mut tape, &pv, b, a).unwrap();
        assert_ne!(tape.value(ab).item(), tape.value(ba).item());

        let zp = CtanParams::zeros(&cfg).register(&mut tape, 0.0).unwrap();
        let z = readout_link(&mut tape, &zp, a, b).unwrap();
        let p = tape.sigmoid(z);
        assert_eq!(tape.value(p).item(), 0.5);
    }
}
