//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use ctan_core::ctdg::{EventKind, EventStream, NodeId};
use ctan_core::model::layers::bce_with_logit;
use ctan_core::model::{CtanConfig, CtanModel, Memory, PsiKind, Session};
use ctan_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream of `(time, src, dst, src_x, dst_x, edge)` rows over nodes named by
/// their index.
pub fn toy_stream(rows: &[(f64, u32, u32, f64, f64, f64)], nodes: u32) -> EventStream {
    let mut s = EventStream::new(1, 1);
    for i in 0..nodes {
        s.intern(&i.to_string());
    }
    for &(t, a, b, xa, xb, e) in rows {
        s.push(t, EventKind::EdgeAdd, NodeId(a), Some(NodeId(b)), &[xa], &[xb], &[e])
            .unwrap();
    }
    s
}

/// Loss of the three-event stream read out at the last destination, under
/// one parameter assignment.
pub fn toy_loss(model: &CtanModel) -> (f64, Vec<Tensor>) {
    let rows = [
        (0.0, 0, 1, 0.5, -0.25, 1.0),
        (1.0, 1, 2, 0.3, 0.75, -0.5),
        (2.5, 2, 0, -1.0, 0.25, 0.3),
    ];
    let s = toy_stream(&rows, 3);
    let mut mem = Memory::for_model(model);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sess = Session::new(model).unwrap();
    for i in 0..rows.len() {
        sess.process_event(&mut mem, &s.get(i), &mut rng).unwrap();
    }
    let z = sess.sequence_logit(&mem, NodeId(0), 2.5).unwrap();
    let loss = bce_with_logit(&mut sess.tape, z, true).unwrap();
    let value = sess.tape.value(loss).item();
    (value, sess.gradients(loss).unwrap())
}

/// Largest relative gap between the tape gradient and a central difference
/// with step 1e-5, over every parameter entry of a d = 4, L = 2 model on
/// the toy stream. Entries where both are below 1e-8 compare absolutely.
pub fn max_gradient_error(psi: PsiKind, seed: u64) -> f64 {
    let step = 1e-5;
    let cfg = CtanConfig {
        dim: 4,
        layers: 2,
        epsilon: 0.5,
        gamma: 0.1,
        psi,
        ..CtanConfig::default()
    };
    let model = CtanModel::new(cfg, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (_, grads) = toy_loss(&model);
    let mut worst = 0.0f64;
    for (p, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = model.clone();
            plus.params.tensors_mut()[p].data_mut()[j] += step;
            let mut minus = model.clone();
            minus.params.tensors_mut()[p].data_mut()[j] -= step;
            let fd = (toy_loss(&plus).0 - toy_loss(&minus).0) / (2.0 * step);
            let an = g.data()[j];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-8));
        }
    }
    worst
}

/// Pair-counting AUC: every (positive, negative) pair scores 1, ½ or 0.
pub fn auc_pairs(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            twice += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}
