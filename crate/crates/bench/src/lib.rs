//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctan_core::ctdg::{EventKind, EventStream, NodeId};
use ctan_core::model::{CtanConfig, CtanModel, ReadoutKind};

/// Uniform random user-item stream with one edge feature.
pub fn random_stream(users: usize, items: usize, events: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = EventStream::new(0, 1);
    let u: Vec<NodeId> = (0..users).map(|k| s.intern(&format!("u{k}"))).collect();
    let i: Vec<NodeId> = (0..items).map(|k| s.intern(&format!("i{k}"))).collect();
    for t in 0..events {
        let f = [rng.gen_range(-1.0..1.0)];
        let (a, b) = (u[rng.gen_range(0..users)], i[rng.gen_range(0..items)]);
        s.push(t as f64, EventKind::EdgeAdd, a, Some(b), &[], &[], &f)
            .expect("ordered");
    }
    s
}

pub fn link_model(dim: usize, layers: usize) -> CtanModel {
    let cfg = CtanConfig {
        dim,
        layers,
        node_dim: 0,
        edge_dim: 1,
        time_dim: 16,
        readout: ReadoutKind::Pair,
        ..CtanConfig::default()
    };
    CtanModel::new(cfg, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).expect("valid config")
}

pub fn random_matrix(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
