use std::collections::HashMap;

use ctan_core::ctdg::{stream_stats, NodeId};
use ctan_core::datagen::{
    gen_path_dataset, gen_path_graph, gen_periodic_bipartite, PathGraphDataset, PeriodicBipartite, EVENTS_FILE,
    LABELS_FILE, MANIFEST_FILE,
};

#[test]
fn path_instance_regenerates_bitwise() {
    let a = gen_path_graph(5, 77).unwrap();
    let b = gen_path_graph(5, 77).unwrap();
    assert_eq!(a, b);
    let bits = |g: &ctan_core::datagen::PathGraphInstance| -> Vec<u64> {
        g.stream
            .iter()
            .flat_map(|e| {
                e.src_features
                    .iter()
                    .chain(e.dst_features)
                    .chain(e.edge_features)
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn path_instance_structure() {
    for n in [2, 3, 9, 20] {
        let g = gen_path_graph(n, n as u64).unwrap();
        assert_eq!(g.stream.len(), n - 1);
        let mut x: HashMap<NodeId, f64> = HashMap::new();
        for (t, e) in g.stream.iter().enumerate() {
            assert_eq!(e.time, t as f64);
            assert_eq!(e.src, NodeId(t as u32));
            assert_eq!(e.dst, Some(NodeId(t as u32 + 1)));
            assert!(e.edge_features.iter().all(|v| (-1.0..=1.0).contains(v)));
            // A node keeps its input feature across the two events it is in.
            for (u, f) in [(e.src, e.src_features[0]), (e.dst.unwrap(), e.dst_features[0])] {
                if let Some(prev) = x.insert(u, f) {
                    assert_eq!(prev, f);
                }
            }
        }
        assert_eq!(x[&NodeId(0)], g.label as f64);
        assert!(g.label == 1 || g.label == -1);
        for j in 1..n as u32 {
            assert!((-1.0..=1.0).contains(&x[&NodeId(j)]));
        }
        assert_eq!(g.target(), NodeId(n as u32 - 1));
    }
}

#[test]
fn label_balance_within_three_sigma() {
    let d = gen_path_dataset(9, 1000, 7).unwrap();
    let pos = d.instances.iter().filter(|g| g.label == 1).count();
    assert!((440..=560).contains(&pos), "{pos}");
    assert_eq!(d.split.sizes(), (700, 150, 150));
}

#[test]
fn dataset_files_are_deterministic_and_round_trip() {
    let d = gen_path_dataset(4, 20, 3).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    d.write_dir(a.path()).unwrap();
    gen_path_dataset(4, 20, 3).unwrap().write_dir(b.path()).unwrap();
    for f in [EVENTS_FILE, LABELS_FILE, MANIFEST_FILE] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let back = PathGraphDataset::read_dir(a.path()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn combined_counts() {
    let d = gen_path_dataset(9, 1000, 1).unwrap();
    let s = stream_stats(&d.combined_stream().unwrap());
    assert_eq!(s.nodes, 9000);
    assert_eq!(s.edges, 8000);
}

#[test]
fn periodic_stream_matches_replay_oracle() {
    let (users, items, period) = (10usize, 10usize, 5u64);
    let s = gen_periodic_bipartite(users, items, Some(period), 5000, 9).unwrap();
    assert_eq!(s.len(), 5000);
    // Replay: every user starts on its own index and, between two of its
    // turns `users` steps apart, advances by the number of period
    // boundaries crossed.
    let mut current: Vec<usize> = (0..users).collect();
    let mut last_turn: Vec<Option<u64>> = vec![None; users];
    for (t, e) in s.iter().enumerate() {
        let t = t as u64;
        let u = (t % users as u64) as usize;
        if let Some(prev) = last_turn[u] {
            let crossed = (t / period - prev / period) as usize;
            current[u] = (current[u] + crossed) % items;
        } else {
            current[u] = (u + (t / period) as usize) % items;
        }
        last_turn[u] = Some(t);
        assert_eq!(s.name(e.src), format!("u{u}"));
        assert_eq!(s.name(e.dst.unwrap()), format!("i{}", current[u]), "t = {t}");
        assert_eq!(e.time, t as f64);
    }
    let g = PeriodicBipartite {
        users,
        items,
        period: Some(period),
    };
    assert_eq!(g.pair_at(4999), (9, (9 + 999) % 10));
}

#[test]
fn infinite_period_keeps_partners() {
    let s = gen_periodic_bipartite(3, 4, None, 30, 0).unwrap();
    for e in s.iter() {
        let u: usize = s.name(e.src)[1..].parse().unwrap();
        assert_eq!(s.name(e.dst.unwrap()), format!("i{u}"));
    }
    assert!(gen_periodic_bipartite(1, 4, None, 3, 0).is_err());
}
