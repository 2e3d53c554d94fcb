#![allow(dead_code)]

use proptest::prelude::*;
use s2l_core::traj::default_checkpoint_steps;
use s2l_core::TrajectoryStore;

pub fn store_from_rows(rows: Vec<Vec<f32>>) -> TrajectoryStore {
    let n = rows.len();
    let t = rows[0].len();
    TrajectoryStore::new(
        (0..n).map(|i| format!("ex{i}")).collect(),
        vec!["src".into(); n],
        rows,
        default_checkpoint_steps(t),
    )
    .unwrap()
}

/// Random valid stores: up to 40 rows, up to 12 checkpoints, a handful of
/// source tags, losses spanning several magnitudes (including exact zeros).
pub fn arb_store() -> impl Strategy<Value = TrajectoryStore> {
    (1usize..40, 1usize..12).prop_flat_map(|(n, t)| {
        let loss = prop_oneof![
            1 => Just(0.0f32),
            8 => 0.0f32..20.0,
            1 => (0.0f32..1.0).prop_map(|v| v * 1e-20),
            1 => 1.0f32..1e30,
        ];
        (
            prop::collection::vec(prop::collection::vec(loss, t), n),
            prop::collection::vec(0u8..5, n),
            prop::collection::btree_set(1u64..1_000_000, t),
        )
            .prop_map(move |(rows, src, steps)| {
                TrajectoryStore::new(
                    (0..n).map(|i| format!("id-{i}-é")).collect(),
                    src.into_iter().map(|s| format!("source{s}")).collect(),
                    rows,
                    steps.into_iter().collect(),
                )
                .unwrap()
            })
    })
}

/// Same labeling up to renaming of cluster indices.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}
