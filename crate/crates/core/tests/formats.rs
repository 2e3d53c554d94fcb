mod common;

use std::io::Cursor;

use proptest::prelude::*;
use s2l_core::traj::{dense_window, read_binary, read_jsonl, uniform_indices, write_binary, write_jsonl};
use s2l_core::{
    derive_scalar, load_trajectories, partition_by_source, subsample_checkpoints, write_trajectories, Stat, TrajFormat,
};

use common::arb_store;

fn ulp_distance(a: f32, b: f32) -> u32 {
    // both non-negative, so bit patterns are ordered like the values
    a.to_bits().abs_diff(b.to_bits())
}

#[test]
fn file_roundtrip_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let store = common::store_from_rows(
        vec![vec![1.5, 0.0, 3.25, 2.0]; 3]
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r[0] += i as f32;
                r
            })
            .collect(),
    );
    for format in [TrajFormat::Binary, TrajFormat::Jsonl] {
        let path = dir.path().join(format!("t.{format}"));
        write_trajectories(&store, &path, format).unwrap();
        assert_eq!(load_trajectories(&path, format).unwrap(), store);
    }
    let missing = dir.path().join("nope/t.bin");
    assert!(matches!(
        write_trajectories(&store, &missing, TrajFormat::Binary),
        Err(s2l_core::Error::Io(_))
    ));
}

#[test]
fn format_inferred_from_extension() {
    use std::path::Path;
    assert_eq!(TrajFormat::from_path(Path::new("a/b.jsonl")), Some(TrajFormat::Jsonl));
    assert_eq!(TrajFormat::from_path(Path::new("b.bin")), Some(TrajFormat::Binary));
    assert_eq!(TrajFormat::from_path(Path::new("b.txt")), None);
}

#[test]
fn ablation_variants_match_index_oracle() {
    let rows: Vec<Vec<f32>> = (0..5).map(|i| (0..8).map(|j| (i * 10 + j) as f32).collect()).collect();
    let store = common::store_from_rows(rows);

    let early = subsample_checkpoints(&store, &[0, 1, 2, 3]).unwrap();
    let sparse = subsample_checkpoints(&store, &[0, 2, 4, 6]).unwrap();
    for i in 0..store.len() {
        for (j, &k) in [0usize, 1, 2, 3].iter().enumerate() {
            assert_eq!(early.row(i)[j], store.row(i)[k]);
        }
        for (j, &k) in [0usize, 2, 4, 6].iter().enumerate() {
            assert_eq!(sparse.row(i)[j], store.row(i)[k]);
        }
    }
    assert_eq!(sparse.checkpoint_steps(), &[500, 1500, 2500, 3500]);
    assert_eq!(dense_window(8, 0, 4).unwrap(), vec![0, 1, 2, 3]);
    assert_eq!(uniform_indices(8, 4).unwrap(), vec![0, 2, 4, 6]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn binary_roundtrip_is_bit_exact(store in arb_store()) {
        let mut buf = Vec::new();
        write_binary(&store, &mut buf).unwrap();
        let back = read_binary(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back.ids(), store.ids());
        prop_assert_eq!(back.sources(), store.sources());
        prop_assert_eq!(back.checkpoint_steps(), store.checkpoint_steps());
        let bits = |s: &s2l_core::TrajectoryStore| s.losses().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&store));
    }

    #[test]
    fn jsonl_two_hop_within_one_ulp(store in arb_store()) {
        let mut text = Vec::new();
        write_jsonl(&store, &mut text).unwrap();
        let via_json = read_jsonl(Cursor::new(text)).unwrap();
        let mut bin = Vec::new();
        write_binary(&via_json, &mut bin).unwrap();
        let back = read_binary(Cursor::new(bin)).unwrap();
        prop_assert_eq!(back.ids(), store.ids());
        prop_assert_eq!(back.checkpoint_steps(), store.checkpoint_steps());
        for (a, b) in back.losses().iter().zip(store.losses()) {
            prop_assert!(ulp_distance(*a, *b) <= 1, "{} vs {}", a, b);
        }
    }

    #[test]
    fn subsample_all_is_identity(store in arb_store()) {
        let all: Vec<usize> = (0..store.width()).collect();
        prop_assert_eq!(subsample_checkpoints(&store, &all).unwrap(), store);
    }

    #[test]
    fn learnability_flips_sign_when_indices_swap(store in arb_store(), a in 0usize..12, b in 0usize..12) {
        let (a, b) = (a % store.width(), b % store.width());
        let fwd = derive_scalar(&store, Stat::Learnability, a, b).unwrap();
        let rev = derive_scalar(&store, Stat::Learnability, b, a).unwrap();
        for (x, y) in fwd.scores.iter().zip(&rev.scores) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn sources_partition_rows(store in arb_store()) {
        let views = partition_by_source(&store);
        let mut seen = vec![0u32; store.len()];
        for v in &views {
            prop_assert!(v.rows.windows(2).all(|w| w[0] < w[1]));
            for &r in &v.rows {
                prop_assert_eq!(&store.sources()[r], &v.source);
                seen[r] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
