//! Fixtures shared by the criterion benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2l_core::synth::{generate, Shape, TemplateSpec};
use s2l_core::{FeatureMatrix, TrajectoryStore};

/// `n` noisy trajectories of width `t` drawn around `templates` random shapes.
pub fn synthetic_store(n: usize, t: usize, templates: usize, seed: u64) -> TrajectoryStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<TemplateSpec> = (0..templates)
        .map(|i| TemplateSpec {
            name: format!("tpl{i}"),
            shape: Shape::Explicit((0..t).map(|_| rng.random_range(0.5..4.0)).collect()),
            count: n / templates + usize::from(i < n % templates),
            noise_sigma: 0.2,
            source: format!("source{}", i % 4),
        })
        .collect();
    generate(&specs, t, seed).expect("valid templates").0
}

/// Cluster labels with sizes spread over three orders of magnitude.
pub fn skewed_assignments(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..k).collect();
    labels.extend((k..n).map(|_| {
        let u: f64 = rng.random();
        ((u * u * u) * k as f64) as usize
    }));
    labels
}

pub fn random_features(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureMatrix::from_flat((0..n).map(|i| format!("f{i}")).collect(), values, dim).expect("finite features")
}
