//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use transferop_core::*;

/// A small OU snapshot dataset with non-overlapping pairs.
pub fn ou_dataset(pairs: usize, seed: u64) -> SnapshotDataset {
    let system = PotentialSystem::ou(1.0, 4.0).unwrap();
    generate_potential_dataset(
        &system,
        TrajectoryPlan {
            pairs,
            lag_steps: 100,
            stride: 100,
            step_size: 0.005,
            burn_in: 500,
            seed,
        },
    )
    .unwrap()
}

/// A random symmetric PSD pencil of the given dimension.
pub fn random_pencil(dim: usize, seed: u64) -> (SymMatrix, SymMatrix) {
    let rfm = sample_rfm(2, &[dim], Activation::Tanh, DistributionSpec::default(), seed).unwrap();
    let x = Array2::from_shape_fn((2, 4 * dim), |(i, j)| {
        ((i + 1) as f64 * 0.7 + j as f64 * 0.13).sin()
    });
    let feats = rfm.evaluate(&x.view()).unwrap();
    let scale = 1.0 / (4 * dim) as f64;
    let b = SymMatrix::new(feats.dot(&feats.t()) * scale).unwrap();
    let shifted = feats.dot(&feats.t()) * scale * 0.9;
    let a = SymMatrix::new(shifted).unwrap();
    (a, b)
}
