//! End-to-end checks of the simulate → featurize → solve pipeline on the
//! benchmark systems, at sizes small enough for routine test runs.

use ndarray::Array2;
use transferop_core::*;

fn ou_dataset(pairs: usize, lag_steps: usize, seed: u64) -> SnapshotDataset {
    let system = PotentialSystem::ou(1.0, 4.0).unwrap();
    generate_potential_dataset(
        &system,
        TrajectoryPlan {
            pairs,
            lag_steps,
            stride: lag_steps,
            step_size: 0.005,
            burn_in: 1000,
            seed,
        },
    )
    .unwrap()
}

#[test]
fn ou_spectrum_is_recovered_by_a_modest_basis() {
    let data = ou_dataset(20_000, 100, 7);
    let rfm = sample_rfm(1, &[64], Activation::Tanh, DistributionSpec::default(), 0).unwrap();
    let (model, _) = fit_eigen(&rfm, &data, 4, &FitOptions::default()).unwrap();
    let reference = analytic_reference(ReferenceSystem::Ou {
        alpha: 1.0,
        beta: 4.0,
        tau: 0.5,
    });
    for i in 0..4 {
        let err = (model.values[i] - reference.value(i)).abs();
        assert!(
            err <= 0.05,
            "eigenvalue {i}: {} vs {} (err {err})",
            model.values[i],
            reference.value(i)
        );
    }

    // Koopman eigenvalue bounds on a reversible benchmark.
    assert!((model.values[0] - 1.0).abs() <= 0.02);
    for v in model.values.iter() {
        assert!(*v <= model.values[0] + 0.02);
    }
}

#[test]
fn ou_second_eigenfunction_correlates_with_the_coordinate() {
    let data = ou_dataset(20_000, 100, 11);
    let rfm = sample_rfm(1, &[64], Activation::Tanh, DistributionSpec::default(), 1).unwrap();
    let (model, _) = fit_eigen(&rfm, &data, 3, &FitOptions::default()).unwrap();

    // Restrict to the central 90% quantile range of the data.
    let mut xs: Vec<f64> = data.x.iter().copied().collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let lo = xs[(xs.len() as f64 * 0.05) as usize];
    let hi = xs[(xs.len() as f64 * 0.95) as usize];
    let kept: Vec<f64> = xs.into_iter().filter(|v| *v >= lo && *v <= hi).collect();
    let points = Array2::from_shape_vec((1, kept.len()), kept).unwrap();

    let reference = analytic_reference(ReferenceSystem::Ou {
        alpha: 1.0,
        beta: 4.0,
        tau: 0.5,
    });
    let (corr, rmse) = eigenfunction_error(&model, &reference, 1, &points.view()).unwrap();
    assert!(corr.abs() >= 0.98, "correlation {corr}");
    assert!(rmse <= 0.35, "rmse {rmse}");
}

#[test]
fn singular_fit_agrees_with_eigen_fit_on_reversible_data() {
    let data = ou_dataset(20_000, 100, 13);
    let rfm = sample_rfm(1, &[64], Activation::Tanh, DistributionSpec::default(), 2).unwrap();
    let (eigen, _) = fit_eigen(&rfm, &data, 4, &FitOptions::default()).unwrap();
    let (singular, _) = fit_singular(&rfm, &data, 4, &FitOptions::default()).unwrap();
    for (s, l) in singular.values.iter().zip(eigen.values.iter()) {
        assert!((s - l.abs()).abs() <= 0.05, "sigma {s} vs |lambda| {l}");
    }
    // Transfer-operator contraction within sampling error.
    for s in singular.values.iter() {
        assert!(*s >= 0.0 && *s <= 1.05, "singular value {s} out of range");
    }
}

#[test]
fn lag_time_consistency_of_the_second_eigenvalue() {
    // Semigroup property: λ₂(2τ) ≈ λ₂(τ)².
    let rfm = sample_rfm(1, &[64], Activation::Tanh, DistributionSpec::default(), 3).unwrap();
    let tau = ou_dataset(20_000, 100, 17);
    let two_tau = ou_dataset(20_000, 200, 17);
    let (m1, _) = fit_eigen(&rfm, &tau, 2, &FitOptions::default()).unwrap();
    let (m2, _) = fit_eigen(&rfm, &two_tau, 2, &FitOptions::default()).unwrap();
    let predicted = m1.values[1] * m1.values[1];
    assert!(
        (m2.values[1] - predicted).abs() <= 0.05,
        "{} vs {}",
        m2.values[1],
        predicted
    );
}

#[test]
fn qho_energies_from_a_single_layer_basis() {
    let grid = sample_grid(&[(-5.0, 5.0)], 4000, GridMode::UniformRandom, 5).unwrap();
    let rfm = sample_rfm(1, &[128], Activation::Tanh, DistributionSpec::default(), 4).unwrap();
    let ham = HamiltonianParams::new(PotentialSystem::qho(1.0).unwrap(), 1.0, 1.0);
    let (model, _) = fit_schrodinger(&rfm, &grid, 3, &ham, &FitOptions::default()).unwrap();
    for i in 0..3 {
        let want = i as f64 + 0.5;
        assert!(
            (model.values[i] - want).abs() <= 0.05,
            "energy {i}: {} vs {want}",
            model.values[i]
        );
    }
    // Values ascending in schrodinger mode.
    assert!(model.values[0] < model.values[1] && model.values[1] < model.values[2]);
}

#[test]
fn iterative_fit_approaches_the_closed_form_solution() {
    let data = ou_dataset(8_000, 100, 19);
    let rfm = sample_rfm(1, &[32], Activation::Tanh, DistributionSpec::default(), 6).unwrap();
    // Small single-layer bases keep noise directions just above the default
    // cutoff; a coarser one discards them.
    let opts = FitOptions {
        rank_tol: 1e-6,
        ..FitOptions::default()
    };
    let (closed, _) = fit_eigen(&rfm, &data, 3, &opts).unwrap();
    let trained = fit_iterative_basis(
        &rfm,
        &data,
        3,
        &TrainOptions {
            epochs: 60,
            step_size: 0.5,
            seed: 0,
            ..TrainOptions::default()
        },
    )
    .unwrap();
    for (a, b) in trained.values.iter().zip(closed.values.iter()) {
        assert!((a - b).abs() <= 0.05, "iterative {a} vs closed-form {b}");
    }
}

#[test]
fn bickley_singular_pipeline_produces_contractive_spectrum() {
    // Short horizon keeps this test quick; the full experiment lives in the
    // acceptance suite.
    let data = bickley_trajectories(3000, 0.0, 10.0, 0.01, 23).unwrap();
    let rfm = sample_rfm(2, &[96], Activation::Tanh, DistributionSpec::default(), 7).unwrap();
    let (model, _) = fit_singular(&rfm, &data, 5, &FitOptions::default()).unwrap();
    for w in model.values.windows(2) {
        assert!(w[0] >= w[1]);
    }
    for s in model.values.iter() {
        assert!(*s >= 0.0 && *s <= 1.05, "singular value {s}");
    }
    assert!((model.values[0] - 1.0).abs() <= 0.05);
    assert!(model.companion_weights.is_some());
}

#[test]
fn spectral_clustering_separates_lemon_slice_wells() {
    let system = PotentialSystem::lemon_slice(5, 2.0).unwrap();
    let data = generate_potential_dataset(
        &system,
        TrajectoryPlan {
            pairs: 10_000,
            lag_steps: 100,
            stride: 100,
            step_size: 0.005,
            burn_in: 1000,
            seed: 29,
        },
    )
    .unwrap();
    let rfm = sample_rfm(2, &[128], Activation::Tanh, DistributionSpec::default(), 8).unwrap();
    let (model, _) = fit_eigen(&rfm, &data, 5, &FitOptions::default()).unwrap();
    let assignment = spectral_cluster(&model, &data.x.view(), 5, true, 0).unwrap();

    // Ground truth by angular sector; each sector holds one well.
    let mut purity_count = 0usize;
    let mut table = vec![[0usize; 5]; 5];
    for (j, label) in assignment.labels.iter().enumerate() {
        let theta = data.x[[1, j]].atan2(data.x[[0, j]]).rem_euclid(std::f64::consts::TAU);
        let sector = ((theta / std::f64::consts::TAU) * 5.0).floor() as usize % 5;
        table[*label][sector] += 1;
    }
    for row in &table {
        purity_count += row.iter().max().unwrap();
    }
    let purity = purity_count as f64 / assignment.labels.len() as f64;
    assert!(purity >= 0.90, "purity {purity}");
}

#[test]
fn model_files_roundtrip_through_disk() {
    let data = ou_dataset(2_000, 50, 31);
    let rfm = sample_rfm(1, &[16], Activation::Tanh, DistributionSpec::default(), 9).unwrap();
    let (model, _) = fit_singular(&rfm, &data, 3, &FitOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.spm");
    io::write_model(&path, &model).unwrap();
    let back = io::read_model(&path).unwrap();
    assert_eq!(back.mode, SpectralMode::Singular);
    assert_eq!(back.values, model.values);
    assert_eq!(back.weights, model.weights);
    assert_eq!(
        back.companion_weights.as_ref().unwrap(),
        model.companion_weights.as_ref().unwrap()
    );

    // Evaluation through the reloaded model is bit-identical.
    let probe = data.x.slice(ndarray::s![.., ..100]).to_owned();
    let a = model.evaluate_functions(&probe.view()).unwrap();
    let b = back.evaluate_functions(&probe.view()).unwrap();
    assert_eq!(a, b);
}
