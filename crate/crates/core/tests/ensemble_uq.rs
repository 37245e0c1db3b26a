//! Ensemble behavior on a well-separated self-adjoint benchmark.

use transferop_core::*;

#[test]
fn ou_ensemble_second_eigenvalue_is_stable_across_members() {
    // Feature randomness alone barely moves λ₂ when the spectrum is well
    // separated and the data is plentiful.
    let system = PotentialSystem::ou(1.0, 4.0).unwrap();
    let data = generate_potential_dataset(
        &system,
        TrajectoryPlan {
            pairs: 20_000,
            lag_steps: 100,
            stride: 100,
            step_size: 0.005,
            burn_in: 1000,
            seed: 3,
        },
    )
    .unwrap();
    let spec = EnsembleSpec {
        mode: SpectralMode::KoopmanEigen,
        n: 3,
        widths: vec![256],
        activation: Activation::Tanh,
        distribution: DistributionSpec::default(),
        options: FitOptions::default(),
        hamiltonian: None,
        bootstrap: false,
    };
    let eval = sample_grid(&[(-1.5, 1.5)], 101, GridMode::RegularGrid, 0).unwrap();
    let summary = fit_ensemble(&data, &spec, 20, 500, &eval.x).unwrap();

    assert!(summary.failures.is_empty());
    assert_eq!(summary.member_count, 20);
    assert!(
        summary.value_std[1] <= 0.05,
        "std of second eigenvalue {} too large",
        summary.value_std[1]
    );
    assert!((summary.value_mean[0] - 1.0).abs() <= 0.02);
    assert!(summary.function_variance.iter().all(|v| *v >= 0.0));

    // The CSV export carries one row per evaluation point with mean and
    // variance columns for each function.
    let csv = summary.to_csv(&eval.x);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 102);
    assert_eq!(lines[0], "point,x1,mean_1,mean_2,mean_3,var_1,var_2,var_3");

    let json = summary.report_json();
    assert!(json.contains("value_std"));
    assert!(json.contains("permutation"));
}
