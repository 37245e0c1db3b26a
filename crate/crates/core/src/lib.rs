//! Learning spectral decompositions of dynamical operators (Koopman,
//! forward-backward, and Schrödinger) from data, using frozen random feature
//! maps with a closed-form solution for the output layer.
//!
//! The pipeline: simulate or load snapshot data ([`dynamics`]), build a
//! random basis ([`features`]), estimate covariance matrices and solve the
//! resulting generalized eigenproblem or SVD ([`operator`], [`linalg`]), then
//! validate against closed-form references, cluster metastable states or
//! coherent sets ([`analysis`]), and quantify uncertainty across independent
//! random bases ([`ensemble`]).

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod io;
pub mod linalg;
pub mod operator;

pub use dynamics::{
    bickley_trajectories, builtin_potential, euler_maruyama, generate_potential_dataset,
    lagged_pairs, sample_grid, BickleyJet, GridMode, PotentialSystem, SnapshotDataset, SourceInfo,
    SystemParams, Trajectory, TrajectoryPlan,
};
pub use ensemble::{fit_ensemble, EnsembleSpec, EnsembleSummary, MemberFit};
pub use error::{CoreError, Result};
pub use features::{sample_rfm, Activation, DistFamily, DistributionSpec, RandomFeatureMap};
pub use linalg::{
    regularized_pinv, solve_generalized_sym, solve_nonsym_product, EigenOrder,
    GeneralizedEigenSolution, SingularSolution, SymMatrix, DEFAULT_RANK_TOL,
};
pub use operator::{
    eigen_from_covariances, estimate_covariances, estimator_asymmetry, fit_eigen,
    fit_iterative_basis, fit_schrodinger, fit_singular, orthonormal_rows, ridge_readout,
    trace_loss_with_gradient, AsymmetryDiagnostics, CovarianceSet, CovarianceTarget, FitOptions,
    FitTimings, HamiltonianParams, OutputActivation, SpectralMode, SpectralModel, TrainOptions,
    TrainedBasisModel,
};
pub use analysis::{
    analytic_reference, compare_functions, eigenfunction_error, error_metrics_json, hermite,
    kmeans, knn_distance, spectral_cluster, spectral_cluster_with, AnalyticSpectrum,
    ClusterAssignment, ClusterOptions, ErrorMetricsRecord, HermiteKind, ReferenceSystem,
};
