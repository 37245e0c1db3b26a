//! Ensemble learning over independently sampled feature maps.
//!
//! Every member fits the same dataset with its own random basis; the spread
//! of the aligned eigenfunctions across members is the uncertainty estimate.
//! Alignment matches member functions to a reference member by absolute
//! correlation, because eigenfunctions come back in arbitrary sign and, under
//! near-degenerate eigenvalues, arbitrary order.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::SnapshotDataset;
use crate::error::{CoreError, Result};
use crate::features::{sample_rfm, Activation, DistributionSpec};
use crate::io::fmt_f64;
use crate::operator::{
    fit_eigen, fit_schrodinger, fit_singular, FitOptions, HamiltonianParams, SpectralMode,
    SpectralModel,
};

/// What every ensemble member fits.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub mode: SpectralMode,
    pub n: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub distribution: DistributionSpec,
    pub options: FitOptions,
    /// Required when `mode` is `Schrodinger`.
    pub hamiltonian: Option<HamiltonianParams>,
    /// Resample the dataset with replacement per member (seeded by the
    /// member seed) instead of sharing it verbatim. Off by default: the
    /// ensemble then quantifies feature randomness only.
    pub bootstrap: bool,
}

/// One fitted member, reduced to what aggregation needs.
#[derive(Debug, Clone)]
pub struct MemberFit {
    pub seed: u64,
    pub values: Array1<f64>,
    /// n×k evaluations on the shared evaluation points.
    pub evaluations: Array2<f64>,
}

/// Alignment applied to one member before aggregation.
#[derive(Debug, Clone, Serialize)]
pub struct MemberAlignment {
    pub seed: u64,
    /// `permutation[i]` is the member row matched to reference row `i`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// Set when some match was decided by less than 0.05 in |correlation|,
    /// which happens under near-degenerate eigenvalues.
    pub ambiguous: bool,
}

/// Mean/variance summary of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub member_count: usize,
    /// Per-index mean of the aligned eigenvalues.
    pub value_mean: Array1<f64>,
    /// Per-index sample standard deviation of the aligned eigenvalues.
    pub value_std: Array1<f64>,
    /// n×k pointwise mean of the aligned member evaluations.
    pub function_mean: Array2<f64>,
    /// n×k pointwise sample variance of the aligned member evaluations.
    pub function_variance: Array2<f64>,
    pub alignment: Vec<MemberAlignment>,
    /// Seeds of members that failed to fit, with the error message.
    pub failures: Vec<(u64, String)>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 1e-24 || vb <= 1e-24 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Matches member rows to reference rows greedily by |correlation| (largest
/// first, each row used once), flips signs so matched rows correlate
/// positively, and returns the aligned evaluations together with the
/// permuted values.
///
/// Zero-variance rows correlate with nothing; they are matched last with
/// sign +1.
pub fn align_member(
    reference: &Array2<f64>,
    member: &Array2<f64>,
    member_values: &Array1<f64>,
    seed: u64,
) -> Result<(Array2<f64>, Array1<f64>, MemberAlignment)> {
    if reference.dim() != member.dim() {
        return Err(CoreError::InvalidShape(format!(
            "reference is {:?}, member is {:?}",
            reference.dim(),
            member.dim()
        )));
    }
    let n = reference.nrows();
    let ref_rows: Vec<Vec<f64>> = (0..n).map(|i| reference.row(i).to_vec()).collect();
    let mem_rows: Vec<Vec<f64>> = (0..n).map(|i| member.row(i).to_vec()).collect();
    let mut corr = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            corr[[i, j]] = pearson(&ref_rows[i], &mem_rows[j]);
        }
    }

    let mut permutation = vec![usize::MAX; n];
    let mut signs = vec![1.0; n];
    let mut used_ref = vec![false; n];
    let mut used_mem = vec![false; n];
    let mut ambiguous = false;
    for _ in 0..n {
        let mut best = (0usize, 0usize);
        let mut best_abs = -1.0;
        for i in 0..n {
            if used_ref[i] {
                continue;
            }
            for j in 0..n {
                if used_mem[j] {
                    continue;
                }
                let a = corr[[i, j]].abs();
                if a > best_abs {
                    best_abs = a;
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        // Near-tie against any other available candidate for this reference
        // row marks the member as ambiguous.
        for jj in 0..n {
            if jj != j && !used_mem[jj] && (corr[[i, jj]].abs() - best_abs).abs() <= 0.05 {
                ambiguous = true;
            }
        }
        used_ref[i] = true;
        used_mem[j] = true;
        permutation[i] = j;
        signs[i] = if corr[[i, j]] < 0.0 { -1.0 } else { 1.0 };
    }

    let k = reference.ncols();
    let mut aligned = Array2::zeros((n, k));
    let mut values = Array1::zeros(n);
    for i in 0..n {
        let j = permutation[i];
        values[i] = member_values[j];
        for c in 0..k {
            aligned[[i, c]] = signs[i] * member[[j, c]];
        }
    }
    Ok((
        aligned,
        values,
        MemberAlignment {
            seed,
            permutation,
            signs,
            ambiguous,
        },
    ))
}

/// Draws `m` column indices with replacement.
fn bootstrap_resample(data: &SnapshotDataset, seed: u64) -> SnapshotDataset {
    use rand::prelude::*;
    let m = data.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX); // separate stream from the feature sampling
    let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
    let d = data.dim();
    let mut x = Array2::zeros((d, m));
    let mut y = data.y.as_ref().map(|_| Array2::zeros((d, m)));
    for (col, &pick) in picks.iter().enumerate() {
        x.column_mut(col).assign(&data.x.column(pick));
        if let (Some(y), Some(src)) = (y.as_mut(), data.y.as_ref()) {
            y.column_mut(col).assign(&src.column(pick));
        }
    }
    SnapshotDataset {
        x,
        y,
        lag_time: data.lag_time,
        source: data.source.clone(),
    }
}

fn fit_member(
    data: &SnapshotDataset,
    spec: &EnsembleSpec,
    seed: u64,
    eval_points: &Array2<f64>,
) -> Result<MemberFit> {
    let rfm = sample_rfm(
        data.dim(),
        &spec.widths,
        spec.activation,
        spec.distribution,
        seed,
    )?;
    let resampled;
    let data = if spec.bootstrap {
        resampled = bootstrap_resample(data, seed);
        &resampled
    } else {
        data
    };
    let model: SpectralModel = match spec.mode {
        SpectralMode::KoopmanEigen => fit_eigen(&rfm, data, spec.n, &spec.options)?.0,
        SpectralMode::Singular => fit_singular(&rfm, data, spec.n, &spec.options)?.0,
        SpectralMode::Schrodinger => {
            let ham = spec.hamiltonian.as_ref().ok_or_else(|| {
                CoreError::InvalidShape("schrodinger ensemble needs hamiltonian parameters".into())
            })?;
            fit_schrodinger(&rfm, data, spec.n, ham, &spec.options)?.0
        }
    };
    let evaluations = model.evaluate_functions(&eval_points.view())?;
    Ok(MemberFit {
        seed,
        values: model.values,
        evaluations,
    })
}

/// Aggregates already-fitted members: aligns everything to the member with
/// the smallest seed, then averages. Input order does not matter.
pub fn summarize_members(
    mut fits: Vec<MemberFit>,
    failures: Vec<(u64, String)>,
) -> Result<EnsembleSummary> {
    if fits.len() < 2 {
        return Err(CoreError::EnsembleFailed(format!(
            "need at least 2 fitted members, got {} ({} failed)",
            fits.len(),
            failures.len()
        )));
    }
    fits.sort_by_key(|f| f.seed);
    let reference = fits[0].evaluations.clone();
    let (n, k) = reference.dim();

    let mut aligned_evals = Vec::with_capacity(fits.len());
    let mut aligned_values = Vec::with_capacity(fits.len());
    let mut alignment = Vec::with_capacity(fits.len());
    for fit in &fits {
        let (evals, values, report) =
            align_member(&reference, &fit.evaluations, &fit.values, fit.seed)?;
        aligned_evals.push(evals);
        aligned_values.push(values);
        alignment.push(report);
    }

    let m = fits.len() as f64;
    let mut function_mean = Array2::<f64>::zeros((n, k));
    for e in &aligned_evals {
        function_mean += e;
    }
    function_mean.mapv_inplace(|v| v / m);
    let mut function_variance = Array2::<f64>::zeros((n, k));
    for e in &aligned_evals {
        let d = e - &function_mean;
        function_variance = function_variance + &d * &d;
    }
    function_variance.mapv_inplace(|v| v / (m - 1.0));

    let mut value_mean = Array1::<f64>::zeros(n);
    for v in &aligned_values {
        value_mean += v;
    }
    value_mean.mapv_inplace(|v| v / m);
    let mut value_std = Array1::<f64>::zeros(n);
    for v in &aligned_values {
        let d = v - &value_mean;
        value_std = value_std + &d * &d;
    }
    value_std.mapv_inplace(|v| (v / (m - 1.0)).sqrt());

    Ok(EnsembleSummary {
        member_count: fits.len(),
        value_mean,
        value_std,
        function_mean,
        function_variance,
        alignment,
        failures,
    })
}

/// Fits `members` models with seeds `base_seed..base_seed+members` on the
/// same dataset (members run in parallel), evaluates each on the shared
/// points, and aggregates. Members that fail are skipped and recorded; at
/// least two must survive.
pub fn fit_ensemble(
    data: &SnapshotDataset,
    spec: &EnsembleSpec,
    members: usize,
    base_seed: u64,
    eval_points: &Array2<f64>,
) -> Result<EnsembleSummary> {
    if members < 2 {
        return Err(CoreError::EnsembleFailed(format!(
            "need at least 2 members, got {members}"
        )));
    }
    let results: Vec<(u64, Result<MemberFit>)> = (0..members)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            (seed, fit_member(data, spec, seed, eval_points))
        })
        .collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(fit) => fits.push(fit),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    summarize_members(fits, failures)
}

/// Serializable eigenvalue statistics and alignment report.
#[derive(Debug, Serialize)]
pub struct SummaryReport<'a> {
    pub member_count: usize,
    pub value_mean: Vec<f64>,
    pub value_std: Vec<f64>,
    pub alignment: &'a [MemberAlignment],
    pub failures: &'a [(u64, String)],
}

impl EnsembleSummary {
    /// CSV with one row per evaluation point: index, coordinates, then
    /// per-function mean and variance.
    pub fn to_csv(&self, eval_points: &Array2<f64>) -> String {
        let d = eval_points.nrows();
        let (n, k) = self.function_mean.dim();
        let mut header: Vec<String> = vec!["point".into()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("mean_{i}")));
        header.extend((1..=n).map(|i| format!("var_{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for c in 0..k {
            let mut row: Vec<String> = vec![c.to_string()];
            row.extend((0..d).map(|i| fmt_f64(eval_points[[i, c]])));
            row.extend((0..n).map(|i| fmt_f64(self.function_mean[[i, c]])));
            row.extend((0..n).map(|i| fmt_f64(self.function_variance[[i, c]])));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn report_json(&self) -> String {
        let report = SummaryReport {
            member_count: self.member_count,
            value_mean: self.value_mean.to_vec(),
            value_std: self.value_std.to_vec(),
            alignment: &self.alignment,
            failures: &self.failures,
        };
        serde_json::to_string_pretty(&report).expect("report serializes")
    }
}
