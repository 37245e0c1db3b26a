//! Analytic reference spectra for validation, k-means clustering of spectral
//! coordinates, and eigenfunction comparison metrics.

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::operator::SpectralModel;

/// Hermite polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermiteKind {
    /// He_n: He₀=1, He₁=x, He_{n+1} = x·He_n − n·He_{n−1}.
    Probabilists,
    /// H_n: H₀=1, H₁=2x, H_{n+1} = 2x·H_n − 2n·H_{n−1}.
    Physicists,
}

/// Evaluates a Hermite polynomial by its three-term recurrence.
pub fn hermite(kind: HermiteKind, degree: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = match kind {
        HermiteKind::Probabilists => (1.0, x),
        HermiteKind::Physicists => (1.0, 2.0 * x),
    };
    if degree == 0 {
        return prev;
    }
    for n in 1..degree {
        let next = match kind {
            HermiteKind::Probabilists => x * cur - n as f64 * prev,
            HermiteKind::Physicists => 2.0 * x * cur - 2.0 * n as f64 * prev,
        };
        prev = cur;
        cur = next;
    }
    cur
}

/// Reference system with a closed-form spectrum.
#[derive(Debug, Clone, Copy)]
pub enum ReferenceSystem {
    /// Koopman spectrum of the 1-D Ornstein–Uhlenbeck process:
    /// λᵢ = e^{−ατi}, φᵢ(x) = Heᵢ(√(αβ)x)/√(i!) (indices 0-based).
    Ou { alpha: f64, beta: f64, tau: f64 },
    /// Harmonic-oscillator Hamiltonian (ħ = m = 1): Eᵢ = ω(i + ½),
    /// φᵢ(x) = (ω/π)^¼ e^{−ωx²/2} Hᵢ(√ω x)/√(2ⁱ i!).
    Qho { omega: f64 },
}

/// Evaluators for the closed-form eigenvalues and eigenfunctions of a
/// reference system. Indices are 0-based: `value(0)` is the leading Koopman
/// eigenvalue (always 1) or the ground-state energy.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticSpectrum {
    pub system: ReferenceSystem,
}

/// Builds the analytic spectrum of a reference system.
pub fn analytic_reference(system: ReferenceSystem) -> AnalyticSpectrum {
    AnalyticSpectrum { system }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl AnalyticSpectrum {
    pub fn name(&self) -> &'static str {
        match self.system {
            ReferenceSystem::Ou { .. } => "ou",
            ReferenceSystem::Qho { .. } => "qho",
        }
    }

    pub fn value(&self, index: usize) -> f64 {
        match self.system {
            ReferenceSystem::Ou { alpha, tau, .. } => (-alpha * index as f64 * tau).exp(),
            ReferenceSystem::Qho { omega } => omega * (index as f64 + 0.5),
        }
    }

    pub fn function(&self, index: usize, x: f64) -> f64 {
        match self.system {
            ReferenceSystem::Ou { alpha, beta, .. } => {
                let z = (alpha * beta).sqrt() * x;
                hermite(HermiteKind::Probabilists, index, z) / factorial(index).sqrt()
            }
            ReferenceSystem::Qho { omega } => {
                let norm = (omega / std::f64::consts::PI).powf(0.25)
                    / (2f64.powi(index as i32) * factorial(index)).sqrt();
                norm * (-omega * x * x / 2.0).exp()
                    * hermite(HermiteKind::Physicists, index, omega.sqrt() * x)
            }
        }
    }
}

/// Hard cluster assignment produced by k-means.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// k×dims centers in the clustered coordinates.
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

struct KmeansRun {
    labels: Vec<usize>,
    centers: Array2<f64>,
    inertia: f64,
    /// Inertia after every Lloyd iteration; non-increasing.
    history: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One seeded k-means run: k-means++ initialization followed by Lloyd
/// iterations until the assignment stabilizes. Returns `None` when a cluster
/// empties, which counts as a degenerate restart.
fn kmeans_single(points: &ArrayView2<f64>, k: usize, seed: u64, stream: u64) -> Option<KmeansRun> {
    let (m, dims) = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let rows: Vec<&[f64]> = (0..m)
        .map(|i| points.row(i).to_slice().expect("standard layout"))
        .collect();

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(rows[rng.random_range(0..m)].to_vec());
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|r| squared_distance(r, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All mass already covered; any point works.
            rng.random_range(0..m)
        } else {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = m - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(rows[next].to_vec());
        for (i, r) in rows.iter().enumerate() {
            let d = squared_distance(r, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut labels = vec![0usize; m];
    let mut history = Vec::new();
    for _iter in 0..300 {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = squared_distance(r, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        history.push(inertia);

        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dims]; k];
        for (i, r) in rows.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            for d in 0..dims {
                centers[c][d] = sums[c][d] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, r) in rows.iter().enumerate() {
        inertia += squared_distance(r, &centers[labels[i]]);
    }
    let centers = Array2::from_shape_fn((k, dims), |(i, j)| centers[i][j]);
    Some(KmeansRun {
        labels,
        centers,
        inertia,
        history,
    })
}

/// Seeded k-means with `restarts` independent initializations, keeping the
/// lowest-inertia run (ties break toward the earlier restart). Rows of
/// `points` are samples.
pub fn kmeans(
    points: &ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let m = points.nrows();
    if k < 2 {
        return Err(CoreError::InvalidDomain(format!("k must be >= 2, got {k}")));
    }
    if m < k {
        return Err(CoreError::InsufficientData(format!(
            "{m} points cannot form {k} clusters"
        )));
    }
    // Rows must be contiguous for the distance kernels.
    let std_points = points.as_standard_layout();
    let points = std_points.view();
    let runs: Vec<Option<KmeansRun>> = (0..restarts)
        .into_par_iter()
        .map(|r| kmeans_single(&points, k, seed, r as u64))
        .collect();
    let best = runs
        .into_iter()
        .flatten()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
        .ok_or_else(|| {
            CoreError::ClusteringFailed("every restart ended with an empty cluster".into())
        })?;
    debug_assert!(best.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    Ok(ClusterAssignment {
        labels: best.labels,
        centers: (0..best.centers.nrows())
            .map(|i| best.centers.row(i).to_vec())
            .collect(),
        inertia: best.inertia,
    })
}

/// Options for [`spectral_cluster_with`].
#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    /// Keep the leading (typically constant) function in the embedding.
    pub include_first: bool,
    pub seed: u64,
    pub restarts: usize,
    /// Scale each spectral coordinate by |value_i| before clustering; the
    /// default is the plain unweighted embedding.
    pub eigenvalue_weighted: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            include_first: true,
            seed: 0,
            restarts: 10,
            eigenvalue_weighted: false,
        }
    }
}

/// Embeds data points into the model's spectral coordinates and k-means
/// clusters them. With `include_first = false` the leading (constant)
/// function is dropped from the embedding.
pub fn spectral_cluster(
    model: &SpectralModel,
    data: &ArrayView2<f64>,
    k: usize,
    include_first: bool,
    seed: u64,
) -> Result<ClusterAssignment> {
    spectral_cluster_with(
        model,
        data,
        k,
        &ClusterOptions {
            include_first,
            seed,
            ..ClusterOptions::default()
        },
    )
}

/// [`spectral_cluster`] with the full option set.
pub fn spectral_cluster_with(
    model: &SpectralModel,
    data: &ArrayView2<f64>,
    k: usize,
    opts: &ClusterOptions,
) -> Result<ClusterAssignment> {
    let needed = if opts.include_first {
        k
    } else {
        k.saturating_sub(1).max(1)
    };
    if model.n_functions() < needed.min(k) {
        return Err(CoreError::InvalidShape(format!(
            "model has {} functions, clustering needs at least {}",
            model.n_functions(),
            needed.min(k)
        )));
    }
    let mut coords = model.evaluate_functions(data)?;
    if opts.eigenvalue_weighted {
        for (i, mut row) in coords.rows_mut().into_iter().enumerate() {
            let w = model.values[i].abs();
            row.mapv_inplace(|v| v * w);
        }
    }
    let coords = if opts.include_first {
        coords
    } else {
        coords.slice(ndarray::s![1.., ..]).to_owned()
    };
    let transposed = coords.t().to_owned();
    kmeans(&transposed.view(), k, opts.seed, opts.restarts.max(1))
}

/// Pearson correlation and sign-aligned RMSE between two sampled functions.
///
/// Both are normalized to unit RMS before the RMSE, so it is scale-free; the
/// correlation keeps its sign.
pub fn compare_functions(f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    if f.len() != g.len() || f.is_empty() {
        return Err(CoreError::InvalidShape(format!(
            "cannot compare {} against {} samples",
            f.len(),
            g.len()
        )));
    }
    let k = f.len() as f64;
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / k).sqrt();
    let (nf, ng) = (rms(f), rms(g));
    if nf <= 1e-14 || ng <= 1e-14 {
        return Err(CoreError::DegenerateFunction(
            "cannot compare a function with zero norm".into(),
        ));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / k;
    let (mf, mg) = (mean(f), mean(g));
    let mut cov = 0.0;
    let mut vf = 0.0;
    let mut vg = 0.0;
    for (a, b) in f.iter().zip(g.iter()) {
        cov += (a - mf) * (b - mg);
        vf += (a - mf) * (a - mf);
        vg += (b - mg) * (b - mg);
    }
    if vf <= 1e-24 || vg <= 1e-24 {
        return Err(CoreError::DegenerateFunction(
            "zero-variance function has no defined correlation".into(),
        ));
    }
    let corr = cov / (vf.sqrt() * vg.sqrt());

    let dot: f64 = f.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let rmse = (f
        .iter()
        .zip(g.iter())
        .map(|(a, b)| {
            let d = sign * a / nf - b / ng;
            d * d
        })
        .sum::<f64>()
        / k)
        .sqrt();
    Ok((corr, rmse))
}

/// Correlation and sign-aligned RMSE between a fitted function and an
/// analytic reference on the given points (`1×k` for the 1-D references).
pub fn eigenfunction_error(
    model: &SpectralModel,
    reference: &AnalyticSpectrum,
    index: usize,
    points: &ArrayView2<f64>,
) -> Result<(f64, f64)> {
    if index >= model.n_functions() {
        return Err(CoreError::InvalidShape(format!(
            "model has {} functions, requested index {index}",
            model.n_functions()
        )));
    }
    let fitted = model.evaluate_functions(points)?;
    let f: Vec<f64> = fitted.row(index).to_vec();
    let g: Vec<f64> = (0..points.ncols())
        .map(|j| reference.function(index, points[[0, j]]))
        .collect();
    compare_functions(&f, &g)
}

/// One row of an error-metrics export: how well run `(system, seed, N, m)`
/// recovered reference function `index`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorMetricsRecord {
    pub system: String,
    pub seed: u64,
    pub feature_dim: usize,
    pub sample_count: usize,
    pub index: usize,
    pub correlation: f64,
    pub rmse: f64,
}

/// Serializes error metrics as a JSON array.
pub fn error_metrics_json(records: &[ErrorMetricsRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

/// Distance to the k-th nearest neighbor in `train` for every column of
/// `query`; a cheap inverse-density proxy.
pub fn knn_distance(train: &ArrayView2<f64>, query: &ArrayView2<f64>, k: usize) -> Vec<f64> {
    let n = train.ncols();
    let k = k.min(n).max(1);
    (0..query.ncols())
        .into_par_iter()
        .map(|q| {
            let qcol = query.column(q);
            let mut dists: Vec<f64> = (0..n)
                .map(|t| {
                    train
                        .column(t)
                        .iter()
                        .zip(qcol.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .collect();
            dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            dists[k - 1].sqrt()
        })
        .collect()
}
