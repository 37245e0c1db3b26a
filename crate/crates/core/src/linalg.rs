//! Dense symmetric and generalized eigensolvers built on a rank-revealing
//! whitening transform.
//!
//! Gram matrices of correlated random features are badly conditioned, so the
//! generalized problems `A w = λ B w` and `B₀⁺ C B₁⁺ Cᵀ w = σ² w` are never
//! solved by forming explicit inverse products. Instead the mass matrices are
//! eigendecomposed, directions below a relative cutoff are discarded, and the
//! remaining problem is solved in whitened coordinates where it is symmetric
//! (or a plain SVD).

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};

/// Default relative cutoff for discarding near-null directions of a mass
/// matrix. Exposed through every solver configuration.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Requested ordering of returned eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    /// Largest eigenvalue first (transfer-operator convention).
    Descending,
    /// Smallest eigenvalue first (energy convention).
    Ascending,
}

/// A dense symmetric matrix. Construction symmetrizes the entries explicitly
/// and rejects non-finite values, so downstream code can rely on exact
/// symmetry.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    dim: usize,
    entries: Array2<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from approximately symmetric entries.
    ///
    /// The entries are replaced by `(M + Mᵀ)/2`. Non-square or non-finite
    /// input is rejected.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(CoreError::InvalidMatrix(format!(
                "expected square matrix, got {r}x{c}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidMatrix(
                "matrix contains non-finite entries".into(),
            ));
        }
        let sym = (&entries + &entries.t()) * 0.5;
        Ok(Self { dim: r, entries: sym })
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Array2::from_diag(&Array1::from(diag.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }
}

/// Solution of a generalized symmetric eigenproblem `A w = λ B w`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenSolution {
    /// Eigenvalues in the requested order.
    pub values: Array1<f64>,
    /// Eigenvectors as columns, `values[i]` paired with column `i`. The
    /// columns are B-orthonormal on the retained rank.
    pub vectors: Array2<f64>,
    /// Effective numerical rank of the mass matrix.
    pub rank: usize,
    /// Set when fewer than the requested number of pairs could be returned
    /// because the mass matrix rank was too small.
    pub truncated: bool,
}

/// Solution of the two-sided singular problem
/// `C₀₀⁺ C₀₁ C₁₁⁺ C₁₀ w = σ² w`.
#[derive(Debug, Clone)]
pub struct SingularSolution {
    /// Singular values, nonnegative and descending.
    pub values: Array1<f64>,
    /// Right-function weights (columns C₀₀-orthonormal).
    pub right_vectors: Array2<f64>,
    /// Left-function weights (columns C₁₁-orthonormal).
    pub left_vectors: Array2<f64>,
    /// Effective ranks of the two mass matrices.
    pub rank: (usize, usize),
    pub truncated: bool,
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix together with its
/// effective rank.
#[derive(Debug, Clone)]
pub struct PinvResult {
    pub pinv: SymMatrix,
    pub rank: usize,
}

/// Symmetric eigendecomposition, eigenvalues ascending.
///
/// Thin wrapper over a dense tridiagonalization/QL solver; this is the only
/// place the crate touches an external decomposition routine.
pub(crate) fn symmetric_eig(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = dm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Thin SVD `m = U Σ Vᵀ`, singular values descending.
pub(crate) fn thin_svd(m: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (r, c) = m.dim();
    let dm = nalgebra::DMatrix::from_fn(r, c, |i, j| m[[i, j]]);
    let svd = dm.svd(true, true);
    let u = svd.u.expect("svd with compute_u");
    let vt = svd.v_t.expect("svd with compute_v");
    let p = svd.singular_values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let u_nd = Array2::from_shape_fn((r, p), |(i, j)| u[(i, order[j])]);
    let v_nd = Array2::from_shape_fn((c, p), |(i, j)| vt[(order[j], i)]);
    (u_nd, sigma, v_nd)
}

/// Whitening factor of a symmetric PSD matrix: `L` with `Lᵀ B L = I` on the
/// retained rank, plus the retained rank itself.
struct Whitener {
    /// dim × rank
    l: Array2<f64>,
    rank: usize,
}

fn whiten(b: &SymMatrix, tol: f64) -> Result<Whitener> {
    let (vals, vecs) = symmetric_eig(b.entries());
    let max_eig = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_eig <= 0.0 {
        return Err(CoreError::RankZero);
    }
    let cutoff = tol * max_eig;
    let kept: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cutoff).collect();
    if kept.is_empty() {
        return Err(CoreError::RankZero);
    }
    let dim = b.dim();
    let rank = kept.len();
    let mut l = Array2::zeros((dim, rank));
    for (jj, &j) in kept.iter().enumerate() {
        let inv_sqrt = 1.0 / vals[j].sqrt();
        for i in 0..dim {
            l[[i, jj]] = vecs[[i, j]] * inv_sqrt;
        }
    }
    Ok(Whitener { l, rank })
}

/// Flips column signs so the entry of largest absolute value in each column
/// is positive. Ties resolve to the first such entry.
pub(crate) fn fix_column_signs(m: &mut Array2<f64>) -> Vec<f64> {
    let (rows, cols) = m.dim();
    let mut signs = vec![1.0; cols];
    for j in 0..cols {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for i in 0..rows {
            let a = m[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[[best, j]] < 0.0 {
            signs[j] = -1.0;
            for i in 0..rows {
                m[[i, j] ] = -m[[i, j]];
            }
        }
    }
    signs
}

/// Regularized Moore–Penrose pseudoinverse of a symmetric PSD matrix.
///
/// Eigenvalues below `tol × λ_max` are treated as zero. Fails with
/// [`CoreError::RankZero`] when nothing survives the cutoff.
pub fn regularized_pinv(m: &SymMatrix, tol: f64) -> Result<PinvResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CoreError::InvalidMatrix(format!(
            "pinv cutoff must lie in (0, 1), got {tol}"
        )));
    }
    let (vals, vecs) = symmetric_eig(m.entries());
    let max_eig = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_eig <= 0.0 {
        return Err(CoreError::RankZero);
    }
    let cutoff = tol * max_eig;
    let dim = m.dim();
    let mut rank = 0usize;
    let mut pinv = Array2::<f64>::zeros((dim, dim));
    for j in 0..dim {
        if vals[j] > cutoff {
            rank += 1;
            let w = 1.0 / vals[j];
            let col = vecs.column(j);
            for a in 0..dim {
                let ca = col[a] * w;
                for b in 0..dim {
                    pinv[[a, b]] += ca * col[b];
                }
            }
        }
    }
    if rank == 0 {
        return Err(CoreError::RankZero);
    }
    Ok(PinvResult {
        pinv: SymMatrix::new(pinv)?,
        rank,
    })
}

/// Solves the generalized symmetric eigenproblem `A w = λ B w` by whitening.
///
/// `B` is eigendecomposed and reduced to its numerical range, `Lᵀ A L` is
/// solved as an ordinary symmetric problem, and the eigenvectors are mapped
/// back, which makes them B-orthonormal by construction. Returns the `k`
/// leading pairs in the requested order; if `k` exceeds the retained rank the
/// result is truncated and flagged.
pub fn solve_generalized_sym(
    a: &SymMatrix,
    b: &SymMatrix,
    k: usize,
    order: EigenOrder,
    tol: f64,
) -> Result<GeneralizedEigenSolution> {
    if a.dim() != b.dim() {
        return Err(CoreError::InvalidMatrix(format!(
            "pencil dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let w = whiten(b, tol)?;
    let reduced = w.l.t().dot(a.entries()).dot(&w.l);
    let reduced = SymMatrix::new(reduced)?;
    let (vals, vecs) = symmetric_eig(reduced.entries());
    let rank = w.rank;
    let k_eff = k.min(rank);
    let truncated = k > rank;

    // symmetric_eig sorts ascending; pick the requested end.
    let selected: Vec<usize> = match order {
        EigenOrder::Descending => (0..rank).rev().take(k_eff).collect(),
        EigenOrder::Ascending => (0..rank).take(k_eff).collect(),
    };
    let values = Array1::from_iter(selected.iter().map(|&j| vals[j]));
    let mut back = Array2::zeros((b.dim(), k_eff));
    for (jj, &j) in selected.iter().enumerate() {
        let col = w.l.dot(&vecs.column(j));
        back.column_mut(jj).assign(&col);
    }
    fix_column_signs(&mut back);
    Ok(GeneralizedEigenSolution {
        values,
        vectors: back,
        rank,
        truncated,
    })
}

/// Solves `C₀₀⁺ C₀₁ C₁₁⁺ C₁₀ w = σ² w` in symmetric form.
///
/// With whiteners `L₀`, `L₁` of the two mass matrices, the singular values of
/// `M = L₀ᵀ C₀₁ L₁` are the σᵢ; mapping the singular vector pairs back through
/// the whiteners yields weight columns orthonormal under `C₀₀` and `C₁₁`
/// respectively. `C₁₀` must equal `C₀₁ᵀ` to within 1e-10 relative tolerance.
pub fn solve_nonsym_product(
    c00: &SymMatrix,
    c01: &Array2<f64>,
    c11: &SymMatrix,
    c10: &Array2<f64>,
    k: usize,
    tol: f64,
) -> Result<SingularSolution> {
    let (n0, n1) = c01.dim();
    if c00.dim() != n0 || c11.dim() != n1 || c10.dim() != (n1, n0) {
        return Err(CoreError::InvalidMatrix(format!(
            "covariance dimensions inconsistent: C00 dim {}, C01 {n0}x{n1}, C11 dim {}, C10 {:?}",
            c00.dim(),
            c11.dim(),
            c10.dim()
        )));
    }
    let scale = c01.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let max_dev = c10
        .t()
        .iter()
        .zip(c01.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if max_dev > 1e-10 * scale {
        return Err(CoreError::InvalidMatrix(format!(
            "C10 is not the transpose of C01 (max deviation {max_dev:.3e})"
        )));
    }

    let w0 = whiten(c00, tol)?;
    let w1 = whiten(c11, tol)?;
    let m = w0.l.t().dot(c01).dot(&w1.l);
    let (u, sigma, v) = thin_svd(&m);
    let k_eff = k.min(w0.rank.min(w1.rank));
    let truncated = k > w0.rank.min(w1.rank);

    let values = Array1::from_iter((0..k_eff).map(|i| sigma[i]));
    let mut right = Array2::zeros((c00.dim(), k_eff));
    let mut left = Array2::zeros((c11.dim(), k_eff));
    for j in 0..k_eff {
        right.column_mut(j).assign(&w0.l.dot(&u.column(j)));
        left.column_mut(j).assign(&w1.l.dot(&v.column(j)));
    }
    // Sign convention on the right functions; left functions flip in lockstep
    // so that the pair still realizes +σ.
    let signs = fix_column_signs(&mut right);
    for (j, s) in signs.iter().enumerate() {
        if *s < 0.0 {
            let mut col = left.column_mut(j);
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(SingularSolution {
        values,
        right_vectors: right,
        left_vectors: left,
        rank: (w0.rank, w1.rank),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(dim: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let m = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..1.0));
        SymMatrix::new(&m + &m.t()).unwrap()
    }

    fn random_gram(dim: usize, rows: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let b = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0));
        SymMatrix::new(b.t().dot(&b)).unwrap()
    }

    /// Brute-force oracle: real eigenvalues of a general dense matrix via a
    /// Schur-based complex eigensolver, sorted descending.
    fn brute_force_eigvals(m: &Array2<f64>) -> Vec<f64> {
        let n = m.nrows();
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
        let eig = dm.complex_eigenvalues();
        let mut vals: Vec<f64> = eig
            .iter()
            .map(|c| {
                assert!(c.im.abs() < 1e-8, "oracle produced complex eigenvalue {c}");
                c.re
            })
            .collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals
    }

    #[test]
    fn sym_matrix_rejects_non_finite() {
        let m = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(matches!(
            SymMatrix::new(m),
            Err(CoreError::InvalidMatrix(_))
        ));
    }

    #[test]
    fn pinv_of_diagonal() {
        let m = SymMatrix::from_diag(&[4.0, 1.0]).unwrap();
        let r = regularized_pinv(&m, 1e-10).unwrap();
        assert_abs_diff_eq!(r.pinv.entries()[[0, 0]], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(r.pinv.entries()[[1, 1]], 1.0, epsilon = 1e-14);
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let m = SymMatrix::from_diag(&[1.0, 0.0]).unwrap();
        let r = regularized_pinv(&m, 1e-10).unwrap();
        assert_abs_diff_eq!(r.pinv.entries()[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.pinv.entries()[[1, 1]], 0.0, epsilon = 1e-14);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn pinv_satisfies_penrose_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_gram(5, 5, &mut rng);
        let r = regularized_pinv(&g, 1e-10).unwrap();
        let gpg = g.entries().dot(r.pinv.entries()).dot(g.entries());
        for (a, b) in gpg.iter().zip(g.entries().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn pinv_of_zero_matrix_is_rank_zero() {
        let m = SymMatrix::from_diag(&[0.0, 0.0]).unwrap();
        assert!(matches!(regularized_pinv(&m, 1e-10), Err(CoreError::RankZero)));
    }

    #[test]
    fn generalized_identity_mass() {
        let a = SymMatrix::from_diag(&[2.0, 1.0]).unwrap();
        let b = SymMatrix::from_diag(&[1.0, 1.0]).unwrap();
        let sol = solve_generalized_sym(&a, &b, 2, EigenOrder::Descending, 1e-10).unwrap();
        assert_abs_diff_eq!(sol.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.values[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.vectors[[0, 0]].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.vectors[[1, 1]].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.vectors[[1, 0]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pencil_with_equal_matrices_has_unit_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_gram(6, 9, &mut rng);
        let sol = solve_generalized_sym(&b, &b, 6, EigenOrder::Descending, 1e-10).unwrap();
        for v in sol.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn random_pencil_matches_brute_force_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_sym(8, &mut rng);
        let b = random_gram(8, 12, &mut rng);
        let sol = solve_generalized_sym(&a, &b, 8, EigenOrder::Descending, 1e-12).unwrap();
        assert_eq!(sol.rank, 8);

        let binv = regularized_pinv(&b, 1e-12).unwrap();
        let product = binv.pinv.entries().dot(a.entries());
        let reference = brute_force_eigvals(&product);
        for (got, want) in sol.values.iter().zip(reference.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal_with_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_sym(10, &mut rng);
        let b = random_gram(10, 15, &mut rng);
        let sol = solve_generalized_sym(&a, &b, 10, EigenOrder::Descending, 1e-12).unwrap();

        let gram = sol.vectors.t().dot(b.entries()).dot(&sol.vectors);
        for i in 0..sol.values.len() {
            for j in 0..sol.values.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]], want, epsilon = 1e-8);
            }
        }

        // Sign convention: the largest-magnitude entry of each column is
        // positive.
        for j in 0..sol.vectors.ncols() {
            let col = sol.vectors.column(j);
            let mut best = 0;
            for i in 0..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            assert!(col[best] > 0.0, "column {j} sign convention violated");
        }

        let a_norm = a.entries().iter().map(|v| v * v).sum::<f64>().sqrt();
        for (j, lambda) in sol.values.iter().enumerate() {
            let av = a.entries().dot(&sol.vectors.column(j));
            let bv = b.entries().dot(&sol.vectors.column(j));
            let res = (&av - &(&bv * *lambda)).mapv(|v| v * v).sum().sqrt();
            assert!(res / a_norm <= 1e-8, "residual {res} too large");
        }
    }

    #[test]
    fn truncation_is_flagged_when_rank_is_short() {
        let a = SymMatrix::from_diag(&[2.0, 1.0, 0.5]).unwrap();
        let b = SymMatrix::from_diag(&[1.0, 1.0, 0.0]).unwrap();
        let sol = solve_generalized_sym(&a, &b, 3, EigenOrder::Descending, 1e-10).unwrap();
        assert!(sol.truncated);
        assert_eq!(sol.rank, 2);
        assert_eq!(sol.values.len(), 2);
    }

    #[test]
    fn rank_zero_mass_matrix_errors() {
        let a = SymMatrix::from_diag(&[1.0, 1.0]).unwrap();
        let b = SymMatrix::from_diag(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            solve_generalized_sym(&a, &b, 1, EigenOrder::Descending, 1e-10),
            Err(CoreError::RankZero)
        ));
    }

    #[test]
    fn singular_identity_covariances() {
        let eye = SymMatrix::from_diag(&[1.0; 4]).unwrap();
        let id = Array2::eye(4);
        let sol = solve_nonsym_product(&eye, &id, &eye, &id, 4, 1e-10).unwrap();
        for v in sol.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_values_match_generalized_solver_in_symmetric_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c00 = random_gram(6, 10, &mut rng);
        let c01 = random_sym(6, &mut rng);
        let sol = solve_nonsym_product(
            &c00,
            c01.entries(),
            &c00,
            &c01.entries().t().to_owned(),
            6,
            1e-12,
        )
        .unwrap();
        let eig = solve_generalized_sym(&c01, &c00, 6, EigenOrder::Descending, 1e-12).unwrap();
        let mut abs_eig: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
        abs_eig.sort_by(|a, b| b.total_cmp(a));
        for (s, l) in sol.values.iter().zip(abs_eig.iter()) {
            assert_abs_diff_eq!(s, l, epsilon = 1e-8);
        }
    }

    #[test]
    fn singular_squares_match_brute_force_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c00 = random_gram(6, 9, &mut rng);
        let c11 = random_gram(6, 9, &mut rng);
        let c01 = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
        let c10 = c01.t().to_owned();
        let sol = solve_nonsym_product(&c00, &c01, &c11, &c10, 6, 1e-12).unwrap();

        let p0 = regularized_pinv(&c00, 1e-12).unwrap().pinv;
        let p1 = regularized_pinv(&c11, 1e-12).unwrap().pinv;
        let product = p0.entries().dot(&c01).dot(p1.entries()).dot(&c10);
        let reference = brute_force_eigvals(&product);
        for (s, l) in sol.values.iter().zip(reference.iter()) {
            assert_abs_diff_eq!(s * s, *l, epsilon = 1e-8);
        }
    }

    #[test]
    fn singular_rejects_inconsistent_c10() {
        let eye = SymMatrix::from_diag(&[1.0; 3]).unwrap();
        let c01 = Array2::eye(3);
        let c10 = Array2::eye(3) * 1.5;
        assert!(matches!(
            solve_nonsym_product(&eye, &c01, &eye, &c10, 2, 1e-10),
            Err(CoreError::InvalidMatrix(_))
        ));
    }

    #[test]
    fn singular_values_descending_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let c00 = random_gram(7, 11, &mut rng);
        let c11 = random_gram(7, 11, &mut rng);
        let c01 = Array2::from_shape_fn((7, 7), |_| rng.random_range(-1.0..1.0));
        let c10 = c01.t().to_owned();
        let sol = solve_nonsym_product(&c00, &c01, &c11, &c10, 5, 1e-12).unwrap();
        for w in sol.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(sol.values.iter().all(|v| *v >= 0.0));
        let gram_r = sol.right_vectors.t().dot(c00.entries()).dot(&sol.right_vectors);
        let gram_l = sol.left_vectors.t().dot(c11.entries()).dot(&sol.left_vectors);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram_r[[i, j]], want, epsilon = 1e-8);
                assert_abs_diff_eq!(gram_l[[i, j]], want, epsilon = 1e-8);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_gram(dim: usize) -> impl Strategy<Value = SymMatrix> {
            proptest::collection::vec(-1.0..1.0f64, dim * (dim + 2))
                .prop_map(move |v| {
                    let b = Array2::from_shape_vec((dim + 2, dim), v).unwrap();
                    SymMatrix::new(b.t().dot(&b)).unwrap()
                })
        }

        fn arb_sym(dim: usize) -> impl Strategy<Value = SymMatrix> {
            proptest::collection::vec(-1.0..1.0f64, dim * dim).prop_map(move |v| {
                let m = Array2::from_shape_vec((dim, dim), v).unwrap();
                SymMatrix::new(&m + &m.t()).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn scaling_pencil_leaves_solution_unchanged(
                a in arb_sym(5),
                b in arb_gram(5),
                c in 0.1..10.0f64,
            ) {
                let base = solve_generalized_sym(&a, &b, 5, EigenOrder::Descending, 1e-12).unwrap();
                let a2 = SymMatrix::new(a.entries() * c).unwrap();
                let b2 = SymMatrix::new(b.entries() * c).unwrap();
                let scaled = solve_generalized_sym(&a2, &b2, 5, EigenOrder::Descending, 1e-12).unwrap();
                for (x, y) in base.values.iter().zip(scaled.values.iter()) {
                    prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
                }
                // Vectors are scaled by 1/sqrt(c) (B-normalization) but keep direction.
                for j in 0..base.vectors.ncols() {
                    let u = base.vectors.column(j);
                    let v = scaled.vectors.column(j);
                    for (ui, vi) in u.iter().zip(v.iter()) {
                        prop_assert!((ui - vi * c.sqrt()).abs() <= 1e-6);
                    }
                }
            }

            #[test]
            fn pinv_is_symmetric_and_psd_consistent(g in arb_gram(4)) {
                let r = regularized_pinv(&g, 1e-12).unwrap();
                let p = r.pinv.entries();
                // pinv of a Gram matrix is itself symmetric PSD: check x'Px >= -eps.
                let x = Array1::from(vec![0.3, -0.7, 0.2, 0.9]);
                let q = x.dot(&p.dot(&x));
                prop_assert!(q >= -1e-10);
                let gpg = g.entries().dot(p).dot(g.entries());
                for (a, b) in gpg.iter().zip(g.entries().iter()) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
            }
        }
    }
}
