//! Dense symmetric linear algebra: the `SymMatrix` container, symmetric
//! eigendecomposition with verified invariants, spectral truncation, PSD
//! projection, norm computation, and matrix CSV round-trips.
//!
//! Everything here is sized for desk-scale problems (n up to a few thousand)
//! and favors exactness of invariants over raw speed: eigendecompositions are
//! verified against their reconstruction, and every constructor that produces
//! a `SymMatrix` guarantees bitwise symmetry of the stored entries.

mod oracle;

pub use oracle::{oracle_from_dense, DenseOracle, MatvecOracle, ResidualOracle};

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{LrpdError, Result};

/// Relative tolerance used when validating symmetry of external input.
pub const SYMMETRY_REL_TOL: f64 = 1e-8;

/// Dense symmetric matrix with a bitwise symmetry guarantee.
///
/// `entries[(i, j)] == entries[(j, i)]` holds exactly for every constructed
/// value. Near-symmetric input (for example from file round-trips) must go
/// through [`SymMatrix::symmetrized`], which averages the two triangles;
/// [`SymMatrix::try_new`] rejects anything that is not exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix that is already exactly symmetric.
    pub fn try_new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(LrpdError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let mut max_dev: f64 = 0.0;
        for j in 0..data.ncols() {
            for i in 0..j {
                max_dev = max_dev.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if max_dev > 0.0 {
            return Err(LrpdError::NotSymmetric { max_dev, tol: 0.0 });
        }
        Ok(Self { data })
    }

    /// Symmetrizes an arbitrary square matrix as `(X + X^T) / 2`.
    ///
    /// This is the only entry point that accepts asymmetric data; use it when
    /// floating-point noise is expected (file input, products of factors).
    pub fn symmetrized(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(LrpdError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let n = data.nrows();
        let mut out = data;
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(Self { data: out })
    }

    /// Builds a matrix from a function evaluated on the lower triangle and
    /// mirrored, so symmetry holds by construction.
    pub fn from_fn_symmetric<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut data = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    /// Gram product `G * G^T`, mirrored so the result is exactly symmetric.
    pub fn gram(g: &DMatrix<f64>) -> Self {
        Self::from_fn_symmetric(g.nrows(), |i, j| g.row(i).dot(&g.row(j)))
    }

    /// Diagonal matrix `diag(d)`.
    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        Self {
            data: DMatrix::from_diagonal(d),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.data.diagonal()
    }

    /// `self - diag(d)`; symmetry is preserved because only the diagonal moves.
    pub fn sub_diagonal(&self, d: &DVector<f64>) -> Result<Self> {
        if d.len() != self.dim() {
            return Err(LrpdError::DimensionMismatch {
                expected: self.dim(),
                got: d.len(),
            });
        }
        let mut out = self.data.clone();
        for i in 0..self.dim() {
            out[(i, i)] -= d[i];
        }
        Ok(Self { data: out })
    }

    /// Entrywise difference; symmetric operands give a symmetric result.
    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(LrpdError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(LrpdError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            data: &self.data * alpha,
        }
    }

    /// Principal submatrix on `indices` (rows and columns alike).
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<Self> {
        let n = self.dim();
        for &i in indices {
            if i >= n {
                return Err(LrpdError::InvalidPartition(format!(
                    "index {i} out of range for dimension {n}"
                )));
            }
        }
        let m = indices.len();
        let mut data = DMatrix::zeros(m, m);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                data[(a, b)] = self.data[(i, j)];
            }
        }
        Ok(Self { data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Symmetric eigendecomposition `A = V diag(values) V^T`.
///
/// Eigenvalues are sorted descending and `vectors` has orthonormal columns;
/// both properties are verified by [`eig_sym`] before a value is returned.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    /// Eigenvalues, descending.
    pub values: DVector<f64>,
    /// Matching eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    /// Reconstructs `V diag(values) V^T` with exact symmetry.
    pub fn reconstruct(&self) -> SymMatrix {
        weighted_outer(&self.vectors, &self.values, self.values.len())
    }

    /// Orthogonal projector onto the span of the top `k` eigenvectors.
    pub fn projector_top_k(&self, k: usize) -> Result<SymMatrix> {
        let n = self.vectors.nrows();
        if k > n {
            return Err(LrpdError::RankOutOfRange { k, n });
        }
        let ones = DVector::from_element(k, 1.0);
        Ok(weighted_outer(&self.vectors, &ones, k))
    }
}

/// `sum_{m<k} w_m v_m v_m^T` mirrored over the lower triangle.
fn weighted_outer(vectors: &DMatrix<f64>, weights: &DVector<f64>, k: usize) -> SymMatrix {
    SymMatrix::from_fn_symmetric(vectors.nrows(), |i, j| {
        (0..k).map(|m| weights[m] * vectors[(i, m)] * vectors[(j, m)]).sum()
    })
}

/// Computes the verified symmetric eigendecomposition of `a`.
///
/// A QR sweep runs first and its output is accepted only when the basis is
/// orthonormal and the reconstruction matches `a` to near working precision;
/// anything sloppier is re-solved by cyclic Jacobi, which is slower but lands
/// at the accuracy gate unconditionally. A hard error carrying the worst
/// deviation is returned only when both solvers miss, which takes a
/// non-finite input.
pub fn eig_sym(a: &SymMatrix) -> Result<EigDecomp> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigDecomp {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    // absolute floor keeps the gate satisfiable when `a` is itself rounding debris
    let rec_tol = (a.frobenius_norm() * 1e-12).max(n as f64 * f64::EPSILON);
    let ortho_tol = n as f64 * 1e-12;
    let accept = |d: &EigDecomp| -> std::result::Result<(), f64> {
        let (rec, ortho) = decomp_accuracy(d, a);
        if rec.is_finite() && rec <= rec_tol && ortho <= ortho_tol {
            Ok(())
        } else {
            Err(rec.max(ortho))
        }
    };

    let max_sweeps = 100 * n.max(30);
    if let Some(se) = nalgebra::SymmetricEigen::try_new(a.data.clone(), f64::EPSILON, max_sweeps) {
        let cand = sorted_decomp(&se.eigenvalues, &se.eigenvectors);
        if accept(&cand).is_ok() {
            return Ok(cand);
        }
    }
    let cand = jacobi_eig(a);
    match accept(&cand) {
        Ok(()) => Ok(cand),
        Err(residual) => Err(LrpdError::EigFailed { residual }),
    }
}

/// Reconstruction and orthogonality deviations of a candidate decomposition.
fn decomp_accuracy(d: &EigDecomp, a: &SymMatrix) -> (f64, f64) {
    let n = a.dim();
    let rec = d
        .reconstruct()
        .sub(a)
        .expect("same dimension by construction")
        .frobenius_norm();
    let ortho = (d.vectors.transpose() * &d.vectors - DMatrix::identity(n, n)).norm();
    (rec, ortho)
}

/// Pairs eigenvalues with their vectors in descending eigenvalue order.
fn sorted_decomp(values_in: &DVector<f64>, vectors_in: &DMatrix<f64>) -> EigDecomp {
    let n = values_in.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values_in[j].total_cmp(&values_in[i]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| values_in[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &vectors_in.column(src));
    }
    EigDecomp { values, vectors }
}

/// Cyclic Jacobi eigensolver: rotations stop once the off-diagonal mass is
/// below `n * eps * ||a||_F` or after a fixed sweep budget.
fn jacobi_eig(a: &SymMatrix) -> EigDecomp {
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let stop = n as f64 * f64::EPSILON * a.frobenius_norm();
    for _ in 0..60 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum();
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                // negligible against the local diagonal: rotating gains nothing
                if apq.abs() <= 0.5 * f64::EPSILON * (m[(p, p)].abs() + m[(q, q)].abs()) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = c * mpj - s * mqj;
                    m[(q, j)] = s * mpj + c * mqj;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    sorted_decomp(&m.diagonal(), &v)
}

/// Rank-`k` spectral truncation `T_k(A) = sum_{i<=k} lambda_i v_i v_i^T`.
///
/// Keeps the top `k` eigenvalues by signed value, without clamping.
pub fn truncate_top_k(eig: &EigDecomp, k: usize) -> Result<SymMatrix> {
    let n = eig.values.len();
    if k > n {
        return Err(LrpdError::RankOutOfRange { k, n });
    }
    Ok(weighted_outer(&eig.vectors, &eig.values, k))
}

/// Factor `U = V_k diag(sqrt(lambda_i))` whose Gram matrix is the rank-`k`
/// truncation.
///
/// With `clamp_negative` set, negative eigenvalues contribute zero columns
/// (their square root is taken as zero). Without it, an eigenvalue that is
/// negative beyond rounding (`lambda < -1e-12 * |lambda_1|`) is a hard error,
/// since a real factor cannot carry negative spectral mass.
pub fn scaled_factor_top_k(eig: &EigDecomp, k: usize, clamp_negative: bool) -> Result<DMatrix<f64>> {
    let n = eig.values.len();
    if k > n {
        return Err(LrpdError::RankOutOfRange { k, n });
    }
    let scale = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut u = DMatrix::zeros(n, k);
    for m in 0..k {
        let lambda = eig.values[m];
        if !clamp_negative && lambda < -1e-12 * scale {
            return Err(LrpdError::NegativeEigenvalue { k: m + 1, lambda });
        }
        let w = lambda.max(0.0).sqrt();
        for i in 0..n {
            u[(i, m)] = w * eig.vectors[(i, m)];
        }
    }
    Ok(u)
}

/// Row-wise squared norms of `u`, i.e. the diagonal of `U U^T`.
pub fn diag_of_gram(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(u.nrows(), |i, _| u.row(i).norm_squared())
}

/// Projection onto the PSD cone: negative eigenvalues are clamped to zero.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = eig_sym(a)?;
    let clamped = eig.values.map(|v| v.max(0.0));
    Ok(weighted_outer(&eig.vectors, &clamped, clamped.len()))
}

/// Norm bundle for a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub frobenius: f64,
    pub spectral: f64,
    pub nuclear: f64,
    pub max_abs_entry: f64,
}

/// Computes Frobenius, spectral, nuclear, and sup-entry norms.
///
/// Spectral and nuclear norms come from the eigenvalues (`max |lambda_i|` and
/// `sum |lambda_i|`), which coincide with the singular-value definitions for
/// symmetric matrices.
pub fn norms(a: &SymMatrix) -> Result<MatrixNorms> {
    let eig = eig_sym(a)?;
    Ok(MatrixNorms {
        frobenius: a.frobenius_norm(),
        spectral: eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
        nuclear: eig.values.iter().map(|v| v.abs()).sum(),
        max_abs_entry: a.max_abs_entry(),
    })
}

/// Orthonormal basis for the column span of `z` via two-pass modified
/// Gram-Schmidt; columns whose residual drops below `drop_tol` times the
/// largest original column norm are discarded, so the result is rank-revealing.
pub fn orthonormalize_columns(z: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let n = z.nrows();
    let scale = (0..z.ncols()).map(|j| z.column(j).norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..z.ncols() {
        let mut v = DVector::from_column_slice(z.column(j).as_slice());
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol * scale {
            basis.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(n, basis.len());
    for (j, q) in basis.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

/// Reads a headerless `n x n` comma-separated matrix.
///
/// Entries must be finite; symmetry is validated to `1e-8` relative to the
/// largest absolute entry, and the validated matrix is then symmetrized
/// exactly so downstream code sees bitwise symmetry.
pub fn load_matrix_csv<P: AsRef<Path>>(path: P) -> Result<SymMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| LrpdError::Parse {
                row: i,
                col: j,
                message: format!("expected a number, got {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(LrpdError::NonFiniteValue {
                    row: i,
                    col: j,
                    context: "matrix csv".to_string(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(LrpdError::Parse {
                row: i,
                col: row.len(),
                message: format!("expected {n} columns, got {}", row.len()),
            });
        }
    }
    let data = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let max_abs = data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = SYMMETRY_REL_TOL * max_abs.max(1.0);
    let mut max_dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            max_dev = max_dev.max((data[(i, j)] - data[(j, i)]).abs());
        }
    }
    if max_dev > tol {
        return Err(LrpdError::NotSymmetric { max_dev, tol });
    }
    SymMatrix::symmetrized(data)
}

/// Writes a headerless comma-separated matrix with round-trip precision.
pub fn save_matrix_csv<P: AsRef<Path>>(path: P, a: &SymMatrix) -> Result<()> {
    let mut out = String::new();
    let n = a.dim();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", a.as_matrix()[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymMatrix::symmetrized(raw).unwrap()
    }

    fn random_psd(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymMatrix::gram(&g)
    }

    #[test]
    fn try_new_rejects_asymmetric_and_nonsquare() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(SymMatrix::try_new(m), Err(LrpdError::NotSymmetric { .. })));
        let rect = DMatrix::zeros(2, 3);
        assert!(matches!(SymMatrix::try_new(rect), Err(LrpdError::NotSquare { .. })));
    }

    #[test]
    fn symmetrized_averages_triangles() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        let s = SymMatrix::symmetrized(m).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], 3.0);
        assert_eq!(s.as_matrix()[(1, 0)], 3.0);
    }

    #[test]
    fn eig_of_two_by_two_exchange_like_matrix() {
        // [[2,1],[1,2]] has eigenvalues (3, 1) and top eigenvector (1,1)/sqrt(2).
        let a = SymMatrix::try_new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let eig = eig_sym(&a).unwrap();
        assert_relative_eq!(eig.values[0], 3.0, max_relative = 1e-14);
        assert_relative_eq!(eig.values[1], 1.0, max_relative = 1e-14);
        let p1 = eig.projector_top_k(1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(p1.as_matrix()[(i, j)], 0.5, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn eig_values_descend_and_reconstruct() {
        let a = random_sym(25, 7);
        let eig = eig_sym(&a).unwrap();
        for i in 1..25 {
            assert!(eig.values[i - 1] >= eig.values[i]);
        }
        let r = eig.reconstruct().sub(&a).unwrap().frobenius_norm();
        assert!(r <= a.frobenius_norm() * 1e-12, "residual {r}");
    }

    #[test]
    fn eig_handles_zero_and_identity() {
        let z = SymMatrix::zeros(4);
        let eig = eig_sym(&z).unwrap();
        assert!(eig.values.iter().all(|&v| v == 0.0));
        let id = SymMatrix::try_new(DMatrix::identity(4, 4)).unwrap();
        let eig = eig_sym(&id).unwrap();
        assert!(eig.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn truncation_error_matches_tail_eigenvalue_for_psd_input() {
        // Best rank-k approximation in the spectral norm leaves exactly the
        // (k+1)-th eigenvalue for PSD matrices.
        let a = random_psd(10, 21);
        let eig = eig_sym(&a).unwrap();
        for k in [1usize, 3, 5] {
            let tk = truncate_top_k(&eig, k).unwrap();
            let resid = a.sub(&tk).unwrap();
            let sp = norms(&resid).unwrap().spectral;
            assert_relative_eq!(sp, eig.values[k], max_relative = 1e-10);
        }
    }

    #[test]
    fn truncation_is_frobenius_optimal_among_random_rank_k_candidates() {
        let a = random_psd(10, 33);
        let eig = eig_sym(&a).unwrap();
        let k = 3;
        let tk = truncate_top_k(&eig, k).unwrap();
        let best = a.sub(&tk).unwrap().frobenius_norm();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let w = DMatrix::from_fn(10, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = orthonormalize_columns(&w, 1e-12);
            let s = DVector::from_fn(k.min(q.ncols()), |_, _| rng.gen_range(0.0..1.5 * eig.values[0]));
            let cand = weighted_outer(&q, &s, s.len());
            let err = a.sub(&cand).unwrap().frobenius_norm();
            assert!(err >= best - 1e-10, "candidate beat the truncation: {err} < {best}");
        }
    }

    #[test]
    fn truncate_full_rank_is_identity_and_k_zero_is_zero() {
        let a = random_sym(8, 5);
        let eig = eig_sym(&a).unwrap();
        let full = truncate_top_k(&eig, 8).unwrap();
        assert!(full.sub(&a).unwrap().frobenius_norm() <= a.frobenius_norm() * 1e-12);
        let none = truncate_top_k(&eig, 0).unwrap();
        assert_eq!(none.frobenius_norm(), 0.0);
        assert!(truncate_top_k(&eig, 9).is_err());
    }

    #[test]
    fn truncation_with_tied_boundary_is_order_invariant() {
        // Eigenvalues (3, 2, 2, 1): the top-3 projector is unique even though
        // the tied pair can come back in either order, and flipping the sign
        // of an eigenvector is always a valid decomposition.
        let d = DVector::from_vec(vec![3.0, 2.0, 2.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = orthonormalize_columns(&g, 1e-12);
        assert_eq!(v.ncols(), 4);
        let a = weighted_outer(&v, &d, 4);
        let eig = eig_sym(&a).unwrap();
        let t3 = truncate_top_k(&eig, 3).unwrap();

        let mut permuted = eig.clone();
        permuted.vectors.swap_columns(1, 2);
        let c1 = -permuted.vectors.column(0).clone_owned();
        permuted.vectors.set_column(0, &c1);
        let t3_perm = truncate_top_k(&permuted, 3).unwrap();
        assert!(t3.sub(&t3_perm).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn psd_project_zeroes_negative_part() {
        let a = SymMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0]));
        let p = psd_project(&a).unwrap();
        assert_relative_eq!(p.as_matrix()[(0, 0)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(p.as_matrix()[(1, 1)], 0.0, epsilon = 1e-14);
        let eig = eig_sym(&p).unwrap();
        assert!(eig.values.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn psd_project_is_idempotent_and_keeps_psd_input() {
        let a = random_psd(12, 44);
        let p = psd_project(&a).unwrap();
        assert!(p.sub(&a).unwrap().frobenius_norm() <= a.frobenius_norm() * 1e-10);
        let s = random_sym(12, 45);
        let p1 = psd_project(&s).unwrap();
        let p2 = psd_project(&p1).unwrap();
        assert!(p2.sub(&p1).unwrap().frobenius_norm() <= p1.frobenius_norm() * 1e-10 + 1e-14);
    }

    #[test]
    fn norm_bundle_on_known_diagonal() {
        let a = SymMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0]));
        let n = norms(&a).unwrap();
        assert_relative_eq!(n.frobenius, 13.0f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(n.spectral, 3.0, max_relative = 1e-14);
        assert_relative_eq!(n.nuclear, 5.0, max_relative = 1e-14);
        assert_relative_eq!(n.max_abs_entry, 3.0, max_relative = 1e-14);
    }

    #[test]
    fn norm_inequalities_hold_on_random_input() {
        for seed in 0..5 {
            let a = random_sym(15, 100 + seed);
            let n = norms(&a).unwrap();
            assert!(n.spectral <= n.frobenius + 1e-12);
            assert!(n.frobenius <= n.nuclear + 1e-12);
            assert!(n.max_abs_entry <= n.spectral + 1e-12);
        }
    }

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let mut z = DMatrix::zeros(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..6 {
            z[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..6 {
            z[(i, 1)] = 2.0 * z[(i, 0)];
            z[(i, 2)] = rng.sample::<f64, _>(StandardNormal);
        }
        let q = orthonormalize_columns(&z, 1e-10);
        assert_eq!(q.ncols(), 2);
        let dev = (q.transpose() * &q - DMatrix::identity(2, 2)).norm();
        assert!(dev < 1e-12);
    }

    #[test]
    fn matrix_csv_round_trip_preserves_bits() {
        let a = random_sym(7, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        save_matrix_csv(&path, &a).unwrap();
        let b = load_matrix_csv(&path).unwrap();
        assert_eq!(a.as_matrix(), b.as_matrix());
    }

    #[test]
    fn matrix_csv_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let asym = dir.path().join("asym.csv");
        std::fs::write(&asym, "1,2\n5,1\n").unwrap();
        assert!(matches!(load_matrix_csv(&asym), Err(LrpdError::NotSymmetric { .. })));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1,2\n2\n").unwrap();
        assert!(load_matrix_csv(&ragged).is_err());

        let nan = dir.path().join("nan.csv");
        std::fs::write(&nan, "1,NaN\nNaN,1\n").unwrap();
        assert!(matches!(load_matrix_csv(&nan), Err(LrpdError::NonFiniteValue { .. })));

        let junk = dir.path().join("junk.csv");
        std::fs::write(&junk, "1,x\nx,1\n").unwrap();
        assert!(matches!(load_matrix_csv(&junk), Err(LrpdError::Parse { .. })));
    }

    #[test]
    fn principal_submatrix_extracts_block() {
        let a = random_sym(5, 55);
        let b = a.principal_submatrix(&[0, 2, 4]).unwrap();
        assert_eq!(b.dim(), 3);
        assert_eq!(b.as_matrix()[(0, 1)], a.as_matrix()[(0, 2)]);
        assert_eq!(b.as_matrix()[(1, 2)], a.as_matrix()[(2, 4)]);
    }
}
