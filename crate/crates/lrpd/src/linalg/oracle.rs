use nalgebra::{DMatrix, DVector};

use super::SymMatrix;

/// Abstract symmetric linear operator exposing only `x -> A x`.
///
/// Implementations tally every column they are applied to; randomized
/// routines report their budgets through [`MatvecOracle::query_count`].
/// An oracle instance mutates only its counter and is meant to be confined
/// to one thread of control, which the `&mut` receiver enforces.
pub trait MatvecOracle {
    /// Operator dimension `n`.
    fn dim(&self) -> usize;

    /// Applies the operator to one vector. Panics if `x.len() != dim()`.
    fn apply(&mut self, x: &DVector<f64>) -> DVector<f64>;

    /// Applies the operator to each column; the counter advances by the
    /// number of columns.
    fn apply_block(&mut self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), xs.ncols());
        for j in 0..xs.ncols() {
            let col = DVector::from_column_slice(xs.column(j).as_slice());
            out.set_column(j, &self.apply(&col));
        }
        out
    }

    /// Total number of vectors the operator has been applied to.
    fn query_count(&self) -> u64;
}

/// Dense-backed oracle; `apply` is an exact matrix-vector product.
pub struct DenseOracle {
    matrix: SymMatrix,
    count: u64,
}

impl DenseOracle {
    pub fn new(matrix: SymMatrix) -> Self {
        Self { matrix, count: 0 }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }
}

/// Builds a query-counting oracle from a dense symmetric matrix.
pub fn oracle_from_dense(a: &SymMatrix) -> DenseOracle {
    DenseOracle::new(a.clone())
}

impl MatvecOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply(&mut self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "oracle applied to a vector of wrong length");
        self.count += 1;
        self.matrix.as_matrix() * x
    }

    fn apply_block(&mut self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(xs.nrows(), self.dim(), "oracle applied to a block of wrong height");
        self.count += xs.ncols() as u64;
        self.matrix.as_matrix() * xs
    }

    fn query_count(&self) -> u64 {
        self.count
    }
}

/// View of a base oracle as `x -> A x - d .* x`, the residual after removing
/// a diagonal. Queries are counted against the base oracle.
pub struct ResidualOracle<'a> {
    base: &'a mut dyn MatvecOracle,
    diag: DVector<f64>,
}

impl<'a> ResidualOracle<'a> {
    pub fn new(base: &'a mut dyn MatvecOracle, diag: DVector<f64>) -> Self {
        assert_eq!(diag.len(), base.dim(), "diagonal length must match the oracle");
        Self { base, diag }
    }
}

impl MatvecOracle for ResidualOracle<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&mut self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.base.apply(x);
        for i in 0..out.len() {
            out[i] -= self.diag[i] * x[i];
        }
        out
    }

    fn apply_block(&mut self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.base.apply_block(xs);
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] -= self.diag[i] * xs[(i, j)];
            }
        }
        out
    }

    fn query_count(&self) -> u64 {
        self.base.query_count()
    }
}
