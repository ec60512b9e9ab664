//! Shared model and trace types: the low-rank plus diagonal model produced by
//! every solver, block partitions for the structured-diagonal variant, and the
//! per-iteration convergence trace with CSV/JSON export.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LrpdError, Result};
use crate::linalg::SymMatrix;

/// Which routine produced a model. Solvers that clamp keep the diagonal
/// entrywise nonnegative; baseline fitters may return unclamped diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Naive,
    Alt,
    AltBlock,
    StochasticAlt,
    Mm,
    Gd,
}

/// Diagonal part of a model: either a plain diagonal vector or dense
/// symmetric blocks laid out by a partition.
#[derive(Debug, Clone)]
pub enum DiagonalPart {
    Vector(DVector<f64>),
    Blocks {
        partition: BlockPartition,
        blocks: Vec<SymMatrix>,
    },
}

/// Low-rank plus diagonal model `M = D + U U^T`.
#[derive(Debug, Clone)]
pub struct LrpdModel {
    pub factor: DMatrix<f64>,
    pub diagonal: DiagonalPart,
    pub provenance: Provenance,
}

impl LrpdModel {
    pub fn new_vector(factor: DMatrix<f64>, d: DVector<f64>, provenance: Provenance) -> Result<Self> {
        if d.len() != factor.nrows() {
            return Err(LrpdError::DimensionMismatch {
                expected: factor.nrows(),
                got: d.len(),
            });
        }
        Ok(Self {
            factor,
            diagonal: DiagonalPart::Vector(d),
            provenance,
        })
    }

    pub fn new_blocks(
        factor: DMatrix<f64>,
        partition: BlockPartition,
        blocks: Vec<SymMatrix>,
        provenance: Provenance,
    ) -> Result<Self> {
        partition.validate(factor.nrows())?;
        if blocks.len() != partition.blocks.len() {
            return Err(LrpdError::InvalidPartition(format!(
                "{} blocks for a partition with {} cells",
                blocks.len(),
                partition.blocks.len()
            )));
        }
        for (b, cell) in blocks.iter().zip(&partition.blocks) {
            if b.dim() != cell.len() {
                return Err(LrpdError::InvalidPartition(format!(
                    "block of size {} does not match cell of size {}",
                    b.dim(),
                    cell.len()
                )));
            }
        }
        Ok(Self {
            factor,
            diagonal: DiagonalPart::Blocks { partition, blocks },
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// Diagonal entries of the diagonal part (for block models, the diagonal
    /// of the assembled block-diagonal matrix).
    pub fn diag_vector(&self) -> DVector<f64> {
        match &self.diagonal {
            DiagonalPart::Vector(d) => d.clone(),
            DiagonalPart::Blocks { partition, blocks } => {
                let mut d = DVector::zeros(self.dim());
                for (cell, block) in partition.blocks.iter().zip(blocks) {
                    for (a, &i) in cell.iter().enumerate() {
                        d[i] = block.as_matrix()[(a, a)];
                    }
                }
                d
            }
        }
    }
}

/// Assembles the dense model matrix `D + U U^T` with exact symmetry.
pub fn reconstruct(model: &LrpdModel) -> SymMatrix {
    let mut m = SymMatrix::gram(&model.factor).into_matrix();
    match &model.diagonal {
        DiagonalPart::Vector(d) => {
            for i in 0..d.len() {
                m[(i, i)] += d[i];
            }
        }
        DiagonalPart::Blocks { partition, blocks } => {
            for (cell, block) in partition.blocks.iter().zip(blocks) {
                for (a, &i) in cell.iter().enumerate() {
                    for (b, &j) in cell.iter().enumerate() {
                        m[(i, j)] += block.as_matrix()[(a, b)];
                    }
                }
            }
        }
    }
    SymMatrix::try_new(m).expect("gram plus symmetric blocks is symmetric")
}

/// Relative Frobenius reconstruction error `||A - M||_F / ||A||_F`.
pub fn rel_fro_error(model: &LrpdModel, a: &SymMatrix) -> Result<f64> {
    let denom = a.frobenius_norm();
    if denom == 0.0 {
        return Err(LrpdError::ZeroMatrix);
    }
    let m = reconstruct(model);
    Ok(a.sub(&m)?.frobenius_norm() / denom)
}

/// Sup-norm distance between the model diagonal and a reference diagonal.
pub fn diag_sup_error(model: &LrpdModel, reference: &DVector<f64>) -> Result<f64> {
    let d = model.diag_vector();
    if reference.len() != d.len() {
        return Err(LrpdError::DimensionMismatch {
            expected: d.len(),
            got: reference.len(),
        });
    }
    Ok((0..d.len()).fold(0.0f64, |m, i| m.max((d[i] - reference[i]).abs())))
}

/// Disjoint cover of `0..n` by index blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Self {
        Self { blocks }
    }

    /// One singleton block per index; the block solver then coincides with
    /// the plain diagonal solver.
    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// `m` contiguous blocks of near-equal size.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(LrpdError::InvalidPartition(format!(
                "cannot split {n} indices into {m} blocks"
            )));
        }
        let base = n / m;
        let extra = n % m;
        let mut blocks = Vec::with_capacity(m);
        let mut next = 0;
        for b in 0..m {
            let size = base + usize::from(b < extra);
            blocks.push((next..next + size).collect());
            next += size;
        }
        Ok(Self { blocks })
    }

    /// Checks that the blocks are non-empty and cover `0..n` exactly once.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for block in &self.blocks {
            if block.is_empty() {
                return Err(LrpdError::InvalidPartition("empty block".to_string()));
            }
            for &i in block {
                if i >= n {
                    return Err(LrpdError::InvalidPartition(format!(
                        "index {i} out of range for dimension {n}"
                    )));
                }
                if seen[i] {
                    return Err(LrpdError::InvalidPartition(format!("index {i} covered twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(LrpdError::InvalidPartition(format!("index {i} not covered")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| LrpdError::InvalidPartition(format!("partition json: {e}")))
    }
}

/// A fitted model together with its per-iteration trace.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: LrpdModel,
    pub trace: ConvergenceTrace,
}

/// One trace row per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub rel_fro_error: f64,
    /// Present only when a ground-truth diagonal accompanies the run.
    pub diag_error_sup: Option<f64>,
    /// Cumulative matvec queries; zero throughout for dense solvers.
    pub matvec_queries: u64,
    /// Solver objective at this iterate (squared-Frobenius residual for the
    /// alternating solvers and the majorization baseline, negative
    /// log-likelihood for the gradient baseline).
    pub objective: f64,
}

/// Per-iteration convergence log of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    /// Set when a sketch detected a residual of rank below the target and
    /// the solver stopped early at that refinement.
    pub early_rank_collapse: bool,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Final relative error, infinite for an empty trace.
    pub fn final_rel_fro_error(&self) -> f64 {
        self.last().map_or(f64::INFINITY, |r| r.rel_fro_error)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iter,rel_fro_error,diag_error_sup,matvec_queries,objective\n");
        for r in &self.records {
            let diag = r.diag_error_sup.map_or(String::new(), |d| format!("{d}"));
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter, r.rel_fro_error, diag, r.matvec_queries, r.objective
            ));
        }
        out
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string())?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json_string())?;
        Ok(())
    }
}
