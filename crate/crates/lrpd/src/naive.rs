//! One-shot spectral decomposition into diagonal plus low-rank, and the
//! diagnostic showing why removing the diagonal first is worse than removing
//! the best low-rank part first.
//!
//! For PSD input the one-shot split takes `U_k` from the top-k spectral
//! factor and `D_k = diag(A - U_k U_k^T)`. The leftover then satisfies
//! `||A - D_k - U_k U_k^T||_2 <= lambda_{k+1}`, with strict inequality as
//! soon as the tail is nonzero and some diagonal mass was removed.

use crate::error::{LrpdError, Result};
use crate::linalg::{diag_of_gram, eig_sym, norms, scaled_factor_top_k, SymMatrix};
use crate::model::{LrpdModel, Provenance};

/// Result of the one-shot decomposition.
#[derive(Debug, Clone)]
pub struct NaiveResult {
    pub model: LrpdModel,
    /// `||A - D_k - U_k U_k^T||_2`.
    pub residual_spectral: f64,
    /// `lambda_{k+1}` of the input, zero when `k = n`.
    pub tail_eigenvalue: f64,
}

/// Relative PSD tolerance: eigenvalues down to `-1e-8 * ||A||_2` pass.
const PSD_REL_TOL: f64 = 1e-8;

/// One-shot decomposition `A ~= D_k + U_k U_k^T` from the top-k spectrum.
///
/// Rejects input whose minimum eigenvalue is below `-1e-8 * ||A||_2`.
/// The diagonal is not clamped: for PSD input it is nonnegative up to
/// rounding by construction.
pub fn naive_decompose(a: &SymMatrix, k: usize) -> Result<NaiveResult> {
    let n = a.dim();
    if k > n {
        return Err(LrpdError::RankOutOfRange { k, n });
    }
    let eig = eig_sym(a)?;
    let spectral = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_eig = if n == 0 { 0.0 } else { eig.values[n - 1] };
    if min_eig < -PSD_REL_TOL * spectral {
        return Err(LrpdError::NotPsd { min_eig });
    }

    let u = scaled_factor_top_k(&eig, k, true)?;
    let d = a.diagonal() - diag_of_gram(&u);
    let model = LrpdModel::new_vector(u, d, Provenance::Naive)?;
    let residual = a.sub(&crate::model::reconstruct(&model))?;
    let residual_spectral = norms(&residual)?.spectral;
    let tail_eigenvalue = if k < n { eig.values[k].max(0.0) } else { 0.0 };
    Ok(NaiveResult {
        model,
        residual_spectral,
        tail_eigenvalue,
    })
}

/// Residual left by subtracting the diagonal first: `A - diag(diag(A))`.
#[derive(Debug, Clone)]
pub struct DiagFirstReport {
    pub residual: SymMatrix,
    pub spectral_norm: f64,
    /// Whether the residual is PSD (min eigenvalue >= -1e-10). Hollow
    /// symmetric matrices with any off-diagonal mass are not.
    pub is_psd: bool,
}

/// Removes the diagonal first and reports what that leaves behind.
pub fn diag_first_residual(a: &SymMatrix) -> Result<DiagFirstReport> {
    let residual = a.sub_diagonal(&a.diagonal())?;
    let eig = eig_sym(&residual)?;
    let n = residual.dim();
    let min_eig = if n == 0 { 0.0 } else { eig.values[n - 1] };
    let spectral_norm = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok(DiagFirstReport {
        residual,
        spectral_norm,
        is_psd: min_eig >= -1e-10,
    })
}
