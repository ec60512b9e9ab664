//! Reference solvers the alternating method is measured against: a
//! majorize-minimize scheme whose low-rank step is a backtracked proximal
//! gradient move, and plain gradient descent on the Gaussian negative
//! log-likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LrpdError, Result};
use crate::linalg::{diag_of_gram, eig_sym, norms, scaled_factor_top_k, SymMatrix};
use crate::model::{
    diag_sup_error, rel_fro_error, ConvergenceTrace, FitOutput, LrpdModel, Provenance, TraceRecord,
};
use crate::naive::naive_decompose;

/// Configuration for the majorize-minimize solver.
#[derive(Debug, Clone)]
pub struct MmConfig {
    pub rank: usize,
    pub iters: usize,
    /// Initial curvature estimate; defaults to the spectral norm of the
    /// first residual.
    pub l0: Option<f64>,
    /// Multiplier applied to the curvature on each failed backtrack.
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl MmConfig {
    pub fn new(rank: usize, iters: usize) -> Self {
        Self {
            rank,
            iters,
            l0: None,
            backtrack_factor: 2.0,
            max_backtracks: 60,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.rank > n {
            return Err(LrpdError::RankOutOfRange { k: self.rank, n });
        }
        if self.iters == 0 {
            return Err(LrpdError::InvalidConfig("iters must be at least 1".to_string()));
        }
        if let Some(l0) = self.l0 {
            if l0.is_nan() || l0 <= 0.0 {
                return Err(LrpdError::InvalidConfig(format!("l0 must be positive, got {l0}")));
            }
        }
        if self.backtrack_factor.is_nan() || self.backtrack_factor <= 1.0 {
            return Err(LrpdError::InvalidConfig(format!(
                "backtrack factor {} must exceed 1",
                self.backtrack_factor
            )));
        }
        Ok(())
    }
}

/// Per-iteration evidence from the majorize-minimize run.
#[derive(Debug, Clone)]
pub struct MmDiagnostics {
    /// Surrogate value minus the true objective at each accepted step;
    /// nonnegative (up to roundoff) exactly when the step was majorized.
    pub certificate_margins: Vec<f64>,
    /// Curvature doublings spent per iteration.
    pub backtrack_counts: Vec<usize>,
    /// Curvature estimate after the final accepted step.
    pub final_l: f64,
}

/// Factor-space objective `g(U) = ||B - U U^T||_F^2` for a fixed residual.
fn factor_objective(b: &SymMatrix, u: &DMatrix<f64>) -> f64 {
    b.sub(&SymMatrix::gram(u)).expect("same dimension").frobenius_norm().powi(2)
}

/// Gradient of [`factor_objective`]: `4 (U (U^T U) - B U)`.
fn factor_gradient(b: &SymMatrix, u: &DMatrix<f64>) -> DMatrix<f64> {
    let utu = u.transpose() * u;
    4.0 * (u * utu - b.as_matrix() * u)
}

/// Factor objective `||B - U U^T||_F^2` with its gradient
/// `4 (U (U^T U) - B U)`, for callers running their own step-size searches
/// or cross-checking a fit.
pub fn factor_objective_grad(b: &SymMatrix, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if u.nrows() != b.dim() {
        return Err(LrpdError::DimensionMismatch {
            expected: b.dim(),
            got: u.nrows(),
        });
    }
    Ok((factor_objective(b, u), factor_gradient(b, u)))
}

/// Gaussian negative log-likelihood of the model `U U^T + diag(d)` against
/// the sample covariance `s`, with its gradients in `U` and `d`. Errors when
/// the model matrix is not positive definite.
pub fn nll_objective_grad(
    s: &SymMatrix,
    u: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<(f64, DMatrix<f64>, DVector<f64>)> {
    let n = s.dim();
    if u.nrows() != n || d.len() != n {
        return Err(LrpdError::DimensionMismatch {
            expected: n,
            got: if u.nrows() != n { u.nrows() } else { d.len() },
        });
    }
    let m = SymMatrix::gram(u).sub_diagonal(&-d.clone())?;
    match nll_and_gradient(s, &m) {
        Some((f, g)) => Ok((f, 2.0 * (g.as_matrix() * u), g.diagonal())),
        None => {
            let min_eig = eig_sym(&m)?.values.iter().cloned().fold(f64::INFINITY, f64::min);
            Err(LrpdError::NotPsd { min_eig })
        }
    }
}

/// Majorize-minimize fit: one backtracked proximal-gradient step on the
/// factor, then an exact (unclamped) diagonal refit, per outer iteration.
pub fn mm_fit(a: &SymMatrix, cfg: &MmConfig, d_star: Option<&DVector<f64>>) -> Result<FitOutput> {
    mm_fit_diagnostics(a, cfg, d_star).map(|(out, _)| out)
}

/// As [`mm_fit`], also returning the majorization certificates.
pub fn mm_fit_diagnostics(
    a: &SymMatrix,
    cfg: &MmConfig,
    d_star: Option<&DVector<f64>>,
) -> Result<(FitOutput, MmDiagnostics)> {
    cfg.validate(a.dim())?;
    let n = a.dim();
    let eig = eig_sym(a)?;
    let mut u = scaled_factor_top_k(&eig, cfg.rank, true)?;
    let mut d = DVector::zeros(n);
    let mut l = match cfg.l0 {
        Some(l0) => l0,
        // Curvature of g is governed by the residual's spectral radius.
        None => norms(a)?.spectral.max(f64::MIN_POSITIVE),
    };

    let mut trace = ConvergenceTrace::default();
    let mut margins = Vec::with_capacity(cfg.iters);
    let mut backtracks = Vec::with_capacity(cfg.iters);
    let mut model = None;

    for iter in 1..=cfg.iters {
        let b = a.sub_diagonal(&d)?;
        let g_cur = factor_objective(&b, &u);
        let grad = factor_gradient(&b, &u);
        let grad_norm2 = grad.norm_squared();

        let mut taken = 0usize;
        let (u_next, margin) = loop {
            let candidate = &u - &grad / l;
            let g_next = factor_objective(&b, &candidate);
            // Surrogate at the trial point: g - ||grad||^2 / (2L).
            let margin = g_cur - grad_norm2 / (2.0 * l) - g_next;
            if margin >= -1e-12 {
                break (candidate, margin);
            }
            taken += 1;
            if taken > cfg.max_backtracks {
                return Err(LrpdError::BacktrackExceeded {
                    max_backtracks: cfg.max_backtracks,
                    l,
                });
            }
            l *= cfg.backtrack_factor;
        };
        margins.push(margin);
        backtracks.push(taken);
        u = u_next;
        d = a.diagonal() - diag_of_gram(&u);

        let m = LrpdModel::new_vector(u.clone(), d.clone(), Provenance::Mm)?;
        let rel = rel_fro_error(&m, a)?;
        trace.push(TraceRecord {
            iter,
            rel_fro_error: rel,
            diag_error_sup: d_star.map(|ds| diag_sup_error(&m, ds)).transpose()?,
            matvec_queries: 0,
            objective: (rel * a.frobenius_norm()).powi(2),
        });
        model = Some(m);
    }

    Ok((
        FitOutput {
            model: model.expect("at least one iteration ran"),
            trace,
        },
        MmDiagnostics {
            certificate_margins: margins,
            backtrack_counts: backtracks,
            final_l: l,
        },
    ))
}

/// Initialization strategy for the likelihood descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdInit {
    /// Gaussian factor scaled by `1/sqrt(n)`, diagonal at half the input's.
    Random,
    /// Spectral warm start: one-shot top-k factor plus its residual diagonal.
    Svd,
}

/// Configuration for gradient descent on the negative log-likelihood.
#[derive(Debug, Clone)]
pub struct GdConfig {
    pub rank: usize,
    pub iters: usize,
    /// Constant step size.
    pub eta: f64,
    pub init: GdInit,
    pub seed: u64,
}

impl GdConfig {
    pub fn new(rank: usize, iters: usize, eta: f64) -> Self {
        Self {
            rank,
            iters,
            eta,
            init: GdInit::Random,
            seed: 0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.rank > n {
            return Err(LrpdError::RankOutOfRange { k: self.rank, n });
        }
        if self.iters == 0 {
            return Err(LrpdError::InvalidConfig("iters must be at least 1".to_string()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(LrpdError::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Gaussian negative log-likelihood `log det M + tr(M^{-1} S)` and its
/// symmetric gradient matrix `M^{-1} - M^{-1} S M^{-1}`, or `None` when `M`
/// is not positive definite.
fn nll_and_gradient(s: &SymMatrix, m: &SymMatrix) -> Option<(f64, SymMatrix)> {
    let chol = Cholesky::new(m.as_matrix().clone())?;
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let minv = chol.inverse();
    let trace_term = minv.dot(s.as_matrix());
    let g = &minv - &minv * s.as_matrix() * &minv;
    let g = SymMatrix::symmetrized(g).expect("square by construction");
    Some((logdet + trace_term, g))
}

/// Gradient descent on the negative log-likelihood from a caller-supplied
/// starting point. Records the objective at every visited iterate, the
/// starting point included, and reports divergence the moment the model
/// matrix stops being positive definite.
pub fn gd_nll_fit_from(
    a_hat: &SymMatrix,
    cfg: &GdConfig,
    u0: DMatrix<f64>,
    d0: DVector<f64>,
    d_star: Option<&DVector<f64>>,
) -> Result<FitOutput> {
    let n = a_hat.dim();
    cfg.validate(n)?;
    if u0.nrows() != n || d0.len() != n {
        return Err(LrpdError::DimensionMismatch {
            expected: n,
            got: if u0.nrows() != n { u0.nrows() } else { d0.len() },
        });
    }
    if u0.ncols() != cfg.rank {
        return Err(LrpdError::DimensionMismatch {
            expected: cfg.rank,
            got: u0.ncols(),
        });
    }

    let mut u = u0;
    let mut d = d0;
    let mut trace = ConvergenceTrace::default();
    let mut model = None;

    for iter in 0..=cfg.iters {
        let m_model = LrpdModel::new_vector(u.clone(), d.clone(), Provenance::Gd)?;
        let m_mat = SymMatrix::gram(&u).sub_diagonal(&-d.clone())?;
        let Some((f, g)) = nll_and_gradient(a_hat, &m_mat) else {
            return Err(LrpdError::Diverged { iter });
        };
        trace.push(TraceRecord {
            iter,
            rel_fro_error: rel_fro_error(&m_model, a_hat)?,
            diag_error_sup: d_star.map(|ds| diag_sup_error(&m_model, ds)).transpose()?,
            matvec_queries: 0,
            objective: f,
        });
        model = Some(m_model);
        if iter == cfg.iters {
            break;
        }
        u -= cfg.eta * 2.0 * (g.as_matrix() * &u);
        d -= cfg.eta * g.diagonal();
    }

    Ok(FitOutput {
        model: model.expect("initial iterate always recorded"),
        trace,
    })
}

/// Gradient descent on the negative log-likelihood with built-in
/// initialization per `cfg.init`.
pub fn gd_nll_fit(
    a_hat: &SymMatrix,
    cfg: &GdConfig,
    d_star: Option<&DVector<f64>>,
) -> Result<FitOutput> {
    let n = a_hat.dim();
    cfg.validate(n)?;
    if Cholesky::new(a_hat.as_matrix().clone()).is_none() {
        let min_eig = eig_sym(a_hat)?.values.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(LrpdError::NotPsd { min_eig });
    }
    let (u0, d0) = match cfg.init {
        GdInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let scale = 1.0 / (n as f64).sqrt();
            let u0 = DMatrix::from_fn(n, cfg.rank, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            (u0, a_hat.diagonal() / 2.0)
        }
        GdInit::Svd => {
            let warm = naive_decompose(a_hat, cfg.rank)?;
            let d0 = warm.model.diag_vector();
            (warm.model.factor, d0)
        }
    };
    gd_nll_fit_from(a_hat, cfg, u0, d0, d_star)
}
