//! Matvec-budgeted fitting: Nystrom sketches of the residual, stochastic
//! diagonal estimation, the sketched alternating loop, and an evaluator for
//! the per-iteration error budget.
//!
//! Everything here touches the matrix only through [`MatvecOracle`], so query
//! budgets are enforced by construction and verified through the oracle's
//! counter.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::alt::{alt_fit, AltConfig};
use crate::error::{LrpdError, Result};
use crate::linalg::{
    diag_of_gram, eig_sym, orthonormalize_columns, truncate_top_k, MatvecOracle, ResidualOracle,
    SymMatrix,
};
use crate::model::{
    diag_sup_error, rel_fro_error, ConvergenceTrace, FitOutput, LrpdModel, Provenance, TraceRecord,
};

/// Per-iteration sketching budget for the stochastic solver.
#[derive(Debug, Clone)]
pub struct SketchConfig {
    /// Target rank of the low-rank factor.
    pub rank: usize,
    /// Total matvec budget per iteration.
    pub budget: usize,
    pub seed: u64,
    /// Relative eigenvalue cutoff for rank detection.
    pub rank_tol: f64,
    /// Stabilizer added under inverse square roots.
    pub ridge: f64,
    /// Use the shift-stabilized sketch factorization.
    pub stabilized: bool,
    /// Probes per iteration for diagonal estimation; defaults to whatever the
    /// budget leaves after the sketch.
    pub diag_budget: Option<usize>,
}

impl SketchConfig {
    pub fn new(rank: usize, budget: usize, seed: u64) -> Self {
        Self {
            rank,
            budget,
            seed,
            rank_tol: 1e-12,
            ridge: 1e-16,
            stabilized: false,
            diag_budget: None,
        }
    }

    /// Sketch allocation: two thirds of the budget.
    pub fn m1(&self) -> usize {
        2 * self.budget / 3
    }

    /// Columns drawn per sketch; never fewer than `rank + 1`.
    pub fn sketch_size(&self) -> usize {
        self.m1().max(self.rank + 1)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.budget == 0 {
            return Err(LrpdError::InvalidConfig("budget must be at least 1".to_string()));
        }
        if self.rank > n {
            return Err(LrpdError::RankOutOfRange { k: self.rank, n });
        }
        if !(self.rank_tol > 0.0 && self.ridge > 0.0) {
            return Err(LrpdError::InvalidConfig(format!(
                "rank_tol {} and ridge {} must both be positive",
                self.rank_tol, self.ridge
            )));
        }
        Ok(())
    }
}

/// Numerical knobs for the sketch factorization.
#[derive(Debug, Clone, Copy)]
pub struct NystromOptions {
    pub rank_tol: f64,
    pub ridge: f64,
    pub stabilized: bool,
}

impl Default for NystromOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-12,
            ridge: 1e-16,
            stabilized: false,
        }
    }
}

/// Low-rank factor sketched from an operator; `U U^T` approximates it.
#[derive(Debug, Clone)]
pub struct NystromFactor {
    /// `n x r'` factor with `r' = effective_rank`.
    pub u: DMatrix<f64>,
    /// Detected rank, at most the requested one.
    pub effective_rank: usize,
}

impl NystromFactor {
    fn zero(n: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, 0),
            effective_rank: 0,
        }
    }
}

/// Rank-`r` Nystrom approximation from `s` Gaussian probes.
pub fn nystrom_fixed_rank(
    oracle: &mut dyn MatvecOracle,
    r: usize,
    s: usize,
    seed: u64,
) -> Result<NystromFactor> {
    nystrom_fixed_rank_opts(oracle, r, s, seed, &NystromOptions::default())
}

/// As [`nystrom_fixed_rank`] with explicit numerical knobs.
///
/// Draws `Omega` (`n x s`), forms `Y = A Omega` (s queries) and the small
/// core `C = Omega^T Y`, and factors `Y C_r^+ Y^T` through the core's
/// eigendecomposition. Eigenvalues at or below `rank_tol` times the largest
/// shrink the factor to the detected rank.
pub fn nystrom_fixed_rank_opts(
    oracle: &mut dyn MatvecOracle,
    r: usize,
    s: usize,
    seed: u64,
    opts: &NystromOptions,
) -> Result<NystromFactor> {
    let n = oracle.dim();
    if s > n {
        return Err(LrpdError::SketchTooWide { s, n });
    }
    if s == 0 {
        return Err(LrpdError::InvalidConfig("sketch needs at least one column".to_string()));
    }
    if !(opts.rank_tol > 0.0 && opts.ridge > 0.0) {
        return Err(LrpdError::InvalidConfig(format!(
            "rank_tol {} and ridge {} must both be positive",
            opts.rank_tol, opts.ridge
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, s, |_, _| StandardNormal.sample(&mut rng));
    let y = oracle.apply_block(&omega);

    if opts.stabilized {
        if let Some(factor) = stabilized_factor(&omega, &y, r, opts) {
            return Ok(factor);
        }
    }

    let c = SymMatrix::symmetrized(omega.transpose() * &y)?;
    let eig = eig_sym(&c)?;
    let lam1 = eig.values[0];
    if lam1.is_nan() || lam1 <= 0.0 {
        return Ok(NystromFactor::zero(n));
    }
    let detected = eig.values.iter().filter(|&&v| v > opts.rank_tol * lam1).count();
    let keep = r.min(detected);
    let w = eig.vectors.columns(0, keep);
    let inv_root = DVector::from_fn(keep, |i, _| 1.0 / (eig.values[i].max(0.0) + opts.ridge).sqrt());
    let u = (&y * w) * DMatrix::from_diagonal(&inv_root);
    Ok(NystromFactor {
        u,
        effective_rank: keep,
    })
}

/// Shift-stabilized route: factor `Y_nu L^{-T}` by SVD and subtract the shift
/// back out of the squared singular values. Returns `None` when the shifted
/// core is not numerically positive definite; the caller then falls back to
/// the plain route at no extra queries.
fn stabilized_factor(
    omega: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: usize,
    opts: &NystromOptions,
) -> Option<NystromFactor> {
    let n = y.nrows();
    let nu = (n as f64).sqrt() * f64::EPSILON * y.norm();
    let y_nu = y + nu * omega;
    let c_nu = omega.transpose() * &y_nu;
    let c_nu = (&c_nu + c_nu.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(c_nu)?;
    let b_t = chol.l().solve_lower_triangular(&y_nu.transpose())?;
    let svd = b_t.transpose().svd(true, false);
    let w = svd.u?;
    let shifted: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&sv| (sv * sv - nu).max(0.0))
        .collect();
    let lam1 = shifted.first().copied().unwrap_or(0.0);
    if lam1.is_nan() || lam1 <= 0.0 {
        return Some(NystromFactor::zero(n));
    }
    let detected = shifted.iter().filter(|&&v| v > opts.rank_tol * lam1).count();
    let keep = r.min(detected);
    let root = DVector::from_fn(keep, |i, _| shifted[i].sqrt());
    let u = w.columns(0, keep) * DMatrix::from_diagonal(&root);
    Some(NystromFactor {
        u,
        effective_rank: keep,
    })
}

/// Diagonal estimate from `s` Rademacher probes: the entrywise ratio
/// `sum_t v_t .* (A v_t) / sum_t v_t .* v_t` (the denominator is exactly `s`
/// for Rademacher probes).
pub fn hutchinson_diag(oracle: &mut dyn MatvecOracle, s: usize, seed: u64) -> DVector<f64> {
    assert!(s >= 1, "diagonal estimation needs at least one probe");
    let n = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut num = DVector::zeros(n);
    let mut den = DVector::zeros(n);
    for _ in 0..s {
        let v = rademacher(n, &mut rng);
        let av = oracle.apply(&v);
        num += v.component_mul(&av);
        den += v.component_mul(&v);
    }
    num.component_div(&den)
}

fn rademacher(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Variance-reduced diagonal estimate with a total budget of `s` queries.
///
/// A third of the budget sketches a basis `Q` for the operator's dominant
/// range; the part of the diagonal explained by that range is computed
/// exactly through the identity
/// `diag(A) = 2 diag(P A) - diag(P A P) + diag((I-P) A (I-P))` with
/// `P = Q Q^T`, and only the doubly-deflated last term is estimated with the
/// remaining Rademacher probes. The estimate is unbiased, and exact when the
/// operator's rank fits inside the sketch.
pub fn diagpp(oracle: &mut dyn MatvecOracle, s: usize, seed: u64) -> Result<DVector<f64>> {
    let n = oracle.dim();
    if s < 3 {
        return Err(LrpdError::InvalidConfig(format!(
            "diagonal budget {s} cannot be split three ways"
        )));
    }
    let s1 = (s / 3).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, s1, |_, _| StandardNormal.sample(&mut rng));
    let y = oracle.apply_block(&omega);
    let q = orthonormalize_columns(&y, 1e-10);
    let qc = q.ncols();
    if qc == 0 {
        // Nothing to deflate; spend everything after the sketch on probes.
        let mut est = DVector::zeros(n);
        let probes = s - s1;
        for _ in 0..probes {
            let v = rademacher(n, &mut rng);
            let av = oracle.apply(&v);
            est += v.component_mul(&av);
        }
        return Ok(est / probes as f64);
    }

    let aq = oracle.apply_block(&q);
    let m_small = q.transpose() * &aq;
    let mut exact = DVector::zeros(n);
    for i in 0..n {
        let qi = q.row(i);
        let diag_pa = qi.dot(&aq.row(i));
        let diag_pap = (qi * &m_small).dot(&qi);
        exact[i] = 2.0 * diag_pa - diag_pap;
    }

    let s3 = s - s1 - qc;
    let mut est = DVector::zeros(n);
    if s3 > 0 {
        for _ in 0..s3 {
            let v = rademacher(n, &mut rng);
            let u = &v - &q * (q.transpose() * &v);
            let w = oracle.apply(&u);
            let deflated = &w - &q * (q.transpose() * &w);
            est += v.component_mul(&deflated);
        }
        est /= s3 as f64;
    }
    Ok(exact + est)
}

/// How the stochastic loop obtains the operator's diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagMode {
    /// Caller supplies `diag(A)` once, up front.
    #[default]
    Exact,
    /// Estimate the residual's diagonal each iteration from probes alone.
    Diagpp,
}

/// Optional instrumentation and mode switches for the stochastic loop.
#[derive(Debug, Clone, Default)]
pub struct StochasticOptions {
    pub diag_mode: DiagMode,
    /// Ground-truth diagonal; enables the sup-error column of the trace.
    pub d_star: Option<DVector<f64>>,
    /// Dense copy used only for trace metrics and the small-budget fallback;
    /// its uses are never counted as oracle queries.
    pub reference: Option<SymMatrix>,
}

/// Stable per-stream seed derivation (splitmix-style finalizer), so each
/// iteration and estimator draws from an independent stream of one root seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sketched alternating fit driven entirely through matvec queries.
///
/// Per iteration the residual operator `x -> A x - d .* x` is sketched to a
/// rank-`r` factor, then the diagonal is refit as
/// `d <- max(diag(A) - diag(U U^T), 0)` with `diag(A)` either supplied
/// exactly or re-estimated from probes. A sketch that comes back with rank
/// below the target stops the loop early and flags the trace.
///
/// A budget at or below the rank cannot sketch anything useful; such calls
/// fall back to the dense deterministic solver, which needs
/// `opts.reference`.
pub fn stochastic_alt_fit(
    oracle: &mut dyn MatvecOracle,
    exact_diag: Option<&DVector<f64>>,
    cfg: &SketchConfig,
    iters: usize,
    opts: &StochasticOptions,
) -> Result<FitOutput> {
    let n = oracle.dim();
    cfg.validate(n)?;
    if iters == 0 {
        return Err(LrpdError::InvalidConfig("iters must be at least 1".to_string()));
    }

    if cfg.budget <= cfg.rank {
        let Some(a) = &opts.reference else {
            return Err(LrpdError::FallbackNeedsDense {
                budget: cfg.budget,
                rank: cfg.rank,
            });
        };
        let mut alt_cfg = AltConfig::new(cfg.rank, iters);
        alt_cfg.tol = 0.0;
        return alt_fit(a, &alt_cfg, opts.d_star.as_ref());
    }

    if opts.diag_mode == DiagMode::Exact {
        let Some(diag) = exact_diag else {
            return Err(LrpdError::MissingExactDiagonal);
        };
        if diag.len() != n {
            return Err(LrpdError::DimensionMismatch {
                expected: n,
                got: diag.len(),
            });
        }
    }

    let s = cfg.sketch_size();
    if s > n {
        return Err(LrpdError::SketchTooWide { s, n });
    }
    let diag_probes = match opts.diag_mode {
        DiagMode::Exact => 0,
        DiagMode::Diagpp => {
            let probes = cfg.diag_budget.unwrap_or(cfg.budget.saturating_sub(s));
            if probes < 3 {
                return Err(LrpdError::InvalidConfig(format!(
                    "diagonal probe budget {probes} is below 3; raise the budget or set diag_budget"
                )));
            }
            probes
        }
    };
    let nopts = NystromOptions {
        rank_tol: cfg.rank_tol,
        ridge: cfg.ridge,
        stabilized: cfg.stabilized,
    };

    let mut d = DVector::zeros(n);
    let mut trace = ConvergenceTrace::default();
    let mut model = None;

    for t in 0..iters {
        let (nys, diag_a) = {
            let mut residual = ResidualOracle::new(&mut *oracle, d.clone());
            let nys =
                nystrom_fixed_rank_opts(&mut residual, cfg.rank, s, derive_seed(cfg.seed, 2 * t as u64), &nopts)?;
            let diag_a = match opts.diag_mode {
                DiagMode::Exact => exact_diag.expect("validated above").clone(),
                DiagMode::Diagpp => {
                    diagpp(&mut residual, diag_probes, derive_seed(cfg.seed, 2 * t as u64 + 1))? + &d
                }
            };
            (nys, diag_a)
        };
        let collapsed = nys.effective_rank < cfg.rank;
        let u = nys.u;
        d = (diag_a - diag_of_gram(&u)).map(|v| v.max(0.0));

        let m = LrpdModel::new_vector(u, d.clone(), Provenance::StochasticAlt)?;
        let (rel, objective) = match &opts.reference {
            Some(a) => {
                let rel = rel_fro_error(&m, a)?;
                (rel, (rel * a.frobenius_norm()).powi(2))
            }
            None => (f64::NAN, f64::NAN),
        };
        trace.push(TraceRecord {
            iter: t + 1,
            rel_fro_error: rel,
            diag_error_sup: opts.d_star.as_ref().map(|ds| diag_sup_error(&m, ds)).transpose()?,
            matvec_queries: oracle.query_count(),
            objective,
        });
        model = Some(m);
        if collapsed {
            trace.early_rank_collapse = true;
            break;
        }
    }

    Ok(FitOutput {
        model: model.expect("at least one iteration ran"),
        trace,
    })
}

/// Dense-matrix convenience wrapper: counts queries against a fresh oracle
/// and wires the matrix in as both exact diagonal and trace reference.
pub fn stochastic_alt_fit_dense(
    a: &SymMatrix,
    cfg: &SketchConfig,
    iters: usize,
    opts: &StochasticOptions,
) -> Result<FitOutput> {
    let mut oracle = crate::linalg::oracle_from_dense(a);
    let mut opts = opts.clone();
    if opts.reference.is_none() {
        opts.reference = Some(a.clone());
    }
    let diag = a.diagonal();
    stochastic_alt_fit(&mut oracle, Some(&diag), cfg, iters, &opts)
}

/// Evaluated error budget for one sketched iteration.
///
/// `e_lr` bounds the low-rank stage: spectral tail plus `r/(k-r-alpha)`
/// times the nuclear tail of the residual beyond rank `r`, where `k` is the
/// sketch size. `e_lr_entrywise` is the same expression read in the
/// max-entry and entrywise-l1 norms; both readings are reported because the
/// combined statement does not pin the norm. `e_diag` bounds the diagonal
/// stage at relative accuracy `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub e_lr: f64,
    pub e_lr_entrywise: f64,
    pub e_diag: f64,
    /// Sketch size sufficient for the rank-`r` stage at accuracy `epsilon`.
    pub k_suggested: usize,
    /// Probe count sufficient for the diagonal stage.
    pub s_suggested: usize,
    /// The probe count actually evaluated, echoed from the caller.
    pub s_evaluated: usize,
    /// Whether `s_evaluated` meets the sufficient probe count.
    pub s_satisfied: bool,
    /// Oversampling indicator in the denominator `k - r - alpha`.
    pub alpha: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
}

/// Evaluates the error budget for residual `R`, target rank `r`, sketch size
/// `k`, and `s` diagonal probes at accuracy `epsilon`, failure probability
/// `delta`, and probe-bound constant `c`.
pub fn bound_report(
    r_mat: &SymMatrix,
    r: usize,
    k: usize,
    s: usize,
    epsilon: f64,
    delta: f64,
    c: f64,
) -> Result<BoundReport> {
    let n = r_mat.dim();
    let alpha = 1usize;
    if r > n {
        return Err(LrpdError::RankOutOfRange { k: r, n });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(LrpdError::InvalidConfig(format!("epsilon {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LrpdError::InvalidConfig(format!(
            "failure probability {delta} must lie in (0, 1)"
        )));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(LrpdError::InvalidConfig(format!("constant {c} must be nonnegative")));
    }
    if k <= r + alpha {
        return Err(LrpdError::DegenerateBound(format!(
            "sketch size {k} must exceed rank + alpha = {}",
            r + alpha
        )));
    }
    let diag_norm = r_mat.diagonal().norm();
    if diag_norm == 0.0 {
        return Err(LrpdError::DegenerateBound(
            "zero diagonal makes the probe bound undefined".to_string(),
        ));
    }

    let eig = eig_sym(r_mat)?;
    let tail_spectral = eig.values.iter().skip(r).fold(0.0f64, |m, &v| m.max(v.abs()));
    let tail_nuclear: f64 = eig.values.iter().skip(r).map(|v| v.abs()).sum();
    let amplify = r as f64 / (k - r - alpha) as f64;
    let e_lr = tail_spectral + amplify * tail_nuclear;

    let tail_matrix = r_mat.sub(&truncate_top_k(&eig, r)?)?;
    let tail_l1: f64 = tail_matrix.as_matrix().iter().map(|v| v.abs()).sum();
    let e_lr_entrywise = tail_matrix.max_abs_entry() + amplify * tail_l1;

    let e_diag = epsilon * diag_norm;
    let k_suggested = ((1.0 + 1.0 / epsilon) * r as f64 + alpha as f64).ceil() as usize;
    let trace: f64 = r_mat.diagonal().sum();
    let s_raw =
        4.0 * trace / diag_norm * ((2.0 * n as f64 / delta).ln()).sqrt() / epsilon + c * (1.0 / delta).ln();
    let s_suggested = s_raw.max(0.0).ceil() as usize;

    Ok(BoundReport {
        e_lr,
        e_lr_entrywise,
        e_diag,
        k_suggested,
        s_suggested,
        s_evaluated: s,
        s_satisfied: s as f64 > s_raw,
        alpha,
        epsilon,
        delta,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_exact_lrpd, SynthSpec};
    use crate::linalg::{norms, oracle_from_dense};

    fn planted_psd(n: usize, rank: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
        SymMatrix::gram(&g)
    }

    /// PSD matrix with eigenvalues `3 * decay^i` on a random orthogonal basis.
    fn decaying_psd(n: usize, decay: f64, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let scales = DVector::from_fn(n, |i, _| (3.0 * decay.powi(i as i32)).sqrt());
        SymMatrix::gram(&(q * DMatrix::from_diagonal(&scales)))
    }

    #[test]
    fn nystrom_reproduces_an_exact_rank_three_matrix() {
        let a = planted_psd(40, 3, 11);
        let mut oracle = oracle_from_dense(&a);
        let f = nystrom_fixed_rank(&mut oracle, 3, 8, 5).unwrap();
        assert_eq!(f.effective_rank, 3);
        assert_eq!(oracle.query_count(), 8);
        let err = a.sub(&SymMatrix::gram(&f.u)).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn nystrom_zero_oracle_gives_an_empty_factor() {
        let mut oracle = oracle_from_dense(&SymMatrix::zeros(12));
        let f = nystrom_fixed_rank(&mut oracle, 4, 6, 0).unwrap();
        assert_eq!(f.effective_rank, 0);
        assert_eq!(f.u.ncols(), 0);
    }

    #[test]
    fn nystrom_shrinks_to_the_detected_rank() {
        let a = planted_psd(30, 2, 13);
        let mut oracle = oracle_from_dense(&a);
        let f = nystrom_fixed_rank(&mut oracle, 5, 10, 1).unwrap();
        assert_eq!(f.effective_rank, 2);
        assert_eq!(f.u.ncols(), 2);
        let err = a.sub(&SymMatrix::gram(&f.u)).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn nystrom_is_deterministic_per_seed() {
        let a = planted_psd(25, 4, 17);
        let mut o1 = oracle_from_dense(&a);
        let mut o2 = oracle_from_dense(&a);
        let f1 = nystrom_fixed_rank(&mut o1, 4, 9, 42).unwrap();
        let f2 = nystrom_fixed_rank(&mut o2, 4, 9, 42).unwrap();
        assert_eq!(f1.u, f2.u);
        let mut o3 = oracle_from_dense(&a);
        let f3 = nystrom_fixed_rank(&mut o3, 4, 9, 43).unwrap();
        assert_ne!(f1.u, f3.u);
    }

    #[test]
    fn nystrom_rejects_oversized_sketches() {
        let mut oracle = oracle_from_dense(&SymMatrix::zeros(5));
        assert!(matches!(
            nystrom_fixed_rank(&mut oracle, 2, 6, 0),
            Err(LrpdError::SketchTooWide { s: 6, n: 5 })
        ));
        assert!(nystrom_fixed_rank(&mut oracle, 2, 0, 0).is_err());
    }

    #[test]
    fn stabilized_route_matches_on_well_conditioned_input() {
        let a = planted_psd(40, 3, 19);
        let mut o1 = oracle_from_dense(&a);
        let plain = nystrom_fixed_rank(&mut o1, 3, 8, 7).unwrap();
        let mut o2 = oracle_from_dense(&a);
        let opts = NystromOptions {
            stabilized: true,
            ..NystromOptions::default()
        };
        let stab = nystrom_fixed_rank_opts(&mut o2, 3, 8, 7, &opts).unwrap();
        assert_eq!(stab.effective_rank, plain.effective_rank);
        for f in [&plain, &stab] {
            let err = a.sub(&SymMatrix::gram(&f.u)).unwrap().frobenius_norm();
            assert!(err <= 1e-8 * a.frobenius_norm());
        }
    }

    #[test]
    fn sketch_error_concentrates_near_the_optimal_nuclear_tail() {
        // Sketch size chosen as the sufficient size for epsilon = 0.5, r = 5.
        let a = decaying_psd(60, 0.7, 23);
        let eig = eig_sym(&a).unwrap();
        let opt_nuclear: f64 = eig.values.iter().skip(5).map(|v| v.abs()).sum();
        let trials = 100;
        let mut total = 0.0;
        for seed in 0..trials {
            let mut oracle = oracle_from_dense(&a);
            let f = nystrom_fixed_rank(&mut oracle, 5, 16, seed).unwrap();
            let diff = a.sub(&SymMatrix::gram(&f.u)).unwrap();
            total += norms(&diff).unwrap().nuclear;
        }
        let mean = total / trials as f64;
        assert!(
            mean <= 1.5 * opt_nuclear * 1.1,
            "mean nuclear error {mean} vs optimal tail {opt_nuclear}"
        );
    }

    #[test]
    fn hutchinson_is_exact_on_diagonal_operators() {
        let d = DVector::from_vec(vec![1.5, -0.25, 3.0, 0.0, 2.0]);
        let a = SymMatrix::from_diagonal(&d);
        let mut oracle = oracle_from_dense(&a);
        let est = hutchinson_diag(&mut oracle, 4, 9);
        assert_eq!(est, d, "power-of-two probe count keeps the average exact");
        let mut oracle = oracle_from_dense(&a);
        let est3 = hutchinson_diag(&mut oracle, 3, 9);
        for i in 0..5 {
            assert!((est3[i] - d[i]).abs() <= 1e-15 * d[i].abs().max(1.0));
        }
    }

    #[test]
    fn hutchinson_zero_oracle_returns_zero() {
        let mut oracle = oracle_from_dense(&SymMatrix::zeros(7));
        assert_eq!(hutchinson_diag(&mut oracle, 2, 0), DVector::zeros(7));
    }

    #[test]
    fn hutchinson_concentrates_on_a_dense_psd_matrix() {
        let a = planted_psd(100, 100, 29);
        let d_true = a.diagonal();
        let mut hits = 0;
        for seed in 0..100 {
            let mut oracle = oracle_from_dense(&a);
            let est = hutchinson_diag(&mut oracle, 400, seed);
            let rel = (est - &d_true).norm() / d_true.norm();
            if rel <= 0.2 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 runs within 20% relative error");
    }

    #[test]
    fn diagpp_is_exact_when_the_rank_fits_the_sketch() {
        let a = planted_psd(100, 8, 31);
        let scale = a.diagonal().amax();
        for seed in 0..5 {
            let mut oracle = oracle_from_dense(&a);
            let est = diagpp(&mut oracle, 30, seed).unwrap();
            let err = (est - a.diagonal()).amax();
            assert!(err <= 1e-8 * scale, "seed {seed}: deflation left error {err}");
            assert!(oracle.query_count() <= 30);
        }
    }

    #[test]
    fn diagpp_is_exact_on_small_diagonal_operators() {
        let d = DVector::from_vec(vec![2.0, 1.0, 0.5, 4.0, 1.5, 3.0, 0.25, 1.25]);
        let a = SymMatrix::from_diagonal(&d);
        let mut oracle = oracle_from_dense(&a);
        let est = diagpp(&mut oracle, 30, 3).unwrap();
        assert!((est - &d).amax() <= 1e-10);
    }

    #[test]
    fn diagpp_is_unbiased_but_not_pointwise_exact_on_full_rank_diagonals() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let d = DVector::from_fn(40, |_, _| rng.gen_range(1.0..2.0));
        let a = SymMatrix::from_diagonal(&d);

        let mut oracle = oracle_from_dense(&a);
        let single = diagpp(&mut oracle, 15, 0).unwrap();
        assert!(
            (single - &d).amax() > 1e-6,
            "a sketch of 5 columns cannot capture a rank-40 operator exactly"
        );

        let runs = 300;
        let mut mean = DVector::zeros(40);
        for seed in 0..runs {
            let mut oracle = oracle_from_dense(&a);
            mean += diagpp(&mut oracle, 15, seed).unwrap();
        }
        mean /= runs as f64;
        assert!((mean - &d).amax() <= 0.05, "empirical mean strays from the diagonal");
    }

    #[test]
    fn diagpp_beats_hutchinson_under_fast_spectral_decay() {
        let a = decaying_psd(100, 0.6, 41);
        let d_true = a.diagonal();
        let mut wins = 0;
        for seed in 0..100 {
            let mut o1 = oracle_from_dense(&a);
            let dpp = diagpp(&mut o1, 60, seed).unwrap();
            let mut o2 = oracle_from_dense(&a);
            let hutch = hutchinson_diag(&mut o2, 60, seed);
            let e_dpp = (dpp - &d_true).norm();
            let e_hutch = (hutch - &d_true).norm();
            if e_dpp <= e_hutch {
                wins += 1;
            }
        }
        assert!(wins >= 80, "variance reduction won only {wins}/100 trials");
    }

    #[test]
    fn diagpp_rejects_budgets_below_three() {
        let mut oracle = oracle_from_dense(&SymMatrix::zeros(4));
        assert!(diagpp(&mut oracle, 2, 0).is_err());
    }

    #[test]
    fn stochastic_fit_recovers_a_small_planted_instance() {
        let inst = gen_exact_lrpd(&SynthSpec::exact_lrpd(60, 4, (0.0, 1.0), 3)).unwrap();
        for seed in 0..3 {
            let cfg = SketchConfig::new(4, 30, seed);
            let out = stochastic_alt_fit_dense(&inst.a, &cfg, 25, &StochasticOptions::default())
                .unwrap();
            let rel = out.trace.final_rel_fro_error();
            assert!(rel <= 1e-6, "seed {seed} stalled at {rel}");
        }
    }

    #[test]
    fn stochastic_queries_stay_within_budget_each_iteration() {
        let inst = gen_exact_lrpd(&SynthSpec::exact_lrpd(50, 3, (0.5, 1.5), 8)).unwrap();
        let cfg = SketchConfig::new(3, 18, 0);
        let out = stochastic_alt_fit_dense(&inst.a, &cfg, 6, &StochasticOptions::default()).unwrap();
        let mut prev = 0;
        for rec in &out.trace.records {
            let delta = rec.matvec_queries - prev;
            assert!(delta <= 18, "iteration spent {delta} queries");
            prev = rec.matvec_queries;
        }

        let opts = StochasticOptions {
            diag_mode: DiagMode::Diagpp,
            ..StochasticOptions::default()
        };
        let out = stochastic_alt_fit_dense(&inst.a, &cfg, 6, &opts).unwrap();
        let mut prev = 0;
        for rec in &out.trace.records {
            let delta = rec.matvec_queries - prev;
            assert!(delta <= 18, "probe iteration spent {delta} queries");
            prev = rec.matvec_queries;
        }
    }

    #[test]
    fn rank_zero_run_copies_the_diagonal_in_one_iteration() {
        let d = DVector::from_fn(20, |i, _| 1.0 + i as f64);
        let a = SymMatrix::from_diagonal(&d);
        let cfg = SketchConfig::new(0, 4, 0);
        let out = stochastic_alt_fit_dense(&a, &cfg, 1, &StochasticOptions::default()).unwrap();
        assert!(!out.trace.early_rank_collapse);
        assert_eq!(out.model.diag_vector(), d);
        assert!(out.trace.final_rel_fro_error() <= 1e-12);
    }

    #[test]
    fn collapse_flag_rises_when_the_residual_runs_out_of_rank() {
        // Rank-2 matrix sketched at target rank 5: the first sketch detects
        // rank 2 and the loop stops after recording it.
        let a = planted_psd(40, 2, 47);
        let cfg = SketchConfig::new(5, 24, 1);
        let out = stochastic_alt_fit_dense(&a, &cfg, 10, &StochasticOptions::default()).unwrap();
        assert!(out.trace.early_rank_collapse);
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.model.rank(), 2);
    }

    #[test]
    fn tiny_budgets_fall_back_to_the_dense_path() {
        let inst = gen_exact_lrpd(&SynthSpec::exact_lrpd(30, 5, (0.0, 1.0), 12)).unwrap();
        let cfg = SketchConfig::new(5, 3, 0);
        let out = stochastic_alt_fit_dense(&inst.a, &cfg, 7, &StochasticOptions::default()).unwrap();
        let direct = crate::alt::alt_fit(&inst.a, &AltConfig::new(5, 7), None).unwrap();
        assert_eq!(
            out.trace.final_rel_fro_error(),
            direct.trace.final_rel_fro_error()
        );
        assert_eq!(out.trace.records.len(), direct.trace.records.len());

        let mut oracle = oracle_from_dense(&inst.a);
        let diag = inst.a.diagonal();
        let err = stochastic_alt_fit(&mut oracle, Some(&diag), &cfg, 7, &StochasticOptions::default());
        assert!(matches!(err, Err(LrpdError::FallbackNeedsDense { budget: 3, rank: 5 })));
    }

    #[test]
    fn exact_mode_requires_the_diagonal() {
        let a = planted_psd(20, 2, 53);
        let mut oracle = oracle_from_dense(&a);
        let cfg = SketchConfig::new(2, 9, 0);
        assert!(matches!(
            stochastic_alt_fit(&mut oracle, None, &cfg, 3, &StochasticOptions::default()),
            Err(LrpdError::MissingExactDiagonal)
        ));
    }

    #[test]
    fn probe_only_mode_is_deterministic_and_still_makes_progress() {
        let inst = gen_exact_lrpd(&SynthSpec::exact_lrpd(80, 5, (0.2, 1.2), 15)).unwrap();
        let cfg = SketchConfig::new(5, 36, 7);
        let opts = StochasticOptions {
            diag_mode: DiagMode::Diagpp,
            ..StochasticOptions::default()
        };
        let first = stochastic_alt_fit_dense(&inst.a, &cfg, 30, &opts).unwrap();
        let second = stochastic_alt_fit_dense(&inst.a, &cfg, 30, &opts).unwrap();
        let errs_first: Vec<f64> = first.trace.records.iter().map(|r| r.rel_fro_error).collect();
        let errs_second: Vec<f64> = second.trace.records.iter().map(|r| r.rel_fro_error).collect();
        assert_eq!(errs_first, errs_second);
        // the diagonal is re-probed from scratch every iteration, so the
        // error plateaus at the probe noise level instead of vanishing; the
        // plateau still sits well below the empty model's error of 1
        let end = *errs_first.last().unwrap();
        assert!(end <= 0.5, "stuck near the empty model: {end}");
    }

    #[test]
    fn bound_report_matches_hand_computed_tails() {
        let mut vals = vec![10.0, 6.0, 5.0, 4.0, 3.0];
        vals.extend((0..25).map(|i| 2.0 / (1.0 + i as f64)));
        let r_mat = SymMatrix::from_diagonal(&DVector::from_vec(vals.clone()));
        let report = bound_report(&r_mat, 5, 30, 100, 0.5, 0.05, 1.0).unwrap();
        let tail: Vec<f64> = vals[5..].to_vec();
        let expect_spectral = tail.iter().cloned().fold(0.0f64, f64::max);
        let expect_nuclear: f64 = tail.iter().sum();
        let expect = expect_spectral + 5.0 / 24.0 * expect_nuclear;
        assert!((report.e_lr - expect).abs() <= 1e-12);
        // Diagonal residual: entrywise tail coincides with the spectral one.
        assert!((report.e_lr_entrywise - expect).abs() <= 1e-12);
        let diag_norm = r_mat.diagonal().norm();
        assert!((report.e_diag - 0.5 * diag_norm).abs() <= 1e-12);
        assert_eq!(report.k_suggested, 16);
        let n = 30.0f64;
        let s_raw = 4.0 * vals.iter().sum::<f64>() / diag_norm * ((2.0 * n / 0.05).ln()).sqrt()
            / 0.5
            + (1.0 / 0.05f64).ln();
        assert_eq!(report.s_suggested, s_raw.ceil() as usize);
        assert_eq!(report.s_satisfied, 100.0 > s_raw);
    }

    #[test]
    fn bound_is_zero_for_an_exactly_low_rank_residual() {
        let mut vals = vec![3.0, 2.0, 1.0];
        vals.resize(10, 0.0);
        let r_mat = SymMatrix::from_diagonal(&DVector::from_vec(vals));
        let report = bound_report(&r_mat, 3, 8, 10, 0.5, 0.1, 1.0).unwrap();
        assert!(report.e_lr.abs() <= 1e-12);
        assert!(report.e_lr_entrywise.abs() <= 1e-12);
    }

    #[test]
    fn bound_report_rejects_degenerate_parameters() {
        let r_mat = SymMatrix::from_diagonal(&DVector::from_element(6, 1.0));
        assert!(matches!(
            bound_report(&r_mat, 5, 6, 10, 0.5, 0.1, 1.0),
            Err(LrpdError::DegenerateBound(_))
        ));
        let hollow = SymMatrix::from_fn_symmetric(2, |i, j| if i == j { 0.0 } else { 1.0 });
        assert!(matches!(
            bound_report(&hollow, 0, 2, 10, 0.5, 0.1, 1.0),
            Err(LrpdError::DegenerateBound(_))
        ));
        assert!(bound_report(&r_mat, 2, 6, 10, 0.0, 0.1, 1.0).is_err());
        assert!(bound_report(&r_mat, 2, 6, 10, 0.5, 1.5, 1.0).is_err());
    }
}
