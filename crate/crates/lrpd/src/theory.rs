//! Executable forms of the solver's convergence analysis.
//!
//! The pieces: spectral projectors and their complements, the derivative
//! `E -> E - QEQ` of rank-k truncation at a rank-k matrix, the diagonal
//! error-transfer matrix `[delta_ij - Q_ij^2]` with its exact infinity norm,
//! eigenvalue-gap estimates under diagonal perturbation, and the recursion
//! that upper-bounds the sup-norm diagonal error of the alternating solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{LrpdError, Result};
use crate::linalg::{eig_sym, EigDecomp, SymMatrix};

/// An orthogonal projector `P` onto a k-dimensional subspace, stored together
/// with its complement `Q = I - P`.
#[derive(Debug, Clone)]
pub struct Projector {
    p: SymMatrix,
    q: SymMatrix,
    rank: usize,
}

impl Projector {
    /// Projector onto the top-k eigenspace of a decomposed matrix.
    pub fn from_top_k(eig: &EigDecomp, k: usize) -> Result<Self> {
        Self::validated(eig.projector_top_k(k)?, k)
    }

    /// Coordinate projector: keeps the listed indices, kills the rest.
    pub fn coordinate(support: &[usize], n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in support {
            if i >= n {
                return Err(LrpdError::InvalidConfig(format!(
                    "support index {i} out of range for dimension {n}"
                )));
            }
            if seen[i] {
                return Err(LrpdError::InvalidConfig(format!(
                    "support index {i} listed twice"
                )));
            }
            seen[i] = true;
        }
        let p = SymMatrix::from_fn_symmetric(n, |i, j| {
            if i == j && seen[i] {
                1.0
            } else {
                0.0
            }
        });
        Self::validated(p, support.len())
    }

    /// Wraps an explicit projector matrix; the rank is read off the trace.
    pub fn from_matrix(p: SymMatrix) -> Result<Self> {
        let rank = p.as_matrix().trace().round();
        if rank < 0.0 {
            return Err(LrpdError::InvalidConfig(format!(
                "projector trace {rank} is negative"
            )));
        }
        Self::validated(p, rank as usize)
    }

    fn validated(p: SymMatrix, rank: usize) -> Result<Self> {
        let n = p.dim();
        if rank > n {
            return Err(LrpdError::RankOutOfRange { k: rank, n });
        }
        let pm = p.as_matrix();
        let idem = (pm * pm - pm).norm();
        if idem > 1e-10 {
            return Err(LrpdError::InvalidConfig(format!(
                "projector is not idempotent: ||P^2 - P||_F = {idem:.3e}"
            )));
        }
        let tr = pm.trace();
        if (tr - rank as f64).abs() > 1e-8 {
            return Err(LrpdError::InvalidConfig(format!(
                "projector trace {tr} is not the integer rank {rank}"
            )));
        }
        let q = SymMatrix::try_new(DMatrix::identity(n, n) - pm)
            .expect("I - P inherits bitwise symmetry");
        Ok(Self { p, q, rank })
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.p
    }

    /// The complement `Q = I - P`.
    pub fn complement(&self) -> &SymMatrix {
        &self.q
    }
}

/// Seeded projector onto the span of `k` iid Gaussian directions.
pub fn random_projector(n: usize, k: usize, seed: u64) -> Result<Projector> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if k > n {
        return Err(LrpdError::RankOutOfRange { k, n });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let w = g.qr().q();
    Projector::from_matrix(SymMatrix::gram(&w))
}

/// Derivative of rank-k spectral truncation at a rank-k matrix whose column
/// space has projector `P`, applied to a symmetric perturbation:
/// `E - QEQ`, equivalently `PE + EP - PEP`.
pub fn lambda_op(proj: &Projector, e: &SymMatrix) -> SymMatrix {
    assert_eq!(
        proj.dim(),
        e.dim(),
        "projector dimension {} does not match perturbation dimension {}",
        proj.dim(),
        e.dim()
    );
    let q = proj.complement().as_matrix();
    let em = e.as_matrix();
    let out = em - q * em * q;
    SymMatrix::symmetrized(out).expect("square by construction")
}

/// The matrix of `e -> diag(lambda_op(diag(e)))`: entries `delta_ij - Q_ij^2`.
pub fn jacobian_matrix(proj: &Projector) -> DMatrix<f64> {
    let q = proj.complement().as_matrix();
    let n = proj.dim();
    DMatrix::from_fn(n, n, |i, j| {
        let kronecker = if i == j { 1.0 } else { 0.0 };
        kronecker - q[(i, j)] * q[(i, j)]
    })
}

/// Norms of the diagonal error-transfer matrix.
#[derive(Debug, Clone, Copy)]
pub struct JacobianReport {
    /// Exact infinity-to-infinity operator norm: the maximum absolute row sum
    /// of `[delta_ij - Q_ij^2]`. Equals `max_i (1 + Q_ii - 2 Q_ii^2)`, which
    /// exceeds 1 whenever some `Q_ii` lies strictly between 0 and 1/2.
    pub norm_inf: f64,
    /// The chained row bound `max_i (1 - Q_ii^2)`. The chain behind it treats
    /// the diagonal coefficient as `1 - Q_ii` where the matrix entry is
    /// `1 - Q_ii^2`, so it can undershoot `norm_inf`; both values are
    /// reported so the gap stays visible.
    pub row_bound: f64,
    /// True when `Q` has no off-diagonal entry above 1e-12, i.e. the
    /// projector keeps or kills whole coordinates.
    pub is_axis_aligned: bool,
}

/// Evaluates the error-transfer matrix norms for a projector.
pub fn jacobian_diag_norm(proj: &Projector) -> JacobianReport {
    let j = jacobian_matrix(proj);
    let n = proj.dim();
    let mut norm_inf: f64 = 0.0;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|c| j[(i, c)].abs()).sum();
        norm_inf = norm_inf.max(row_sum);
    }
    let q = proj.complement().as_matrix();
    let mut row_bound: f64 = 0.0;
    let mut max_offdiag: f64 = 0.0;
    for i in 0..n {
        row_bound = row_bound.max(1.0 - q[(i, i)] * q[(i, i)]);
        for c in 0..n {
            if c != i {
                max_offdiag = max_offdiag.max(q[(i, c)].abs());
            }
        }
    }
    JacobianReport {
        norm_inf,
        row_bound,
        is_axis_aligned: max_offdiag <= 1e-12,
    }
}

/// Spectral-gap estimates for a rank-k matrix under diagonal perturbation.
#[derive(Debug, Clone, Copy)]
pub struct WeylReport {
    /// `lambda_k(L*) - 2 max_i |delta_i|`.
    pub gap_lower: f64,
    /// `lambda_k - lambda_{k+1}` of `L* + diag(delta)`.
    pub gap_exact: f64,
}

/// Compares the exact k-th spectral gap of `L* + diag(delta)` against its
/// perturbation lower bound.
pub fn weyl_gap(l_star: &SymMatrix, delta: &DVector<f64>, k: usize) -> Result<WeylReport> {
    let n = l_star.dim();
    if k == 0 || k >= n {
        return Err(LrpdError::RankOutOfRange { k, n });
    }
    if delta.len() != n {
        return Err(LrpdError::DimensionMismatch {
            expected: n,
            got: delta.len(),
        });
    }
    let lambda_k = eig_sym(l_star)?.values[k - 1];
    let perturbed = l_star.sub_diagonal(&(-delta))?;
    let eig_p = eig_sym(&perturbed)?;
    Ok(WeylReport {
        gap_lower: lambda_k - 2.0 * delta.amax(),
        gap_exact: eig_p.values[k - 1] - eig_p.values[k],
    })
}

/// Upper-bound sequence for the sup-norm diagonal error of the alternating
/// solver: `b_0 = norm_d0`, `b_t = b_{t-1} / (delta - 2 b_{t-1})`.
///
/// Requires `delta - 2 norm_d0 > 1`; in that regime every denominator stays
/// above 1 and the sequence is non-increasing. An instance with a smaller
/// margin can be rescaled by any `alpha > 1 / (delta - 2 norm_d0)` first.
pub fn contraction_recursion(delta: f64, norm_d0: f64, iters: usize) -> Result<Vec<f64>> {
    if !delta.is_finite() || !norm_d0.is_finite() || norm_d0 < 0.0 {
        return Err(LrpdError::InvalidConfig(format!(
            "delta and norm_d0 must be finite with norm_d0 >= 0, got {delta} and {norm_d0}"
        )));
    }
    let margin = delta - 2.0 * norm_d0;
    if margin <= 1.0 {
        return Err(LrpdError::ContractionPrecondition { margin });
    }
    let mut bounds = Vec::with_capacity(iters + 1);
    bounds.push(norm_d0);
    let mut b = norm_d0;
    for _ in 0..iters {
        b /= delta - 2.0 * b;
        bounds.push(b);
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alt::{alt_step, AltConfig};
    use crate::linalg::norms;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_projector(n: usize, k: usize, seed: u64) -> Projector {
        super::random_projector(n, k, seed).unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymMatrix::symmetrized(DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng)))
            .unwrap()
    }

    #[test]
    fn recursion_matches_hand_computation() {
        let b = contraction_recursion(4.0, 1.0, 2).unwrap();
        assert_eq!(b[0], 1.0);
        assert_eq!(b[1], 0.5);
        assert!((b[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn recursion_from_zero_stays_zero() {
        let b = contraction_recursion(5.0, 0.0, 10).unwrap();
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn recursion_rejects_small_margin_with_the_margin_value() {
        match contraction_recursion(3.0, 1.0, 5) {
            Err(LrpdError::ContractionPrecondition { margin }) => {
                assert!((margin - 1.0).abs() < 1e-15);
            }
            other => panic!("expected precondition error, got {other:?}"),
        }
        assert!(contraction_recursion(f64::NAN, 1.0, 5).is_err());
        assert!(contraction_recursion(9.0, -1.0, 5).is_err());
    }

    #[test]
    fn recursion_is_strictly_decreasing_for_positive_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let b0: f64 = rng.gen_range(0.01..5.0);
            let delta = 2.0 * b0 + rng.gen_range(1.1..10.0);
            let b = contraction_recursion(delta, b0, 12).unwrap();
            for w in b.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn measured_diagonal_error_stays_under_the_recursion_bound() {
        // Gaussian-factor instances rescaled to margin 2: the incoherent basis
        // contracts near rho(I - Q.Q) ~ 0.1 per step while the bound decays at
        // 1/delta ~ 0.4, so the bound stays on top at every iteration. With a
        // coherent basis and a large gap the ordering can flip, so the scaling
        // step is load-bearing.
        use crate::alt::{alt_fit, contraction_precheck};
        use crate::data::{gen_exact_lrpd, SynthSpec};
        for seed in 0..5 {
            let inst =
                gen_exact_lrpd(&SynthSpec::exact_lrpd(100, 4, (0.0, 3.0), 500 + seed)).unwrap();
            let pre = contraction_precheck(&inst.l_star, &inst.d_star, 4).unwrap();
            assert!(pre.satisfied);
            let alpha = 2.0 / (pre.delta - 2.0 * pre.norm_d_star);
            let a = inst.a.scale(alpha);
            let d_star = &inst.d_star * alpha;
            let mut cfg = AltConfig::new(4, 15);
            cfg.clamp_negative_eigs = false;
            cfg.clamp_diag_nonneg = false;
            let out = alt_fit(&a, &cfg, Some(&d_star)).unwrap();
            let bounds = contraction_recursion(alpha * pre.delta, d_star.amax(), 15).unwrap();
            for (t, rec) in out.trace.records.iter().enumerate() {
                let measured = rec.diag_error_sup.unwrap();
                assert!(
                    measured <= bounds[t + 1],
                    "seed {seed} t {}: measured {measured} above bound {}",
                    t + 1,
                    bounds[t + 1]
                );
            }
        }
    }

    #[test]
    fn lambda_op_is_identity_for_full_projector_and_zero_for_empty() {
        let e = random_symmetric(5, 7);
        let full = Projector::coordinate(&[0, 1, 2, 3, 4], 5).unwrap();
        let kept = lambda_op(&full, &e);
        assert_eq!(kept.max_abs_entry(), e.max_abs_entry());
        assert_eq!(kept.sub(&e).unwrap().max_abs_entry(), 0.0);
        let empty = Projector::coordinate(&[], 5).unwrap();
        assert_eq!(lambda_op(&empty, &e).max_abs_entry(), 0.0);
    }

    #[test]
    fn lambda_op_agrees_with_its_expanded_form() {
        // Dual route: E - QEQ versus PE + EP - PEP, computed independently.
        for seed in 0..30 {
            let proj = random_projector(6, 2, seed);
            let e = random_symmetric(6, 1000 + seed);
            let lhs = lambda_op(&proj, &e);
            let p = proj.matrix().as_matrix();
            let em = e.as_matrix();
            let rhs = p * em + em * p - p * em * p;
            let dev = (lhs.as_matrix() - &rhs).amax();
            assert!(dev <= 1e-12, "seed {seed}: routes differ by {dev}");
        }
    }

    #[test]
    fn lambda_op_diagonal_action_matches_the_componentwise_formula() {
        let proj = random_projector(6, 2, 99);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let e = SymMatrix::from_diagonal(&eps);
        let out = lambda_op(&proj, &e);
        let q = proj.complement().as_matrix();
        for i in 0..6 {
            let expected: f64 =
                eps[i] - (0..6).map(|j| q[(i, j)] * q[(i, j)] * eps[j]).sum::<f64>();
            assert!((out.as_matrix()[(i, i)] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn coordinate_projector_transfer_is_exact_zero_one() {
        let proj = Projector::coordinate(&[0, 1], 4).unwrap();
        let j = jacobian_matrix(&proj);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
        assert_eq!(j, expected);
        let report = jacobian_diag_norm(&proj);
        assert_eq!(report.norm_inf, 1.0);
        assert!(report.is_axis_aligned);
    }

    #[test]
    fn two_by_two_half_projector_saturates_the_exact_norm() {
        // P = [[1/2,1/2],[1/2,1/2]] is idempotent in exact dyadic arithmetic;
        // the transfer matrix is [[3/4,-1/4],[-1/4,3/4]] with row sums 1,
        // while the chained row bound evaluates to 3/4.
        let p = SymMatrix::from_fn_symmetric(2, |_, _| 0.5);
        let proj = Projector::from_matrix(p).unwrap();
        let j = jacobian_matrix(&proj);
        assert_eq!(j[(0, 0)], 0.75);
        assert_eq!(j[(0, 1)], -0.25);
        let report = jacobian_diag_norm(&proj);
        assert_eq!(report.norm_inf, 1.0);
        assert_eq!(report.row_bound, 0.75);
        assert!(!report.is_axis_aligned);
    }

    #[test]
    fn rank_five_witness_pushes_the_exact_norm_above_one() {
        // Q = qq^T with q = (1/2,1/2,1/2,1/2,0,0): each of the first four
        // rows of the transfer matrix sums to 15/16 + 3/16 = 9/8.
        let q = DVector::from_vec(vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
        let p = SymMatrix::from_fn_symmetric(6, |i, j| {
            let kronecker = if i == j { 1.0 } else { 0.0 };
            kronecker - q[i] * q[j]
        });
        let proj = Projector::from_matrix(p).unwrap();
        assert_eq!(proj.rank(), 5);
        let report = jacobian_diag_norm(&proj);
        assert_eq!(report.norm_inf, 1.125);
        assert!(report.row_bound <= 1.0);
    }

    #[test]
    fn random_projector_norms_bracket_one() {
        // The chained row bound never exceeds 1. The exact norm equals
        // max_i (1 + Q_ii - 2 Q_ii^2) by the row-square identity, so it
        // tops out at 9/8 and exceeds 1 whenever some Q_ii < 1/2, which
        // happens for most random subspaces.
        let mut exceed = 0;
        for seed in 0..100 {
            let proj = random_projector(8, 3, 200 + seed);
            let report = jacobian_diag_norm(&proj);
            assert!(report.row_bound <= 1.0 + 1e-12);
            assert!(report.norm_inf >= report.row_bound - 1e-12);
            assert!(report.norm_inf <= 1.125 + 1e-12);
            let q = proj.complement().as_matrix();
            let closed_form = (0..8)
                .map(|i| 1.0 + q[(i, i)] - 2.0 * q[(i, i)] * q[(i, i)])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((report.norm_inf - closed_form).abs() <= 1e-12);
            if report.norm_inf > 1.0 + 1e-6 {
                exceed += 1;
            }
        }
        assert!(exceed >= 50, "only {exceed} of 100 samples exceeded 1");
    }

    #[test]
    fn projector_constructors_reject_malformed_inputs() {
        assert!(Projector::coordinate(&[0, 0], 3).is_err());
        assert!(Projector::coordinate(&[5], 3).is_err());
        let not_idem = SymMatrix::from_fn_symmetric(2, |_, _| 0.7);
        assert!(Projector::from_matrix(not_idem).is_err());
    }

    #[test]
    fn weyl_hand_example() {
        let l = SymMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 0.0]));
        let report = weyl_gap(&l, &DVector::from_element(2, 1.0), 1).unwrap();
        assert!((report.gap_exact - 5.0).abs() < 1e-12);
        assert!((report.gap_lower - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weyl_zero_perturbation_collapses_to_the_bare_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = DMatrix::from_fn(10, 3, |_, _| StandardNormal.sample(&mut rng));
        let l = SymMatrix::gram(&g);
        let report = weyl_gap(&l, &DVector::zeros(10), 3).unwrap();
        let lambda_3 = eig_sym(&l).unwrap().values[2];
        assert!((report.gap_exact - lambda_3).abs() < 1e-10);
        assert!((report.gap_lower - lambda_3).abs() < 1e-10);
    }

    #[test]
    fn exact_gap_never_falls_below_the_lower_estimate() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
            let g = DMatrix::from_fn(12, 3, |_, _| StandardNormal.sample(&mut rng));
            let l = SymMatrix::gram(&g);
            let delta = DVector::from_fn(12, |_, _| rng.gen_range(-2.0..2.0));
            let report = weyl_gap(&l, &delta, 3).unwrap();
            assert!(report.gap_exact >= report.gap_lower - 1e-10);
        }
    }

    #[test]
    fn weyl_rejects_bad_rank_and_dimensions() {
        let l = SymMatrix::zeros(4);
        assert!(weyl_gap(&l, &DVector::zeros(4), 0).is_err());
        assert!(weyl_gap(&l, &DVector::zeros(4), 4).is_err());
        assert!(weyl_gap(&l, &DVector::zeros(3), 2).is_err());
    }

    /// Planted rank-k ground truth with a hand-picked spectrum.
    fn controlled_instance(
        n: usize,
        spectrum: &[f64],
        d_lo: f64,
        d_hi: f64,
        seed: u64,
    ) -> (SymMatrix, DVector<f64>, SymMatrix) {
        let k = spectrum.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        let v = g.qr().q();
        let scaled =
            &v * DMatrix::from_diagonal(&DVector::from_iterator(k, spectrum.iter().map(|s| s.sqrt())));
        let l_star = SymMatrix::gram(&scaled);
        let d_star = DVector::from_fn(n, |_, _| rng.gen_range(d_lo..d_hi));
        let a = l_star.sub_diagonal(&(-&d_star)).unwrap();
        (a, d_star, l_star)
    }

    #[test]
    fn subspace_perturbation_obeys_the_projector_bound() {
        // With A = L* + diag(d*) and gap delta = lambda_k(L*), the top-k
        // projectors of A and L* differ by at most ||d*||_inf / (delta -
        // 2 ||d*||_inf) in spectral norm.
        for seed in 0..50 {
            let (a, d_star, l_star) =
                controlled_instance(30, &[9.0, 8.0, 7.0], 0.0, 1.0, 400 + seed);
            let p1 = eig_sym(&a).unwrap().projector_top_k(3).unwrap();
            let p_star = eig_sym(&l_star).unwrap().projector_top_k(3).unwrap();
            let lhs = norms(&p1.sub(&p_star).unwrap()).unwrap().spectral;
            let dmax = d_star.amax();
            let rhs = dmax / (7.0 - 2.0 * dmax);
            assert!(lhs <= rhs + 1e-10, "seed {seed}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn one_step_from_the_fixed_point_linearizes_to_the_transfer_matrix() {
        // d(eps) - d* after one unclamped step from d* + eps*e matches
        // eps * J e to second order: shrinking eps tenfold shrinks the
        // residual about a hundredfold.
        let (a, d_star, l_star) =
            controlled_instance(30, &[10.0, 8.0, 6.5, 5.0, 4.0], 0.5, 1.5, 77);
        let proj = Projector::from_top_k(&eig_sym(&l_star).unwrap(), 5).unwrap();
        let j = jacobian_matrix(&proj);
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let e = DVector::from_fn(30, |_, _| rng.gen_range(-1.0f64..1.0));
        let mut cfg = AltConfig::new(5, 1);
        cfg.clamp_negative_eigs = false;
        cfg.clamp_diag_nonneg = false;
        let residual = |eps: f64| -> f64 {
            let d_in = &d_star + eps * &e;
            let (_, d_out) = alt_step(&a, &d_in, &cfg).unwrap();
            let predicted = eps * (&j * &e);
            (d_out - &d_star - predicted).amax()
        };
        let r3 = residual(1e-3);
        let r4 = residual(1e-4);
        assert!(
            r3 / r4 >= 50.0,
            "residual ratio {} below quadratic decay",
            r3 / r4
        );
    }
}
