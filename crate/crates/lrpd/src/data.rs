//! Seeded synthetic instances, covariance ingestion from return series, and
//! correlation-profile clustering for block partitions.
//!
//! Generators return the planted ground truth next to the observable matrix
//! so solvers can be scored against what was actually planted.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LrpdError, Result};
use crate::linalg::{eig_sym, SymMatrix};
use crate::model::BlockPartition;

/// Which planted structure a synthetic instance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthModel {
    /// `A = G G^T + diag(d)` with iid Gaussian `G`: the fit can be exact.
    ExactLrpd,
    /// Normalized Gaussian directions with weights sliding from 3 down to 1,
    /// optionally buried in symmetric noise at a target SNR.
    DecayingSpectrum,
}

/// Recipe for one synthetic instance.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n: usize,
    pub k_true: usize,
    pub model: SynthModel,
    /// Range `[lo, hi]` for the planted diagonal entries.
    pub diag_range: (f64, f64),
    /// Signal-to-noise ratio in decibels; `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn exact_lrpd(n: usize, k_true: usize, diag_range: (f64, f64), seed: u64) -> Self {
        Self {
            n,
            k_true,
            model: SynthModel::ExactLrpd,
            diag_range,
            snr_db: None,
            seed,
        }
    }

    pub fn decaying(
        n: usize,
        k_true: usize,
        diag_range: (f64, f64),
        snr_db: Option<f64>,
        seed: u64,
    ) -> Self {
        Self {
            n,
            k_true,
            model: SynthModel::DecayingSpectrum,
            diag_range,
            snr_db,
            seed,
        }
    }

    fn validate(&self, expected: SynthModel) -> Result<()> {
        if self.model != expected {
            return Err(LrpdError::InvalidConfig(format!(
                "generator called with mismatched model {:?}",
                self.model
            )));
        }
        if self.k_true > self.n {
            return Err(LrpdError::RankOutOfRange {
                k: self.k_true,
                n: self.n,
            });
        }
        let (lo, hi) = self.diag_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(LrpdError::InvalidConfig(format!(
                "diagonal range [{lo}, {hi}] is not a valid interval"
            )));
        }
        Ok(())
    }
}

/// A generated instance together with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    /// The observable matrix (noisy when an SNR was requested).
    pub a: SymMatrix,
    /// The noiseless matrix; equals `a` when no noise was added.
    pub a0: SymMatrix,
    pub d_star: DVector<f64>,
    pub l_star: SymMatrix,
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// `A = L* + diag(d*)` with `L* = G G^T`, `G` iid standard Gaussian `n x k`,
/// and `d*_i` uniform over the configured range.
pub fn gen_exact_lrpd(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate(SynthModel::ExactLrpd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = DMatrix::from_fn(spec.n, spec.k_true, |_, _| StandardNormal.sample(&mut rng));
    let l_star = SymMatrix::gram(&g);
    let (lo, hi) = spec.diag_range;
    let d_star = DVector::from_fn(spec.n, |_, _| uniform_in(&mut rng, lo, hi));
    let a = l_star.sub_diagonal(&(-&d_star))?;
    Ok(SynthInstance {
        a0: a.clone(),
        a,
        d_star,
        l_star,
    })
}

/// Weights sliding linearly from 3 down to 1 across `k` slots.
fn decay_weights(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![3.0],
        _ => (0..k)
            .map(|i| 3.0 - 2.0 * i as f64 / (k - 1) as f64)
            .collect(),
    }
}

/// Low-rank part from normalized Gaussian directions with decaying weights,
/// plus a uniform diagonal; optionally buried in symmetric Gaussian noise
/// scaled to hit the requested SNR exactly.
pub fn gen_decaying_spectrum(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate(SynthModel::DecayingSpectrum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut u0: DMatrix<f64> =
        DMatrix::from_fn(spec.n, spec.k_true, |_, _| StandardNormal.sample(&mut rng));
    for mut col in u0.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let weights = decay_weights(spec.k_true);
    let scaled = &u0 * DMatrix::from_diagonal(&DVector::from_vec(weights));
    let l_star = SymMatrix::gram(&scaled);
    let (lo, hi) = spec.diag_range;
    let d_star = DVector::from_fn(spec.n, |_, _| uniform_in(&mut rng, lo, hi));
    let a0 = l_star.sub_diagonal(&(-&d_star))?;
    let a = match spec.snr_db {
        None => a0.clone(),
        Some(snr_db) => {
            let raw = DMatrix::from_fn(spec.n, spec.n, |_, _| StandardNormal.sample(&mut rng));
            let noise = SymMatrix::symmetrized(raw)?;
            let signal = a0.frobenius_norm();
            let noise_norm = noise.frobenius_norm();
            if noise_norm == 0.0 {
                a0.clone()
            } else {
                let alpha =
                    (signal * signal / (noise_norm * noise_norm * 10f64.powf(snr_db / 10.0)))
                        .sqrt();
                a0.add(&noise.scale(alpha))?
            }
        }
    };
    Ok(SynthInstance { a, a0, d_star, l_star })
}

/// A panel of return observations: rows are dates, columns are assets.
#[derive(Debug, Clone)]
pub struct ReturnsMatrix {
    pub labels: Vec<String>,
    /// `t_obs x n` values, one row per observation.
    pub values: DMatrix<f64>,
}

impl ReturnsMatrix {
    pub fn new(labels: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(LrpdError::DimensionMismatch {
                expected: values.ncols(),
                got: labels.len(),
            });
        }
        Ok(Self { labels, values })
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }
}

/// Loads a returns CSV: a header row of asset labels, then one row of decimal
/// returns per observation. Any missing or non-finite cell is rejected with
/// its row and column.
pub fn load_returns_csv(path: &Path) -> Result<ReturnsMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let labels: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let n = labels.len();
    let mut buf: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n {
            return Err(LrpdError::Parse {
                row: r + 1,
                col: record.len(),
                message: format!("expected {n} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| LrpdError::Parse {
                row: r + 1,
                col: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(LrpdError::NonFiniteValue {
                    row: r + 1,
                    col: c + 1,
                    context: "returns".to_string(),
                });
            }
            buf.push(value);
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(LrpdError::TooFewObservations { rows });
    }
    let values = DMatrix::from_row_slice(rows, n, &buf);
    ReturnsMatrix::new(labels, values)
}

/// Column-demeaned sample covariance `X^T X / (t - 1)`.
pub fn covariance_from_returns(returns: &ReturnsMatrix) -> Result<SymMatrix> {
    let t = returns.n_obs();
    if t < 2 {
        return Err(LrpdError::TooFewObservations { rows: t });
    }
    let mut x = returns.values.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(SymMatrix::gram(&x.transpose()).scale(1.0 / (t as f64 - 1.0)))
}

/// Eigenvalues of `A` in descending order.
pub fn spectrum_report(a: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eig_sym(a)?.values.as_slice().to_vec())
}

/// Full-rank PSD matrix with eigenvalues `ratio^0, ratio^1, ...` on a seeded
/// random orthogonal basis. A geometric tail is the standard testbed for
/// fixed-rank sketching error bounds.
pub fn gen_geometric_spectrum(n: usize, ratio: f64, seed: u64) -> Result<SymMatrix> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(LrpdError::InvalidConfig(format!(
            "spectrum ratio must be positive and finite, got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let v = g.qr().q();
    let scaled = &v
        * DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
            ratio.powi(i as i32).sqrt()
        }));
    Ok(SymMatrix::gram(&scaled))
}

/// Clusters indices by their correlation profiles (rows of the correlation
/// matrix of `A`) and returns the groups as a block partition.
///
/// Standard Lloyd iteration with distance-squared seeding; empty clusters are
/// re-seeded to the point farthest from its current center. Deterministic
/// per seed.
pub fn kmeans_partition(a: &SymMatrix, m: usize, seed: u64) -> Result<BlockPartition> {
    let (assignments, _) = kmeans_with_trace(a, m, seed)?;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &c) in assignments.iter().enumerate() {
        blocks[c].push(i);
    }
    blocks.retain(|b| !b.is_empty());
    blocks.sort_by_key(|b| b[0]);
    let partition = BlockPartition::new(blocks);
    partition.validate(a.dim())?;
    Ok(partition)
}

/// Correlation-profile feature rows for clustering.
fn correlation_features(a: &SymMatrix) -> Result<DMatrix<f64>> {
    let n = a.dim();
    let m = a.as_matrix();
    for i in 0..n {
        if m[(i, i)] <= 0.0 {
            return Err(LrpdError::NonPositiveDiagonal {
                index: i,
                value: m[(i, i)],
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        m[(i, j)] / (m[(i, i)] * m[(j, j)]).sqrt()
    }))
}

fn squared_distance(features: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for c in 0..features.ncols() {
        let d = features[(i, c)] - center[c];
        acc += d * d;
    }
    acc
}

pub(crate) fn kmeans_with_trace(
    a: &SymMatrix,
    m: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = a.dim();
    if m == 0 || m > n {
        return Err(LrpdError::InvalidConfig(format!(
            "cluster count {m} must lie in 1..={n}"
        )));
    }
    let features = correlation_features(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Distance-squared seeding.
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(m);
    centers.push(features.row(rng.gen_range(0..n)).transpose());
    while centers.len() < m {
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| squared_distance(&features, i, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(features.row(pick).transpose());
    }

    let mut assignments = vec![0usize; n];
    let mut wcss_trace = Vec::new();
    for _ in 0..100 {
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = squared_distance(&features, i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }

        // Re-seed any empty cluster to the point farthest from its center.
        loop {
            let mut counts = vec![0usize; m];
            for &c in &assignments {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let farthest = (0..n)
                .max_by(|&i, &j| {
                    let di = squared_distance(&features, i, &centers[assignments[i]]);
                    let dj = squared_distance(&features, j, &centers[assignments[j]]);
                    di.total_cmp(&dj)
                })
                .expect("n >= 1");
            assignments[farthest] = empty;
            changed = true;
        }

        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            let mut mean = DVector::zeros(features.ncols());
            for &i in &members {
                mean += features.row(i).transpose();
            }
            mean /= members.len() as f64;
            *center = mean;
        }

        let wcss: f64 = (0..n)
            .map(|i| squared_distance(&features, i, &centers[assignments[i]]))
            .sum();
        wcss_trace.push(wcss);
        if !changed {
            break;
        }
    }
    Ok((assignments, wcss_trace))
}
