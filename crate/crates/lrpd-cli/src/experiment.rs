//! `lrpd experiment`: reproduce the named experiment suites as tidy CSV,
//! one row per (curve, iteration) plus per-curve trace files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::manifest::{self, RunManifest};
use crate::{input_err, out, solver_err, streams, CliError, CliResult};
use lrpd::{
    alt_fit, alt_fit_block, contraction_precheck, contraction_recursion, covariance_from_returns,
    derive_seed, eig_sym, gd_nll_fit, gen_decaying_spectrum, gen_exact_lrpd, kmeans_partition,
    load_returns_csv, mm_fit, stochastic_alt_fit_dense, truncate_top_k, AltConfig,
    BlockPartition, ConvergenceTrace, GdConfig, GdInit, SketchConfig, StochasticOptions,
    SymMatrix, SynthSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    /// Exact recovery at n=150 rank 5 plus the error-bound overlay.
    RecoveryBound,
    /// Alternating versus majorization on a decaying-spectrum instance.
    MmCompare,
    /// The same comparison across 20, 60, and 120 dB noise levels.
    SnrSweep,
    /// Sketched versus dense solver at n=200 rank 5, 30 matvecs per step.
    SketchParity,
    /// Sketched versus dense solver at n=150 rank 8, 30 matvecs per step.
    #[value(name = "sketch-rank8")]
    SketchRank8,
    /// Rank sweep of block-diagonal variants on a returns covariance.
    ReturnsBlocks,
    /// Alternating versus gradient descent from both initializations.
    GdCompare,
}

impl ExperimentName {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::RecoveryBound => "recovery-bound",
            ExperimentName::MmCompare => "mm-compare",
            ExperimentName::SnrSweep => "snr-sweep",
            ExperimentName::SketchParity => "sketch-parity",
            ExperimentName::SketchRank8 => "sketch-rank8",
            ExperimentName::ReturnsBlocks => "returns-blocks",
            ExperimentName::GdCompare => "gd-compare",
        }
    }

    fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "recovery-bound" => Ok(ExperimentName::RecoveryBound),
            "mm-compare" => Ok(ExperimentName::MmCompare),
            "snr-sweep" => Ok(ExperimentName::SnrSweep),
            "sketch-parity" => Ok(ExperimentName::SketchParity),
            "sketch-rank8" => Ok(ExperimentName::SketchRank8),
            "returns-blocks" => Ok(ExperimentName::ReturnsBlocks),
            "gd-compare" => Ok(ExperimentName::GdCompare),
            other => Err(CliError::Input(format!(
                "unknown experiment '{other}'; valid names: recovery-bound, mm-compare, snr-sweep, sketch-parity, \
                 sketch-rank8, returns-blocks, gd-compare"
            ))),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Which experiment to reproduce.
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Root seed split across instances and randomized solvers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Returns CSV, one named series per column (returns-blocks).
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Cluster count for the clustered partition (returns-blocks).
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    /// Largest rank in the sweep (returns-blocks).
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    /// Iterations per fit where the recipe leaves it free.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step size for the gradient curves (gd-compare).
    #[arg(long, default_value_t = 1e-2)]
    pub eta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &ExperimentArgs) -> CliResult {
    let dir = out::resolve_out_dir(args.out.clone());
    match args.name {
        ExperimentName::RecoveryBound => recovery_bound(args, &dir),
        ExperimentName::MmCompare => mm_compare(args, &dir),
        ExperimentName::SnrSweep => snr_sweep(args, &dir),
        ExperimentName::SketchParity => sketch_parity(args, &dir),
        ExperimentName::SketchRank8 => sketch_rank8(args, &dir),
        ExperimentName::ReturnsBlocks => returns_blocks(args, &dir),
        ExperimentName::GdCompare => gd_compare(args, &dir),
    }
}

fn recovery_bound(args: &ExperimentArgs, dir: &Path) -> CliResult {
    let inst =
        gen_exact_lrpd(&SynthSpec::exact_lrpd(150, 5, (0.0, 10.0), args.seed)).map_err(solver_err)?;
    let iters = 20;
    let fitted = alt_fit(&inst.a, &AltConfig::new(5, iters), None).map_err(solver_err)?;

    // Overlay in the normalized frame the bound lives in: rescale so the
    // gap-minus-diagonal margin is 2, rerun against the planted diagonal,
    // and tabulate the recursion next to the measured sup error.
    let pre = contraction_precheck(&inst.l_star, &inst.d_star, 5).map_err(solver_err)?;
    let margin = pre.delta - 2.0 * pre.norm_d_star;
    if margin <= 0.0 {
        return Err(CliError::Solver(format!(
            "generated instance violates the gap condition: delta - 2 ||d*|| = {margin}"
        )));
    }
    let alpha = 2.0 / margin;
    let a_scaled = inst.a.scale(alpha);
    let d_scaled = &inst.d_star * alpha;
    let mut cfg = AltConfig::new(5, iters);
    cfg.clamp_negative_eigs = false;
    cfg.clamp_diag_nonneg = false;
    let scaled_run = alt_fit(&a_scaled, &cfg, Some(&d_scaled)).map_err(solver_err)?;
    let bounds =
        contraction_recursion(alpha * pre.delta, d_scaled.amax(), iters).map_err(solver_err)?;

    let mut overlay = String::from("iter,measured_delta,bound_delta\n");
    overlay.push_str(&format!("0,{},{}\n", d_scaled.amax(), bounds[0]));
    for rec in &scaled_run.trace.records {
        let measured = rec.diag_error_sup.expect("reference diagonal was supplied");
        overlay.push_str(&format!("{},{},{}\n", rec.iter, measured, bounds[rec.iter]));
    }
    out::write_atomic(dir, "overlay.csv", &overlay).map_err(input_err)?;

    write_iteration_curves(dir, &[("alt".to_string(), fitted.trace)])?;
    finish(args, dir, Some(manifest::digest_matrices(&[&inst.a])))
}

fn mm_compare(args: &ExperimentArgs, dir: &Path) -> CliResult {
    let spec = SynthSpec::decaying(200, 20, (0.2, 1.2), Some(120.0), args.seed);
    let inst = gen_decaying_spectrum(&spec).map_err(solver_err)?;
    let iters = args.iters.unwrap_or(30);
    let alt = alt_fit(&inst.a, &AltConfig::new(20, iters), None).map_err(solver_err)?;
    let mm = mm_fit(&inst.a, &lrpd::MmConfig::new(20, iters), None).map_err(solver_err)?;
    write_iteration_curves(
        dir,
        &[("alt".to_string(), alt.trace), ("mm".to_string(), mm.trace)],
    )?;
    finish(args, dir, Some(manifest::digest_matrices(&[&inst.a])))
}

fn snr_sweep(args: &ExperimentArgs, dir: &Path) -> CliResult {
    let iters = args.iters.unwrap_or(30);
    let mut curves = Vec::new();
    let mut instances = Vec::new();
    for (i, snr) in [20.0, 60.0, 120.0].into_iter().enumerate() {
        let seed = derive_seed(args.seed, streams::INSTANCE + i as u64);
        let spec = SynthSpec::decaying(200, 20, (0.2, 1.2), Some(snr), seed);
        let inst = gen_decaying_spectrum(&spec).map_err(solver_err)?;
        let alt = alt_fit(&inst.a, &AltConfig::new(20, iters), None).map_err(solver_err)?;
        let mm = mm_fit(&inst.a, &lrpd::MmConfig::new(20, iters), None).map_err(solver_err)?;
        curves.push((format!("alt-{}db", snr as i64), alt.trace));
        curves.push((format!("mm-{}db", snr as i64), mm.trace));
        instances.push(inst.a);
    }
    write_iteration_curves(dir, &curves)?;
    let refs: Vec<&SymMatrix> = instances.iter().collect();
    finish(args, dir, Some(manifest::digest_matrices(&refs)))
}

fn sketch_parity(args: &ExperimentArgs, dir: &Path) -> CliResult {
    sketched_versus_dense(args, dir, 200, 5, 30, args.iters.unwrap_or(30))
}

fn sketch_rank8(args: &ExperimentArgs, dir: &Path) -> CliResult {
    sketched_versus_dense(args, dir, 150, 8, 30, args.iters.unwrap_or(40))
}

fn sketched_versus_dense(
    args: &ExperimentArgs,
    dir: &Path,
    n: usize,
    rank: usize,
    budget: usize,
    iters: usize,
) -> CliResult {
    let inst =
        gen_exact_lrpd(&SynthSpec::exact_lrpd(n, rank, (0.0, 1.0), args.seed)).map_err(solver_err)?;
    let det = alt_fit(&inst.a, &AltConfig::new(rank, iters), None).map_err(solver_err)?;
    let cfg = SketchConfig::new(rank, budget, derive_seed(args.seed, streams::SKETCH));
    let stoch = stochastic_alt_fit_dense(&inst.a, &cfg, iters, &StochasticOptions::default())
        .map_err(solver_err)?;
    write_iteration_curves(
        dir,
        &[
            ("det".to_string(), det.trace),
            ("stochastic".to_string(), stoch.trace),
        ],
    )?;
    finish(args, dir, Some(manifest::digest_matrices(&[&inst.a])))
}

fn returns_blocks(args: &ExperimentArgs, dir: &Path) -> CliResult {
    let returns_path = args.returns.as_ref().ok_or_else(|| {
        CliError::Input("experiment returns-blocks needs --returns <csv>".to_string())
    })?;
    let returns = load_returns_csv(returns_path).map_err(input_err)?;
    let cov = covariance_from_returns(&returns).map_err(input_err)?;
    let digest = manifest::digest_file(returns_path)?;
    let n = cov.dim();
    let iters = args.iters.unwrap_or(30);

    let clustered = kmeans_partition(&cov, args.clusters, derive_seed(args.seed, streams::PARTITION))
        .map_err(solver_err)?;
    let uniform = BlockPartition::uniform(n, args.clusters).map_err(input_err)?;
    out::write_atomic(dir, "partition.json", &clustered.to_json()).map_err(input_err)?;

    let eig = eig_sym(&cov).map_err(solver_err)?;
    let fro = cov.frobenius_norm();
    let mut curves: Vec<(String, Vec<(usize, f64)>)> = [
        "low-rank",
        "alt",
        "alt-block-uniform",
        "alt-block-clustered",
    ]
    .iter()
    .map(|name| (name.to_string(), Vec::new()))
    .collect();

    for rank in 1..=args.rank {
        let lr = cov
            .sub(&truncate_top_k(&eig, rank).map_err(solver_err)?)
            .map_err(solver_err)?
            .frobenius_norm()
            / fro;
        let cfg = AltConfig::new(rank, iters);
        let alt = alt_fit(&cov, &cfg, None).map_err(solver_err)?;
        let blk_u = alt_fit_block(&cov, &uniform, &cfg, None).map_err(solver_err)?;
        let blk_c = alt_fit_block(&cov, &clustered, &cfg, None).map_err(solver_err)?;
        curves[0].1.push((rank, lr));
        curves[1].1.push((rank, alt.trace.final_rel_fro_error()));
        curves[2].1.push((rank, blk_u.trace.final_rel_fro_error()));
        curves[3].1.push((rank, blk_c.trace.final_rel_fro_error()));
    }

    let mut combined = String::from("curve,rank,rel_fro_error\n");
    for (name, rows) in &curves {
        let mut single = String::from("rank,rel_fro_error\n");
        for (rank, err) in rows {
            single.push_str(&format!("{rank},{err}\n"));
            combined.push_str(&format!("{name},{rank},{err}\n"));
        }
        out::write_atomic(dir, &format!("curve_{name}.csv"), &single).map_err(input_err)?;
    }
    out::write_atomic(dir, "combined.csv", &combined).map_err(input_err)?;
    for (name, rows) in &curves {
        if let Some((_, err)) = rows.last() {
            println!("curve={name} final_rel_fro_error={err}");
        }
    }
    finish(args, dir, Some(digest))
}

fn gd_compare(args: &ExperimentArgs, dir: &Path) -> CliResult {
    let inst =
        gen_exact_lrpd(&SynthSpec::exact_lrpd(100, 5, (0.5, 2.0), args.seed)).map_err(solver_err)?;
    let iters = args.iters.unwrap_or(100);
    let alt = alt_fit(&inst.a, &AltConfig::new(5, iters), None).map_err(solver_err)?;
    let mut curves = vec![("alt".to_string(), alt.trace)];
    for (label, init) in [("gd-random", GdInit::Random), ("gd-svd", GdInit::Svd)] {
        let cfg = GdConfig {
            rank: 5,
            iters,
            eta: args.eta,
            init,
            seed: derive_seed(args.seed, streams::GD_INIT),
        };
        let run = gd_nll_fit(&inst.a, &cfg, None).map_err(solver_err)?;
        curves.push((label.to_string(), run.trace));
    }
    write_iteration_curves(dir, &curves)?;
    finish(args, dir, Some(manifest::digest_matrices(&[&inst.a])))
}

fn write_iteration_curves(dir: &Path, curves: &[(String, ConvergenceTrace)]) -> CliResult {
    let mut combined =
        String::from("curve,iter,rel_fro_error,diag_error_sup,matvec_queries,objective\n");
    for (name, trace) in curves {
        out::write_atomic(dir, &format!("curve_{name}.csv"), &trace.to_csv_string())
            .map_err(input_err)?;
        for r in &trace.records {
            let diag = r.diag_error_sup.map_or(String::new(), |d| format!("{d}"));
            combined.push_str(&format!(
                "{},{},{},{},{},{}\n",
                name, r.iter, r.rel_fro_error, diag, r.matvec_queries, r.objective
            ));
        }
    }
    out::write_atomic(dir, "combined.csv", &combined).map_err(input_err)?;
    for (name, trace) in curves {
        println!("curve={name} final_rel_fro_error={}", trace.final_rel_fro_error());
    }
    Ok(())
}

fn finish(args: &ExperimentArgs, dir: &Path, digest: Option<String>) -> CliResult {
    let m = RunManifest::new("experiment", params(args), args.seed, digest);
    out::write_atomic(dir, "manifest.json", &m.to_json()).map_err(input_err)?;
    Ok(())
}

fn params(args: &ExperimentArgs) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    p.insert("name".into(), args.name.name().to_string());
    match args.name {
        ExperimentName::ReturnsBlocks => {
            if let Some(returns) = &args.returns {
                p.insert("returns".into(), returns.display().to_string());
            }
            p.insert("clusters".into(), args.clusters.to_string());
            p.insert("rank".into(), args.rank.to_string());
            p.insert("iters".into(), args.iters.unwrap_or(30).to_string());
        }
        ExperimentName::GdCompare => {
            p.insert("eta".into(), format!("{}", args.eta));
            p.insert("iters".into(), args.iters.unwrap_or(100).to_string());
        }
        ExperimentName::MmCompare | ExperimentName::SnrSweep => {
            p.insert("iters".into(), args.iters.unwrap_or(30).to_string());
        }
        ExperimentName::SketchParity => {
            p.insert("iters".into(), args.iters.unwrap_or(30).to_string());
        }
        ExperimentName::SketchRank8 => {
            p.insert("iters".into(), args.iters.unwrap_or(40).to_string());
        }
        ExperimentName::RecoveryBound => {}
    }
    p
}

pub fn from_manifest(m: &RunManifest, out: Option<PathBuf>) -> Result<ExperimentArgs, CliError> {
    let name = ExperimentName::from_name(&m.param::<String>("name")?)?;
    Ok(ExperimentArgs {
        name,
        seed: m.seed,
        returns: m.param_opt::<String>("returns")?.map(PathBuf::from),
        clusters: m.param_opt("clusters")?.unwrap_or(5),
        rank: m.param_opt("rank")?.unwrap_or(10),
        iters: m.param_opt("iters")?,
        eta: m.param_opt("eta")?.unwrap_or(1e-2),
        out,
    })
}
