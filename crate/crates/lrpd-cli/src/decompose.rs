//! `lrpd decompose`: fit one model to a matrix read from CSV and write the
//! model, the convergence trace, and the run manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use crate::manifest::{self, RunManifest};
use crate::{input_err, out, solver_err, streams, CliError, CliResult};
use lrpd::{
    alt_fit, alt_fit_block, derive_seed, gd_nll_fit, kmeans_partition, load_matrix_csv, mm_fit,
    naive_decompose, reconstruct, rel_fro_error, stochastic_alt_fit_dense, AltConfig,
    BlockPartition, ConvergenceTrace, DiagMode, DiagonalPart, GdConfig, GdInit, LrpdModel,
    MmConfig, SketchConfig, StochasticOptions, SymMatrix, TraceRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Alternating spectral truncation and diagonal refit.
    Alt,
    /// Alternating fit with a block-diagonal instead of a plain diagonal.
    AltBlock,
    /// Sketch-based fit driven by counted matrix-vector products.
    Stochastic,
    /// One-shot spectral split, no refinement.
    Naive,
    /// Majorization-minimization baseline.
    Mm,
    /// Likelihood gradient-descent baseline.
    Gd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Alt => "alt",
            Method::AltBlock => "alt-block",
            Method::Stochastic => "stochastic",
            Method::Naive => "naive",
            Method::Mm => "mm",
            Method::Gd => "gd",
        }
    }

    fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "alt" => Ok(Method::Alt),
            "alt-block" => Ok(Method::AltBlock),
            "stochastic" => Ok(Method::Stochastic),
            "naive" => Ok(Method::Naive),
            "mm" => Ok(Method::Mm),
            "gd" => Ok(Method::Gd),
            other => Err(CliError::Input(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagModeArg {
    /// Read the diagonal of the input once, exactly.
    Exact,
    /// Re-estimate the residual diagonal from probes each iteration.
    Diagpp,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Dense symmetric matrix, headerless CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Rank of the low-rank factor.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Early-stop threshold on the relative error; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Matrix-vector products per iteration (stochastic).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Root seed split across all randomized stages.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step size (gd).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Factor initialization (gd).
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Number of correlation k-means clusters for the partition (alt-block).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Explicit block partition JSON (alt-block); wins over --clusters.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Diagonal handling in the stochastic solver.
    #[arg(long, value_enum, default_value_t = DiagModeArg::Exact)]
    pub diag_mode: DiagModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &DecomposeArgs) -> CliResult {
    let dir = out::resolve_out_dir(args.out.clone());
    let a = load_matrix_csv(&args.input).map_err(input_err)?;
    let digest = manifest::digest_file(&args.input)?;

    let (model, trace, extra_lines) = fit(args, &a)?;

    let n = model.dim();
    let k = model.rank();
    out::write_atomic(
        &dir,
        "factor.csv",
        &out::matrix_csv(n, k, |i, j| model.factor[(i, j)]),
    )
    .map_err(input_err)?;
    let d = model.diag_vector();
    out::write_atomic(&dir, "diag.csv", &out::vector_csv(n, |i| d[i])).map_err(input_err)?;
    if let DiagonalPart::Blocks { partition, blocks } = &model.diagonal {
        out::write_atomic(&dir, "partition.json", &partition.to_json()).map_err(input_err)?;
        let raw: Vec<Vec<Vec<f64>>> = blocks
            .iter()
            .map(|b| {
                let m = b.as_matrix();
                (0..b.dim())
                    .map(|i| (0..b.dim()).map(|j| m[(i, j)]).collect())
                    .collect()
            })
            .collect();
        let mut json = serde_json::to_string_pretty(&raw).expect("blocks serialize");
        json.push('\n');
        out::write_atomic(&dir, "blocks.json", &json).map_err(input_err)?;
    }
    out::write_atomic(&dir, "trace.csv", &trace.to_csv_string()).map_err(input_err)?;
    out::write_atomic(&dir, "trace.json", &trace.to_json_string()).map_err(input_err)?;

    let m = RunManifest::new("decompose", params(args), args.seed, Some(digest));
    out::write_atomic(&dir, "manifest.json", &m.to_json()).map_err(input_err)?;

    for line in extra_lines {
        println!("{line}");
    }
    println!("final_rel_fro_error={}", trace.final_rel_fro_error());
    Ok(())
}

fn fit(
    args: &DecomposeArgs,
    a: &SymMatrix,
) -> Result<(LrpdModel, ConvergenceTrace, Vec<String>), CliError> {
    match args.method {
        Method::Alt => {
            let mut cfg = AltConfig::new(args.rank, args.iters);
            cfg.tol = args.tol;
            let fitted = alt_fit(a, &cfg, None).map_err(solver_err)?;
            Ok((fitted.model, fitted.trace, Vec::new()))
        }
        Method::AltBlock => {
            let partition = resolve_partition(args, a)?;
            let mut cfg = AltConfig::new(args.rank, args.iters);
            cfg.tol = args.tol;
            let fitted = alt_fit_block(a, &partition, &cfg, None).map_err(solver_err)?;
            Ok((fitted.model, fitted.trace, Vec::new()))
        }
        Method::Stochastic => {
            let budget = args.budget.ok_or_else(|| {
                CliError::Input("--budget is required for --method stochastic".to_string())
            })?;
            let cfg = SketchConfig::new(args.rank, budget, derive_seed(args.seed, streams::SKETCH));
            let opts = StochasticOptions {
                diag_mode: match args.diag_mode {
                    DiagModeArg::Exact => DiagMode::Exact,
                    DiagModeArg::Diagpp => DiagMode::Diagpp,
                },
                ..Default::default()
            };
            let fitted =
                stochastic_alt_fit_dense(a, &cfg, args.iters, &opts).map_err(solver_err)?;
            Ok((fitted.model, fitted.trace, Vec::new()))
        }
        Method::Naive => {
            let result = naive_decompose(a, args.rank).map_err(solver_err)?;
            let rel = rel_fro_error(&result.model, a).map_err(solver_err)?;
            let residual_fro = a
                .sub(&reconstruct(&result.model))
                .map_err(solver_err)?
                .frobenius_norm();
            let mut trace = ConvergenceTrace::default();
            trace.push(TraceRecord {
                iter: 1,
                rel_fro_error: rel,
                diag_error_sup: None,
                matvec_queries: 0,
                objective: residual_fro * residual_fro,
            });
            let extra = vec![format!("residual_spectral_norm={}", result.residual_spectral)];
            Ok((result.model, trace, extra))
        }
        Method::Mm => {
            let cfg = MmConfig::new(args.rank, args.iters);
            let fitted = mm_fit(a, &cfg, None).map_err(solver_err)?;
            Ok((fitted.model, fitted.trace, Vec::new()))
        }
        Method::Gd => {
            let eta = args.eta.ok_or_else(|| {
                CliError::Input("--eta is required for --method gd".to_string())
            })?;
            let cfg = GdConfig {
                rank: args.rank,
                iters: args.iters,
                eta,
                init: match args.init {
                    InitArg::Random => GdInit::Random,
                    InitArg::Svd => GdInit::Svd,
                },
                seed: derive_seed(args.seed, streams::GD_INIT),
            };
            let fitted = gd_nll_fit(a, &cfg, None).map_err(solver_err)?;
            Ok((fitted.model, fitted.trace, Vec::new()))
        }
    }
}

fn resolve_partition(args: &DecomposeArgs, a: &SymMatrix) -> Result<BlockPartition, CliError> {
    if let Some(path) = &args.partition {
        let text = std::fs::read_to_string(path).map_err(input_err)?;
        let partition = BlockPartition::from_json(&text).map_err(input_err)?;
        partition.validate(a.dim()).map_err(input_err)?;
        return Ok(partition);
    }
    if let Some(clusters) = args.clusters {
        return kmeans_partition(a, clusters, derive_seed(args.seed, streams::PARTITION))
            .map_err(input_err);
    }
    Err(CliError::Input(
        "--method alt-block needs --partition <json> or --clusters <m>".to_string(),
    ))
}

fn params(args: &DecomposeArgs) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    p.insert("input".into(), args.input.display().to_string());
    p.insert("method".into(), args.method.name().to_string());
    p.insert("rank".into(), args.rank.to_string());
    p.insert("iters".into(), args.iters.to_string());
    p.insert("tol".into(), format!("{}", args.tol));
    match args.method {
        Method::Stochastic => {
            if let Some(b) = args.budget {
                p.insert("budget".into(), b.to_string());
            }
            let mode = match args.diag_mode {
                DiagModeArg::Exact => "exact",
                DiagModeArg::Diagpp => "diagpp",
            };
            p.insert("diag-mode".into(), mode.to_string());
        }
        Method::Gd => {
            if let Some(eta) = args.eta {
                p.insert("eta".into(), format!("{eta}"));
            }
            let init = match args.init {
                InitArg::Random => "random",
                InitArg::Svd => "svd",
            };
            p.insert("init".into(), init.to_string());
        }
        Method::AltBlock => {
            if let Some(path) = &args.partition {
                p.insert("partition".into(), path.display().to_string());
            } else if let Some(c) = args.clusters {
                p.insert("clusters".into(), c.to_string());
            }
        }
        Method::Alt | Method::Naive | Method::Mm => {}
    }
    p
}

pub fn from_manifest(m: &RunManifest, out: Option<PathBuf>) -> Result<DecomposeArgs, CliError> {
    let method = Method::from_name(&m.param::<String>("method")?)?;
    let init = match m.param_opt::<String>("init")?.as_deref() {
        Some("svd") => InitArg::Svd,
        _ => InitArg::Random,
    };
    let diag_mode = match m.param_opt::<String>("diag-mode")?.as_deref() {
        Some("diagpp") => DiagModeArg::Diagpp,
        _ => DiagModeArg::Exact,
    };
    Ok(DecomposeArgs {
        input: PathBuf::from(m.param::<String>("input")?),
        method,
        rank: m.param("rank")?,
        iters: m.param("iters")?,
        tol: m.param("tol")?,
        budget: m.param_opt("budget")?,
        seed: m.seed,
        eta: m.param_opt("eta")?,
        init,
        clusters: m.param_opt("clusters")?,
        partition: m.param_opt::<String>("partition")?.map(PathBuf::from),
        diag_mode,
        out,
    })
}
