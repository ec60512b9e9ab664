//! `lrpd rerun`: replay a recorded run from its manifest. Parameters and
//! seed come from the manifest; only the output directory is fresh.

use std::path::PathBuf;

use clap::Args;

use crate::manifest::RunManifest;
use crate::{decompose, experiment, theory_cmd, CliError, CliResult};

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &RerunArgs) -> CliResult {
    let m = RunManifest::load(&args.manifest)?;
    match m.command.as_str() {
        "decompose" => decompose::run(&decompose::from_manifest(&m, args.out.clone())?),
        "experiment" => experiment::run(&experiment::from_manifest(&m, args.out.clone())?),
        "theory" => theory_cmd::run(&theory_cmd::from_manifest(&m, args.out.clone())?),
        other => Err(CliError::Input(format!(
            "manifest command '{other}' is not replayable; expected decompose, experiment, or theory"
        ))),
    }
}
