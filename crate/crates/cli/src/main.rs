//! `hgtomo`: run a detector tomography pipeline from a TOML config.
//!
//! Exit codes: 0 on success (also when the solver did not converge, see
//! `converged` in the report), 2 for invalid configuration, 3 for I/O
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hgtomo::hologram::Modulation;
use hgtomo::pipeline::{run, RunConfig, Source};
use hgtomo::tomography::Normalization;
use hgtomo::Error;

#[derive(Parser, Debug)]
#[command(
    name = "hgtomo",
    version,
    about = "Holographic HG mode detector tomography"
)]
struct Args {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "hgtomo-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// phase | exact
    #[arg(long)]
    modulation: Option<String>,
    /// simulate | ideal | file:<path>
    #[arg(long)]
    source: Option<String>,
    /// raw | per-mode | per-probe
    #[arg(long)]
    normalize: Option<String>,
    /// Also write the hologram of each detector mode as PGM.
    #[arg(long)]
    export_masks: bool,
}

fn build_config(args: &Args) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = &args.modulation {
        cfg.scan.modulation = m.parse::<Modulation>()?;
    }
    if let Some(s) = &args.source {
        cfg.source = s.parse::<Source>()?;
    }
    if let Some(n) = &args.normalize {
        cfg.normalize = n.parse::<Normalization>()?;
    }
    if args.export_masks {
        cfg.export_masks = true;
    }
    cfg.output = Some(args.out.clone());
    Ok(cfg)
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = build_config(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            println!(
                "similarity {:.4}  R²(rec) {}  R²(theory) {}  residual {:.3e}  converged {}",
                report.similarity_to_ideal,
                fmt_opt(report.r2_reconstructed),
                fmt_opt(report.r2_theory),
                report.residual,
                report.converged
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}
