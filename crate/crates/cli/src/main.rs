//! `geoguide` command-line front end.

mod artifacts;
mod cmd;
mod exit;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exit::{CliResult, Code, Failure};
use run::Overrides;

#[derive(Parser, Debug)]
#[command(name = "geoguide", version, about = "Geometry-derived guidance artifacts for mesh-to-video pipelines")]
struct Cli {
    /// Overrides the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file deep-merged over the manifest before validation.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Edges, depth, object ids, flows and occlusion masks for every frame.
    Preprocess { manifest: PathBuf },
    /// Warped noise from the preprocessed flows, plus its latent downsample.
    WarpNoise {
        manifest: PathBuf,
        /// Skip the full-resolution container.
        #[arg(long)]
        latent_only: bool,
    },
    /// Guided sampling between the first two anchors with an oracle denoiser.
    SagDemo { manifest: PathBuf },
    /// Conditioning volumes and the stacked model input.
    Assemble {
        manifest: PathBuf,
        /// Also write a training sample with depth-derived edges.
        #[arg(long)]
        training: bool,
    },
    /// Masked PSNR/SSIM of generated frames against warped anchors.
    Eval {
        manifest: PathBuf,
        /// Directory holding frame_%05d.png.
        #[arg(long)]
        frames: PathBuf,
        /// Directory holding estimated depth_%05d.ggt for PSNR-D.
        #[arg(long)]
        depth: Option<PathBuf>,
    },
    /// Prints a container header or image size.
    Inspect {
        path: PathBuf,
        /// Adds value statistics for containers.
        #[arg(long)]
        stats: bool,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("GEOGUIDE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::msg(Code::Config, format!("GEOGUIDE_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(Code::Config, e))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let o = Overrides {
        seed: cli.seed,
        config: cli.config,
    };
    match cli.command {
        Command::Preprocess { manifest } => cmd::preprocess::run(&manifest, &o),
        Command::WarpNoise { manifest, latent_only } => cmd::warp::run(&manifest, &o, latent_only),
        Command::SagDemo { manifest } => cmd::sag::run(&manifest, &o),
        Command::Assemble { manifest, training } => cmd::assemble::run(&manifest, &o, training),
        Command::Eval { manifest, frames, depth } => cmd::eval::run(&manifest, &o, &frames, depth.as_deref()),
        Command::Inspect { path, stats } => cmd::inspect::run(&path, stats),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Code::Config as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
