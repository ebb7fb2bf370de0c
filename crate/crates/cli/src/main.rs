use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(
    name = "srkit",
    version,
    about = "Cascading residual super-resolution networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Architecture selection shared by `analyze` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// baseline, carn-nl, carn-ng, carn, carn-m or custom.
    #[arg(long, default_value = "carn")]
    pub variant: String,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Comma-separated upsample heads.
    #[arg(long)]
    pub scales: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recursion {
    Yes,
    No,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parameter and Mult-Adds report, computed without running the network.
    Analyze {
        #[command(flatten)]
        spec: SpecArgs,
        /// Output resolution, WIDTHxHEIGHT.
        #[arg(long, default_value = "1280x720")]
        hr: String,
        #[arg(long, default_value_t = 4)]
        scale: u32,
        /// Per-layer CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group-size and recursion sweep over residual-E networks.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        groups: Vec<usize>,
        #[arg(long, value_enum, default_value = "both")]
        recursive: Recursion,
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long, default_value = "1280x720")]
        hr: String,
        #[arg(long, default_value_t = 4)]
        scale: u32,
        /// Also train every point with this run config and report PSNR.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train from a key=value config file.
    Train {
        config: PathBuf,
        /// Override a config entry, `key=value`; may repeat.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue the run saved in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Upscale one PNG with a trained checkpoint.
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scale: u32,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// PSNR/SSIM over a directory of HR PNGs, with a bicubic reference.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scale: u32,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze {
            spec,
            hr,
            scale,
            out,
        } => commands::analyze(&spec, &hr, scale, out.as_deref()),
        Command::Sweep {
            groups,
            recursive,
            channels,
            hr,
            scale,
            train,
            out,
        } => commands::sweep(
            &groups,
            recursive,
            channels,
            &hr,
            scale,
            train.as_deref(),
            out.as_deref(),
        ),
        Command::Train {
            config,
            overrides,
            out,
            resume,
        } => commands::train(&config, &overrides, out, resume),
        Command::Upscale {
            input,
            out,
            scale,
            ckpt,
        } => commands::upscale(&input, &out, scale, &ckpt),
        Command::Eval {
            dataset,
            scale,
            ckpt,
            out,
        } => commands::eval(&dataset, scale, ckpt.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
