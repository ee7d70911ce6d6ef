mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use secdiff_core::Error;

/// Secure diffusion sampling among three replicated-sharing parties.
#[derive(Parser)]
#[command(name = "secdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitFunction {
    Exp,
    Silu,
    Mish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Plain,
    MpcLocal,
    MpcTcp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlainFlavor {
    Approx,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Refit polynomial coefficients and report the error against the exact function.
    Fit {
        #[arg(long, value_enum)]
        function: FitFunction,
        /// `lo,hi`; without it exp uses `[t_exp, 0]` and silu/mish refit both pieces.
        #[arg(long, allow_hyphen_values = true)]
        interval: Option<String>,
        #[arg(long)]
        degree: Option<usize>,
        /// Restrict to even powers plus the linear term.
        #[arg(long)]
        even: bool,
        #[arg(long, default_value_t = -14.0, allow_hyphen_values = true)]
        t_exp: f64,
        #[arg(long, default_value_t = secdiff_core::fit::FIT_POINTS)]
        points: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample one image and write it as PGM plus a raw f32 dump.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = SampleMode::Plain)]
        mode: SampleMode,
        /// Nonlinearities of the plain mode.
        #[arg(long, value_enum, default_value_t = PlainFlavor::Approx)]
        flavor: PlainFlavor,
        #[arg(long)]
        output: PathBuf,
        /// Raw dump path; defaults to the output with a `.f32` extension.
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Emit the cost report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one party daemon until the client's job completes.
    Party {
        #[arg(long)]
        id: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Measure bytes, rounds and time of protocols under in-process parties.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated labels, or `all`.
        #[arg(long)]
        protocol: String,
        /// Comma-separated vector sizes.
        #[arg(long, value_delimiter = ',', default_value = "64")]
        size: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        json: bool,
    },
    /// Grid error of an approximation against the exact function.
    Accuracy {
        #[arg(long)]
        activation: String,
        #[arg(long, default_value_t = 100_001)]
        grid: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write seeded random denoiser weights.
    GenParams {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 28)]
        width: usize,
        #[arg(long, default_value_t = 28)]
        height: usize,
        /// Write all-zero weights instead.
        #[arg(long)]
        zero: bool,
    },
}

/// Process exit code for a failure.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Argument(_) | Error::Config(_) | Error::Range { .. } | Error::Shape(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Handshake { .. } | Error::ConnectTimeout { .. } => 4,
        Error::Checksum { .. } => 6,
        Error::Transport(_) | Error::Integrity(_) | Error::Abort { .. } | Error::Step { .. } => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            function,
            interval,
            degree,
            even,
            t_exp,
            points,
            output,
        } => commands::fit(
            function,
            interval.as_deref(),
            degree,
            even,
            t_exp,
            points,
            output.as_deref(),
        ),
        Command::Sample {
            config,
            mode,
            flavor,
            output,
            raw,
            json,
        } => commands::sample(&config, mode, flavor, &output, raw.as_deref(), json),
        Command::Party { id, config, json } => commands::party(id, &config, json),
        Command::Bench {
            config,
            protocol,
            size,
            trials,
            json,
        } => commands::bench(config.as_deref(), &protocol, &size, trials, json),
        Command::Accuracy {
            activation,
            grid,
            config,
        } => commands::accuracy(&activation, grid, config.as_deref()),
        Command::GenParams {
            output,
            seed,
            width,
            height,
            zero,
        } => commands::gen_params(&output, seed, width, height, zero),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
