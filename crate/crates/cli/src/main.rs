use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Analysis and synthesis with a bidirectional STFT-domain vocoder.
#[derive(Debug, Parser)]
#[command(name = "bivocoder", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write the feature sequence of a WAV file.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a WAV file from a feature file.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output length in samples; defaults to frames x frame shift.
        #[arg(long)]
        len: Option<usize>,
    },
    /// Extract and resynthesize a WAV file.
    Copysynth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print objective metrics of the output against the input.
        #[arg(long)]
        ref_metrics: bool,
    },
    /// Compare same-named WAV files of two directories.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        deg: PathBuf,
        /// NDJSON report destination.
        #[arg(long)]
        report: PathBuf,
    },
    /// Measure the synthesis real-time factor.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, resume } => commands::train(&config, resume.as_deref()),
        Command::Extract { ckpt, input, out } => commands::extract(&ckpt, &input, &out),
        Command::Synth { ckpt, input, out, len } => commands::synth(&ckpt, &input, &out, len),
        Command::Copysynth { ckpt, input, out, ref_metrics } => commands::copysynth(&ckpt, &input, &out, ref_metrics),
        Command::Eval { reference, deg, report } => commands::eval(&reference, &deg, &report),
        Command::Bench { ckpt, seconds, repeats } => commands::bench(&ckpt, seconds, repeats),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
