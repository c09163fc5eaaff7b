//! `blobshare`: analyze observed blob traces and replay them under blob sharing.

use std::path::PathBuf;
use std::process::ExitCode;

use blobshare::config::{ConfigLayer, RunConfig};
use blobshare::pipeline::{self, PipelineError};
use blobshare::synth::{self, SynthError};
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "blobshare", version, about = "EIP-4844 blob-sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-rollup blob usage (table1.csv) and the real fee series.
    Analyze(RunArgs),
    /// Shared-blob simulation against the real baseline (table2.csv).
    Simulate(RunArgs),
    /// Real against simulated fee series and 100k-block buckets.
    Fees(RunArgs),
    /// Print the stripped size of a raw 131072-byte blob (binary or 0x hex).
    Strip { path: PathBuf },
    /// Generate a synthetic input triplet from a JSON spec.
    Synth {
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

/// Flags mirror the config file keys; a flag beats the file.
#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    start_block: Option<u64>,
    #[arg(long)]
    end_block: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    submissions: Option<PathBuf>,
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    include_flush: Option<bool>,
    #[arg(long)]
    event_log: Option<bool>,
    #[arg(long)]
    min_blob_base_fee: Option<u128>,
    #[arg(long)]
    update_fraction: Option<u64>,
    #[arg(long)]
    gas_per_blob: Option<u64>,
    #[arg(long)]
    target_blob_gas: Option<u64>,
    #[arg(long)]
    max_blobs_per_block: Option<u8>,
    #[arg(long)]
    da_tx_gas: Option<u64>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, PipelineError> {
        let overrides = ConfigLayer {
            start_block: self.start_block,
            end_block: self.end_block,
            submissions: self.submissions,
            blocks: self.blocks,
            prices: self.prices,
            out_dir: self.out_dir,
            include_flush: self.include_flush,
            event_log: self.event_log,
            min_blob_base_fee: self.min_blob_base_fee,
            update_fraction: self.update_fraction,
            gas_per_blob: self.gas_per_blob,
            target_blob_gas: self.target_blob_gas,
            max_blobs_per_block: self.max_blobs_per_block,
            da_tx_gas: self.da_tx_gas,
        };
        Ok(RunConfig::from_sources(self.config.as_deref(), overrides)?)
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run_pipeline(
    args: RunArgs,
    cmd: fn(&RunConfig) -> Result<Vec<PathBuf>, PipelineError>,
) -> Result<(), PipelineError> {
    let cfg = args.resolve()?;
    print_paths(&cmd(&cfg)?);
    Ok(())
}

fn fail(message: impl std::fmt::Display, io: bool) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(if io { EXIT_IO } else { EXIT_VALIDATION })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => run_pipeline(args, pipeline::cmd_analyze),
        Command::Simulate(args) => run_pipeline(args, pipeline::cmd_simulate),
        Command::Fees(args) => run_pipeline(args, pipeline::cmd_fees),
        Command::Strip { path } => pipeline::cmd_strip(&path).map(|size| println!("{size}")),
        Command::Synth { spec, out_dir } => {
            return match synth::cmd_synth(&spec, &out_dir) {
                Ok(paths) => {
                    print_paths(&paths);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, SynthError::is_io(&e)),
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, e.is_io()),
    }
}
