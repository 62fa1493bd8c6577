//! Command-line front end: evaluation runs, split generation, the
//! score-ratio baseline, hyperparameter sweeps, and dataset validation.
//!
//! Exit codes: 0 success, 1 input error (files, schemas, arguments),
//! 2 numeric or evaluation error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use openset_eval::error::Error;
use openset_eval::formats::GroundTruthFormat;
use openset_eval::report::TableFormat;
use openset_eval::splits::SplitProtocol;

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "openset-eval",
    version,
    about = "Open-set object detection evaluation toolkit"
)]
struct Cli {
    /// Run-manifest path, used by `eval`
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (`eval`, `gen-splits`, `sweep`) or output file (`baseline`)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Table format for rendered results
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,

    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    /// Seed for seeded operations
    #[arg(long, global = true, default_value_t = 0, value_name = "S")]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> TableFormat {
        match f {
            FormatArg::Markdown => TableFormat::Markdown,
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Json => TableFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum GtFormatArg {
    #[default]
    Native,
    Coco,
}

impl From<GtFormatArg> for GroundTruthFormat {
    fn from(f: GtFormatArg) -> GroundTruthFormat {
        match f {
            GtFormatArg::Native => GroundTruthFormat::Native,
            GtFormatArg::Coco => GroundTruthFormat::CocoLike,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum ProtocolArg {
    /// Keep training images that contain unknown objects, strip their annotations
    #[default]
    Keep,
    /// Drop training images containing any object outside the known set
    Drop,
}

impl From<ProtocolArg> for SplitProtocol {
    fn from(p: ProtocolArg) -> SplitProtocol {
        match p {
            ProtocolArg::Keep => SplitProtocol::KeepUnknownTrainImages,
            ProtocolArg::Drop => SplitProtocol::DropUnknownTrainImages,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitMethod {
    Random,
    Ncut,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every (method, split) pair of a manifest and aggregate
    Eval {
        /// Manifest path; `--config` works too
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },

    /// Generate split-spec files from a dataset
    GenSplits {
        #[arg(long, value_enum)]
        method: SplitMethod,

        /// Number of class chunks (random) or clusters (ncut)
        #[arg(long)]
        k: usize,

        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,

        #[arg(long, value_enum, default_value_t)]
        dataset_format: GtFormatArg,

        #[arg(long, value_enum, default_value_t)]
        protocol: ProtocolArg,

        /// Random method: chunks per known set; each case rotates which
        /// chunks are known (1 = one chunk known, k-1 = one chunk unknown)
        #[arg(long, default_value_t = 1)]
        known_chunks: usize,

        /// train,val,test ratios for seeded image pools
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,

        /// JSON file with explicit {"train": [], "val": [], "test": []} pools
        #[arg(long, value_name = "PATH")]
        pools: Option<PathBuf>,
    },

    /// Relabel raw detections with the top-1/top-2 score-ratio rule
    Baseline {
        #[arg(long)]
        gamma: f64,

        #[arg(long, default_value_t = 1.0)]
        temperature: f64,

        #[arg(long = "top-m", default_value_t = 3)]
        top_m: usize,

        /// IoU threshold for cross-label NMS (off when absent)
        #[arg(long = "cross-nms", value_name = "IOU")]
        cross_nms: Option<f64>,

        /// Raw detections file
        #[arg(long, value_name = "PATH")]
        raw: PathBuf,

        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,

        #[arg(long, value_enum, default_value_t)]
        dataset_format: GtFormatArg,

        /// Split file defining the known classes
        #[arg(long, value_name = "PATH")]
        split: PathBuf,
    },

    /// Evaluate the baseline over gamma/temperature grids
    Sweep {
        /// Comma-separated gamma grid
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,

        /// Comma-separated temperature grid
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        temperatures: Vec<f64>,

        #[arg(long, value_name = "PATH")]
        raw: PathBuf,

        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,

        #[arg(long, value_enum, default_value_t)]
        dataset_format: GtFormatArg,

        #[arg(long, value_name = "PATH")]
        split: PathBuf,

        #[arg(long, value_enum, default_value_t)]
        protocol: ProtocolArg,
    },

    /// Check a dataset (and optionally a split) and print diagnostics
    Validate {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,

        #[arg(long, value_enum, default_value_t)]
        dataset_format: GtFormatArg,

        #[arg(long, value_name = "PATH")]
        split: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t)]
        protocol: ProtocolArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }

    match cli.command {
        Command::Eval { manifest } => {
            let path = manifest.or(cli.config).ok_or_else(|| {
                Error::Config("eval needs a manifest: pass --manifest or --config".into())
            })?;
            commands::eval(&path, cli.out.as_deref(), cli.format.into())
        }
        Command::GenSplits {
            method,
            k,
            dataset,
            dataset_format,
            protocol,
            known_chunks,
            ratios,
            pools,
        } => commands::gen_splits(commands::GenSplitsArgs {
            method,
            k,
            dataset,
            dataset_format: dataset_format.into(),
            protocol: protocol.into(),
            known_chunks,
            ratios,
            pools,
            seed: cli.seed,
            out_dir: cli.out.unwrap_or_else(|| PathBuf::from(".")),
        }),
        Command::Baseline {
            gamma,
            temperature,
            top_m,
            cross_nms,
            raw,
            dataset,
            dataset_format,
            split,
        } => {
            let out = cli.out.ok_or_else(|| {
                Error::Config("baseline needs --out for the labeled detections file".into())
            })?;
            commands::baseline(commands::BaselineArgs {
                gamma,
                temperature,
                top_m,
                cross_nms,
                raw,
                dataset,
                dataset_format: dataset_format.into(),
                split,
                out,
            })
        }
        Command::Sweep {
            gammas,
            temperatures,
            raw,
            dataset,
            dataset_format,
            split,
            protocol,
        } => commands::sweep(commands::SweepArgs {
            gammas,
            temperatures,
            raw,
            dataset,
            dataset_format: dataset_format.into(),
            split,
            protocol: protocol.into(),
            out_dir: cli.out,
            format: cli.format.into(),
        }),
        Command::Validate {
            dataset,
            dataset_format,
            split,
            protocol,
        } => commands::validate(
            &dataset,
            dataset_format.into(),
            split.as_deref(),
            protocol.into(),
        ),
    }
}

pub(crate) use SplitMethod as Method;
