//! `gobo`: quantize weight matrices, inspect and verify containers, and run
//! the centroid-sum kernel and tile simulator over them.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gobo::fixtures::DEFAULT_SEED;
use gobo::quant::DEFAULT_THRESHOLD;
use gobo::{Layout, Method};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 verification failed, 2 usage error, \
3 I/O error, 4 malformed input or container, 5 quantization error, 6 kernel or simulator error.";

#[derive(Debug, Parser)]
#[command(name = "gobo", version, about = "Outlier-aware weight quantization toolkit", after_help = EXIT_CODES)]
struct Cli {
    /// Seed for generated fixtures and activations.
    #[arg(long, global = true, env = "GOBO_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Where to write the run manifest (commands that write a file default to `<out>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantize a `.fwt` matrix into a `.gobo` container.
    Quantize {
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        bits: u8,
        /// Natural-log density below which a weight is kept as an outlier.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value = "gobo")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sequential")]
        layout: Layout,
        /// Weights per submatrix (16, 64, 256, 1024 or 4096).
        #[arg(long, default_value_t = 256)]
        sm_size: usize,
        #[arg(long, default_value_t = 64)]
        alignment: usize,
    },
    /// Check a container against the matrix it was made from.
    Verify {
        container: PathBuf,
        original: PathBuf,
        /// Random activation vectors for the kernel check.
        #[arg(long, default_value_t = 4)]
        words: usize,
    },
    /// Operation counts, throughput and cycle traces for a container.
    Bench {
        container: PathBuf,
        #[arg(long, default_value_t = 1)]
        words: usize,
        #[arg(long, value_enum, default_value_t = BenchMode::Kernel)]
        mode: BenchMode,
        /// Tiles on the chip (`--mode chip`); pairs are formed for 4-bit layers.
        #[arg(long, default_value_t = 8)]
        tiles: usize,
        /// Column-group width for the tile dataflow; 0 runs all columns as one group.
        #[arg(long, default_value_t = 16)]
        group_cols: usize,
    },
    /// Compression ratio across submatrix sizes.
    SweepSm {
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        bits: u8,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value = "gobo")]
        method: Method,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024,4096")]
        sm_sizes: Vec<usize>,
    },
    /// Print a container's header and per-submatrix outlier counts.
    Dump { container: PathBuf },
    /// Write a seeded Gaussian matrix with planted outliers as `.fwt`.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 768)]
        rows: usize,
        #[arg(long, default_value_t = 768)]
        cols: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f32,
        /// Natural samples are redrawn beyond this many standard deviations.
        #[arg(long, default_value_t = 3.0)]
        truncate: f64,
        /// Planted outliers (0.1% of the default shape).
        #[arg(long, default_value_t = 590)]
        outliers: usize,
        #[arg(long, default_value_t = 0.3)]
        outlier_min: f32,
        #[arg(long, default_value_t = 0.6)]
        outlier_max: f32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    Kernel,
    Tile,
    Chip,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
