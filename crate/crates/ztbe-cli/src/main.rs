//! Operator CLI for the ZTBE codec: compress, decompress, verify, analyze,
//! gemm-check, roofline, warp-trace.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod io;

#[derive(Parser)]
#[command(name = "ztbe", version, about = "Lossless BF16 weight codec tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Raw,
    Safetensors,
    Ztbe,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a tensor file into ZTBE containers.
    Compress(CompressArgs),
    /// Expand a ZTBE container back into a raw tensor file.
    Decompress(DecompressArgs),
    /// Check that a file decodes bitwise-identically through both decoders.
    Verify(VerifyArgs),
    /// Report exponent statistics and expected storage cost for a tensor.
    Analyze(AnalyzeArgs),
    /// Run dense, fused, and decoupled multiplies and compare them bitwise.
    GemmCheck(GemmCheckArgs),
    /// Emit the compute-intensity table for a shape sweep.
    Roofline(RooflineArgs),
    /// Print the per-lane decode trace of one fragment.
    WarpTrace(WarpTraceArgs),
}

#[derive(clap::Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output container path; with multi-tensor safetensors input this is
    /// a directory.
    #[arg(long)]
    output: PathBuf,
    /// Input layout; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Select one tensor from a safetensors file.
    #[arg(long)]
    tensor: Option<String>,
    /// Worker threads for block encoding (0 = library default).
    #[arg(long, env = "ZTBE_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct DecompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long)]
    tensor: Option<String>,
    #[arg(long, env = "ZTBE_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long)]
    tensor: Option<String>,
    /// Write the full exponent histogram as CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GemmCheckArgs {
    /// Weight tensor, raw or ZTBE.
    #[arg(long)]
    weights: PathBuf,
    /// Activation tensor (raw, K x N).
    #[arg(long)]
    activations: PathBuf,
    /// Token-count threshold for the fused/decoupled dispatch decision.
    #[arg(long, default_value_t = 128)]
    threshold_n: usize,
    #[arg(long, env = "ZTBE_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct RooflineArgs {
    #[arg(long)]
    m: u64,
    #[arg(long)]
    k: u64,
    /// Comma-separated token counts.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    n_list: Vec<u64>,
    /// Compression ratio.
    #[arg(long, default_value_t = 1.51)]
    cr: f64,
    /// Peak throughput in FLOP/s; enables the attainable/speedup columns.
    #[arg(long)]
    peak_flops: Option<f64>,
    /// Memory bandwidth in bytes/s.
    #[arg(long)]
    mem_bandwidth: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct WarpTraceArgs {
    /// A ZTBE container.
    #[arg(long)]
    input: PathBuf,
    /// Block tile index (row-major).
    #[arg(long, default_value_t = 0)]
    block: usize,
    /// Tensor-core tile index within the block.
    #[arg(long, default_value_t = 0)]
    tct: usize,
    /// Fragment index within the tensor-core tile.
    #[arg(long, default_value_t = 0)]
    frag: usize,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(args) => commands::compress(args),
        Command::Decompress(args) => commands::decompress(args),
        Command::Verify(args) => commands::verify(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::GemmCheck(args) => commands::gemm_check(args),
        Command::Roofline(args) => commands::roofline(args),
        Command::WarpTrace(args) => commands::warp_trace(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
