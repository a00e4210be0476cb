//! `coimg`: scan, plan, generate and verify class-balanced composite datasets.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coimg::Count;

#[derive(Parser, Debug)]
#[command(name = "coimg", version, about = "Class-balanced composite image dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inventory a directory-per-class corpus into a manifest.
    Scan(ScanArgs),
    /// Per-class image counts, shares and exact composite counts.
    Stats(StatsArgs),
    /// Compute the per-class composite plan.
    Plan(PlanArgs),
    /// Render every record of a plan.
    Generate(GenerateArgs),
    /// Check generated output against its generation manifest.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Dataset root; each immediate subdirectory is one class.
    root: PathBuf,
    /// Where to write the manifest JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Comma-separated file extensions to include.
    #[arg(long, value_delimiter = ',')]
    ext: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset manifest; scanned from the configured input root when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write the plan JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the per-class summary table.
    #[arg(long)]
    explain: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Dataset manifest the plan was built from; scanned from the plan's input root when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output root; defaults to the plan's configured output root.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Render pool size (also `COIMG_WORKERS`).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    output_root: PathBuf,
    /// Generation manifest; defaults to `<output_root>/generation.jsonl`.
    #[arg(long)]
    generation_manifest: Option<PathBuf>,
    /// Records re-rendered and digest-checked.
    #[arg(long, default_value_t = coimg::verify::DEFAULT_SPOT_CHECKS)]
    spot_checks: usize,
}

/// Config file plus per-key overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    rows: Option<u32>,
    #[arg(long)]
    cols: Option<u32>,
    #[arg(long)]
    cell_width: Option<u32>,
    #[arg(long)]
    cell_height: Option<u32>,
    /// class_based, similarity_high, similarity_low or heterogeneous_mix.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    high_fraction: Option<f64>,
    /// Allow one image to fill several slots of a composite.
    #[arg(long)]
    repetition: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rotation: Option<f64>,
    /// png, bmp or tiff.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    override_target: Option<Count>,
    #[arg(long)]
    per_class_cap: Option<Count>,
    /// Never reuse an image across composites of a class.
    #[arg(long)]
    disjoint: bool,
    #[arg(long)]
    generation_limit: Option<u64>,
    /// Plan each class to its own count rather than the common target.
    #[arg(long)]
    unbalanced: bool,
    #[arg(long)]
    similarity_cache: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(a) => commands::scan(a),
        Command::Stats(a) => commands::stats(a),
        Command::Plan(a) => commands::plan(a),
        Command::Generate(a) => commands::generate(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.report());
            ExitCode::from(failure.exit_code)
        }
    }
}
