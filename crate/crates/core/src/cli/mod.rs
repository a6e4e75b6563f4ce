//! Command-line front end.
//!
//! Settings resolve as: command-line flag, then the `--config` file, then
//! the built-in default. The output directory additionally falls back to
//! `$DOCSYNTH_OUT` before its default.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant or
//! self-check failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigFile;

pub const OUT_ENV: &str = "DOCSYNTH_OUT";
pub const DEFAULT_OUT: &str = "docsynth-out";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Check(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<docsynth::Error> for CliError {
    fn from(e: docsynth::Error) -> Self {
        match e {
            docsynth::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "docsynth", version, about = "Deterministic document-layout synthesis")]
#[command(after_help = "Settings files hold `key = value` lines (see README for the keys). \
Flags override the file; the file overrides defaults.\n\
Exit codes: 0 ok, 1 usage, 2 data, 3 invariant/self-check failure.")]
pub struct Cli {
    /// Settings file with `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build an element pool from a COCO manifest or the procedural generator.
    Pool(PoolArgs),
    /// Generate layouts (and optionally page images and COCO annotations).
    Synth(SynthArgs),
    /// Render page images for existing layouts.
    Render(RenderArgs),
    /// Write COCO annotations for existing layouts.
    ExportCoco(ExportArgs),
    /// Compare Align/Density across layout datasets.
    Metrics(MetricsArgs),
    /// Run the receptive-module numerical self-check.
    CrmSelfcheck(SelfCheckArgs),
}

#[derive(Args, Debug, Default)]
pub struct PageArgs {
    /// Page width in px [default: 1240, or the pool's page size]
    #[arg(long)]
    pub page_width: Option<u32>,
    /// Page height in px [default: 1754, or the pool's page size]
    #[arg(long)]
    pub page_height: Option<u32>,
    /// Empty border on every side in px [default: 24]
    #[arg(long)]
    pub margin: Option<u32>,
}

#[derive(Args, Debug, Default)]
pub struct EngineArgs {
    /// Max elements per page, N [default: 15]
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Fill-rate threshold fr_thr; matching stops below it [default: 1e-4]
    #[arg(long)]
    pub fr_thr: Option<f64>,
    /// Max small elements per page, Mini_num [default: 5]
    #[arg(long)]
    pub mini_num: Option<usize>,
    /// Area fraction of the page interior below which an element is small [default: 0.02]
    #[arg(long)]
    pub small_area_frac: Option<f64>,
    /// Candidates sampled per page [default: 30]
    #[arg(long)]
    pub candidate_set_size: Option<usize>,
    /// Area strata used for candidate sampling [default: 3]
    #[arg(long)]
    pub strata: Option<usize>,
    /// Lower bound of the central scaling factor [default: 0.85]
    #[arg(long)]
    pub scale_min: Option<f64>,
    /// Upper bound of the central scaling factor [default: 1.0]
    #[arg(long)]
    pub scale_max: Option<f64>,
    /// Spacing removed from every side of a free cell, px [default: 6]
    #[arg(long)]
    pub gutter_px: Option<u32>,
}

#[derive(Args, Debug, Default)]
pub struct AugmentArgs {
    /// Pad categories to at least this many elements [default: 100]
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Probability of each of the horizontal and vertical flips [default: 0.5]
    #[arg(long)]
    pub p_flip: Option<f64>,
    /// Probability of brightness/contrast jitter [default: 0.5]
    #[arg(long)]
    pub p_bc: Option<f64>,
    /// Probability of a random crop [default: 0.7]
    #[arg(long)]
    pub p_crop: Option<f64>,
    /// Probability of replacing the crop by its edge map [default: 0.2]
    #[arg(long)]
    pub p_edge: Option<f64>,
    /// Smallest kept area fraction of a crop [default: 0.5]
    #[arg(long)]
    pub crop_area_min: Option<f64>,
    /// Largest kept area fraction of a crop [default: 0.9]
    #[arg(long)]
    pub crop_area_max: Option<f64>,
    /// Relative brightness/contrast range [default: 0.2]
    #[arg(long)]
    pub bc_delta: Option<f64>,
    /// Elastic displacement magnitude in px [default: 8]
    #[arg(long)]
    pub elastic_alpha: Option<f64>,
    /// Elastic field smoothness (Gaussian sigma, px) [default: 4]
    #[arg(long)]
    pub elastic_sigma: Option<f64>,
    /// Additive Gaussian noise std on a 0..1 scale [default: 0.02]
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct PoolSource {
    /// Saved pool directory (as written by `pool`).
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    pub pool: Option<PathBuf>,
    /// Procedural pool, CATEGORIESxPER_CATEGORY (e.g. 12x25).
    #[arg(long, value_name = "CxN")]
    pub synthetic: Option<String>,
    /// Seed of the procedural pool [default: 0]
    #[arg(long)]
    pub pool_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PoolArgs {
    /// Procedural pool, CATEGORIESxPER_CATEGORY (e.g. 12x25).
    #[arg(long, value_name = "CxN", required_unless_present = "manifest", conflicts_with = "manifest")]
    pub synthetic: Option<String>,
    /// COCO manifest of seed pages.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Image directory for the manifest [default: the manifest's directory]
    #[arg(long, value_name = "DIR", requires = "manifest")]
    pub images: Option<PathBuf>,
    /// Pad rare categories with augmented copies.
    #[arg(long)]
    pub augment: bool,
    /// Master seed for generation and augmentation [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $DOCSYNTH_OUT or ./docsynth-out]
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub page: PageArgs,
    #[command(flatten)]
    pub aug: AugmentArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub source: PoolSource,
    /// Generation method: bestfit or random [default: bestfit]
    #[arg(long)]
    pub method: Option<String>,
    /// Number of layouts [default: 100]
    #[arg(long)]
    pub count: Option<usize>,
    /// Master seed; layout i uses a seed derived from (seed, i) [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; output does not depend on it [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory [default: $DOCSYNTH_OUT or ./docsynth-out]
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also render page images to OUT/images.
    #[arg(long)]
    pub render: bool,
    /// Also write OUT/annotations.coco.json.
    #[arg(long)]
    pub coco: bool,
    /// Also write SVG debug views (elements and free cells) to OUT/debug.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub page: PageArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub source: PoolSource,
    /// Directory holding layout_*.json files (or a `synth` output directory).
    #[arg(long, value_name = "DIR")]
    pub layouts: PathBuf,
    /// Output directory [default: $DOCSYNTH_OUT or ./docsynth-out]
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write SVG debug views to OUT/debug.
    #[arg(long)]
    pub svg: bool,
    /// Gutter used for the free cells drawn in SVG views [default: 6]
    #[arg(long)]
    pub gutter_px: Option<u32>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: PoolSource,
    /// Directory holding layout_*.json files (or a `synth` output directory).
    #[arg(long, value_name = "DIR")]
    pub layouts: PathBuf,
    /// Output directory [default: $DOCSYNTH_OUT or ./docsynth-out]
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Dataset as NAME=DIR; repeat for each method.
    #[arg(long = "dataset", value_name = "NAME=DIR", required = true)]
    pub datasets: Vec<String>,
    /// Dataset the ratios are relative to [default: "random" if present]
    #[arg(long)]
    pub baseline: Option<String>,
    /// Output directory for metrics.json and metrics.txt [default: $DOCSYNTH_OUT or ./docsynth-out]
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelfCheckArgs {
    /// Preset to check: global (k=5), block (k=3) or all
    #[arg(long, default_value = "all", value_parser = ["global", "block", "all"])]
    pub preset: String,
    /// Random cases per preset
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Seed of the random cases [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file `{"config": ..., "params": ...}` to check as well.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Shift the optimized path's padding by one pixel (tests the check).
    #[arg(long, hide = true)]
    pub inject_padding_fault: bool,
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let result = match &cli.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
    .and_then(|file| match cli.command {
        Command::Pool(a) => commands::pool(a, &file),
        Command::Synth(a) => commands::synth(a, &file),
        Command::Render(a) => commands::render(a, &file),
        Command::ExportCoco(a) => commands::export_coco_cmd(a, &file),
        Command::Metrics(a) => commands::metrics(a, &file),
        Command::CrmSelfcheck(a) => commands::crm_selfcheck(a, &file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
