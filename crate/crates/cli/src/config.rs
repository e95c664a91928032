use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mgmask::maskgen::{Generator, MaskParams};
use mgmask::motionfield::DEFAULT_SEARCH_RADIUS;
use mgmask::tokengrid::Patch;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "mgmask", version, about = "Motion-guided 3D mask generation for video clips")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate block motion for each clip and write <stem>.mvf.
    Estimate(CommonArgs),
    /// Generate a mask for each clip and write <stem>.msk.
    Mask(MaskArgs),
    /// Score motion inside annotated boxes against motion outside.
    Saliency(SaliencyArgs),
    /// Compare temporal-copy reconstruction error across generators.
    Oracle(OracleArgs),
    /// Print parsed headers of RVC, Y4M, MVF and MSK files as JSON.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Rvc,
    Y4m,
    Mvf,
}

impl InputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            InputFormat::Rvc => "rvc",
            InputFormat::Y4m => "y4m",
            InputFormat::Mvf => "mvf",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "rvc" => Some(InputFormat::Rvc),
            "y4m" => Some(InputFormat::Y4m),
            "mvf" => Some(InputFormat::Mvf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Input files or directories (directories are scanned, not recursed).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Input format; inferred from the file extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    /// Patch size t,h,w.
    #[arg(long, default_value = "2,16,16", value_parser = parse_patch)]
    pub patch: Patch,
    /// Block-matching search radius in pixels.
    #[arg(long, default_value_t = DEFAULT_SEARCH_RADIUS)]
    pub search_radius: usize,
    /// Base seed; each clip uses seed ^ splitmix64(index in sorted inputs).
    #[arg(long, env = "MGMASK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Mask ratio in (0, 1].
    #[arg(long, default_value_t = mgmask::maskgen::DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Box velocity cap in tokens per slab.
    #[arg(long, default_value_t = 1)]
    pub velocity_cap: u32,
    /// Box size jitter cap in tokens.
    #[arg(long, default_value_t = 1)]
    pub jitter_cap: u32,
    /// Estimate motion in-process instead of reading a co-located <stem>.mvf.
    #[arg(long)]
    pub estimate: bool,
}

impl GenArgs {
    pub fn params(&self, seed: u64) -> Result<MaskParams> {
        let params = MaskParams {
            gamma: self.gamma,
            velocity_cap: self.velocity_cap,
            jitter_cap: self.jitter_cap,
            seed,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long, value_parser = parse_generator)]
    pub generator: Generator,
    /// Skip writing <stem>.msk.
    #[arg(long)]
    pub no_masks: bool,
    /// Write motion estimated in-process as <stem>.mvf.
    #[arg(long)]
    pub emit_mvf: bool,
    /// Write <stem>.boxtrack.json for box-driven generators.
    #[arg(long)]
    pub emit_boxtrack: bool,
    /// Write per-frame overlays with masked tokens darkened.
    #[arg(long)]
    pub emit_ppm: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Annotation JSON file, or a directory holding <stem>.boxes.json.
    /// Defaults to <stem>.boxes.json next to each input.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Generators to compare.
    #[arg(long, value_delimiter = ',', default_value = "random,mgm-dense", value_parser = parse_generator)]
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

fn parse_patch(s: &str) -> Result<Patch> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("patch {s:?} must be three integers t,h,w"))?;
    let [frames, height, width] = parts[..] else {
        bail!("patch {s:?} must be three integers t,h,w");
    };
    if frames == 0 || height == 0 || width == 0 {
        bail!("patch components must be positive");
    }
    Ok(Patch {
        frames,
        height,
        width,
    })
}

fn parse_generator(s: &str) -> Result<Generator> {
    Ok(s.parse::<Generator>()?)
}
