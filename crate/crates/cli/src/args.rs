use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spa", version, about = "Self-correlation localization maps and metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// High-order self-correlation of one or more feature layers.
    Hsc(HscArgs),
    /// Refine a CAM into a structure-preserving localization map.
    Scg(ScgArgs),
    /// Background/object pseudo-masks from class score maps.
    RamMasks(RamMasksArgs),
    /// Classification and restricted-activation losses as JSON.
    Loss(LossArgs),
    /// Gradient of the total loss with respect to the score map.
    Grad(LossArgs),
    /// Box from a localization map.
    Bbox(BboxArgs),
    /// Localization metrics over an annotation file.
    Eval(EvalArgs),
    /// Planted-object fixtures with features, CAMs, masks and annotations.
    Synth(SynthArgs),
    /// Heatmap PNG of a map.
    Render(RenderArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Hsc(_) => "hsc",
            Command::Scg(_) => "scg",
            Command::RamMasks(_) => "ram-masks",
            Command::Loss(_) => "loss",
            Command::Grad(_) => "grad",
            Command::Bbox(_) => "bbox",
            Command::Eval(_) => "eval",
            Command::Synth(_) => "synth",
            Command::Render(_) => "render",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Hsc(a) => &a.common,
            Command::Scg(a) => &a.common,
            Command::RamMasks(a) => &a.common,
            Command::Loss(a) | Command::Grad(a) => &a.common,
            Command::Bbox(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Synth(a) => &a.common,
            Command::Render(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON object keyed by flag name; explicit flags win. A run manifest is accepted too.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "SPA_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub height: usize,
    pub width: usize,
}

fn parse_grid(s: &str) -> Result<GridSize, String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("bad extent {v:?} in {s:?}")),
    };
    Ok(GridSize {
        height: parse(h)?,
        width: parse(w)?,
    })
}

#[derive(Debug, Args)]
pub struct HscArgs {
    /// Feature tensors [H, W, C], comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub orders: Vec<usize>,
    /// Common grid for several layers; defaults to the first layer's grid.
    #[arg(long, value_parser = parse_grid, value_name = "HxW")]
    pub grid: Option<GridSize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ScgArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<PathBuf>,
    /// CAM tensor [H, W]; feature layers are resampled to its grid.
    #[arg(long)]
    pub cam: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub delta_h: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta_l: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub orders: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RamMasksArgs {
    /// Score tensor [H, W, C].
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Output tensor [2, H, W]: background then object.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Ground-truth class index.
    #[arg(long)]
    pub class: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Output file; `loss` also prints to stdout, `grad` requires it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BboxArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Image width; defaults to the map width.
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long, default_value_t = 0.2)]
    pub theta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Box,
    Mask,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotation JSON; map and mask paths resolve relative to its directory.
    #[arg(long)]
    pub ann: PathBuf,
    #[arg(long, value_enum, default_value = "box")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.2)]
    pub theta: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-image CSV: image_id, iou, peak_iou, peak_t, error_case.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Rect,
    Blob,
    /// Alternate rect and blob.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapArg {
    Cam,
    Scg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Image `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub height: usize,
    #[arg(long, default_value_t = 20)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 0.3)]
    pub object_fraction: f64,
    #[arg(long, default_value_t = 0.25)]
    pub coverage: f64,
    /// Degrees between object and background feature directions.
    #[arg(long, default_value_t = 90.0)]
    pub angle: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Image pixels per grid cell.
    #[arg(long, default_value_t = 8)]
    pub scale: u32,
    /// Which map the annotation file points at.
    #[arg(long, value_enum, default_value = "cam")]
    pub map: MapArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColormapArg {
    Gray,
    /// Blue-cyan-yellow-red ramp.
    Jet,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "jet")]
    pub colormap: ColormapArg,
    /// Integer upsampling factor (bilinear).
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[command(flatten)]
    pub common: Common,
}
