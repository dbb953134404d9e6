use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "specfield", version, about = "Boundary-aligned frame fields on immersed octree grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the grid for a mesh and solve the frame field coarse to fine.
    Solve(SolveArgs),
    /// Spectrum of a reference penalty or of a dumped cell penalty.
    Spectral(SpectralArgs),
    /// Convert a field file to JSON, CSV or PLY frame segments.
    Export(ExportArgs),
    /// Write one of the built-in test surfaces as binary STL.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Triangle mesh (.stl or .obj).
    #[arg(long = "in", value_name = "MESH")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=4))]
    pub degree: u8,
    #[arg(long, default_value_t = 4)]
    pub max_level: u8,
    #[arg(long, value_name = "W")]
    pub boundary_weight: Option<f64>,
    #[arg(long, value_name = "W")]
    pub smoothness: Option<f64>,
    /// Outer iterations per level.
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    /// Outer iterations between sign alignments.
    #[arg(long, value_name = "N")]
    pub proj_period: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Start from seeded random coefficients instead of the reference frame.
    #[arg(long)]
    pub random_init: bool,
    /// Keep cell penalties unshifted.
    #[arg(long)]
    pub no_shift: bool,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,
    /// Reuse `<out>/grid.sbcf` when it matches the mesh and grid settings.
    #[arg(long, overrides_with = "no_cache")]
    pub cache: bool,
    #[arg(long, overrides_with = "cache")]
    pub no_cache: bool,
    /// Run single-threaded.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    #[command(subcommand)]
    pub case: SpectralCase,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum SpectralCase {
    /// Three orthogonal axis constraints.
    Cube,
    /// Normals averaged around the y axis.
    Cylinder,
    /// Normals averaged over the whole sphere.
    Sphere,
    /// A penalty read from JSON: a square matrix or a packed cell penalty.
    Dump { path: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Field file written by `solve`.
    pub field: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    PlyFrames,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub shape: Shape,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Cube side, sphere diameter or cylinder height.
    #[arg(long, default_value_t = 1.0)]
    pub size: f64,
    /// Icosphere subdivisions or cylinder segments / 8.
    #[arg(long, default_value_t = 4)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Cube,
    Sphere,
    Cylinder,
}
