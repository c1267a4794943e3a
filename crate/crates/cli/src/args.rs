//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cnc-forge", version, about = "Synthesize, replay and export CNC machining programs")]
pub struct Cli {
    /// Worker threads; falls back to CNC_FORGE_THREADS, then to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a machining program to a target mesh.
    Fit(Box<FitArgs>),
    /// Score a program against a target mesh.
    Eval(EvalArgs),
    /// Replay a program into an occupancy dump and a surface mesh.
    Replay(ReplayArgs),
    /// Write a program as G-code.
    ExportGcode(ExportArgs),
    /// Write the built-in test shapes as OBJ files.
    Fixtures(FixturesArgs),
    /// Run a command again from the manifest it wrote.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Target mesh, OBJ or STL.
    #[arg(long)]
    pub target: PathBuf,
    /// Config file of `key = value` lines; missing keys take the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, help = "Mill steps [default: 20]")]
    pub mill_steps: Option<usize>,
    #[arg(long, help = "Drill steps [default: 20]")]
    pub drill_steps: Option<usize>,
    #[arg(long, help = "Optimizer iterations [default: 12000]")]
    pub iters: Option<usize>,
    #[arg(long, help = "Adam learning rate [default: 1e-4]")]
    pub lr: Option<f64>,
    #[arg(long, help = "Smooth-sign sharpness w [default: 1000]")]
    pub w: Option<f64>,
    #[arg(long, help = "Voxels per axis of the fit grid [default: 64]")]
    pub resolution: Option<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        help = "Mill radius set [default: 0.025,0.05,0.075,0.1]"
    )]
    pub mill_radii: Option<Vec<f64>>,
    #[arg(
        long,
        value_delimiter = ',',
        help = "Drill radius set [default: 0.01,0.02,0.03,0.04]"
    )]
    pub drill_radii: Option<Vec<f64>>,
    #[arg(long, help = "Random seed [default: 0]")]
    pub seed: Option<u64>,
    /// Keep every step upright.
    #[arg(long)]
    pub no_rotation: bool,
    /// Disable a loss: milling, drilling, shape or center. Repeatable.
    #[arg(long = "no-loss", value_name = "NAME")]
    pub no_loss: Vec<String>,
    /// Override any config key, as `key=value`. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Voxels per axis for the metrics written after the fit.
    #[arg(long, default_value_t = 256)]
    pub eval_resolution: usize,
    /// Marching-cubes cells per axis for recon.obj.
    #[arg(long, default_value_t = 128)]
    pub mesh_cells: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub program: PathBuf,
    /// Voxels per axis of the scoring grid.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    /// Surface samples per mesh for Chamfer distance and normal consistency.
    #[arg(long, default_value_t = 8000)]
    pub samples: usize,
    /// Marching-cubes cells per axis for the program surface.
    #[arg(long, default_value_t = 128)]
    pub mesh_cells: usize,
    /// Writes metrics.csv here instead of printing it.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub program: PathBuf,
    /// Voxels per axis of the occupancy dump.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Marching-cubes cells per axis for recon.obj.
    #[arg(long, default_value_t = 128)]
    pub mesh_cells: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub program: PathBuf,
    /// Millimeters per model unit.
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    /// Writes program.nc here instead of printing it.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Marching-cubes cells per axis.
    #[arg(long, default_value_t = 128)]
    pub cells: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
