//! Execution of resolved jobs.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cnc_forge::fixtures::Fixture;
use cnc_forge::mesh::{load_normalized, occupancy, write_obj};
use cnc_forge::metrics::{MetricsRow, OccupancyMetrics};
use cnc_forge::objective::LossReport;
use cnc_forge::program::{export_gcode, replay, MachiningProgram};
use cnc_forge::score::{program_mesh, score_program, ScoreOptions};
use cnc_forge::synth::{fit, FitConfig, StageSummary, TrajectoryRow};
use cnc_forge::voxel::{occupancy_to_dump, write_dump};
use cnc_forge::Error;
use serde::Serialize;

use crate::manifest::Job;
use crate::CliError;

pub const PROGRAM_FILE: &str = "program.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RESULT_FILE: &str = "result.json";
pub const RECON_FILE: &str = "recon.obj";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DUMP_FILE: &str = "occupancy.dump";
pub const GCODE_FILE: &str = "program.nc";

/// Output files a job writes into its directory.
pub fn outputs(job: &Job) -> Vec<&'static str> {
    match job {
        Job::Fit { .. } => vec![PROGRAM_FILE, TRAJECTORY_FILE, RESULT_FILE, RECON_FILE, METRICS_FILE],
        Job::Eval { .. } => vec![METRICS_FILE],
        Job::Replay { .. } => vec![DUMP_FILE, RECON_FILE],
        Job::ExportGcode { .. } => vec![GCODE_FILE],
        Job::Fixtures { .. } => Fixture::ALL.iter().map(|f| fixture_file(*f)).collect(),
    }
}

fn fixture_file(f: Fixture) -> &'static str {
    match f {
        Fixture::Slot => "slot.obj",
        Fixture::Hole => "hole.obj",
        Fixture::Chamfer => "chamfer.obj",
        Fixture::LBracket => "l-bracket.obj",
        Fixture::HoleSlot => "hole-slot.obj",
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes the result to `out_dir`, or to `stdout` for jobs that allow it.
pub fn execute(job: &Job, out_dir: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    match job {
        Job::Fit { target, config, score } => {
            run_fit(target, config, score, out_dir.expect("fit has an output directory"))
        }
        Job::Eval { target, program, score } => {
            let start = Instant::now();
            let mesh = load_normalized(target)?;
            let p = MachiningProgram::load(program)?;
            let s = score_program(&mesh, &p, score)?;
            let text = metrics_csv(&shape_name(target), &s.occupancy, s.cd, s.nc, start.elapsed().as_secs_f64());
            emit(out_dir.map(|d| d.join(METRICS_FILE)).as_deref(), &text, stdout)
        }
        Job::Replay {
            program,
            resolution,
            mesh_cells,
        } => {
            let dir = out_dir.expect("replay has an output directory");
            let p = MachiningProgram::load(program)?;
            let occ = replay(&p, *resolution)?;
            let mut bytes = Vec::new();
            write_dump(&mut bytes, *resolution, &occupancy_to_dump(&occ)).expect("writing to memory");
            write_file(&dir.join(DUMP_FILE), bytes)?;
            write_obj(&program_mesh(&p, *mesh_cells)?, &dir.join(RECON_FILE))?;
            Ok(())
        }
        Job::ExportGcode { program, scale } => {
            let p = MachiningProgram::load(program)?;
            let text = export_gcode(&p, *scale)?;
            emit(out_dir.map(|d| d.join(GCODE_FILE)).as_deref(), &text, stdout)
        }
        Job::Fixtures { cells } => {
            let dir = out_dir.expect("fixtures has an output directory");
            for f in Fixture::ALL {
                write_obj(&f.mesh(*cells)?, &dir.join(fixture_file(f)))?;
            }
            Ok(())
        }
    }
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}"))),
    }
}

fn shape_name(target: &Path) -> String {
    target
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn metrics_csv(shape: &str, occ: &OccupancyMetrics, cd: f64, nc: f64, runtime_s: f64) -> String {
    let row = MetricsRow {
        shape: shape.to_string(),
        iou: occ.iou,
        f1: occ.f1,
        cd,
        nc,
        runtime_s,
    };
    format!("{}\n{}\n", MetricsRow::CSV_HEADER, row.csv_row())
}

fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(LossReport::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.losses.csv_row(r.iter));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct FitSummary<'a> {
    shape: String,
    steps: usize,
    iterations: usize,
    losses: LossReport,
    /// Agreement with the target on the fit grid.
    fit_metrics: OccupancyMetrics,
    iou: f64,
    f1: f64,
    cd: f64,
    nc: f64,
    eval_resolution: usize,
    wall_time_s: f64,
    stages: &'a [StageSummary],
}

fn run_fit(target: &Path, cfg: &FitConfig, score: &ScoreOptions, dir: &Path) -> Result<(), CliError> {
    let mesh = load_normalized(target)?;
    let occ = occupancy(&mesh, cfg.resolution)?;
    let r = match fit(&occ, cfg) {
        Ok(r) => r,
        Err(Error::Aborted { component, trajectory }) => {
            write_file(&dir.join(TRAJECTORY_FILE), trajectory_csv(&trajectory))?;
            return Err(CliError::Numeric(format!(
                "non-finite {component} loss after {} iterations",
                trajectory.len()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&dir.join(PROGRAM_FILE), r.program.to_json())?;
    write_file(&dir.join(TRAJECTORY_FILE), trajectory_csv(&r.trajectory))?;
    let s = score_program(&mesh, &r.program, score)?;
    write_obj(&s.recon, &dir.join(RECON_FILE))?;
    let shape = shape_name(target);
    write_file(
        &dir.join(METRICS_FILE),
        metrics_csv(&shape, &s.occupancy, s.cd, s.nc, r.wall_time_s),
    )?;
    let summary = FitSummary {
        shape,
        steps: r.program.len(),
        iterations: r.trajectory.len(),
        losses: r.losses,
        fit_metrics: r.metrics,
        iou: s.occupancy.iou,
        f1: s.occupancy.f1,
        cd: s.cd,
        nc: s.nc,
        eval_resolution: score.resolution,
        wall_time_s: r.wall_time_s,
        stages: &r.stages,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&dir.join(RESULT_FILE), text)
}
