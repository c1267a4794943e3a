//! Command-line front end: argument resolution, run manifests and exit codes.
//!
//! Exit codes: 0 success, 1 usage, 2 unreadable or malformed input, 3
//! non-finite loss. Every failure prints one line to stderr.

pub mod args;
pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use cnc_forge::objective::LossKind;
use cnc_forge::score::ScoreOptions;
use cnc_forge::synth::FitConfig;
use cnc_forge::Error;

use args::{Cli, Command, FitArgs};
use manifest::{Job, RunManifest};

pub const THREADS_ENV: &str = "CNC_FORGE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) | Error::Contract(_) => CliError::Usage(msg),
            Error::NonFinite { .. } | Error::Aborted { .. } => CliError::Numeric(msg),
            Error::Parse { .. } | Error::Format(_) | Error::EmptyMesh(_) | Error::Io { .. } => CliError::Input(msg),
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let (text, code) = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => (e.render().to_string(), 0),
                _ => (e.render().to_string(), 1),
            };
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "cnc-forge: {line}");
            e.code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        // a pool built earlier in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (job, out_dir) = match cli.command {
        Command::Fit(a) => {
            let dir = a.out_dir.clone();
            (resolve_fit(*a)?, Some(dir))
        }
        Command::Eval(a) => (
            Job::Eval {
                target: a.target,
                program: a.program,
                score: ScoreOptions {
                    resolution: a.resolution,
                    samples: a.samples,
                    mesh_cells: a.mesh_cells,
                    ..Default::default()
                },
            },
            a.out_dir,
        ),
        Command::Replay(a) => (
            Job::Replay {
                program: a.program,
                resolution: a.resolution,
                mesh_cells: a.mesh_cells,
            },
            Some(a.out_dir),
        ),
        Command::ExportGcode(a) => (
            Job::ExportGcode {
                program: a.program,
                scale: a.scale,
            },
            a.out_dir,
        ),
        Command::Fixtures(a) => (Job::Fixtures { cells: a.cells }, Some(a.out_dir)),
        Command::Rerun(a) => {
            let m = RunManifest::load(&a.manifest)?;
            m.verify_inputs()?;
            let dir = a.out_dir.unwrap_or(m.out_dir);
            (m.job, Some(dir))
        }
    };
    if let Some(dir) = &out_dir {
        RunManifest::new(job.clone(), dir, &commands::outputs(&job))?.write()?;
    }
    commands::execute(&job, out_dir.as_deref(), stdout)
}

/// Merges defaults, the config file, the named flags and `--set` overrides,
/// in that order.
fn resolve_fit(a: FitArgs) -> Result<Job, CliError> {
    let mut cfg = match &a.config {
        Some(path) => FitConfig::load(path)?,
        None => FitConfig::default(),
    };
    macro_rules! flag {
        ($($arg:ident => $field:ident),*) => {
            $(if let Some(v) = a.$arg.clone() { cfg.$field = v; })*
        };
    }
    flag!(mill_steps => mill_steps, drill_steps => drill_steps, iters => iterations, lr => learning_rate,
        w => w, resolution => resolution, mill_radii => mill_radii, drill_radii => drill_radii, seed => seed);
    if a.no_rotation {
        cfg.rotation = false;
    }
    for name in &a.no_loss {
        let kind: LossKind = name.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
        cfg.disable_loss(kind);
    }
    if !a.set.is_empty() {
        cfg = apply_overrides(&cfg, &a.set)?;
    }
    cfg.validate()?;
    Ok(Job::Fit {
        target: a.target,
        config: cfg,
        score: ScoreOptions {
            resolution: a.eval_resolution,
            mesh_cells: a.mesh_cells,
            ..Default::default()
        },
    })
}

fn apply_overrides(cfg: &FitConfig, sets: &[String]) -> Result<FitConfig, CliError> {
    let mut table: toml::Table = toml::from_str(&cfg.to_toml()).expect("config round-trips through TOML");
    for s in sets {
        let Some((key, value)) = s.split_once('=') else {
            return Err(CliError::Usage(format!("--set expects key=value, got {s:?}")));
        };
        let parsed: toml::Table = toml::from_str(&format!("{} = {}", key.trim(), value.trim()))
            .map_err(|e| CliError::Usage(format!("--set {s}: {}", e.message())))?;
        table.extend(parsed);
    }
    FitConfig::from_toml(&toml::to_string(&table).expect("table serializes")).map_err(|e| match e {
        Error::Parse { message, .. } => CliError::Usage(format!("--set: {message}")),
        other => other.into(),
    })
}
