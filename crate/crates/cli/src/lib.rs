//! Batch driver for taplab: configuration, named tasks, CSV output and the verification suite.

pub mod checks;
pub mod config;
pub mod output;
pub mod tasks;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use config::RunConfig;
use tasks::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "taplab",
    version,
    about = "Parisi PDE, TAP functionals and complexity checks for mixed p-spin models"
)]
pub struct Args {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task name; overrides task.name.
    #[arg(long)]
    pub task: Option<String>,
    /// Overrides mc.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path (stdout by default).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides mc.paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Overrides grid.points.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Overrides grid.quad_nodes.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
}

impl Args {
    /// Loads the configuration file (or the default) and applies the flag overrides.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(t) = &self.task {
            cfg.task.name = Some(t.clone());
        }
        if let Some(s) = self.seed {
            cfg.mc.seed = s;
        }
        if let Some(p) = self.paths {
            cfg.mc.paths = p;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.to_string_lossy().into_owned());
        }
        if self.grid_points.is_some() || self.quad_nodes.is_some() {
            let mix = cfg.mixture()?;
            let g = cfg.grid_spec(&mix);
            cfg.grid = Some(config::GridConfig {
                half_width: g.half_width,
                points: self.grid_points.unwrap_or(g.points),
                quad_nodes: self.quad_nodes.unwrap_or(g.quad_nodes),
            });
        }
        Ok(cfg)
    }
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let cfg = args.resolve()?;
    let table = tasks::run(&cfg)?;
    match &cfg.out {
        Some(p) => output::write_table(
            std::io::BufWriter::new(std::fs::File::create(p)?),
            &cfg,
            &table,
        )?,
        None => output::write_table(std::io::stdout().lock(), &cfg, &table)?,
    }
    Ok(table.status.exit_code())
}

/// Parses arguments, runs the task and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("taplab: {e}");
            e.exit_code()
        }
    }
}
