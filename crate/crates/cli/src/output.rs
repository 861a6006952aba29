//! CSV writer with a one-line JSON provenance header.

use std::io::Write;

use serde_json::json;

use crate::config::RunConfig;
use crate::tasks::{CliError, Table};

/// Writes `# {json}` followed by the CSV body.
pub fn write_table<W: Write>(mut w: W, cfg: &RunConfig, table: &Table) -> Result<(), CliError> {
    let mix = cfg.mixture()?;
    let g = cfg.grid_spec(&mix);
    let header = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.mc.seed,
        "task": cfg.task.name,
        "grid": {"L": g.half_width, "points": g.points, "quad_nodes": g.quad_nodes},
        "mc": {"paths": cfg.mc.paths, "dt": cfg.mc.dt},
        "tolerances": table.tolerances,
    });
    writeln!(w, "# {header}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(&table.columns).map_err(csv_err)?;
    for row in &table.rows {
        csv.write_record(row).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// The CSV body of a file written by [`write_table`], without the header line.
pub fn body(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.split_once('\n').map_or("", |(_, b)| b),
        None => text,
    }
}
