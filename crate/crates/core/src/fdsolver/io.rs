//! Persistence of grid solutions: a JSON header next to a CSV node table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AnnulusGrid, GridSolution, NewtonReport};
use crate::error::{Error, Result};

const FORMAT: &str = "exterior-grid-solution";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    grid: AnnulusGrid,
    background: Vec<Vec<f64>>,
    report: NewtonReport,
    /// CSV file name, relative to the header.
    table: String,
    columns: Vec<String>,
    nodes: usize,
}

fn table_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("csv")
}

fn columns(n: usize) -> Vec<String> {
    let mut c: Vec<String> = ["i", "j", "k"].iter().map(|s| s.to_string()).collect();
    c.extend((1..=n).map(|k| format!("x{k}")));
    c.push("u".into());
    c
}

pub(super) fn save(sol: &GridSolution, json_path: &Path) -> Result<()> {
    let grid = sol.grid();
    let csv = table_path(json_path);
    let n = grid.n;
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        grid: grid.clone(),
        background: (0..n)
            .map(|r| (0..n).map(|c| sol.background()[(r, c)]).collect())
            .collect(),
        report: sol.report().clone(),
        table: csv.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
        columns: columns(n),
        nodes: grid.node_count(),
    };
    let mut out = header.columns.join(",");
    out.push('\n');
    for (node, u) in sol.values().iter().enumerate() {
        let (i, j, k) = grid.split(node);
        let _ = write!(out, "{i},{j},{k}");
        for x in grid.position(node) {
            let _ = write!(out, ",{x:e}");
        }
        let _ = writeln!(out, ",{u:e}");
    }
    std::fs::write(&csv, out)?;
    std::fs::write(json_path, serde_json::to_string_pretty(&header)? + "\n")?;
    Ok(())
}

pub(super) fn load(json_path: &Path) -> Result<GridSolution> {
    let header: Header = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported grid solution format {} v{}",
            header.format, header.version
        )));
    }
    header.grid.validate()?;
    let grid = header.grid;
    let n = grid.n;
    if header.columns != columns(n) || header.nodes != grid.node_count() {
        return Err(Error::Format("grid solution header does not match its grid".into()));
    }
    if header.background.len() != n || header.background.iter().any(|r| r.len() != n) {
        return Err(Error::Format("background must be an n×n matrix".into()));
    }
    let background = DMatrix::from_fn(n, n, |r, c| header.background[r][c]);
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(dir.join(&header.table))?;
    let mut lines = text.lines();
    if lines
        .next()
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        != Some(header.columns.clone())
    {
        return Err(Error::Format("node table has unexpected columns".into()));
    }
    let mut values = Vec::with_capacity(header.nodes);
    for (node, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 4 {
            return Err(Error::Format(format!(
                "node table row {node} has {} fields",
                fields.len()
            )));
        }
        let idx: Vec<usize> = fields[..3]
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("bad index in node table row {node}")))
            })
            .collect::<Result<_>>()?;
        if node >= grid.node_count() || (idx[0], idx[1], idx[2]) != grid.split(node) {
            return Err(Error::Format(format!("node table row {node} is out of order")));
        }
        let u: f64 = fields[n + 3]
            .parse()
            .map_err(|_| Error::Format(format!("bad value in node table row {node}")))?;
        values.push(u);
    }
    GridSolution::from_values(grid, background, values, header.report)
}
