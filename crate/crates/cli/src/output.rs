//! Output files: CSV tables, grid snapshots and JSON summaries. Every file
//! is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use panelflutter_core::dynamics::{PlateState, StepRecord, Trajectory};
use panelflutter_core::Grid;

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.header.len());
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Every `every`-th record, plus the final one.
pub fn timeseries(records: &[StepRecord], every: usize) -> Table {
    let every = every.max(1);
    let n_probes = records.first().map_or(0, |r| r.probes.len());
    let mut header: Vec<String> = [
        "t",
        "E_total",
        "E_kinetic",
        "E_bending",
        "E_airy",
        "norm_ut",
        "norm_lap_u",
        "budget_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..n_probes).map(|i| format!("probe_{i}")));
    let mut t = Table::new(&header);
    let last = records.len().saturating_sub(1);
    for r in records
        .iter()
        .enumerate()
        .filter(|(n, _)| n % every == 0 || *n == last)
        .map(|(_, r)| r)
    {
        let mut row = vec![
            r.t,
            r.energy.total,
            r.energy.kinetic,
            r.energy.bending,
            r.energy.airy,
            r.norm_ut,
            r.norm_lap_u,
            r.energy.budget_residual,
        ];
        row.extend(&r.probes);
        t.row(&row);
    }
    t
}

/// Displacement snapshot: a `nx,ny,hx,hy,t` header line with its values,
/// then one line per grid row `j` holding `u(i, j)` for increasing `i`.
pub fn snapshot(s: &PlateState, g: &Grid) -> String {
    let mut out = String::from("nx,ny,hx,hy,t\n");
    let _ = writeln!(out, "{},{},{},{},{}", g.nx, g.ny, num(g.hx), num(g.hy), num(s.t));
    for row in s.u.values().chunks(g.nx) {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_snapshots(dir: &Path, traj: &Trajectory, g: &Grid) -> io::Result<Vec<PathBuf>> {
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let mut paths = Vec::with_capacity(traj.snapshots.len());
    for (i, s) in traj.snapshots.iter().enumerate() {
        let p = snap_dir.join(format!("u_{i:06}.csv"));
        write_atomic(&p, snapshot(s, g).as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
