//! Two-column text series for external plotting tools.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::writer::format_float;
use super::IoError;
use crate::sim::{LogRow, TrajectoryLog};

fn write_series(dir: &Path, name: &str, points: &[(f64, f64)]) -> Result<PathBuf, IoError> {
    let path = dir.join(name);
    let mut text = String::with_capacity(points.len() * 24);
    for (a, b) in points {
        text.push_str(&format_float(*a));
        text.push(' ');
        text.push_str(&format_float(*b));
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| IoError::file(&path, e))?;
    Ok(path)
}

/// Writes, per vehicle, `velocity_<id>.dat` (t v) and `trajectory_<id>.dat`
/// (x y); per CAV and barrier slot with any value, `barrier_<id>_<slot>.dat`
/// (t h); and `collision.dat` (t 0/1). Returns the paths written.
pub fn emit_plotdata(log: &TrajectoryLog, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    if log.is_empty() {
        warn!("empty log, no plot data written");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    let mut written = Vec::new();
    for id in &log.vehicles {
        let rows: Vec<&LogRow> = log.rows_for(id).collect();
        let v: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.v)).collect();
        written.push(write_series(dir, &format!("velocity_{id}.dat"), &v)?);
        let xy: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.y)).collect();
        written.push(write_series(dir, &format!("trajectory_{id}.dat"), &xy)?);
        let slots: [(&str, fn(&LogRow) -> Option<f64>); 3] = [
            ("h_fc", |r| r.h_fc),
            ("h_ft", |r| r.h_ft),
            ("h_bt", |r| r.h_bt),
        ];
        for (slot, get) in slots {
            let h: Vec<(f64, f64)> = rows.iter().filter_map(|r| get(r).map(|h| (r.t, h))).collect();
            if !h.is_empty() {
                written.push(write_series(dir, &format!("barrier_{id}_{slot}.dat"), &h)?);
            }
        }
    }
    let per_tick = log.vehicles.len().max(1);
    let indicator: Vec<(f64, f64)> = log
        .rows
        .chunks(per_tick)
        .map(|tick| {
            let hit = tick.iter().any(|r| r.collision);
            (tick[0].t, if hit { 1.0 } else { 0.0 })
        })
        .collect();
    written.push(write_series(dir, "collision.dat", &indicator)?);
    Ok(written)
}
