//! CSV and JSON trajectory files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::IoError;
use crate::sim::{LogRow, TrajectoryLog};

pub const CSV_HEADER: [&str; 17] = [
    "t",
    "id",
    "x",
    "y",
    "psi",
    "v",
    "a",
    "beta",
    "fsm_state",
    "h_fc",
    "h_ft",
    "h_bt",
    "delta_l",
    "delta_y",
    "delta_psi",
    "feasible",
    "collision",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// Nine significant digits, fixed notation for moderate magnitudes and
/// scientific otherwise; trailing zeros are dropped.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_record(r: &LogRow) -> [String; 17] {
    [
        format_float(r.t),
        r.id.clone(),
        format_float(r.x),
        format_float(r.y),
        format_float(r.psi),
        format_float(r.v),
        format_float(r.a),
        format_float(r.beta),
        r.fsm_state.map(|s| s.as_str().to_string()).unwrap_or_default(),
        opt(r.h_fc),
        opt(r.h_ft),
        opt(r.h_bt),
        opt(r.delta_l),
        opt(r.delta_y),
        opt(r.delta_psi),
        flag(r.feasible).into(),
        flag(r.collision).into(),
    ]
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    IoError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_csv(log: &TrajectoryLog, path: &Path) -> Result<(), IoError> {
    if log.is_empty() {
        return Err(IoError::EmptyLog);
    }
    let file = File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &log.rows {
        w.write_record(csv_record(r)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

#[derive(Serialize)]
struct TickRecord<'a> {
    t: f64,
    vehicles: &'a [LogRow],
}

/// JSON array of `{ "t": .., "vehicles": [row, ...] }` tick records.
pub fn write_json(log: &TrajectoryLog, path: &Path) -> Result<(), IoError> {
    if log.is_empty() {
        return Err(IoError::EmptyLog);
    }
    let per_tick = log.vehicles.len().max(1);
    let ticks: Vec<TickRecord<'_>> = log
        .rows
        .chunks(per_tick)
        .map(|rows| TickRecord {
            t: rows[0].t,
            vehicles: rows,
        })
        .collect();
    let file = File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ticks).map_err(|e| IoError::file(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| IoError::file(path, e))?;
    w.flush().map_err(|e| IoError::file(path, e))
}

pub fn write_log(log: &TrajectoryLog, format: OutputFormat, path: &Path) -> Result<(), IoError> {
    match format {
        OutputFormat::Csv => write_csv(log, path),
        OutputFormat::Json => write_json(log, path),
    }
}

/// Parse a CSV file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<LogRow>, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let bad = |line: usize, what: &str| IoError::Csv {
        path: path.to_path_buf(),
        message: format!("record {line}: bad {what}"),
    };
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(IoError::Csv {
            path: path.to_path_buf(),
            message: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(line, CSV_HEADER[k]));
        let maybe = |k: usize| -> Result<Option<f64>, IoError> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let boolean = |k: usize| match &rec[k] {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(bad(line, CSV_HEADER[k])),
        };
        let fsm_state = if rec[8].is_empty() {
            None
        } else {
            Some(rec[8].parse().map_err(|_| bad(line, "fsm_state"))?)
        };
        rows.push(LogRow {
            t: num(0)?,
            id: rec[1].to_string(),
            x: num(2)?,
            y: num(3)?,
            psi: num(4)?,
            v: num(5)?,
            a: num(6)?,
            beta: num(7)?,
            fsm_state,
            h_fc: maybe(9)?,
            h_ft: maybe(10)?,
            h_bt: maybe(11)?,
            delta_l: maybe(12)?,
            delta_y: maybe(13)?,
            delta_psi: maybe(14)?,
            feasible: boolean(15)?,
            collision: boolean(16)?,
        });
    }
    Ok(rows)
}
