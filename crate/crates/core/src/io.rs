//! File formats. CSV files have a header row, `.` decimals and `\n` line
//! endings; floats are written in the shortest form that reads back to the
//! same value. JSON is emitted with sorted keys so that equal values give
//! byte-identical files.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::force_protocols::{EnergyEstimate, LevelStats};
use crate::rate_theory::RateReport;
use crate::walker::{AggregateStats, Mode, TracePoint};

fn fmt_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Pretty JSON with keys sorted at every level, ending in a newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's map type is ordered by key, so a round trip through
    // `Value` sorts every object.
    let v = serde_json::to_value(value).map_err(fmt_err)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(fmt_err)?;
    s.push('\n');
    Ok(s)
}

pub const STATS_HEADER: [&str; 5] = ["site", "L_plus", "L_minus", "S", "R"];

/// One row per site `1..=M-1`.
pub fn write_stats_csv<W: Write>(stats: &AggregateStats, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(STATS_HEADER).map_err(fmt_err)?;
    for x in 1..stats.sites() {
        out.write_record([
            x.to_string(),
            stats.up[x - 1].to_string(),
            stats.down[x - 1].to_string(),
            stats.sojourn[x - 1].to_string(),
            stats.replicas.to_string(),
        ])
        .map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}

#[derive(serde::Deserialize)]
struct StatsRow {
    site: usize,
    #[serde(rename = "L_plus")]
    up: u64,
    #[serde(rename = "L_minus")]
    down: u64,
    #[serde(rename = "S")]
    sojourn: f64,
    #[serde(rename = "R")]
    replicas: u64,
}

/// Inverse of [`write_stats_csv`]. The time model is not part of the file.
/// Step count and total time are rebuilt from the rows.
pub fn read_stats_csv<R: Read>(r: R, mode: Mode) -> Result<AggregateStats> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<StatsRow>() {
        rows.push(rec.map_err(fmt_err)?);
    }
    if rows.is_empty() {
        return Err(Error::Format("statistics file has no rows".into()));
    }
    let mut stats = AggregateStats::empty(rows.len() + 1, mode);
    stats.replicas = rows[0].replicas;
    for (i, row) in rows.iter().enumerate() {
        if row.site != i + 1 {
            return Err(Error::Format(format!(
                "row {} has site {}, expected {}",
                i + 1,
                row.site,
                i + 1
            )));
        }
        if row.replicas != stats.replicas {
            return Err(Error::Format(format!(
                "site {} has R = {}, expected {}",
                row.site, row.replicas, stats.replicas
            )));
        }
        stats.up[i] = row.up;
        stats.down[i] = row.down;
        stats.sojourn[i] = row.sojourn;
    }
    stats.steps = stats.up.iter().sum::<u64>() + stats.down.iter().sum::<u64>();
    stats.wall_time = stats.sojourn.iter().sum();
    Ok(stats)
}

pub fn read_stats_json(text: &str) -> Result<AggregateStats> {
    serde_json::from_str(text).map_err(fmt_err)
}

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["step", "site", "time"]).map_err(fmt_err)?;
    for p in trace {
        out.write_record([p.step.to_string(), p.site.to_string(), p.time.to_string()])
            .map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}

/// Per-site analytic quantities; `inv_Rc_*` are the decay rates `1/R_c`.
pub fn write_rates_csv<W: Write>(report: &RateReport, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "site",
        "pbar",
        "inv_Rc_discrete",
        "inv_Rc_continuous",
        "M_x",
        "mean_L_plus",
        "var_L_plus",
        "mean_L_minus",
        "mean_S",
        "var_S",
    ])
    .map_err(fmt_err)?;
    for s in &report.sites {
        out.write_record([
            s.site.to_string(),
            s.pbar.to_string(),
            opt(s.rc_discrete),
            opt(s.rc_continuous),
            opt(s.obstacle),
            s.mean_up.to_string(),
            s.var_up.to_string(),
            s.mean_down.to_string(),
            s.mean_sojourn.to_string(),
            s.var_sojourn.to_string(),
        ])
        .map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}

/// Free-energy profile `g(x)` for `x = 0..=M-1`.
pub fn write_profile_csv<W: Write>(profile: &[f64], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["x", "g"]).map_err(fmt_err)?;
    for (x, g) in profile.iter().enumerate() {
        out.write_record([x.to_string(), g.to_string()]).map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}

/// Per-level counts for one or more protocol runs; `target` is the focus
/// site of a site-dependent scheme and empty otherwise.
pub fn write_level_stats_csv<W: Write>(runs: &[(Option<usize>, &LevelStats)], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["target", "level", "site", "L_plus", "L_minus", "R"])
        .map_err(fmt_err)?;
    for (target, stats) in runs {
        for (level, s) in &stats.levels {
            for x in 1..s.sites() {
                out.write_record([
                    target.map(|t| t.to_string()).unwrap_or_default(),
                    level.to_string(),
                    x.to_string(),
                    s.up[x - 1].to_string(),
                    s.down[x - 1].to_string(),
                    s.replicas.to_string(),
                ])
                .map_err(fmt_err)?;
            }
        }
    }
    out.flush().map_err(fmt_err)
}

/// One estimate per row with the scheme's rate bound alongside.
pub fn write_estimates_csv<W: Write>(rows: &[(EnergyEstimate, Option<f64>)], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["site", "level", "g0", "undecided", "rc_bound"])
        .map_err(fmt_err)?;
    for (e, bound) in rows {
        out.write_record([
            e.site.to_string(),
            e.level.map(|l| l.to_string()).unwrap_or_default(),
            opt(e.value),
            e.undecided.to_string(),
            opt(*bound),
        ])
        .map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}

/// Header row plus numeric rows, for small ad hoc tables.
pub fn write_table_csv<W: Write>(header: &[&str], rows: &[Vec<f64>], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(header).map_err(fmt_err)?;
    for row in rows {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(fmt_err)?;
    }
    out.flush().map_err(fmt_err)
}
