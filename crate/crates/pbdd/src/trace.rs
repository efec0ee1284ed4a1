//! Iteration traces and their CSV on-disk form.
//!
//! One row per dual iteration. The synchronous schema is
//!
//! ```text
//!     t,dual_cost,primal_err,disagreement,messages,solver_residual
//! ```
//!
//! and the event-driven engine appends `sim_time,node_fired,cascade_size,
//! t_over_n`. `primal_err` is left empty when no reference solution was
//! available. Floats are written in shortest round-trip form, so a
//! write/read cycle reproduces the exact bits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SYNC_HEADER: [&str; 6] =
    ["t", "dual_cost", "primal_err", "disagreement", "messages", "solver_residual"];
pub const ASYNC_HEADER: [&str; 10] = [
    "t",
    "dual_cost",
    "primal_err",
    "disagreement",
    "messages",
    "solver_residual",
    "sim_time",
    "node_fired",
    "cascade_size",
    "t_over_n",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSchema {
    Sync,
    Async,
}

/// One trace row. The last four fields are only present for event-driven
/// runs; they are all set or all absent.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub dual_cost: f64,
    pub primal_err: Option<f64>,
    /// Largest norm, over directed relations, between a block's owned value
    /// and the copy a neighbor computed.
    pub disagreement: f64,
    /// Cumulative message count up to and including this row.
    pub messages: u64,
    /// Worst stationarity residual among the local solves behind this row.
    pub solver_residual: f64,
    pub sim_time: Option<f64>,
    pub node_fired: Option<usize>,
    pub cascade_size: Option<usize>,
    /// Event index divided by node count: the x-axis on which event-driven
    /// runs are comparable to synchronous rounds.
    pub t_over_n: Option<f64>,
}

impl TraceRecord {
    pub fn schema(&self) -> TraceSchema {
        if self.sim_time.is_some() {
            TraceSchema::Async
        } else {
            TraceSchema::Sync
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SyncRow {
    t: u64,
    dual_cost: f64,
    primal_err: Option<f64>,
    disagreement: f64,
    messages: u64,
    solver_residual: f64,
}

#[derive(Serialize, Deserialize)]
struct AsyncRow {
    t: u64,
    dual_cost: f64,
    primal_err: Option<f64>,
    disagreement: f64,
    messages: u64,
    solver_residual: f64,
    sim_time: f64,
    node_fired: usize,
    cascade_size: usize,
    t_over_n: f64,
}

fn async_fields(r: &TraceRecord) -> Result<(f64, usize, usize, f64)> {
    match (r.sim_time, r.node_fired, r.cascade_size, r.t_over_n) {
        (Some(s), Some(n), Some(c), Some(x)) => Ok((s, n, c, x)),
        _ => Err(Error::InvalidData(format!(
            "row t={} is missing event fields required by the event-driven schema",
            r.t
        ))),
    }
}

/// Writes records under the given schema. Every record must carry the
/// fields that schema requires.
pub fn write_trace<W: Write>(
    writer: W,
    schema: TraceSchema,
    records: &[TraceRecord],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    match schema {
        TraceSchema::Sync => {
            for r in records {
                out.serialize(SyncRow {
                    t: r.t,
                    dual_cost: r.dual_cost,
                    primal_err: r.primal_err,
                    disagreement: r.disagreement,
                    messages: r.messages,
                    solver_residual: r.solver_residual,
                })?;
            }
            if records.is_empty() {
                out.write_record(SYNC_HEADER)?;
            }
        }
        TraceSchema::Async => {
            for r in records {
                let (sim_time, node_fired, cascade_size, t_over_n) = async_fields(r)?;
                out.serialize(AsyncRow {
                    t: r.t,
                    dual_cost: r.dual_cost,
                    primal_err: r.primal_err,
                    disagreement: r.disagreement,
                    messages: r.messages,
                    solver_residual: r.solver_residual,
                    sim_time,
                    node_fired,
                    cascade_size,
                    t_over_n,
                })?;
            }
            if records.is_empty() {
                out.write_record(ASYNC_HEADER)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_file(
    path: impl AsRef<Path>,
    schema: TraceSchema,
    records: &[TraceRecord],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), schema, records)
}

/// Reads a trace, detecting the schema from the header row.
pub fn read_trace<R: Read>(reader: R) -> Result<(TraceSchema, Vec<TraceRecord>)> {
    let mut input = csv::Reader::from_reader(reader);
    let header: Vec<String> =
        input.headers()?.iter().map(|s| s.to_string()).collect();
    let schema = if header == SYNC_HEADER {
        TraceSchema::Sync
    } else if header == ASYNC_HEADER {
        TraceSchema::Async
    } else {
        return Err(Error::InvalidData(format!(
            "unrecognized trace header: {header:?}"
        )));
    };
    let mut records = Vec::new();
    match schema {
        TraceSchema::Sync => {
            for row in input.deserialize::<SyncRow>() {
                let row = row?;
                records.push(TraceRecord {
                    t: row.t,
                    dual_cost: row.dual_cost,
                    primal_err: row.primal_err,
                    disagreement: row.disagreement,
                    messages: row.messages,
                    solver_residual: row.solver_residual,
                    sim_time: None,
                    node_fired: None,
                    cascade_size: None,
                    t_over_n: None,
                });
            }
        }
        TraceSchema::Async => {
            for row in input.deserialize::<AsyncRow>() {
                let row = row?;
                records.push(TraceRecord {
                    t: row.t,
                    dual_cost: row.dual_cost,
                    primal_err: row.primal_err,
                    disagreement: row.disagreement,
                    messages: row.messages,
                    solver_residual: row.solver_residual,
                    sim_time: Some(row.sim_time),
                    node_fired: Some(row.node_fired),
                    cascade_size: Some(row.cascade_size),
                    t_over_n: Some(row.t_over_n),
                });
            }
        }
    }
    Ok((schema, records))
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<(TraceSchema, Vec<TraceRecord>)> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sync_record(t: u64) -> TraceRecord {
        TraceRecord {
            t,
            dual_cost: -12.625 + 0.1 * t as f64,
            primal_err: if t.is_multiple_of(2) { Some(1.5e-3 / (t + 1) as f64) } else { None },
            disagreement: 0.25 / (t + 1) as f64,
            messages: 8 * (t + 1),
            solver_residual: 3.5e-13,
            sim_time: None,
            node_fired: None,
            cascade_size: None,
            t_over_n: None,
        }
    }

    fn async_record(t: u64) -> TraceRecord {
        TraceRecord {
            sim_time: Some(0.37 * t as f64),
            node_fired: Some((t as usize) % 5),
            cascade_size: Some(3),
            t_over_n: Some(t as f64 / 5.0),
            ..sync_record(t)
        }
    }

    #[test]
    fn sync_round_trip_is_exact() {
        let records: Vec<TraceRecord> = (0..20).map(sync_record).collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Sync, &records).unwrap();
        let (schema, back) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(schema, TraceSchema::Sync);
        assert_eq!(back, records);
    }

    #[test]
    fn async_round_trip_is_exact() {
        let records: Vec<TraceRecord> = (1..=15).map(async_record).collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Async, &records).unwrap();
        let (schema, back) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(schema, TraceSchema::Async);
        assert_eq!(back, records);
    }

    #[test]
    fn headers_match_published_layout() {
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Sync, &[sync_record(0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,dual_cost,primal_err,disagreement,messages,solver_residual\n"));

        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Async, &[async_record(1)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, ASYNC_HEADER.join(","));
    }

    #[test]
    fn missing_reference_error_leaves_empty_cell() {
        let mut r = sync_record(0);
        r.primal_err = None;
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Sync, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data_line = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = data_line.split(',').collect();
        assert_eq!(cells[2], "");
    }

    #[test]
    fn empty_trace_still_writes_header() {
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Async, &[]).unwrap();
        let (schema, rows) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(schema, TraceSchema::Async);
        assert!(rows.is_empty());
    }

    #[test]
    fn awkward_floats_survive_the_cycle() {
        let mut r = sync_record(3);
        r.dual_cost = 0.1 + 0.2;
        r.disagreement = f64::MIN_POSITIVE;
        r.solver_residual = 1.0 / 3.0;
        let mut buf = Vec::new();
        write_trace(&mut buf, TraceSchema::Sync, &[r.clone()]).unwrap();
        let (_, back) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back[0].dual_cost.to_bits(), r.dual_cost.to_bits());
        assert_eq!(back[0].disagreement.to_bits(), r.disagreement.to_bits());
        assert_eq!(back[0].solver_residual.to_bits(), r.solver_residual.to_bits());
    }

    #[test]
    fn event_schema_rejects_rows_without_event_fields() {
        let mut buf = Vec::new();
        let err = write_trace(&mut buf, TraceSchema::Async, &[sync_record(0)]);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_header_is_rejected() {
        let text = "a,b,c\n1,2,3\n";
        assert!(read_trace(text.as_bytes()).is_err());
    }
}
