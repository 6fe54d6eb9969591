//! Trace CSV: one row per MPI call, columns in [`TRACE_HEADER`] order,
//! durations in seconds.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{ModelError, PhaseKind, SimResult, TraceRecord, Workload};

pub const TRACE_HEADER: [&str; 10] = [
    "rank",
    "mpi_type",
    "bytes_recv",
    "bytes_sent",
    "n_procs",
    "locality",
    "callsite_id",
    "t_comp",
    "t_slack",
    "t_copy",
];

/// Ranks per node assumed when deriving locality for exported traces.
pub const DEFAULT_RANKS_PER_NODE: usize = 36;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Header { line: u64, msg: String },
    #[error("line {line}, column {column}: {msg}")]
    Field {
        line: u64,
        column: &'static str,
        msg: String,
    },
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("line {line}: {source}")]
    Invalid { line: u64, source: ModelError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T, TraceError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|e| TraceError::Field {
        line,
        column: TRACE_HEADER[idx],
        msg: format!("cannot parse '{raw}': {e}"),
    })
}

/// Parses trace CSV from any reader. The header row is mandatory.
pub fn parse_trace<R: Read>(reader: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let Some(header) = rows.next() else {
        log::warn!("trace is empty");
        return Ok(Vec::new());
    };
    let header = header?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != TRACE_HEADER {
        return Err(TraceError::Header {
            line: 1,
            msg: format!(
                "expected header '{}', found '{}'",
                TRACE_HEADER.join(","),
                names.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if row.len() != TRACE_HEADER.len() {
            return Err(TraceError::Row {
                line,
                msg: format!("expected {} columns, found {}", TRACE_HEADER.len(), row.len()),
            });
        }
        let rec = TraceRecord {
            rank: field(&row, 0, line)?,
            mpi_type: row[1].trim().to_string(),
            bytes_recv: field(&row, 2, line)?,
            bytes_sent: field(&row, 3, line)?,
            n_procs: field(&row, 4, line)?,
            locality: field(&row, 5, line)?,
            callsite_id: field(&row, 6, line)?,
            t_comp: field(&row, 7, line)?,
            t_slack: field(&row, 8, line)?,
            t_copy: field(&row, 9, line)?,
        };
        rec.validate().map_err(|source| TraceError::Invalid { line, source })?;
        out.push(rec);
    }
    if out.is_empty() {
        log::warn!("trace has a header but no records");
    }
    Ok(out)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(file)
}

/// Writes records with the header. Durations use the shortest exact decimal
/// form, so a write/read round trip is lossless.
pub fn format_trace<W: Write>(records: &[TraceRecord], writer: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.rank.to_string(),
            r.mpi_type.clone(),
            r.bytes_recv.to_string(),
            r.bytes_sent.to_string(),
            r.n_procs.to_string(),
            r.locality.to_string(),
            r.callsite_id.to_string(),
            r.t_comp.to_string(),
            r.t_slack.to_string(),
            r.t_copy.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    format_trace(records, file)
}

/// One record per MPI call of `workload`, timed from `result`. Ranks are
/// packed onto nodes of `ranks_per_node` consecutive ids; locality is the
/// share of the other participants on the caller's node.
pub fn export_trace_from_sim(result: &SimResult, workload: &Workload, ranks_per_node: usize) -> Vec<TraceRecord> {
    let rpn = ranks_per_node.max(1);
    let mut out = Vec::with_capacity(workload.mpi_call_count());
    for rr in &result.ranks {
        let Some(stream) = workload.tasks.get(rr.rank) else {
            continue;
        };
        let mut per_task = vec![[0.0f64; 3]; stream.len()];
        for iv in &rr.timeline {
            let slot = match iv.kind {
                PhaseKind::Comp => 0,
                PhaseKind::Slack => 1,
                PhaseKind::Copy => 2,
                PhaseKind::Overhead => continue,
            };
            if let Some(t) = per_task.get_mut(iv.task) {
                t[slot] += iv.duration();
            }
        }
        for (i, task) in stream.iter().enumerate() {
            let Some(prim) = &task.mpi else { continue };
            let peers = prim.peers(rr.rank);
            let local = peers.iter().filter(|&&p| p / rpn == rr.rank / rpn).count();
            let locality = if peers.is_empty() {
                1.0
            } else {
                local as f64 / peers.len() as f64
            };
            let [t_comp, t_slack, t_copy] = per_task[i];
            out.push(TraceRecord {
                rank: rr.rank,
                mpi_type: prim.mpi_name().to_string(),
                bytes_recv: prim.bytes_recv,
                bytes_sent: prim.bytes_sent,
                n_procs: prim.n_procs(),
                locality,
                callsite_id: prim.callsite_id,
                t_comp,
                t_slack,
                t_copy,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "rank,mpi_type,bytes_recv,bytes_sent,n_procs,locality,callsite_id,t_comp,t_slack,t_copy\n";

    #[test]
    fn parses_example_row() {
        let text = format!("{HEADER}0,MPI_Barrier,0,0,1024,1.0,42,0.010,0.006,0.001\n");
        let recs = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(
            recs,
            [TraceRecord {
                rank: 0,
                mpi_type: "MPI_Barrier".into(),
                bytes_recv: 0,
                bytes_sent: 0,
                n_procs: 1024,
                locality: 1.0,
                callsite_id: 42,
                t_comp: 0.010,
                t_slack: 0.006,
                t_copy: 0.001,
            }]
        );
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_trace(&b""[..]).unwrap().is_empty());
        assert!(parse_trace(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn errors_name_line_and_column() {
        let text =
            format!("{HEADER}0,MPI_Barrier,0,0,2,1.0,42,0.01,0.0,0.0\n1,MPI_Barrier,0,0,2,1.0,42,0.01,abc,0.0\n");
        let err = parse_trace(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("t_slack"), "{err}");

        let text = format!("{HEADER}0,MPI_Barrier,0,0,2,1.5,42,0.01,0.0,0.0\n");
        let err = parse_trace(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Invalid { line: 2, .. }), "{err}");

        let text = format!("{HEADER}0,MPI_Barrier,0,0,2,1.0,42,0.01,-0.001,0.0\n");
        assert!(matches!(parse_trace(text.as_bytes()), Err(TraceError::Invalid { .. })));

        let text = format!("{HEADER}0,MPI_Barrier,0,0,2\n");
        assert!(matches!(
            parse_trace(text.as_bytes()),
            Err(TraceError::Row { line: 2, .. })
        ));

        assert!(matches!(parse_trace(&b"a,b\n"[..]), Err(TraceError::Header { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let recs: Vec<TraceRecord> = (0..50)
            .map(|i| TraceRecord {
                rank: i % 7,
                mpi_type: "MPI_Allreduce".into(),
                bytes_recv: i as u64 * 13,
                bytes_sent: i as u64 * 17,
                n_procs: 7,
                locality: (i % 4) as f64 / 3.0,
                callsite_id: u64::MAX - i as u64,
                t_comp: 1.0 / (i as f64 + 3.0),
                t_slack: (i as f64).sqrt() * 1e-7,
                t_copy: 1e-9 * std::f64::consts::PI,
            })
            .collect();
        let mut buf = Vec::new();
        format_trace(&recs, &mut buf).unwrap();
        assert_eq!(parse_trace(buf.as_slice()).unwrap(), recs);
    }
}
