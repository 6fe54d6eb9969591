use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::model::{ModelError, PrimitiveKind, Workload};

/// A call that can never complete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedCall {
    pub rank: usize,
    pub task: usize,
    pub call: String,
}

/// Ranks left blocked once every matchable call has been matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockReport {
    pub blocked: Vec<BlockedCall>,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock: ")?;
        for (i, b) in self.blocked.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "rank {} task {} ({})", b.rank, b.task, b.call)?;
        }
        Ok(())
    }
}

impl std::error::Error for DeadlockReport {}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Structure(#[from] ModelError),
    #[error(transparent)]
    Deadlock(#[from] DeadlockReport),
}

fn describe(kind: &PrimitiveKind, name: &str) -> String {
    match kind {
        PrimitiveKind::Collective { communicator, .. } => format!("{name} on {communicator:?}"),
        PrimitiveKind::Send { peer, tag } => format!("{name} to {peer} tag {tag}"),
        PrimitiveKind::Recv { peer, tag } => format!("{name} from {peer} tag {tag}"),
    }
}

/// Plays the blocking schedule at infinite speed: a call completes once
/// every participant has it at the head of its stream (rendezvous semantics
/// for point-to-point). Anything left over is reported.
pub fn validate_workload(w: &Workload) -> Result<(), ValidationError> {
    w.check_structure()?;
    let n = w.n_ranks;
    let mut pos = vec![0usize; n];
    let mut work: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];

    let head = |pos: &[usize], r: usize| w.tasks[r].get(pos[r]).and_then(|t| t.mpi.as_ref());

    while let Some(r) = work.pop_front() {
        queued[r] = false;
        // terminal tasks complete on their own
        if pos[r] < w.tasks[r].len() && w.tasks[r][pos[r]].mpi.is_none() {
            pos[r] += 1;
            continue;
        }
        let Some(prim) = head(&pos, r) else { continue };
        let group: Option<Vec<usize>> = match &prim.kind {
            PrimitiveKind::Collective { op, communicator } => {
                let ready = communicator.iter().all(|&m| {
                    matches!(head(&pos, m).map(|p| &p.kind),
                        Some(PrimitiveKind::Collective { op: o, communicator: c }) if o == op && c == communicator)
                });
                ready.then(|| communicator.clone())
            }
            PrimitiveKind::Send { peer, tag } => {
                let ready = matches!(head(&pos, *peer).map(|p| &p.kind),
                    Some(PrimitiveKind::Recv { peer: p, tag: t }) if *p == r && t == tag);
                ready.then(|| vec![r, *peer])
            }
            PrimitiveKind::Recv { peer, tag } => {
                let ready = matches!(head(&pos, *peer).map(|p| &p.kind),
                    Some(PrimitiveKind::Send { peer: p, tag: t }) if *p == r && t == tag);
                ready.then(|| vec![r, *peer])
            }
        };
        if let Some(members) = group {
            for m in members {
                pos[m] += 1;
                if !queued[m] {
                    queued[m] = true;
                    work.push_back(m);
                }
            }
        }
    }

    let blocked: Vec<BlockedCall> = (0..n)
        .filter(|&r| pos[r] < w.tasks[r].len())
        .map(|r| {
            let prim = w.tasks[r][pos[r]].mpi.as_ref().expect("terminal tasks always complete");
            BlockedCall {
                rank: r,
                task: pos[r],
                call: describe(&prim.kind, prim.mpi_name()),
            }
        })
        .collect();
    if blocked.is_empty() {
        Ok(())
    } else {
        Err(DeadlockReport { blocked }.into())
    }
}
